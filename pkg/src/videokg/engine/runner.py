"""Streaming pipeline runner: bounded queues, one worker per stage.

Distinct windows occupy distinct stages concurrently (pipeline parallelism);
output order always equals input order via a resequencing buffer at the sink.
A failing stage drops its window from the output and reports the failure on
the run's error channel instead of aborting the pipeline.
"""

from __future__ import annotations

import heapq
import logging
import queue
import threading
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Optional, Sequence, Union

from ..windows import DataWindow
from .pipes import (
    BatchPipe,
    BatchPolicy,
    Pipe,
    apply_pipe,
    check_writes,
    merge_parallel_outputs,
)

logger = logging.getLogger(__name__)

SEQUENTIAL = "sequential"
PARALLEL = "parallel"
LOOP = "loop"

DEFAULT_QUEUE_CAPACITY = 4


class SpecError(ValueError):
    pass


@dataclass
class PipelineSpec:
    variant: str
    children: tuple[Union["PipelineSpec", Pipe], ...]
    loop_predicate: Optional[Callable[[DataWindow], bool]] = None
    max_iterations: Optional[int] = None
    stage_queue_capacity: int = DEFAULT_QUEUE_CAPACITY
    name: str = ""

    def __post_init__(self):
        if not self.name:
            self.name = self.variant


def sequential(*children, capacity: int = DEFAULT_QUEUE_CAPACITY, name: str = "") -> PipelineSpec:
    return PipelineSpec(SEQUENTIAL, tuple(children), stage_queue_capacity=capacity, name=name)


def parallel(*children, capacity: int = DEFAULT_QUEUE_CAPACITY, name: str = "") -> PipelineSpec:
    return PipelineSpec(PARALLEL, tuple(children), stage_queue_capacity=capacity, name=name)


def loop_spec(
    *children,
    predicate: Callable[[DataWindow], bool],
    max_iterations: int,
    capacity: int = DEFAULT_QUEUE_CAPACITY,
    name: str = "",
) -> PipelineSpec:
    return PipelineSpec(
        LOOP,
        tuple(children),
        loop_predicate=predicate,
        max_iterations=max_iterations,
        stage_queue_capacity=capacity,
        name=name,
    )


def declared_writes(node: Union[PipelineSpec, Pipe]) -> frozenset[str]:
    if isinstance(node, Pipe):
        return node.declared_writes
    keys: set[str] = set()
    for child in node.children:
        keys |= declared_writes(child)
    if node.variant == LOOP:
        keys.add(_loop_slot_key(node))
    return frozenset(keys)


def _loop_slot_key(spec: PipelineSpec) -> str:
    return f"loop/{spec.name}"


def validate_spec(spec: Union[PipelineSpec, Pipe]) -> None:
    if isinstance(spec, Pipe):
        return
    if spec.variant not in (SEQUENTIAL, PARALLEL, LOOP):
        raise SpecError(f"unknown pipeline variant {spec.variant!r}")
    if spec.stage_queue_capacity < 1:
        raise SpecError("stage_queue_capacity must be >= 1")
    if not spec.children:
        raise SpecError(f"{spec.variant} pipeline has no children")
    if spec.variant == LOOP:
        if spec.loop_predicate is None:
            raise SpecError("loop pipeline needs a predicate")
        if not spec.max_iterations or spec.max_iterations < 1:
            raise SpecError("loop pipeline needs max_iterations >= 1")
    if spec.variant == PARALLEL:
        seen: dict[str, str] = {}
        for child in spec.children:
            child_name = child.name
            for key in declared_writes(child):
                if key in seen:
                    raise SpecError(
                        f"parallel children {seen[key]!r} and {child_name!r} "
                        f"both declare write to {key!r}"
                    )
                seen[key] = child_name
    for child in spec.children:
        validate_spec(child)


# --- bookkeeping slot for loops ---------------------------------------------------


@dataclass(frozen=True)
class LoopRecord:
    iterations: int
    max_reached: bool


def run_loop(
    children: Sequence[Union[Pipe, PipelineSpec]],
    window: DataWindow,
    predicate: Callable[[DataWindow], bool],
    max_iterations: int,
    name: str = "loop",
) -> DataWindow:
    """Repass the window across the children until the predicate holds.

    The predicate is checked after each full pass; the iteration count and a
    max-reached flag land in the loop's bookkeeping slot.
    """
    if max_iterations < 1:
        raise SpecError("max_iterations must be >= 1")
    executables = [_compile_sync(c) for c in children]
    iterations = 0
    satisfied = False
    while iterations < max_iterations:
        for execute in executables:
            window = execute(window)
        iterations += 1
        if predicate(window):
            satisfied = True
            break
    record = LoopRecord(iterations=iterations, max_reached=not satisfied)
    return window.with_slot(f"loop/{name}", (record,), producer=name)


# --- synchronous execution (used inside parallel/loop stages) ----------------------


def _compile_sync(node: Union[PipelineSpec, Pipe]) -> Callable[[DataWindow], DataWindow]:
    if isinstance(node, Pipe):
        return lambda window: apply_pipe(node, window)
    if node.variant == SEQUENTIAL:
        steps = [_compile_sync(c) for c in node.children]

        def run_sequential(window: DataWindow) -> DataWindow:
            for step in steps:
                window = step(window)
            return window

        return run_sequential
    if node.variant == PARALLEL:
        steps = [(c.name, _compile_sync(c)) for c in node.children]

        def run_parallel(window: DataWindow) -> DataWindow:
            if len(steps) == 1:
                outputs = [(steps[0][0], steps[0][1](window))]
            else:
                results: list[Optional[DataWindow]] = [None] * len(steps)
                errors: list[Optional[BaseException]] = [None] * len(steps)

                def run_child(i: int) -> None:
                    try:
                        results[i] = steps[i][1](window)
                    except BaseException as exc:  # re-raised on the stage thread
                        errors[i] = exc

                threads = [
                    threading.Thread(target=run_child, args=(i,), daemon=True)
                    for i in range(len(steps))
                ]
                for t in threads:
                    t.start()
                for t in threads:
                    t.join()
                for exc in errors:
                    if exc is not None:
                        raise exc
                outputs = [(steps[i][0], results[i]) for i in range(len(steps))]
            return merge_parallel_outputs(window, outputs)

        return run_parallel
    if node.variant == LOOP:

        def run_loop_stage(window: DataWindow) -> DataWindow:
            return run_loop(
                node.children,
                window,
                node.loop_predicate,
                node.max_iterations,
                name=node.name,
            )

        return run_loop_stage
    raise SpecError(f"unknown variant {node.variant!r}")


# --- streaming stages ---------------------------------------------------------------


@dataclass(frozen=True)
class StageFailure:
    window_id: str
    window_index: int
    stage: str
    error: str
    exception_type: str = ""


@dataclass
class _Envelope:
    seq: int
    window: Optional[DataWindow] = None
    failure: Optional[StageFailure] = None


_SENTINEL = None


class _Stage:
    def __init__(self, name: str, handler: Callable[[DataWindow], DataWindow]):
        self.name = name
        self.handler = handler

    def run(self, in_q: queue.Queue, out_q: queue.Queue) -> None:
        while True:
            env = in_q.get()
            if env is _SENTINEL:
                out_q.put(_SENTINEL)
                return
            out_q.put(self.process(env))

    def process(self, env: _Envelope) -> _Envelope:
        if env.failure is not None:
            return env
        try:
            return _Envelope(env.seq, window=self.handler(env.window))
        except Exception as exc:
            logger.warning("stage %s failed on %s: %s", self.name, env.window.window_id, exc)
            return _Envelope(
                env.seq,
                failure=StageFailure(
                    window_id=env.window.window_id,
                    window_index=env.window.window_index,
                    stage=self.name,
                    error=str(exc),
                    exception_type=type(exc).__name__,
                ),
            )


class _BatchStage(_Stage):
    def __init__(self, pipe: BatchPipe):
        super().__init__(pipe.name, lambda w: w)
        self.pipe = pipe

    def run(self, in_q: queue.Queue, out_q: queue.Queue) -> None:
        pending: list[_Envelope] = []
        deadline: Optional[float] = None
        while True:
            timeout = None
            if pending:
                timeout = max(0.0, deadline - time.monotonic())
            try:
                env = in_q.get(timeout=timeout)
            except queue.Empty:
                self._flush(pending, out_q)
                pending, deadline = [], None
                continue
            if env is _SENTINEL:
                self._flush(pending, out_q)
                out_q.put(_SENTINEL)
                return
            if not pending:
                deadline = time.monotonic() + self.pipe.policy.flush_timeout
            pending.append(env)
            live = sum(1 for e in pending if e.failure is None)
            if live >= self.pipe.policy.max_batch:
                self._flush(pending, out_q)
                pending, deadline = [], None

    def _flush(self, pending: list[_Envelope], out_q: queue.Queue) -> None:
        if not pending:
            return
        windows = [e.window for e in pending if e.failure is None]
        results: dict[int, _Envelope] = {}
        if windows:
            try:
                outs = self.pipe.transform_batch(list(windows))
                if len(outs) != len(windows):
                    raise RuntimeError(
                        f"batch pipe {self.name!r} returned {len(outs)} windows for {len(windows)}"
                    )
                outs = [
                    check_writes(self.name, self.pipe.declared_writes, w, o)
                    for w, o in zip(windows, outs)
                ]
                it = iter(outs)
                for env in pending:
                    if env.failure is None:
                        results[env.seq] = _Envelope(env.seq, window=next(it))
            except Exception:
                # isolate the failing window(s) by retrying one at a time
                results = {}
                for env in pending:
                    if env.failure is None:
                        results[env.seq] = self.process(_Envelope(env.seq, window=env.window))
        for env in pending:
            out_q.put(results.get(env.seq, env))

    def process(self, env: _Envelope) -> _Envelope:
        if env.failure is not None:
            return env
        try:
            out = apply_pipe(self.pipe, env.window)
            return _Envelope(env.seq, window=out)
        except Exception as exc:
            return _Envelope(
                env.seq,
                failure=StageFailure(
                    window_id=env.window.window_id,
                    window_index=env.window.window_index,
                    stage=self.name,
                    error=str(exc),
                    exception_type=type(exc).__name__,
                ),
            )


def _compile_stages(node: Union[PipelineSpec, Pipe]) -> list[_Stage]:
    """Flatten sequential structure into a stage list; everything else is one stage."""
    if isinstance(node, Pipe):
        if isinstance(node, BatchPipe):
            return [_BatchStage(node)]
        return [_Stage(node.name, _compile_sync(node))]
    if node.variant == SEQUENTIAL:
        stages: list[_Stage] = []
        for child in node.children:
            stages.extend(_compile_stages(child))
        return stages
    return [_Stage(node.name, _compile_sync(node))]


class PipelineRun:
    """Iterable over output windows, in input order; failures on .failures."""

    def __init__(
        self,
        spec: Union[PipelineSpec, Pipe],
        source: Iterable[DataWindow],
        on_failure: Optional[Callable[[StageFailure], None]] = None,
    ):
        validate_spec(spec)
        self.failures: list[StageFailure] = []
        self._on_failure = on_failure
        capacity = spec.stage_queue_capacity if isinstance(spec, PipelineSpec) else DEFAULT_QUEUE_CAPACITY
        stages = _compile_stages(spec)
        queues = [queue.Queue(maxsize=capacity) for _ in range(len(stages) + 1)]
        self._out_q = queues[-1]
        self._threads: list[threading.Thread] = []
        for stage, in_q, out_q in zip(stages, queues, queues[1:]):
            t = threading.Thread(target=stage.run, args=(in_q, out_q), daemon=True,
                                 name=f"stage:{stage.name}")
            t.start()
            self._threads.append(t)
        feeder = threading.Thread(
            target=self._feed, args=(source, queues[0]), daemon=True, name="stage:source"
        )
        feeder.start()
        self._threads.append(feeder)

    @staticmethod
    def _feed(source: Iterable[DataWindow], out_q: queue.Queue) -> None:
        seq = 0
        try:
            for window in source:
                out_q.put(_Envelope(seq, window=window))
                seq += 1
        except Exception as exc:
            logger.exception("pipeline source failed")
            out_q.put(
                _Envelope(
                    seq,
                    failure=StageFailure(
                        window_id="<source>",
                        window_index=-1,
                        stage="source",
                        error=str(exc),
                        exception_type=type(exc).__name__,
                    ),
                )
            )
        out_q.put(_SENTINEL)

    def __iter__(self) -> Iterator[DataWindow]:
        # resequencing buffer: emit envelopes in seq order
        buffered: list[tuple[int, _Envelope]] = []
        next_seq = 0
        finished = False
        while not finished or buffered:
            if not finished:
                env = self._out_q.get()
                if env is _SENTINEL:
                    finished = True
                else:
                    heapq.heappush(buffered, (env.seq, id(env), env))
            while buffered and (finished or buffered[0][0] == next_seq):
                _, _, env = heapq.heappop(buffered)
                next_seq = env.seq + 1
                if env.failure is not None:
                    self.failures.append(env.failure)
                    if self._on_failure is not None:
                        self._on_failure(env.failure)
                else:
                    yield env.window
        for t in self._threads:
            t.join(timeout=5)


def run_pipeline(
    spec: Union[PipelineSpec, Pipe],
    source: Iterable[DataWindow],
    on_failure: Optional[Callable[[StageFailure], None]] = None,
) -> PipelineRun:
    """Stream windows through the spec with pipeline parallelism."""
    return PipelineRun(spec, source, on_failure=on_failure)


def run_batched(
    pipe: BatchPipe,
    policy: Optional[BatchPolicy] = None,
    source: Iterable[DataWindow] = (),
) -> PipelineRun:
    """Run a single batch-compatible pipe over a stream."""
    if policy is not None:
        pipe = _with_policy(pipe, policy)
    return PipelineRun(sequential(pipe), source)


def _with_policy(pipe: BatchPipe, policy: BatchPolicy) -> BatchPipe:
    import copy

    clone = copy.copy(pipe)
    clone.policy = policy
    return clone
