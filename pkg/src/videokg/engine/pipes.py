"""Pipe primitives: window transforms with declared slot reads/writes.

A pipe must be stateless or internally synchronized; the engine may invoke it
on different windows concurrently but never on the same window twice at once.
Undeclared writes are detected by diffing slots and rejected at runtime.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from ..windows import DataWindow, put_slot


class UndeclaredWriteError(RuntimeError):
    pass


class MissingBranchError(RuntimeError):
    pass


class Pipe:
    """Base window transform.  Subclasses override transform()."""

    def __init__(
        self,
        name: str,
        declared_reads: Iterable[str] = (),
        declared_writes: Iterable[str] = (),
    ):
        self.name = name
        self.declared_reads = frozenset(declared_reads)
        self.declared_writes = frozenset(declared_writes)

    def transform(self, window: DataWindow) -> DataWindow:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"


class FunctionPipe(Pipe):
    def __init__(self, name, fn: Callable[[DataWindow], DataWindow], reads=(), writes=()):
        super().__init__(name, reads, writes)
        self._fn = fn

    def transform(self, window: DataWindow) -> DataWindow:
        return self._fn(window)


@dataclass
class PipeDirector:
    """Extracts a pipe-specific request from a window and injects the response.

    The inject side must write only the wrapped pipe's declared slot keys;
    the runner enforces this with the same slot diffing as for plain pipes.
    """

    name: str
    extract: Callable[[DataWindow], object]
    inject: Callable[[DataWindow, object], DataWindow]


class DirectedPipe(Pipe):
    """A pipe realized as director.extract -> service call -> director.inject."""

    def __init__(self, name, director: PipeDirector, service: Callable[[object], object],
                 reads=(), writes=()):
        super().__init__(name, reads, writes)
        self.director = director
        self._service = service

    def transform(self, window: DataWindow) -> DataWindow:
        request = self.director.extract(window)
        if request is None:
            return window
        response = self._service(request)
        return self.director.inject(window, response)


@dataclass(frozen=True)
class BatchPolicy:
    max_batch: int = 8
    flush_timeout: float = 0.05  # seconds

    def __post_init__(self):
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")
        if self.flush_timeout <= 0:
            raise ValueError("flush_timeout must be positive")


class BatchPipe(Pipe):
    """Vectorized pipe: transform_batch must be equivalent to per-window calls."""

    def __init__(self, name, reads=(), writes=(), policy: BatchPolicy = BatchPolicy()):
        super().__init__(name, reads, writes)
        self.policy = policy

    def transform_batch(self, windows: Sequence[DataWindow]) -> list[DataWindow]:
        raise NotImplementedError

    def transform(self, window: DataWindow) -> DataWindow:
        (out,) = self.transform_batch([window])
        return out


class FunctionBatchPipe(BatchPipe):
    def __init__(self, name, fn: Callable[[Sequence[DataWindow]], list[DataWindow]],
                 reads=(), writes=(), policy: BatchPolicy = BatchPolicy()):
        super().__init__(name, reads, writes, policy)
        self._fn = fn

    def transform_batch(self, windows: Sequence[DataWindow]) -> list[DataWindow]:
        return self._fn(windows)


# --- branching -----------------------------------------------------------------


@dataclass(frozen=True)
class BranchUnit:
    window_id: str
    branch_index: int
    total: int
    item: object


def branch(window: DataWindow, splitter: Callable[[DataWindow], Sequence[object]]) -> list[BranchUnit]:
    """Split a window into tagged sub-units; zero branches is legal."""
    items = list(splitter(window))
    return [
        BranchUnit(window_id=window.window_id, branch_index=i, total=len(items), item=item)
        for i, item in enumerate(items)
    ]


def merge(
    window: DataWindow,
    units: Sequence[BranchUnit],
    merger: Callable[[DataWindow, list[object]], DataWindow],
) -> DataWindow:
    """Reassemble branch results in branch_index order; all branches required."""
    if units:
        total = units[0].total
        seen = {}
        for unit in units:
            if unit.window_id != window.window_id:
                raise MissingBranchError(
                    f"branch of {unit.window_id} delivered to {window.window_id}"
                )
            if unit.total != total or unit.branch_index in seen:
                raise MissingBranchError(f"inconsistent branch set for {window.window_id}")
            seen[unit.branch_index] = unit
        missing = set(range(total)) - set(seen)
        if missing:
            raise MissingBranchError(
                f"{window.window_id}: branches {sorted(missing)} never arrived"
            )
        ordered = [seen[i].item for i in range(total)]
    else:
        ordered = []
    return merger(window, ordered)


class BranchingPipe(Pipe):
    """Branch -> per-branch worker (concurrently) -> merge, as one pipe.

    The splitter yields any number of sub-units; the worker maps each unit's
    item to a result; the merger writes the reassembled results back onto the
    window (only declared slot keys).
    """

    def __init__(
        self,
        name,
        splitter: Callable[[DataWindow], Sequence[object]],
        worker: Callable[[object], object],
        merger: Callable[[DataWindow, list[object]], DataWindow],
        reads=(),
        writes=(),
        max_concurrency: int = 4,
    ):
        super().__init__(name, reads, writes)
        self._splitter = splitter
        self._worker = worker
        self._merger = merger
        self._max_concurrency = max(1, max_concurrency)

    def transform(self, window: DataWindow) -> DataWindow:
        units = branch(window, self._splitter)
        if not units:
            return merge(window, [], self._merger)
        if len(units) == 1 or self._max_concurrency == 1:
            results = [
                BranchUnit(u.window_id, u.branch_index, u.total, self._worker(u.item))
                for u in units
            ]
        else:
            with concurrent.futures.ThreadPoolExecutor(
                max_workers=min(self._max_concurrency, len(units))
            ) as pool:
                outputs = list(pool.map(self._worker, [u.item for u in units]))
            results = [
                BranchUnit(u.window_id, u.branch_index, u.total, out)
                for u, out in zip(units, outputs)
            ]
        return merge(window, results, self._merger)


# --- runtime checks ---------------------------------------------------------------


def apply_pipe(pipe: Pipe, window: DataWindow) -> DataWindow:
    """Run a pipe and reject undeclared writes / structural mutations."""
    out = pipe.transform(window)
    return check_writes(pipe.name, pipe.declared_writes, window, out)


def check_writes(
    name: str,
    declared_writes: frozenset[str],
    before: DataWindow,
    after: DataWindow,
) -> DataWindow:
    if (
        after.window_id != before.window_id
        or after.frames != before.frames
        or after.transcript != before.transcript
    ):
        raise UndeclaredWriteError(f"pipe {name!r} mutated window structure")
    for key in before.slots:
        if key not in after.slots:
            raise UndeclaredWriteError(f"pipe {name!r} removed slot {key!r}")
    for key, slot in after.slots.items():
        if key in before.slots and before.slots[key] == slot:
            continue
        if key not in declared_writes:
            raise UndeclaredWriteError(
                f"pipe {name!r} wrote undeclared slot {key!r} "
                f"(declared: {sorted(declared_writes)})"
            )
    return after


def merge_parallel_outputs(
    base: DataWindow,
    outputs: Sequence[tuple[str, DataWindow]],
) -> DataWindow:
    """Fold disjoint slot diffs from parallel children onto the base window.

    Cross-producer key collisions surface as SlotCollisionError from put_slot.
    """
    merged = base
    for _, out in outputs:
        for key, slot in out.slots.items():
            if key in base.slots and base.slots[key] == slot:
                continue
            merged = put_slot(merged, slot)
    return merged
