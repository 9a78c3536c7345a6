"""Pipeline orchestration: pipes, directors, and the streaming runner."""

from .pipes import (  # noqa: F401
    BatchPipe,
    BatchPolicy,
    BranchingPipe,
    BranchUnit,
    FunctionPipe,
    MissingBranchError,
    Pipe,
    PipeDirector,
    DirectedPipe,
    UndeclaredWriteError,
    apply_pipe,
    branch,
    merge,
)
from .runner import (  # noqa: F401
    PipelineRun,
    PipelineSpec,
    SpecError,
    StageFailure,
    loop_spec,
    parallel,
    run_batched,
    run_loop,
    run_pipeline,
    sequential,
    validate_spec,
)
from .config import load_pipeline_spec  # noqa: F401
