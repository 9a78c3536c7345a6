"""Video analysis pipelines, frame-indexed knowledge bases, and synset knowledge graphs."""

__version__ = "0.1.0"

from .windows import (  # noqa: F401
    DataWindow,
    Frame,
    FrameRef,
    ImageBuffer,
    ImageHandle,
    TranscriptSegment,
    WordTiming,
    new_window,
    put_slot,
    window_span,
)
