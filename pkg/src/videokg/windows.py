"""DataWindow: the unit of work every pipeline stage reads and writes.

A DataWindow is a time-aligned slice of one video (frames plus a transcript
segment) carrying an open-ended map of named inference slots.  Windows are
immutable-after-write values: ``put_slot`` returns a new logical version, so
they are safe to hand between worker threads without locking.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Mapping, Optional, Sequence, Union

import numpy as np

Box = tuple[float, float, float, float]  # (x0, y0, x1, y1), normalized to [0, 1]


class WindowError(ValueError):
    """Base class for DataWindow construction and slot violations."""


class EmptyWindowError(WindowError):
    pass


class UnorderedFramesError(WindowError):
    pass


class ForeignFrameRefError(WindowError):
    pass


class SlotCollisionError(WindowError):
    """A slot key was rewritten by a different producer."""


def validate_box(box: Sequence[float], context: str = "box") -> Box:
    """Check a normalized box lies in the unit square with positive extent."""
    if len(box) != 4:
        raise WindowError(f"{context}: expected 4 coordinates, got {len(box)}")
    x0, y0, x1, y1 = (float(v) for v in box)
    if not (0.0 <= x0 < x1 <= 1.0 and 0.0 <= y0 < y1 <= 1.0):
        raise WindowError(f"{context}: invalid extent ({x0}, {y0}, {x1}, {y1})")
    return (x0, y0, x1, y1)


@dataclass(frozen=True, order=True)
class FrameRef:
    """Stable identity of one frame: global frame_index within the source video."""

    video_id: str
    window_index: int
    frame_index: int
    timestamp: float

    def __post_init__(self) -> None:
        if self.window_index < 0 or self.frame_index < 0:
            raise WindowError(f"negative index in {self}")
        if self.timestamp < 0:
            raise WindowError(f"negative timestamp in {self}")


@dataclass
class ImageBuffer:
    """Decoded pixel plane, gray (h, w) or RGB (h, w, 3), dtype uint8."""

    pixels: np.ndarray
    source: Optional[FrameRef] = None

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim == 2:
            pass
        elif px.ndim == 3 and px.shape[2] in (1, 3):
            if px.shape[2] == 1:
                px = px[:, :, 0]
        else:
            raise WindowError(f"unsupported pixel shape {px.shape}")
        if px.shape[0] == 0 or px.shape[1] == 0:
            raise WindowError("zero-area image")
        self.pixels = px

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else int(self.pixels.shape[2])


class ImageHandle:
    """Lazy image reference (decode on demand) so large videos can stream."""

    def __init__(self, path, source: Optional[FrameRef] = None):
        self.path = path
        self.source = source

    def load(self) -> ImageBuffer:
        from PIL import Image

        with Image.open(self.path) as im:
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            return ImageBuffer(np.asarray(im), source=self.source)

    def __repr__(self) -> str:
        return f"ImageHandle({self.path!r})"


ImageLike = Union[ImageBuffer, ImageHandle, None]


def load_image(image: ImageLike) -> ImageBuffer:
    if isinstance(image, ImageBuffer):
        return image
    if isinstance(image, ImageHandle):
        return image.load()
    raise WindowError("frame has no image data attached")


@dataclass
class Frame:
    """A (FrameRef, image-or-lazy-handle) pair. Equality ignores pixel data."""

    ref: FrameRef
    image: ImageLike = None

    def __eq__(self, other) -> bool:
        return isinstance(other, Frame) and self.ref == other.ref

    def __hash__(self) -> int:
        return hash(self.ref)


@dataclass(frozen=True)
class WordTiming:
    surface: str
    start: float
    end: float

    def __post_init__(self) -> None:
        if self.start > self.end:
            raise WindowError(
                f"word {self.surface!r}: start {self.start} > end {self.end}"
            )


@dataclass(frozen=True)
class TranscriptSegment:
    text: str
    words: tuple[WordTiming, ...]
    start: float
    end: float

    @classmethod
    def empty(cls) -> "TranscriptSegment":
        return cls(text="", words=(), start=0.0, end=0.0)

    @classmethod
    def from_words(cls, words: Sequence[WordTiming]) -> "TranscriptSegment":
        words = tuple(words)
        if not words:
            return cls.empty()
        return cls(
            text=" ".join(w.surface for w in words),
            words=words,
            start=words[0].start,
            end=words[-1].end,
        )

    @property
    def is_empty(self) -> bool:
        return not self.words and not self.text


# --- slot payload items -----------------------------------------------------
# Every payload element carries the FrameRef it belongs to, so a window can
# assert that a slot never references frames outside itself.


@dataclass(frozen=True)
class Tag:
    frame: FrameRef
    label: str
    confidence: float = 1.0


@dataclass(frozen=True)
class OcrSpan:
    frame: FrameRef
    text: str
    box: Optional[Box] = None
    confidence: float = 1.0


@dataclass(frozen=True)
class Detection:
    frame: FrameRef
    label: str
    box: Box
    confidence: float = 1.0


@dataclass(frozen=True)
class Caption:
    frame: FrameRef
    text: str
    box: Optional[Box] = None  # crop box for branch captions, None = whole frame
    branch_index: int = 0


@dataclass(frozen=True)
class TripletItem:
    frame: FrameRef
    subject: str
    relation: str
    object: str


@dataclass(frozen=True)
class Keyframe:
    frame: FrameRef
    laplacian_variance: float
    cluster: int


@dataclass(frozen=True)
class KeyframeSelection:
    keyframes: tuple[Keyframe, ...]
    chosen_k: int
    scaled_inertia_curve: tuple[tuple[int, float], ...]


SlotPayload = Union[tuple, KeyframeSelection]


def iter_payload_frames(payload: SlotPayload) -> Iterator[FrameRef]:
    """Yield every FrameRef referenced by a slot payload."""
    if isinstance(payload, KeyframeSelection):
        for kf in payload.keyframes:
            yield kf.frame
        return
    for item in payload:
        frame = getattr(item, "frame", None)
        if frame is not None:
            yield frame


@dataclass(frozen=True)
class InferenceSlot:
    key: str
    payload: SlotPayload
    producer: str
    produced_at: int = 0


@dataclass(frozen=True)
class DataWindow:
    window_id: str
    video_id: str
    window_index: int
    frames: tuple[Frame, ...]
    transcript: TranscriptSegment
    slots: Mapping[str, InferenceSlot] = field(default_factory=dict)

    def frame_refs(self) -> tuple[FrameRef, ...]:
        return tuple(f.ref for f in self.frames)

    def get_slot(self, key: str) -> Optional[InferenceSlot]:
        return self.slots.get(key)

    def payload(self, key: str, default=()) -> SlotPayload:
        slot = self.slots.get(key)
        return slot.payload if slot is not None else default

    def next_sequence(self) -> int:
        if not self.slots:
            return 0
        return max(s.produced_at for s in self.slots.values()) + 1

    def with_slot(self, key: str, payload: SlotPayload, producer: str) -> "DataWindow":
        slot = InferenceSlot(key, payload, producer, self.next_sequence())
        return put_slot(self, slot)


def new_window(
    video_id: str,
    frames: Sequence[Frame],
    transcript: Optional[TranscriptSegment] = None,
    window_index: int = 0,
) -> DataWindow:
    """Build a validated window with an empty slot map."""
    frames = tuple(frames)
    transcript = transcript if transcript is not None else TranscriptSegment.empty()
    if not frames and transcript.is_empty:
        raise EmptyWindowError(f"{video_id}:{window_index}: no frames and no transcript")
    prev: Optional[FrameRef] = None
    for frame in frames:
        ref = frame.ref
        if ref.video_id != video_id or ref.window_index != window_index:
            raise ForeignFrameRefError(f"{ref} does not belong to {video_id}:{window_index}")
        if prev is not None:
            if ref.frame_index <= prev.frame_index:
                raise UnorderedFramesError(
                    f"frame_index {ref.frame_index} after {prev.frame_index}"
                )
            if ref.timestamp < prev.timestamp:
                raise UnorderedFramesError(
                    f"timestamp {ref.timestamp} after {prev.timestamp}"
                )
        prev = ref
    if frames and not transcript.is_empty:
        lo = min(f.ref.timestamp for f in frames)
        hi = max(f.ref.timestamp for f in frames)
        if transcript.start > lo + 1e-9 or transcript.end < hi - 1e-9:
            raise WindowError(
                f"transcript span [{transcript.start}, {transcript.end}] does not "
                f"cover frame timestamps [{lo}, {hi}]"
            )
    return DataWindow(
        window_id=f"{video_id}:{window_index}",
        video_id=video_id,
        window_index=window_index,
        frames=frames,
        transcript=transcript,
        slots={},
    )


def put_slot(window: DataWindow, slot: InferenceSlot) -> DataWindow:
    """Return a new window with ``slot`` written; replace only by the same producer."""
    own = set(window.frame_refs())
    for ref in iter_payload_frames(slot.payload):
        if ref not in own:
            raise ForeignFrameRefError(
                f"slot {slot.key!r} references {ref}, not a frame of {window.window_id}"
            )
    existing = window.slots.get(slot.key)
    if existing is not None and existing.producer != slot.producer:
        raise SlotCollisionError(
            f"slot {slot.key!r} already written by {existing.producer!r}, "
            f"rejected write by {slot.producer!r}"
        )
    slots = dict(window.slots)
    slots[slot.key] = slot
    return replace(window, slots=slots)


def window_span(window: DataWindow) -> tuple[float, float]:
    """Min/max over transcript span and frame timestamps."""
    points: list[float] = []
    if not window.transcript.is_empty:
        points.extend((window.transcript.start, window.transcript.end))
    points.extend(f.ref.timestamp for f in window.frames)
    return (min(points), max(points))
