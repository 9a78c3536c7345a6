"""VideoKnowledgeBase: the frame-level indexed record of all per-video inferences.

One JSON document per video, written atomically with deterministic field
ordering so runs over stub adapters are byte-reproducible.  Loading validates
every schema invariant and round-trips exactly.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .keyframes import KEYFRAMES_SLOT
from .windows import Box, Caption, DataWindow, Detection, FrameRef, OcrSpan, Tag, TripletItem

SCHEMA_VERSION = 1
DEFAULT_CREATED_AT = "1970-01-01T00:00:00Z"  # deterministic unless a clock is injected


class KbError(ValueError):
    pass


class OutOfOrderWindowError(KbError):
    pass


class MissingKeyframesError(KbError):
    pass


class SchemaVersionError(KbError):
    pass


class KbValidationError(KbError):
    pass


@dataclass(frozen=True)
class OcrEntry:
    text: str
    box: Optional[Box] = None
    confidence: float = 1.0


@dataclass(frozen=True)
class TagEntry:
    label: str
    confidence: float = 1.0


@dataclass(frozen=True)
class DetectionEntry:
    label: str
    box: Box
    confidence: float = 1.0


@dataclass(frozen=True)
class CaptionEntry:
    text: str
    box: Optional[Box] = None


@dataclass(frozen=True)
class TripletEntry:
    subject: str
    relation: str
    object: str


@dataclass(frozen=True)
class FrameRecord:
    frame_index: int
    t: float
    ocr: tuple[OcrEntry, ...] = ()
    tags: tuple[TagEntry, ...] = ()
    detections: tuple[DetectionEntry, ...] = ()
    captions: tuple[CaptionEntry, ...] = ()
    triplets: tuple[TripletEntry, ...] = ()


@dataclass(frozen=True)
class TranscriptInfo:
    text: str
    start: float
    end: float


@dataclass(frozen=True)
class WindowRecord:
    index: int
    transcript: TranscriptInfo
    keyframes: tuple[FrameRecord, ...] = ()


@dataclass(frozen=True)
class VideoKnowledgeBase:
    video_id: str
    fingerprint: str
    windows: tuple[WindowRecord, ...] = ()
    created_at: str = DEFAULT_CREATED_AT

    def frame_ref(self, window_index: int, record: FrameRecord) -> FrameRef:
        return FrameRef(self.video_id, window_index, record.frame_index, record.t)


# --- building from DataWindows ------------------------------------------------


def window_record(window: DataWindow) -> WindowRecord:
    """Project a processed DataWindow onto the KB schema.

    Requires a populated "keyframes" slot; per-frame entries are drawn from
    the conventional slots (ocr, tags, detections, captions, triplets).
    """
    selection = window.payload(KEYFRAMES_SLOT, default=None)
    if selection is None:
        raise MissingKeyframesError(f"{window.window_id}: no keyframes slot")
    frames = []
    for keyframe in selection.keyframes:
        ref = keyframe.frame
        frames.append(
            FrameRecord(
                frame_index=ref.frame_index,
                t=ref.timestamp,
                ocr=tuple(
                    OcrEntry(i.text, i.box, i.confidence)
                    for i in window.payload("ocr")
                    if isinstance(i, OcrSpan) and i.frame == ref
                ),
                tags=tuple(
                    TagEntry(i.label, i.confidence)
                    for i in window.payload("tags")
                    if isinstance(i, Tag) and i.frame == ref
                ),
                detections=tuple(
                    DetectionEntry(i.label, i.box, i.confidence)
                    for i in window.payload("detections")
                    if isinstance(i, Detection) and i.frame == ref
                ),
                captions=tuple(
                    CaptionEntry(i.text, i.box)
                    for i in sorted(
                        (c for c in window.payload("captions") if isinstance(c, Caption) and c.frame == ref),
                        key=lambda c: c.branch_index,
                    )
                ),
                triplets=tuple(
                    TripletEntry(i.subject, i.relation, i.object)
                    for i in window.payload("triplets")
                    if isinstance(i, TripletItem) and i.frame == ref
                ),
            )
        )
    transcript = TranscriptInfo(
        text=window.transcript.text,
        start=window.transcript.start,
        end=window.transcript.end,
    )
    return WindowRecord(index=window.window_index, transcript=transcript, keyframes=tuple(frames))


def consume(
    window_stream: Iterable[DataWindow],
    sink: Optional[Path | str] = None,
    *,
    fingerprint: str = "",
    created_at: str = DEFAULT_CREATED_AT,
) -> VideoKnowledgeBase:
    """Collect a video's windows, in order, into one KB document.

    Windows must arrive with contiguous window indices starting at 0; the
    document is written atomically (temp file + rename) when a sink is given.
    """
    records: list[WindowRecord] = []
    video_id: Optional[str] = None
    for window in window_stream:
        if video_id is None:
            video_id = window.video_id
        elif window.video_id != video_id:
            raise KbError(f"mixed videos in one stream: {video_id} vs {window.video_id}")
        expected = len(records)
        if window.window_index != expected:
            raise OutOfOrderWindowError(
                f"expected window {expected}, got {window.window_index}"
            )
        records.append(window_record(window))
    if video_id is None:
        raise KbError("empty window stream")
    kb = VideoKnowledgeBase(
        video_id=video_id,
        fingerprint=fingerprint,
        windows=tuple(records),
        created_at=created_at,
    )
    if sink is not None:
        write_kb(kb, sink)
    return kb


# --- serialization --------------------------------------------------------------


def _box_json(box: Optional[Box]):
    return None if box is None else [box[0], box[1], box[2], box[3]]


def to_document(kb: VideoKnowledgeBase) -> dict:
    return {
        "version": SCHEMA_VERSION,
        "video_id": kb.video_id,
        "fingerprint": kb.fingerprint,
        "created_at": kb.created_at,
        "windows": [
            {
                "index": w.index,
                "transcript": {
                    "text": w.transcript.text,
                    "start": w.transcript.start,
                    "end": w.transcript.end,
                },
                "keyframes": [
                    {
                        "frame_index": f.frame_index,
                        "t": f.t,
                        "ocr": [
                            {"text": o.text, "box": _box_json(o.box), "confidence": o.confidence}
                            for o in f.ocr
                        ],
                        "tags": [
                            {"label": t.label, "confidence": t.confidence} for t in f.tags
                        ],
                        "detections": [
                            {"label": d.label, "box": _box_json(d.box), "confidence": d.confidence}
                            for d in f.detections
                        ],
                        "captions": [
                            {"text": c.text, "box": _box_json(c.box)} for c in f.captions
                        ],
                        "triplets": [
                            {"subject": t.subject, "relation": t.relation, "object": t.object}
                            for t in f.triplets
                        ],
                    }
                    for f in w.keyframes
                ],
            }
            for w in kb.windows
        ],
    }


def write_kb(kb: VideoKnowledgeBase, path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = json.dumps(to_document(kb), indent=2, ensure_ascii=False) + "\n"
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(payload, encoding="utf-8")
    os.replace(tmp, path)
    return path


# --- loading & validation ---------------------------------------------------------


def _require(condition: bool, where: str, message: str) -> None:
    if not condition:
        raise KbValidationError(f"{where}: {message}")


def _parse_box(raw, where: str, required: bool) -> Optional[Box]:
    if raw is None:
        _require(not required, where, "box required")
        return None
    _require(isinstance(raw, list) and len(raw) == 4, where, f"malformed box {raw!r}")
    x0, y0, x1, y1 = (float(v) for v in raw)
    _require(0.0 <= x0 < x1 <= 1.0, where, f"box x-extent invalid: {raw}")
    _require(0.0 <= y0 < y1 <= 1.0, where, f"box y-extent invalid: {raw}")
    return (x0, y0, x1, y1)


def _parse_confidence(raw, where: str) -> float:
    value = float(raw)
    _require(0.0 <= value <= 1.0, where, f"confidence {value} outside [0, 1]")
    return value


def load_kb(path: Path | str) -> VideoKnowledgeBase:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise KbValidationError(f"{path}: not valid JSON: {exc}") from exc
    return from_document(doc)


def from_document(doc: dict) -> VideoKnowledgeBase:
    version = doc.get("version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(f"unsupported KB schema version {version!r}")
    windows = []
    for wi, w in enumerate(doc.get("windows", ())):
        where = f"windows[{wi}]"
        _require(w.get("index") == wi, where, f"window indices not contiguous (got {w.get('index')})")
        transcript_raw = w.get("transcript", {})
        transcript = TranscriptInfo(
            text=str(transcript_raw.get("text", "")),
            start=float(transcript_raw.get("start", 0.0)),
            end=float(transcript_raw.get("end", 0.0)),
        )
        frames = []
        for fi, f in enumerate(w.get("keyframes", ())):
            fwhere = f"{where}.keyframes[{fi}]"
            frames.append(
                FrameRecord(
                    frame_index=int(f["frame_index"]),
                    t=float(f["t"]),
                    ocr=tuple(
                        OcrEntry(
                            text=str(o["text"]),
                            box=_parse_box(o.get("box"), f"{fwhere}.ocr[{oi}]", required=False),
                            confidence=_parse_confidence(o.get("confidence", 1.0), f"{fwhere}.ocr[{oi}]"),
                        )
                        for oi, o in enumerate(f.get("ocr", ()))
                    ),
                    tags=tuple(
                        TagEntry(
                            label=str(t["label"]),
                            confidence=_parse_confidence(t.get("confidence", 1.0), f"{fwhere}.tags[{ti}]"),
                        )
                        for ti, t in enumerate(f.get("tags", ()))
                    ),
                    detections=tuple(
                        DetectionEntry(
                            label=str(d["label"]),
                            box=_parse_box(d.get("box"), f"{fwhere}.detections[{di}]", required=True),
                            confidence=_parse_confidence(d.get("confidence", 1.0), f"{fwhere}.detections[{di}]"),
                        )
                        for di, d in enumerate(f.get("detections", ()))
                    ),
                    captions=tuple(
                        CaptionEntry(
                            text=str(c["text"]),
                            box=_parse_box(c.get("box"), f"{fwhere}.captions[{ci}]", required=False),
                        )
                        for ci, c in enumerate(f.get("captions", ()))
                    ),
                    triplets=tuple(
                        TripletEntry(
                            subject=str(t["subject"]),
                            relation=str(t["relation"]),
                            object=str(t["object"]),
                        )
                        for t in f.get("triplets", ())
                    ),
                )
            )
        windows.append(WindowRecord(index=wi, transcript=transcript, keyframes=tuple(frames)))
    return VideoKnowledgeBase(
        video_id=str(doc.get("video_id", "")),
        fingerprint=str(doc.get("fingerprint", "")),
        windows=tuple(windows),
        created_at=str(doc.get("created_at", DEFAULT_CREATED_AT)),
    )
