"""Transcript-driven DataWindow generation.

Parses a word-timestamped transcript, re-segments it into sentences, greedily
assembles coherent paragraphs, and yields DataWindows whose frame spans align
with the paragraph spans.  The coherency scorer is pluggable; the default is
cosine similarity over stopword-stripped term-frequency vectors.
"""

from __future__ import annotations

import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Iterator, Optional, Sequence

from .windows import (
    DataWindow,
    Frame,
    FrameRef,
    ImageLike,
    TranscriptSegment,
    WordTiming,
    new_window,
)

logger = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"[a-z0-9']+")
_TRAILING_CLOSERS = "\"')]}”’"


class TranscriptError(ValueError):
    pass


class MalformedDocumentError(TranscriptError):
    pass


class NonMonotonicTimesError(TranscriptError):
    pass


def _load_wordlist(name: str) -> frozenset[str]:
    text = resources.files("videokg.data").joinpath(name).read_text(encoding="utf-8")
    return frozenset(
        line.strip().lower()
        for line in text.splitlines()
        if line.strip() and not line.startswith("#")
    )


STOPWORDS = _load_wordlist("stopwords.txt")
ABBREVIATIONS = _load_wordlist("abbreviations.txt")


@dataclass(frozen=True)
class Sentence:
    text: str
    words: tuple[WordTiming, ...]
    start: float
    end: float

    @classmethod
    def from_words(cls, words: Sequence[WordTiming]) -> "Sentence":
        words = tuple(words)
        if not words:
            raise TranscriptError("sentence needs at least one word")
        return cls(
            text=" ".join(w.surface for w in words),
            words=words,
            start=words[0].start,
            end=words[-1].end,
        )


@dataclass(frozen=True)
class Paragraph:
    sentences: tuple[Sentence, ...]

    @property
    def start(self) -> float:
        return self.sentences[0].start

    @property
    def end(self) -> float:
        return self.sentences[-1].end

    @property
    def text(self) -> str:
        return " ".join(s.text for s in self.sentences)

    def words(self) -> tuple[WordTiming, ...]:
        return tuple(w for s in self.sentences for w in s.words)


@dataclass(frozen=True)
class SegmenterConfig:
    coherency_threshold: float = 0.15
    max_sentences_per_paragraph: int = 12
    max_paragraph_duration: float = 30.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.coherency_threshold <= 1.0 + 1e-9:
            # slightly above 1.0 is allowed so "always reject" is expressible
            if self.coherency_threshold > 1.5:
                raise ValueError(f"coherency_threshold out of range: {self.coherency_threshold}")
        if self.max_sentences_per_paragraph < 1:
            raise ValueError("max_sentences_per_paragraph must be >= 1")
        if self.max_paragraph_duration <= 0:
            raise ValueError("max_paragraph_duration must be positive")


def parse_transcript(document) -> list[WordTiming]:
    """Parse the transcript interchange document {video_id, words:[{w,s,e}]}.

    Accepts a dict, JSON text, or a path to a JSON file.  The returned word
    list is ordered by start time.
    """
    data = _coerce_document(document)
    raw_words = data.get("words")
    if raw_words is None or not isinstance(raw_words, list):
        raise MalformedDocumentError("transcript document has no 'words' list")
    words: list[WordTiming] = []
    for i, entry in enumerate(raw_words):
        try:
            surface = entry["w"]
            start = float(entry["s"])
            end = float(entry["e"])
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedDocumentError(f"word entry {i} malformed: {entry!r}") from exc
        if start > end:
            raise NonMonotonicTimesError(
                f"word entry {i} ({surface!r}): start {start} > end {end}"
            )
        words.append(WordTiming(surface=str(surface), start=start, end=end))
    words.sort(key=lambda w: (w.start, w.end))
    return words


def transcript_video_id(document) -> Optional[str]:
    data = _coerce_document(document)
    vid = data.get("video_id")
    return str(vid) if vid is not None else None


def _coerce_document(document) -> dict:
    if isinstance(document, dict):
        return document
    if isinstance(document, Path):
        document = document.read_text(encoding="utf-8")
    if isinstance(document, bytes):
        document = document.decode("utf-8")
    if isinstance(document, str):
        try:
            data = json.loads(document)
        except json.JSONDecodeError as exc:
            raise MalformedDocumentError(f"not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise MalformedDocumentError("transcript document must be a JSON object")
        return data
    raise MalformedDocumentError(f"unsupported document type {type(document)!r}")


def segment_sentences(
    words: Sequence[WordTiming],
    abbreviations: Optional[frozenset[str]] = None,
) -> list[Sentence]:
    """Split words into sentences at terminal punctuation (. ! ?).

    A word ending with a period is not a boundary when its lowercased surface
    is a known abbreviation.  Sentence timestamps are realigned from member
    words.  No boundary at all yields a single sentence.
    """
    abbreviations = ABBREVIATIONS if abbreviations is None else abbreviations
    sentences: list[Sentence] = []
    current: list[WordTiming] = []
    for word in words:
        current.append(word)
        if _is_sentence_boundary(word.surface, abbreviations):
            sentences.append(Sentence.from_words(current))
            current = []
    if current:
        sentences.append(Sentence.from_words(current))
    return sentences


def _is_sentence_boundary(surface: str, abbreviations: frozenset[str]) -> bool:
    stripped = surface.rstrip(_TRAILING_CLOSERS)
    if not stripped or stripped[-1] not in ".!?":
        return False
    if stripped[-1] == "." and stripped.lower() in abbreviations:
        return False
    return True


def content_tokens(text: str, stopwords: frozenset[str] = STOPWORDS) -> list[str]:
    return [t for t in _TOKEN_RE.findall(text.lower()) if t not in stopwords]


def coherency_score(
    context_sentences: Sequence[Sentence], candidate_sentence: Sentence
) -> float:
    """Cosine similarity of stopword-stripped term-frequency vectors in [0, 1]."""
    context_text = " ".join(s.text for s in context_sentences)
    a = Counter(content_tokens(context_text))
    b = Counter(content_tokens(candidate_sentence.text))
    if not a or not b:
        return 0.0
    dot = sum(count * b[token] for token, count in a.items())
    if dot == 0:
        return 0.0
    norm_a = math.sqrt(sum(c * c for c in a.values()))
    norm_b = math.sqrt(sum(c * c for c in b.values()))
    return dot / (norm_a * norm_b)


CoherencyScorer = Callable[[Sequence[Sentence], Sentence], float]


def build_paragraphs(
    sentences: Sequence[Sentence],
    config: SegmenterConfig,
    scorer: Optional[CoherencyScorer] = None,
) -> list[Paragraph]:
    """Greedy accretion: append the next sentence while it stays coherent.

    A sentence joins the open paragraph iff scorer(paragraph, sentence) >= the
    coherency threshold and neither the sentence-count nor the duration limit
    would be exceeded; otherwise the paragraph is cut.  The output partitions
    the input list.
    """
    scorer = scorer if scorer is not None else coherency_score
    paragraphs: list[Paragraph] = []
    current: list[Sentence] = []
    for sentence in sentences:
        if not current:
            current.append(sentence)
            continue
        within_count = len(current) + 1 <= config.max_sentences_per_paragraph
        within_duration = (
            sentence.end - current[0].start <= config.max_paragraph_duration
        )
        if (
            within_count
            and within_duration
            and scorer(current, sentence) >= config.coherency_threshold
        ):
            current.append(sentence)
        else:
            paragraphs.append(Paragraph(tuple(current)))
            current = [sentence]
    if current:
        paragraphs.append(Paragraph(tuple(current)))
    return paragraphs


# --- window generation -------------------------------------------------------


@dataclass
class VideoSource:
    """Handle to an already-decoded video: duration plus a frame loader.

    ``frame_image`` maps a global frame index (at the sampling fps) to a lazy
    image; None means frames are unavailable (transcript-only processing).
    """

    video_id: str
    duration: float
    fps: float = 1.0
    frame_image: Optional[Callable[[int], ImageLike]] = None


FrameSampler = Callable[[VideoSource, float, float, int], list[Frame]]


def uniform_sampler(video: VideoSource, start: float, end: float, window_index: int) -> list[Frame]:
    """Sample frames at the video's fps over the half-open span [start, end)."""
    fps = video.fps
    k_start = math.ceil(start * fps - 1e-9)
    k_end = math.ceil(end * fps - 1e-9)
    frames = []
    for k in range(max(k_start, 0), k_end):
        ref = FrameRef(
            video_id=video.video_id,
            window_index=window_index,
            frame_index=k,
            timestamp=k / fps,
        )
        image = video.frame_image(k) if video.frame_image is not None else None
        frames.append(Frame(ref, image))
    return frames


def generate_windows(
    video: VideoSource,
    paragraphs: Sequence[Paragraph],
    config: SegmenterConfig,
    sampler: FrameSampler = uniform_sampler,
) -> Iterator[DataWindow]:
    """Yield one DataWindow per paragraph, lazily, in order.

    Paragraph spans outside the video duration are clamped with a warning.
    Spans not covered by any paragraph (silent video) are emitted as windows
    with an empty transcript, cut by max_paragraph_duration.
    """
    window_index = 0
    for span_start, span_end, paragraph in _timeline(video, paragraphs, config):
        if paragraph is not None:
            transcript = TranscriptSegment(
                text=paragraph.text,
                words=paragraph.words(),
                start=paragraph.start,
                end=paragraph.end,
            )
        else:
            transcript = TranscriptSegment.empty()
        frames = sampler(video, span_start, span_end, window_index)
        if not frames and transcript.is_empty:
            continue
        yield new_window(video.video_id, frames, transcript, window_index=window_index)
        window_index += 1


def _timeline(
    video: VideoSource,
    paragraphs: Sequence[Paragraph],
    config: SegmenterConfig,
) -> Iterator[tuple[float, float, Optional[Paragraph]]]:
    """Order paragraph spans and silent gaps; chunk gaps by max duration."""
    duration = video.duration
    min_gap = 1.0 / video.fps if video.fps > 0 else 1.0
    cursor = 0.0
    for paragraph in paragraphs:
        start, end = paragraph.start, paragraph.end
        if end > duration + 1e-9:
            logger.warning(
                "paragraph span [%.3f, %.3f] exceeds video duration %.3f; clamped",
                start,
                end,
                duration,
            )
        if start - cursor > min_gap:
            yield from _chunked_gap(cursor, start, config.max_paragraph_duration)
        yield (start, min(end, duration), paragraph)
        cursor = max(cursor, end)
    if duration - cursor > min_gap:
        yield from _chunked_gap(cursor, duration, config.max_paragraph_duration)


def _chunked_gap(start: float, end: float, max_duration: float):
    cursor = start
    while end - cursor > 1e-9:
        chunk_end = min(cursor + max_duration, end)
        yield (cursor, chunk_end, None)
        cursor = chunk_end
