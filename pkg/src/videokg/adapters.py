"""Micro-service protocol for the neural pipes, plus deterministic stubs.

Adapters exchange versioned JSON request/response documents.  Images travel
as content-addressed references (hash + dimensions), never inline pixels.
Stub adapters replay canned responses keyed by content hash from a manifest
file, which makes whole pipeline runs replayable byte-for-byte offline.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

from .windows import Box, DataWindow, FrameRef, ImageBuffer, Tag, validate_box

logger = logging.getLogger(__name__)

PROTOCOL_VERSION = 1

TASKS = ("transcribe", "tag", "ground", "ocr", "caption", "parse_triplets", "coref", "box_refine")


class AdapterError(RuntimeError):
    pass


class TransportError(AdapterError):
    pass


class AdapterTimeout(TransportError):
    pass


class SchemaError(AdapterError):
    pass


class StubResponseMissing(AdapterError):
    pass


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff: float = 0.01
    multiplier: float = 2.0


@dataclass(frozen=True)
class AdapterEndpoint:
    task: str
    base_address: str = "stub://local"
    timeout: float = 10.0
    retry: RetryPolicy = RetryPolicy()

    def __post_init__(self):
        if self.task not in TASKS:
            raise SchemaError(f"unknown task kind {self.task!r}")
        if self.timeout <= 0:
            raise SchemaError("timeout must be positive")


def image_content_hash(image: ImageBuffer) -> str:
    digest = hashlib.sha256()
    digest.update(f"{image.height}x{image.width}x{image.channels}:".encode())
    digest.update(image.pixels.tobytes())
    return digest.hexdigest()[:16]


def text_content_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def image_ref(image: ImageBuffer) -> dict:
    return {"hash": image_content_hash(image), "width": image.width, "height": image.height}


# --- task schemas -----------------------------------------------------------------


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise SchemaError(message)


def _check_image_ref(doc, where: str) -> None:
    _require(isinstance(doc, dict), f"{where}: image ref must be a mapping")
    _require(isinstance(doc.get("hash"), str) and doc["hash"], f"{where}: missing image hash")
    _require(int(doc.get("width", 0)) > 0 and int(doc.get("height", 0)) > 0,
             f"{where}: bad image dimensions")


def _check_box(raw, where: str, required: bool = False) -> None:
    if raw is None:
        _require(not required, f"{where}: box required")
        return
    _require(isinstance(raw, (list, tuple)) and len(raw) == 4, f"{where}: malformed box")
    x0, y0, x1, y1 = (float(v) for v in raw)
    _require(0.0 <= x0 < x1 <= 1.0 and 0.0 <= y0 < y1 <= 1.0, f"{where}: box out of range")


def _check_confidence(raw, where: str) -> None:
    _require(0.0 <= float(raw) <= 1.0, f"{where}: confidence out of [0, 1]")


def validate_request(task: str, request: dict) -> None:
    _require(isinstance(request, dict), "request must be a mapping")
    _require(request.get("task") == task, f"request task mismatch: {request.get('task')!r} != {task!r}")
    _require(request.get("version") == PROTOCOL_VERSION, "unsupported protocol version")
    if task == "transcribe":
        _require(bool(request.get("video_id")), "transcribe: missing video_id")
    elif task in ("tag", "ocr"):
        _check_image_ref(request.get("image"), task)
    elif task == "ground":
        _check_image_ref(request.get("image"), task)
        phrases = request.get("phrases")
        _require(isinstance(phrases, list) and len(phrases) > 0, "ground: phrases must be non-empty")
    elif task == "caption":
        _check_image_ref(request.get("image"), task)
        if request.get("box") is not None:
            _check_box(request["box"], "caption.box")
    elif task == "parse_triplets":
        _require(isinstance(request.get("sentences"), list), "parse_triplets: missing sentences")
    elif task == "coref":
        _require(isinstance(request.get("paragraph"), str), "coref: missing paragraph")
    elif task == "box_refine":
        _check_image_ref(request.get("image"), task)
        _require(isinstance(request.get("boxes"), list), "box_refine: missing boxes")


def validate_response(task: str, response: dict) -> None:
    _require(isinstance(response, dict), "response must be a mapping")
    if task == "transcribe":
        words = response.get("words")
        _require(isinstance(words, list), "transcribe: missing words")
        for i, w in enumerate(words):
            _require(
                isinstance(w, dict) and "w" in w and "s" in w and "e" in w,
                f"transcribe.words[{i}]: need w/s/e",
            )
    elif task == "tag":
        tags = response.get("tags")
        _require(isinstance(tags, list), "tag: missing tags")
        for i, t in enumerate(tags):
            _require(isinstance(t.get("label"), str) and t["label"], f"tag.tags[{i}]: missing label")
            _check_confidence(t.get("confidence", 1.0), f"tag.tags[{i}]")
    elif task == "ground":
        dets = response.get("detections")
        _require(isinstance(dets, list), "ground: missing detections")
        for i, d in enumerate(dets):
            _require(isinstance(d.get("label"), str), f"ground.detections[{i}]: missing label")
            _check_box(d.get("box"), f"ground.detections[{i}]", required=True)
            _check_confidence(d.get("confidence", 1.0), f"ground.detections[{i}]")
    elif task == "ocr":
        spans = response.get("spans")
        _require(isinstance(spans, list), "ocr: missing spans")
        for i, s in enumerate(spans):
            _require(isinstance(s.get("text"), str), f"ocr.spans[{i}]: missing text")
            _check_box(s.get("box"), f"ocr.spans[{i}]")
            _check_confidence(s.get("confidence", 1.0), f"ocr.spans[{i}]")
    elif task == "caption":
        _require(isinstance(response.get("caption"), str), "caption: missing caption text")
    elif task == "parse_triplets":
        triplets = response.get("triplets")
        _require(isinstance(triplets, list), "parse_triplets: missing triplets")
        for i, t in enumerate(triplets):
            for key in ("subject", "relation", "object"):
                _require(isinstance(t.get(key), str), f"parse_triplets.triplets[{i}]: missing {key}")
    elif task == "coref":
        mapping = response.get("map")
        _require(isinstance(mapping, dict), "coref: missing map")
    elif task == "box_refine":
        boxes = response.get("boxes")
        _require(isinstance(boxes, list), "box_refine: missing boxes")
        for i, b in enumerate(boxes):
            _check_box(b, f"box_refine.boxes[{i}]", required=True)


def make_request(task: str, **fields) -> dict:
    request = {"task": task, "version": PROTOCOL_VERSION}
    request.update(fields)
    validate_request(task, request)
    return request


# --- transports & client ---------------------------------------------------------


Transport = Callable[[AdapterEndpoint, dict], dict]


def http_transport(client=None) -> Transport:
    """POST the request document to <base_address>/<task>."""
    import httpx

    def send(endpoint: AdapterEndpoint, request: dict) -> dict:
        try:
            owned = client or httpx.Client(timeout=endpoint.timeout)
            try:
                response = owned.post(f"{endpoint.base_address}/{endpoint.task}", json=request)
            finally:
                if client is None:
                    owned.close()
        except httpx.TimeoutException as exc:
            raise AdapterTimeout(str(exc)) from exc
        except httpx.HTTPError as exc:
            raise TransportError(str(exc)) from exc
        if response.status_code != 200:
            raise TransportError(f"{endpoint.task}: HTTP {response.status_code}")
        return response.json()

    return send


class AdapterClient:
    """Retrying request/response client for one endpoint."""

    def __init__(self, endpoint: AdapterEndpoint, transport: Transport, *, sleep=time.sleep):
        self.endpoint = endpoint
        self._transport = transport
        self._sleep = sleep

    def call(self, request: dict) -> dict:
        validate_request(self.endpoint.task, request)
        policy = self.endpoint.retry
        delay = policy.backoff
        last: Optional[Exception] = None
        for attempt in range(policy.max_attempts):
            try:
                response = self._transport(self.endpoint, request)
            except TransportError as exc:
                last = exc
                logger.warning(
                    "adapter %s attempt %d/%d failed: %s",
                    self.endpoint.task, attempt + 1, policy.max_attempts, exc,
                )
                if attempt + 1 < policy.max_attempts:
                    self._sleep(delay)
                    delay *= policy.multiplier
                continue
            validate_response(self.endpoint.task, response)
            return response
        raise TransportError(
            f"{self.endpoint.task}: {policy.max_attempts} attempts failed: {last}"
        )


def call_adapter(endpoint: AdapterEndpoint, request: dict, transport: Transport, **kw) -> dict:
    return AdapterClient(endpoint, transport, **kw).call(request)


# --- stub adapters ------------------------------------------------------------------


def stub_key(task: str, request: dict) -> str:
    """Content key a stub response is filed under."""
    if task == "transcribe":
        return f"{task}:{text_content_hash(request['video_id'])}"
    if task in ("tag", "ocr", "ground", "caption", "box_refine"):
        return f"{task}:{request['image']['hash']}"
    if task == "parse_triplets":
        return f"{task}:{text_content_hash(chr(10).join(request['sentences']))}"
    if task == "coref":
        return f"{task}:{text_content_hash(request['paragraph'])}"
    raise SchemaError(f"unknown task {task!r}")


class StubAdapterService:
    """Replays manifest responses: a pure function of (task, content hash)."""

    def __init__(self, manifest: dict):
        if manifest.get("version") != PROTOCOL_VERSION:
            raise SchemaError(f"unsupported stub manifest version {manifest.get('version')!r}")
        self._responses: dict[str, dict] = dict(manifest.get("responses", {}))
        self._defaults: dict[str, dict] = dict(manifest.get("defaults", {}))

    @classmethod
    def load(cls, path) -> "StubAdapterService":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def transport(self) -> Transport:
        def send(endpoint: AdapterEndpoint, request: dict) -> dict:
            return self.respond(endpoint.task, request)

        return send

    def respond(self, task: str, request: dict) -> dict:
        validate_request(task, request)
        key = stub_key(task, request)
        response = self._responses.get(key, self._defaults.get(task))
        if response is None:
            raise StubResponseMissing(f"no canned response for {key}")
        validate_response(task, response)
        return response


def build_stub_manifest(entries: Sequence[tuple[str, dict, dict]], defaults: Mapping[str, dict] = {}) -> dict:
    """Assemble a manifest from (task, request, response) triples."""
    responses = {}
    for task, request, response in entries:
        validate_request(task, request)
        validate_response(task, response)
        responses[stub_key(task, request)] = response
    return {"version": PROTOCOL_VERSION, "responses": responses, "defaults": dict(defaults)}


# --- grounding prompt & cropping ----------------------------------------------------


@dataclass(frozen=True)
class GroundingPrompt:
    phrases: tuple[str, ...]
    image: FrameRef

    def __post_init__(self):
        if not self.phrases:
            raise SchemaError("grounding prompt needs at least one phrase")


def build_grounding_prompt(
    window: DataWindow, frame: FrameRef
) -> tuple[Optional[GroundingPrompt], bool]:
    """Distinct tag labels for the frame, in first-appearance order.

    With no tags there is no grounding call; the returned fallback flag tells
    the caller to rely on automatic-region behaviour downstream.
    """
    labels: list[str] = []
    for item in window.payload("tags"):
        if isinstance(item, Tag) and item.frame == frame and item.label not in labels:
            labels.append(item.label)
    if not labels:
        return None, True
    return GroundingPrompt(phrases=tuple(labels), image=frame), False


@dataclass(frozen=True)
class CropSpec:
    source: FrameRef
    box: Box  # the actual cropped region, normalized
    branch_index: int


def focus_crops(
    frame: FrameRef,
    image: ImageBuffer,
    detections: Sequence[tuple[str, Box]],
    pad_ratio: float = 0.02,
) -> list[tuple[CropSpec, ImageBuffer]]:
    """One padded crop per detection box, plus the whole frame as branch 0.

    Crops degenerating to fewer than 4 pixels after clamping are skipped.
    """
    height, width = image.height, image.width
    out: list[tuple[CropSpec, ImageBuffer]] = [
        (CropSpec(frame, (0.0, 0.0, 1.0, 1.0), 0), image)
    ]
    branch = 1
    for label, box in detections:
        x0, y0, x1, y1 = validate_box(box, context=f"detection {label!r}")
        px0 = max(0, math.floor((x0 - pad_ratio) * width))
        py0 = max(0, math.floor((y0 - pad_ratio) * height))
        px1 = min(width, math.ceil((x1 + pad_ratio) * width))
        py1 = min(height, math.ceil((y1 + pad_ratio) * height))
        if (px1 - px0) * (py1 - py0) < 4:
            logger.warning("crop for %r degenerate after clamping; skipped", label)
            continue
        crop = ImageBuffer(image.pixels[py0:py1, px0:px1].copy(), source=frame)
        spec = CropSpec(
            source=frame,
            box=(px0 / width, py0 / height, px1 / width, py1 / height),
            branch_index=branch,
        )
        out.append((spec, crop))
        branch += 1
    return out
