"""Request/response service: query, frame inspection, and the annotation loop.

Single process.  Queries read lock-free store snapshots; mutations (virtual
registry, labels, classifier registry) serialize through one lock; training
plus re-indexing runs on a background thread per job, one active job per
virtual synset, and swaps in new graph versions atomically via the store.
"""

from __future__ import annotations

import base64
import io
import logging
import threading
import uuid
from dataclasses import dataclass, field
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .config import RunConfig
from .kb import load_kb
from .learning import (
    LabeledSample,
    ReindexJob,
    collect_candidates,
    crop_descriptor,
    reindex,
    save_classifier,
    train_mini_classifier,
)
from .lexicon import LexiconDb, VirtualSynsetError, load_lexicon
from .retrieval import NoKnownTermsError, retrieve
from .store import GraphStore

logger = logging.getLogger(__name__)


class ApiError(Exception):
    def __init__(self, code: str, message: str, context: Optional[dict] = None, status: int = 400):
        super().__init__(message)
        self.code = code
        self.message = message
        self.context = context or {}
        self.status = status


class QueryRequest(BaseModel):
    q: str
    top_k: int = Field(default=10, ge=1, le=100)


class VirtualCreateRequest(BaseModel):
    parent: str
    name: str


class LabelItem(BaseModel):
    video_id: str
    frame_index: int
    box: list[float]
    label: str  # positive | negative


class LabelsRequest(BaseModel):
    labels: list[LabelItem]


@dataclass
class TrainState:
    samples: list[LabeledSample] = field(default_factory=list)
    seen: set = field(default_factory=set)
    job_id: Optional[str] = None


@dataclass
class AppState:
    config: RunConfig
    store: GraphStore
    lexicon: LexiconDb
    labels: dict[str, TrainState] = field(default_factory=dict)
    jobs: dict[str, ReindexJob] = field(default_factory=dict)
    classifiers: dict[str, object] = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def train_state(self, virtual_id: str) -> TrainState:
        return self.labels.setdefault(virtual_id, TrainState())


def build_state(config: RunConfig) -> AppState:
    if config.lexicon is None:
        raise ApiError("config-error", "config.lexicon is required to serve", status=500)
    store = GraphStore(config.store)
    lexicon = load_lexicon(config.lexicon)
    if store.virtual_registry.exists():
        lexicon.load_virtual_registry(store.virtual_registry)
    return AppState(config=config, store=store, lexicon=lexicon)


def create_app(state: AppState) -> FastAPI:
    app = FastAPI(title="videokg", version="0.1.0")

    @app.exception_handler(ApiError)
    async def handle_api_error(_request: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status,
            content={"code": exc.code, "message": exc.message, "context": exc.context},
        )

    @app.get("/videos")
    def videos():
        out = []
        for video_id in state.store.video_ids():
            graph = state.store.load(video_id)
            out.append(
                {
                    "video_id": video_id,
                    "graph_version": state.store.latest_version(video_id),
                    "nodes": len(graph.nodes),
                    "windows": sorted(graph.provenance),
                }
            )
        return {"videos": out}

    @app.post("/query")
    def query(body: QueryRequest):
        try:
            hits = retrieve(body.q, state.store.snapshot(), state.lexicon, top_k=body.top_k)
        except NoKnownTermsError as exc:
            raise ApiError("no-known-terms", str(exc), {"q": body.q}) from exc
        return {
            "hits": [
                {
                    "video_id": h.video_id,
                    "score": h.score,
                    "specificity": h.specificity,
                    "matched": list(h.matched),
                    "frames": [
                        {"window": f.window_index, "frame": f.frame_index, "t": f.timestamp}
                        for f in h.frames[:12]
                    ],
                }
                for h in hits
            ]
        }

    @app.get("/frames/{video_id}/{frame_index}")
    def frame(video_id: str, frame_index: int):
        from PIL import Image

        try:
            image = state.store.frame_image(video_id, frame_index)
        except Exception as exc:
            raise ApiError("not-found", f"frame {video_id}/{frame_index}: {exc}", status=404) from exc
        png = io.BytesIO()
        Image.fromarray(image.pixels, mode="L" if image.channels == 1 else "RGB").save(png, "PNG")
        overlays = []
        kb_path = state.store.kb_path(video_id)
        if kb_path.exists():
            kb = load_kb(kb_path)
            for window in kb.windows:
                for record in window.keyframes:
                    if record.frame_index == frame_index:
                        overlays.extend(
                            {
                                "label": d.label,
                                "box": list(d.box),
                                "confidence": d.confidence,
                                "source": "detection",
                            }
                            for d in record.detections
                        )
        try:
            from .lexicon import is_virtual_id

            graph = state.store.load(video_id)
            for sid, node in graph.nodes.items():
                if not is_virtual_id(sid):
                    continue  # ancestors carry propagated copies of the same items
                for ref, ev in node.evidence.items():
                    if ref.frame_index != frame_index:
                        continue
                    overlays.extend(
                        {
                            "label": sid,
                            "box": list(item.box),
                            "confidence": 1.0,
                            "source": "classifier",
                        }
                        for item in ev.items
                        if item.kind == "classifier" and item.box is not None
                    )
        except Exception:
            pass
        return {
            "video_id": video_id,
            "frame_index": frame_index,
            "width": image.width,
            "height": image.height,
            "image_png_base64": base64.b64encode(png.getvalue()).decode("ascii"),
            "overlays": overlays,
        }

    @app.post("/virtual-synsets", status_code=201)
    def create_virtual(body: VirtualCreateRequest):
        with state.lock:
            try:
                virtual = state.lexicon.register_virtual(body.parent, body.name)
            except VirtualSynsetError as exc:
                code = "parent-virtual" if "itself virtual" in str(exc) else (
                    "parent-not-found" if "not found" in str(exc) else "duplicate-name"
                )
                raise ApiError(code, str(exc), {"parent": body.parent, "name": body.name}) from exc
            state.lexicon.save_virtual_registry(state.store.virtual_registry)
        return {"id": virtual.id, "parent": virtual.parent, "name": virtual.name}

    def _require_virtual(virtual_id: str):
        try:
            return state.lexicon.virtual(virtual_id)
        except VirtualSynsetError as exc:
            raise ApiError("not-found", str(exc), status=404) from exc

    @app.get("/virtual-synsets/{virtual_id}/candidates")
    def candidates(virtual_id: str, limit: int = 50):
        virtual = _require_virtual(virtual_id)
        try:
            found = collect_candidates(virtual.parent, state.store.snapshot(), limit=limit)
        except Exception as exc:
            raise ApiError("parent-unseen", str(exc), {"parent": virtual.parent}) from exc
        return {
            "candidates": [
                {
                    "video_id": c.video_id,
                    "window": c.frame.window_index,
                    "frame": c.frame.frame_index,
                    "t": c.frame.timestamp,
                    "box": list(c.box),
                }
                for c in found
            ]
        }

    @app.post("/virtual-synsets/{virtual_id}/labels")
    def submit_labels(virtual_id: str, body: LabelsRequest):
        _require_virtual(virtual_id)
        accepted = 0
        with state.lock:
            train_state = state.train_state(virtual_id)
            for item in body.labels:
                if item.label not in ("positive", "negative"):
                    raise ApiError("validation-error", f"bad label {item.label!r}")
                if len(item.box) != 4:
                    raise ApiError("validation-error", f"bad box {item.box!r}")
                key = (item.video_id, item.frame_index, tuple(item.box))
                if key in train_state.seen:
                    continue
                try:
                    image = state.store.frame_image(item.video_id, item.frame_index)
                except Exception as exc:
                    raise ApiError("not-found", str(exc), status=404) from exc
                features = crop_descriptor(image, tuple(item.box))
                train_state.samples.append(
                    LabeledSample(
                        features=features,
                        label=1 if item.label == "positive" else -1,
                        box=tuple(item.box),
                    )
                )
                train_state.seen.add(key)
                accepted += 1
        return {"accepted": accepted, "total": len(state.train_state(virtual_id).samples)}

    @app.post("/virtual-synsets/{virtual_id}/train", status_code=202)
    def train(virtual_id: str):
        _require_virtual(virtual_id)
        with state.lock:
            train_state = state.train_state(virtual_id)
            labels = {s.label for s in train_state.samples}
            if len(train_state.samples) < 2 or labels != {-1, 1}:
                raise ApiError(
                    "single-class-input",
                    "need labeled samples of both classes before training",
                    {"samples": len(train_state.samples)},
                )
            active = train_state.job_id
            if active and state.jobs[active].status in ("queued", "running"):
                raise ApiError("job-conflict", f"job {active} already active for {virtual_id}", status=409)
            job = ReindexJob(job_id=f"job-{uuid.uuid4().hex[:12]}", virtual_id=virtual_id)
            state.jobs[job.job_id] = job
            train_state.job_id = job.job_id
            samples = list(train_state.samples)

        def work():
            try:
                classifier = train_mini_classifier(samples)
                with state.lock:
                    classifier_id = save_classifier(
                        state.store.classifier_registry, virtual_id, classifier
                    )
                    state.lexicon.set_classifier_ref(virtual_id, classifier_id)
                    state.lexicon.save_virtual_registry(state.store.virtual_registry)
                    state.classifiers[virtual_id] = classifier
                reindex(
                    virtual_id,
                    state.store,
                    state.lexicon,
                    classifier,
                    state.store.frame_image,
                    job=job,
                )
            except Exception as exc:
                logger.exception("training job %s failed", job.job_id)
                job.status = "failed"
                job.error = str(exc)

        threading.Thread(target=work, daemon=True, name=job.job_id).start()
        return {"job_id": job.job_id}

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str):
        job = state.jobs.get(job_id)
        if job is None:
            raise ApiError("not-found", f"unknown job {job_id!r}", status=404)
        return {
            "job_id": job.job_id,
            "virtual_synset": job.virtual_id,
            "status": job.status,
            "progress": {
                "videos_done": job.videos_done,
                "videos_total": job.videos_total,
                "accepted": job.accepted,
                "rejected": job.rejected,
            },
            "new_versions": job.new_versions,
            "error": job.error,
        }

    return app


def create_app_from_config(config: RunConfig) -> FastAPI:
    return create_app(build_state(config))
