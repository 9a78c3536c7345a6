"""The standard video-to-KB pipeline: keyframes, OCR+tagging, grounding,
crop captioning, and relation extraction, wired over adapter clients.

Fixture bundles (frames directory + transcript document + stub manifest)
stand in for a real video; the same pipes run unchanged against live
adapter endpoints.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

from . import kb as kb_store
from .adapters import (
    AdapterClient,
    AdapterEndpoint,
    StubAdapterService,
    Transport,
    build_grounding_prompt,
    focus_crops,
    http_transport,
    image_ref,
    make_request,
)
from .config import ConfigError, RunConfig
from .engine import FunctionPipe, Pipe, PipelineSpec, parallel, run_pipeline, sequential
from .engine.pipes import branch, merge
from .keyframes import KEYFRAMES_SLOT, KeyframeConfig, select_keyframes
from .relations import (
    ConcretenessLexicon,
    Triplet,
    build_coref_map,
    filter_triplets,
    parse_triplets,
    resolve_coreferences,
)
from .segmentation import (
    SegmenterConfig,
    VideoSource,
    build_paragraphs,
    generate_windows,
    parse_transcript,
    segment_sentences,
    transcript_video_id,
)
from .store import GraphStore
from .windows import (
    Caption,
    DataWindow,
    Detection,
    FrameRef,
    ImageHandle,
    OcrSpan,
    Tag,
    TripletItem,
    load_image,
)

logger = logging.getLogger(__name__)


def packaged_concreteness_path() -> Path:
    return Path(str(resources.files("videokg.data").joinpath("concreteness.txt")))


def _keyframe_images(window: DataWindow):
    selection = window.payload(KEYFRAMES_SLOT, default=None)
    if selection is None:
        raise RuntimeError(f"{window.window_id}: keyframes slot not populated yet")
    by_ref = {f.ref: f.image for f in window.frames}
    for keyframe in selection.keyframes:
        yield keyframe.frame, load_image(by_ref[keyframe.frame])


def keyframe_pipe(config: RunConfig) -> Pipe:
    kf_config = KeyframeConfig(
        alpha=config.alpha,
        k_max=config.k_max,
        seed=config.kmeans_seed,
        restarts=config.kmeans_restarts,
    )

    def fn(window: DataWindow) -> DataWindow:
        return select_keyframes(window, kf_config, producer="keyframes")

    return FunctionPipe("keyframes", fn, writes=(KEYFRAMES_SLOT,))


def ocr_pipe(client: AdapterClient) -> Pipe:
    def fn(window: DataWindow) -> DataWindow:
        spans = []
        for ref, image in _keyframe_images(window):
            response = client.call(make_request("ocr", image=image_ref(image)))
            for span in response["spans"]:
                box = tuple(span["box"]) if span.get("box") else None
                spans.append(OcrSpan(ref, span["text"], box, span.get("confidence", 1.0)))
        return window.with_slot("ocr", tuple(spans), producer="ocr")

    return FunctionPipe("ocr", fn, reads=(KEYFRAMES_SLOT,), writes=("ocr",))


def tag_pipe(client: AdapterClient) -> Pipe:
    def fn(window: DataWindow) -> DataWindow:
        tags = []
        for ref, image in _keyframe_images(window):
            response = client.call(make_request("tag", image=image_ref(image)))
            for tag in response["tags"]:
                tags.append(Tag(ref, tag["label"], tag.get("confidence", 1.0)))
        return window.with_slot("tags", tuple(tags), producer="tags")

    return FunctionPipe("tags", fn, reads=(KEYFRAMES_SLOT,), writes=("tags",))


def grounding_pipe(client: AdapterClient) -> Pipe:
    """ImgTextPromptDirector semantics: tag labels become grounding phrases."""

    def fn(window: DataWindow) -> DataWindow:
        detections = []
        for ref, image in _keyframe_images(window):
            prompt, fallback = build_grounding_prompt(window, ref)
            if fallback:
                continue  # no tags: rely on automatic-region fallback downstream
            response = client.call(
                make_request("ground", image=image_ref(image), phrases=list(prompt.phrases))
            )
            for det in response["detections"]:
                detections.append(
                    Detection(ref, det["label"], tuple(det["box"]), det.get("confidence", 1.0))
                )
        return window.with_slot("detections", tuple(detections), producer="grounding")

    return FunctionPipe("grounding", fn, reads=(KEYFRAMES_SLOT, "tags"), writes=("detections",))


def caption_pipe(client: AdapterClient, pad_ratio: float) -> Pipe:
    """Whole frame plus one padded crop per detection, captioned per branch."""

    def fn(window: DataWindow) -> DataWindow:
        captions: list[Caption] = []
        detections = window.payload("detections")
        for ref, image in _keyframe_images(window):
            frame_dets = [(d.label, d.box) for d in detections if d.frame == ref]
            crops = focus_crops(ref, image, frame_dets, pad_ratio=pad_ratio)

            units = branch(window, lambda _w: crops)

            def caption_one(crop_pair):
                spec, crop_image = crop_pair
                response = client.call(make_request("caption", image=image_ref(crop_image)))
                box = None if spec.branch_index == 0 else spec.box
                return Caption(ref, response["caption"], box, spec.branch_index)

            results = [
                type(u)(u.window_id, u.branch_index, u.total, caption_one(u.item))
                for u in units
            ]
            merged = merge(window, results, lambda w, items: items)
            captions.extend(merged)
        return window.with_slot("captions", tuple(captions), producer="captions")

    return FunctionPipe(
        "captions", fn, reads=(KEYFRAMES_SLOT, "detections"), writes=("captions",)
    )


def triplet_pipe(
    concreteness: ConcretenessLexicon,
    tau: float,
    parse_client: Optional[AdapterClient] = None,
    coref_client: Optional[AdapterClient] = None,
) -> Pipe:
    """Caption merging + triplet parsing + coreference + concreteness filter.

    Adapter-provided parses and coreference maps take precedence over the
    rule-based defaults when clients are configured.
    """

    def fn(window: DataWindow) -> DataWindow:
        items: list[TripletItem] = []
        captions = window.payload("captions")
        selection = window.payload(KEYFRAMES_SLOT, default=None)
        for keyframe in selection.keyframes:
            ref = keyframe.frame
            sentences = [
                c.text
                for c in sorted(
                    (c for c in captions if c.frame == ref), key=lambda c: c.branch_index
                )
            ]
            if not sentences:
                continue
            if parse_client is not None:
                response = parse_client.call(make_request("parse_triplets", sentences=sentences))
                triplets = [
                    Triplet(t["subject"], t["relation"], t["object"])
                    for t in response["triplets"]
                    if t["subject"] and t["object"]
                ]
            else:
                triplets = []
                for idx, sentence in enumerate(sentences):
                    triplets.extend(parse_triplets(sentence, source=(ref, idx)))
            if coref_client is not None:
                paragraph = " ".join(sentences)
                coref = coref_client.call(make_request("coref", paragraph=paragraph))["map"]
            else:
                coref = build_coref_map(sentences)
            kept = filter_triplets(resolve_coreferences(triplets, coref), concreteness, tau)
            items.extend(TripletItem(ref, t.subject, t.relation, t.object) for t in kept)
        return window.with_slot("triplets", tuple(items), producer="triplets")

    return FunctionPipe(
        "triplets", fn, reads=(KEYFRAMES_SLOT, "captions"), writes=("triplets",)
    )


# --- assembly -------------------------------------------------------------------


def make_transport(config: RunConfig) -> Transport:
    if config.stub_manifest is not None:
        return StubAdapterService.load(config.stub_manifest).transport()
    if config.adapter_endpoints:
        return http_transport()
    raise ConfigError("config needs either stub_manifest or adapter_endpoints")


def _client(config: RunConfig, transport: Transport, task: str) -> AdapterClient:
    address = config.adapter_endpoints.get(task, "stub://local")
    return AdapterClient(AdapterEndpoint(task=task, base_address=address), transport)


def pipe_registry(config: RunConfig, transport: Optional[Transport] = None) -> dict[str, Pipe]:
    transport = transport if transport is not None else make_transport(config)
    concreteness = ConcretenessLexicon.load(
        config.concreteness_lexicon or packaged_concreteness_path()
    )
    return {
        "keyframes": keyframe_pipe(config),
        "ocr": ocr_pipe(_client(config, transport, "ocr")),
        "tags": tag_pipe(_client(config, transport, "tag")),
        "grounding": grounding_pipe(_client(config, transport, "ground")),
        "captions": caption_pipe(_client(config, transport, "caption"), config.pad_ratio),
        "triplets": triplet_pipe(concreteness, config.concreteness_threshold),
    }


def build_recipe(config: RunConfig, transport: Optional[Transport] = None) -> PipelineSpec:
    registry = pipe_registry(config, transport)
    if config.pipeline_spec is not None:
        from .engine import load_pipeline_spec

        return load_pipeline_spec(config.pipeline_spec, registry)
    return sequential(
        registry["keyframes"],
        parallel(registry["ocr"], registry["tags"]),
        registry["grounding"],
        registry["captions"],
        registry["triplets"],
        capacity=config.queue_capacity,
        name="video-recipe",
    )


def pipeline_fingerprint(spec: PipelineSpec, config: RunConfig) -> str:
    names = []

    def walk(node):
        if isinstance(node, Pipe):
            names.append(node.name)
        else:
            for child in node.children:
                walk(child)

    walk(spec)
    digest = hashlib.sha256(json.dumps(config.behavior(), sort_keys=True).encode()).hexdigest()[:12]
    return ">".join(names) + ":" + digest


# --- fixture bundles -----------------------------------------------------------------


@dataclass
class VideoBundle:
    """A directory standing in for a decoded video: frames + transcript + stubs."""

    root: Path
    video_id: str
    fps: float
    duration: float

    @classmethod
    def open(cls, root: Path | str) -> "VideoBundle":
        root = Path(root)
        meta_path = root / "video.json"
        if not meta_path.exists():
            raise ConfigError(f"{root}: not a video bundle (video.json missing)")
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        return cls(
            root=root,
            video_id=str(meta["video_id"]),
            fps=float(meta.get("fps", 1.0)),
            duration=float(meta["duration"]),
        )

    @property
    def frames_dir(self) -> Path:
        return self.root / "frames"

    @property
    def transcript_path(self) -> Path:
        return self.root / "transcript.json"

    @property
    def manifest_path(self) -> Path:
        return self.root / "stub_manifest.json"

    def video_source(self) -> VideoSource:
        frames_dir = self.frames_dir

        def frame_image(index: int):
            return ImageHandle(frames_dir / f"{index:06d}.png")

        return VideoSource(
            video_id=self.video_id,
            duration=self.duration,
            fps=self.fps,
            frame_image=frame_image,
        )


@dataclass
class IngestResult:
    kb: kb_store.VideoKnowledgeBase
    kb_path: Path
    windows: int
    keyframes: int
    triplets: int
    failures: list


def ingest_bundle(bundle: VideoBundle | Path | str, config: RunConfig) -> IngestResult:
    """Run the full recipe over a fixture bundle and write the KB document."""
    if not isinstance(bundle, VideoBundle):
        bundle = VideoBundle.open(bundle)
    if config.stub_manifest is None and not config.adapter_endpoints:
        config.stub_manifest = bundle.manifest_path

    segmenter = SegmenterConfig(
        coherency_threshold=config.coherency_threshold,
        max_sentences_per_paragraph=config.max_sentences_per_paragraph,
        max_paragraph_duration=config.max_paragraph_duration,
    )
    if bundle.transcript_path.exists():
        words = parse_transcript(bundle.transcript_path)
        declared = transcript_video_id(bundle.transcript_path)
        if declared and declared != bundle.video_id:
            raise ConfigError(
                f"bundle video_id {bundle.video_id!r} != transcript video_id {declared!r}"
            )
    else:
        logger.warning("%s: no transcript document, silent-video segmentation", bundle.root)
        words = []
    sentences = segment_sentences(words)
    paragraphs = build_paragraphs(sentences, segmenter)
    windows = generate_windows(bundle.video_source(), paragraphs, segmenter)

    spec = build_recipe(config)
    run = run_pipeline(spec, windows)
    store = GraphStore(config.store)
    kb_path = store.kb_path(bundle.video_id)
    kb = kb_store.consume(
        run,
        kb_path,
        fingerprint=pipeline_fingerprint(spec, config),
        created_at=config.created_at or kb_store.DEFAULT_CREATED_AT,
    )
    store.register_video(bundle.video_id, bundle.frames_dir, bundle.fps)
    return IngestResult(
        kb=kb,
        kb_path=kb_path,
        windows=len(kb.windows),
        keyframes=sum(len(w.keyframes) for w in kb.windows),
        triplets=sum(len(f.triplets) for w in kb.windows for f in w.keyframes),
        failures=list(run.failures),
    )
