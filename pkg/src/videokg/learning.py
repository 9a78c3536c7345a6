"""VirtualSynset continual learning: candidates, mini-classifier, re-indexing.

The concept classifier is L2-regularized logistic regression trained by
full-batch gradient descent with backtracking halving, over a deterministic
image descriptor (gray histogram + sharpness + box shape, d=260).  Background
re-indexing applies the classifier to parent-node evidence crops and attaches
the accepted ones as a virtual child node, as a new graph version.
"""

from __future__ import annotations

import base64
import logging
import math
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .graph import (
    EvidenceItem,
    FrameEvidence,
    KnowledgeGraph,
    graph_from_document,
    graph_to_document,
    propagate_evidence,
)
from .keyframes import laplacian_variance, to_gray
from .lexicon import LexiconDb
from .store import FrameSource, GraphStore
from .windows import Box, FrameRef, ImageBuffer

logger = logging.getLogger(__name__)

FEATURE_DIM = 260


class LearningError(ValueError):
    pass


class SingleClassError(LearningError):
    pass


class DimensionMismatchError(LearningError):
    pass


class ParentUnseenError(LearningError):
    pass


# --- features ---------------------------------------------------------------------


def crop_descriptor(image: ImageBuffer, box: Box) -> np.ndarray:
    """Deterministic d=260 descriptor of one evidence crop.

    Normalized gray histogram (256) + Laplacian variance + box width, height,
    aspect.  Runs the loop end-to-end without neural embeddings.
    """
    x0, y0, x1, y1 = box
    height, width = image.height, image.width
    px0, px1 = int(math.floor(x0 * width)), int(math.ceil(x1 * width))
    py0, py1 = int(math.floor(y0 * height)), int(math.ceil(y1 * height))
    crop = image.pixels[max(0, py0) : py1, max(0, px0) : px1]
    if crop.size == 0:
        crop = image.pixels
    gray = to_gray(ImageBuffer(crop))
    hist = np.bincount(gray.ravel(), minlength=256).astype(np.float64)
    hist /= max(hist.sum(), 1.0)
    sharpness = laplacian_variance(gray) if min(gray.shape) >= 3 else 0.0
    bw, bh = x1 - x0, y1 - y0
    aspect = bw / bh if bh > 0 else 0.0
    return np.concatenate([hist, [sharpness, bw, bh, aspect]])


FeatureExtractor = Callable[[ImageBuffer, Box], np.ndarray]


@dataclass(frozen=True)
class LabeledSample:
    features: np.ndarray
    label: int  # +1 positive, -1 negative
    frame: Optional[FrameRef] = None
    box: Optional[Box] = None


# --- standardization -----------------------------------------------------------------


@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0.0] = 1.0
        return cls(mean=mean, scale=scale)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.scale


# --- logistic regression --------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    l2: float = 1e-3
    step: float = 1.0
    max_epochs: int = 5000
    grad_tol: float = 1e-6
    threshold: float = 0.5


@dataclass
class MiniClassifier:
    weights: np.ndarray
    bias: float
    threshold: float
    standardizer: Standardizer
    metadata: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return int(self.weights.shape[0])


def loss_and_gradient(
    w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2: float
) -> tuple[float, np.ndarray, float]:
    """Mean logistic loss + l2*||w||^2, with analytic gradients."""
    z = X @ w + b
    margins = y * z
    loss = float(np.logaddexp(0.0, -margins).mean() + l2 * (w @ w))
    # d/dz mean(log(1+exp(-y z))) = -(1/n) y * sigmoid(-y z)
    coeff = -y * _sigmoid(-margins) / len(y)
    grad_w = X.T @ coeff + 2.0 * l2 * w
    grad_b = float(coeff.sum())
    return loss, grad_w, grad_b


def _sigmoid(t: np.ndarray) -> np.ndarray:
    out = np.empty_like(t, dtype=np.float64)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def train_mini_classifier(
    samples: Sequence[LabeledSample],
    config: TrainConfig = TrainConfig(),
) -> MiniClassifier:
    """Full-batch gradient descent with backtracking halving.

    Stops when the gradient norm drops below grad_tol or after max_epochs.
    Loss is non-increasing across accepted steps by construction.
    """
    if len(samples) < 2:
        raise SingleClassError("need at least two samples")
    dims = {s.features.shape[0] for s in samples}
    if len(dims) != 1:
        raise DimensionMismatchError(f"inconsistent feature dimensions {sorted(dims)}")
    labels = {s.label for s in samples}
    if not labels == {-1, 1}:
        if labels <= {1} or labels <= {-1}:
            raise SingleClassError("training set must contain both labels")
        raise LearningError(f"labels must be +1/-1, got {sorted(labels)}")

    X_raw = np.stack([s.features for s in samples]).astype(np.float64)
    y = np.array([s.label for s in samples], dtype=np.float64)
    standardizer = Standardizer.fit(X_raw)
    X = standardizer.transform(X_raw)

    w = np.zeros(X.shape[1])
    b = 0.0
    loss, grad_w, grad_b = loss_and_gradient(w, b, X, y, config.l2)
    epochs = 0
    history = [loss]
    for epochs in range(1, config.max_epochs + 1):
        grad_norm = math.sqrt(float(grad_w @ grad_w) + grad_b * grad_b)
        if grad_norm < config.grad_tol:
            epochs -= 1
            break
        eta = config.step
        while True:
            w_next = w - eta * grad_w
            b_next = b - eta * grad_b
            loss_next, gw_next, gb_next = loss_and_gradient(w_next, b_next, X, y, config.l2)
            if loss_next <= loss or eta < 1e-14:
                break
            eta *= 0.5
        if loss_next > loss:
            break  # no descent direction progress possible at float precision
        w, b, loss, grad_w, grad_b = w_next, b_next, loss_next, gw_next, gb_next
        history.append(loss)
    preds = np.where(_sigmoid(X @ w + b) >= config.threshold, 1.0, -1.0)
    return MiniClassifier(
        weights=w,
        bias=b,
        threshold=config.threshold,
        standardizer=standardizer,
        metadata={
            "epochs": epochs,
            "final_loss": loss,
            "n_positive": int((y > 0).sum()),
            "n_negative": int((y < 0).sum()),
            "train_accuracy": float((preds == y).mean()),
            "loss_history": history,
        },
    )


def apply_classifier(classifier: MiniClassifier, features: np.ndarray) -> tuple[bool, float]:
    """Standardize, score, accept at probability >= threshold."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape != classifier.weights.shape:
        raise DimensionMismatchError(
            f"feature dim {features.shape} != model dim {classifier.weights.shape}"
        )
    x = classifier.standardizer.transform(features[None, :])[0]
    probability = float(_sigmoid(np.array([x @ classifier.weights + classifier.bias]))[0])
    return probability >= classifier.threshold, probability


# --- classifier registry -----------------------------------------------------------------


def _encode(arr: np.ndarray) -> str:
    return base64.b64encode(np.asarray(arr, dtype="<f8").tobytes()).decode("ascii")


def _decode(text: str) -> np.ndarray:
    return np.frombuffer(base64.b64decode(text.encode("ascii")), dtype="<f8").copy()


def save_classifier(path: Path | str, virtual_id: str, classifier: MiniClassifier,
                    classifier_id: Optional[str] = None) -> str:
    """Append one registry line: id|virtual|d|weights|bias|threshold|mean|scale."""
    classifier_id = classifier_id or f"clf-{uuid.uuid4().hex[:12]}"
    line = "|".join(
        [
            classifier_id,
            virtual_id,
            str(classifier.dim),
            _encode(classifier.weights),
            repr(classifier.bias),
            repr(classifier.threshold),
            _encode(classifier.standardizer.mean),
            _encode(classifier.standardizer.scale),
        ]
    )
    path = Path(path)
    with path.open("a", encoding="utf-8") as fh:
        fh.write(line + "\n")
    return classifier_id


def load_classifiers(path: Path | str) -> dict[str, tuple[str, MiniClassifier]]:
    """Registry contents as {classifier_id: (virtual_id, classifier)}."""
    out: dict[str, tuple[str, MiniClassifier]] = {}
    path = Path(path)
    if not path.exists():
        return out
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("|")
        if len(parts) != 8:
            raise LearningError(f"{path}:{lineno}: expected 8 fields")
        cid, virtual_id, dim, w_b64, bias, threshold, mean_b64, scale_b64 = parts
        weights = _decode(w_b64)
        if weights.shape[0] != int(dim):
            raise LearningError(f"{path}:{lineno}: dimension mismatch")
        out[cid] = (
            virtual_id,
            MiniClassifier(
                weights=weights,
                bias=float(bias),
                threshold=float(threshold),
                standardizer=Standardizer(mean=_decode(mean_b64), scale=_decode(scale_b64)),
            ),
        )
    return out


# --- annotation candidates ------------------------------------------------------------------


@dataclass(frozen=True)
class AnnotationCandidate:
    video_id: str
    frame: FrameRef
    box: Box


def parent_evidence_crops(graph: KnowledgeGraph, parent: str) -> list[tuple[FrameRef, Box]]:
    """Evidence crops of one node: detection boxes, else the whole frame."""
    node = graph.nodes.get(parent)
    if node is None:
        return []
    crops: list[tuple[FrameRef, Box]] = []
    for frame in sorted(node.evidence, key=lambda r: (r.window_index, r.frame_index)):
        boxes = [item.box for item in sorted(node.evidence[frame].items) if item.box is not None]
        if boxes:
            crops.extend((frame, box) for box in boxes)
        else:
            crops.append((frame, (0.0, 0.0, 1.0, 1.0)))
    return crops


def collect_candidates(
    parent: str,
    graphs: dict[str, KnowledgeGraph],
    limit: int = 50,
) -> list[AnnotationCandidate]:
    """Deduplicated evidence crops of the parent synset across all videos."""
    seen: set[tuple] = set()
    out: list[AnnotationCandidate] = []
    parent_found = False
    for video_id in sorted(graphs):
        graph = graphs[video_id]
        if parent in graph.nodes:
            parent_found = True
        for frame, box in parent_evidence_crops(graph, parent):
            key = (video_id, frame.frame_index, box)
            if key in seen:
                continue
            seen.add(key)
            out.append(AnnotationCandidate(video_id=video_id, frame=frame, box=box))
    if not parent_found:
        raise ParentUnseenError(f"synset {parent!r} appears in no stored graph")
    out.sort(key=lambda c: (c.video_id, c.frame.frame_index, c.box))
    return out[:limit]


# --- re-indexing ---------------------------------------------------------------------------


@dataclass
class ReindexJob:
    job_id: str
    virtual_id: str
    status: str = "queued"  # queued | running | done | failed
    videos_total: int = 0
    videos_done: int = 0
    accepted: int = 0
    rejected: int = 0
    new_versions: dict[str, int] = field(default_factory=dict)
    error: str = ""


def reindex(
    virtual_id: str,
    store: GraphStore,
    lexicon: LexiconDb,
    classifier: MiniClassifier,
    frame_source: FrameSource,
    feature_extractor: FeatureExtractor = crop_descriptor,
    job: Optional[ReindexJob] = None,
) -> ReindexJob:
    """Score parent-evidence crops per graph; accepted crops become the
    virtual child node's evidence in a new graph version.

    Idempotent: a rerun over unchanged inputs reproduces identical content,
    which the store maps back to the existing version.  Per-graph failures
    are logged and skipped; the job keeps going.
    """
    job = job or ReindexJob(job_id=f"job-{uuid.uuid4().hex[:12]}", virtual_id=virtual_id)
    parent = lexicon.virtual(virtual_id).parent
    video_ids = store.video_ids()
    job.videos_total = len(video_ids)
    job.status = "running"
    for video_id in video_ids:
        try:
            graph = store.load(video_id)
            if parent in graph.nodes:
                accepted: list[tuple[FrameRef, Box]] = []
                for frame, box in parent_evidence_crops(graph, parent):
                    image = frame_source(video_id, frame.frame_index)
                    ok, _prob = apply_classifier(classifier, feature_extractor(image, box))
                    if ok:
                        accepted.append((frame, box))
                        job.accepted += 1
                    else:
                        job.rejected += 1
                if accepted:
                    updated = graph_from_document(graph_to_document(graph))
                    node = updated.ensure_node(virtual_id, direct=True)
                    for frame, box in accepted:
                        node.add_evidence(
                            FrameEvidence(frame, (EvidenceItem("classifier", virtual_id, box),))
                        )
                    updated.ensure_node(parent)
                    updated.add_edge(virtual_id, parent)
                    propagate_evidence(updated)
                    job.new_versions[video_id] = store.put(updated)
        except Exception as exc:
            logger.warning("reindex of %s failed for %s: %s", virtual_id, video_id, exc)
        job.videos_done += 1
    job.status = "done"
    return job
