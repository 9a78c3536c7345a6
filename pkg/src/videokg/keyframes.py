"""Keyframe selection: gray-histogram k-means with automatic k.

The cluster count is chosen by minimizing scaled inertia
(inertia(k)/inertia(1) + alpha*k); within each cluster the least blurry frame
wins by Laplacian variance.  No brightness/contrast pre-filtering is applied.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .windows import (
    DataWindow,
    FrameRef,
    ImageBuffer,
    Keyframe,
    KeyframeSelection,
    load_image,
)

GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])
LAPLACIAN_KERNEL = np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], dtype=np.float64)


class KeyframeError(ValueError):
    pass


def to_gray(image: ImageBuffer) -> np.ndarray:
    """Luma conversion 0.299R + 0.587G + 0.114B, rounded, clamped to [0, 255]."""
    if image.channels == 1:
        return image.pixels
    luma = image.pixels.astype(np.float64) @ GRAY_WEIGHTS
    return np.clip(np.floor(luma + 0.5), 0, 255).astype(np.uint8)


@dataclass(frozen=True)
class HistogramVector:
    bins: np.ndarray  # 256 non-negative reals
    source: Optional[FrameRef]
    normalized: bool = False


def gray_histogram(image: ImageBuffer) -> HistogramVector:
    """256-bin count histogram of the gray-scaled image."""
    gray = to_gray(image)
    bins = np.bincount(gray.ravel(), minlength=256).astype(np.float64)
    return HistogramVector(bins=bins, source=image.source)


def normalize_histogram(hist: HistogramVector) -> HistogramVector:
    total = hist.bins.sum()
    if total == 0:
        raise KeyframeError("histogram of zero-area image")
    return HistogramVector(bins=hist.bins / total, source=hist.source, normalized=True)


@dataclass
class ClusteringResult:
    k: int
    assignments: np.ndarray  # point index -> cluster index
    centroids: np.ndarray
    inertia: float
    inertia_history: tuple[float, ...] = field(default_factory=tuple)


def _kmeans_pp_seed(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ initialization: D^2-weighted sampling of successive centers."""
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    first = int(rng.integers(n))
    centers[0] = points[first]
    dist_sq = ((points - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = dist_sq.sum()
        if total <= 0:
            # all remaining points coincide with a chosen center
            idx = int(rng.integers(n))
        else:
            probs = dist_sq / total
            idx = int(rng.choice(n, p=probs))
        centers[j] = points[idx]
        dist_sq = np.minimum(dist_sq, ((points - centers[j]) ** 2).sum(axis=1))
    return centers


def _assign(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # squared Euclidean via the inner-product expansion; stable argmin
    # (ties to lower cluster index), clamped against negative float noise
    d = (
        (points * points).sum(axis=1)[:, None]
        + (centroids * centroids).sum(axis=1)[None, :]
        - 2.0 * points @ centroids.T
    )
    np.maximum(d, 0.0, out=d)
    labels = d.argmin(axis=1)
    return labels, d[np.arange(len(points)), labels]


def kmeans(
    points: np.ndarray,
    k: int,
    max_iters: int = 100,
    seed: int = 0,
) -> ClusteringResult:
    """Lloyd's algorithm with k-means++ seeding; fully deterministic per seed.

    Empty clusters are repaired by stealing the farthest point from the
    largest cluster, so every cluster in the result is non-empty.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if k < 1:
        raise KeyframeError(f"k must be >= 1, got {k}")
    if k > n:
        raise KeyframeError(f"k={k} exceeds number of points n={n}")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_seed(points, k, rng)
    labels = np.full(n, -1)
    history: list[float] = []
    for _ in range(max_iters):
        new_labels, dists = _assign(points, centroids)
        new_labels = _repair_empty_clusters(points, centroids, new_labels, k)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            centroids[j] = points[labels == j].mean(axis=0)
        _, dists = _assign_fixed(points, centroids, labels)
        history.append(float(dists.sum()))
    _, dists = _assign_fixed(points, centroids, labels)
    return ClusteringResult(
        k=k,
        assignments=labels,
        centroids=centroids,
        inertia=float(dists.sum()),
        inertia_history=tuple(history),
    )


def _assign_fixed(points, centroids, labels):
    diffs = points - centroids[labels]
    return labels, (diffs ** 2).sum(axis=1)


def _repair_empty_clusters(points, centroids, labels, k):
    labels = labels.copy()
    for j in range(k):
        if (labels == j).any():
            continue
        counts = np.bincount(labels, minlength=k)
        donor = int(counts.argmax())
        members = np.flatnonzero(labels == donor)
        d = ((points[members] - centroids[donor]) ** 2).sum(axis=1)
        steal = members[int(d.argmax())]
        labels[steal] = j
    return labels


def kmeans_best_of(
    points: np.ndarray,
    k: int,
    max_iters: int = 100,
    seed: int = 0,
    restarts: int = 5,
) -> ClusteringResult:
    """Best-inertia result over seeded restarts (seed, seed+1, ...)."""
    best: Optional[ClusteringResult] = None
    for r in range(restarts):
        result = kmeans(points, k, max_iters=max_iters, seed=seed + r)
        if best is None or result.inertia < best.inertia - 1e-12:
            best = result
    assert best is not None
    return best


def choose_k(
    points: np.ndarray,
    k_range: Sequence[int],
    alpha: float = 0.02,
    seed: int = 0,
    restarts: int = 5,
) -> tuple[int, list[tuple[int, float]]]:
    """Pick k minimizing inertia(k)/inertia(1) + alpha*k; ties go to smaller k.

    When every point is identical (inertia(1) == 0) the answer is k=1.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if alpha <= 0:
        raise KeyframeError(f"alpha must be positive, got {alpha}")
    ks = sorted(set(int(k) for k in k_range))
    if not ks or ks[0] < 1 or ks[-1] > n:
        raise KeyframeError(f"k_range {ks} not within [1, {n}]")
    base = float(((points - points.mean(axis=0)) ** 2).sum())
    if base <= 1e-12:
        return 1, [(k, float(alpha * k)) for k in ks]
    curve: list[tuple[int, float]] = []
    best_k, best_value = ks[0], float("inf")
    for k in ks:
        inertia = 0.0 if k == n else kmeans_best_of(points, k, seed=seed, restarts=restarts).inertia
        if k == 1:
            inertia = base
        value = inertia / base + alpha * k
        curve.append((k, value))
        if value < best_value - 1e-12:
            best_k, best_value = k, value
    return best_k, curve


def laplacian_variance(image: ImageBuffer | np.ndarray) -> float:
    """Population variance of 3x3 Laplacian responses over interior pixels."""
    gray = to_gray(image) if isinstance(image, ImageBuffer) else np.asarray(image)
    if gray.shape[0] < 3 or gray.shape[1] < 3:
        raise KeyframeError(f"image {gray.shape} smaller than 3x3 kernel")
    a = gray.astype(np.float64)
    responses = (
        a[:-2, 1:-1] + a[2:, 1:-1] + a[1:-1, :-2] + a[1:-1, 2:] - 4.0 * a[1:-1, 1:-1]
    )
    return float(responses.var())


@dataclass(frozen=True)
class KeyframeConfig:
    alpha: float = 0.02
    k_max: int = 25
    k_range: Optional[tuple[int, ...]] = None  # overrides 1..min(k_max, n)
    max_iters: int = 100
    seed: int = 0
    restarts: int = 5


def compute_keyframes(
    frames: Sequence[tuple[FrameRef, ImageBuffer]],
    config: KeyframeConfig = KeyframeConfig(),
) -> KeyframeSelection:
    """Histogram -> choose_k -> kmeans -> per-cluster sharpest frame.

    Within a cluster, ties on Laplacian variance break toward the smaller
    frame_index.  Keyframes are returned in frame order.
    """
    if not frames:
        raise KeyframeError("window has no frames")
    refs = [ref for ref, _ in frames]
    histograms = np.stack(
        [normalize_histogram(gray_histogram(img)).bins for _, img in frames]
    )
    n = len(frames)
    k_range = config.k_range or tuple(range(1, min(config.k_max, n) + 1))
    chosen_k, curve = choose_k(
        histograms, k_range, alpha=config.alpha, seed=config.seed, restarts=config.restarts
    )
    result = kmeans_best_of(
        histograms, chosen_k, max_iters=config.max_iters, seed=config.seed,
        restarts=config.restarts,
    )
    sharpness = [laplacian_variance(img) for _, img in frames]
    chosen: list[Keyframe] = []
    for cluster in range(chosen_k):
        members = [i for i in range(n) if result.assignments[i] == cluster]
        best = min(members, key=lambda i: (-sharpness[i], refs[i].frame_index))
        chosen.append(Keyframe(frame=refs[best], laplacian_variance=sharpness[best], cluster=cluster))
    chosen.sort(key=lambda kf: kf.frame.frame_index)
    return KeyframeSelection(
        keyframes=tuple(chosen),
        chosen_k=chosen_k,
        scaled_inertia_curve=tuple(curve),
    )


KEYFRAMES_SLOT = "keyframes"


def select_keyframes(
    window: DataWindow,
    config: KeyframeConfig = KeyframeConfig(),
    producer: str = "keyframe-extractor",
) -> DataWindow:
    """Write the KeyframeSelection for a window into its "keyframes" slot."""
    frames = [(f.ref, load_image(f.image)) for f in window.frames]
    selection = compute_keyframes(frames, config)
    return window.with_slot(KEYFRAMES_SLOT, selection, producer=producer)
