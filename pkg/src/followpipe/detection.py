"""Query matching: region classification, per-pixel labeling, coarse grouping.

Two routes to a detection:
  * mask route — aggregate each candidate mask to its mean descriptor and
    match that against the query set;
  * coarse route — match every pixel, threshold, and group the surviving
    pixels of the target label into connected components.

Region-level scores are computed in float64; the per-pixel path stays in
float32 for throughput (the per-field pixel norms are cached).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import ndimage

from .core import (
    DimensionMismatchError,
    DescriptorField,
    EmptyRegionError,
    LabeledRegion,
    Mask,
    QueryDescriptor,
    SimilarityConfig,
    validate_shapes,
)

log = logging.getLogger(__name__)

UNLABELED = None

_STRUCTURE_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_STRUCTURE_8 = np.ones((3, 3), dtype=bool)


class Strategy(Enum):
    MEAN = "mean"
    MAJORITY_VOTE = "majority_vote"
    KMEANS = "kmeans"


@dataclass(frozen=True)
class DetectionConfig:
    similarity: SimilarityConfig = SimilarityConfig()
    connectivity: int = 8
    min_component_area: int = 9
    strategy: Strategy = Strategy.MEAN
    kmeans_k: int = 5
    kmeans_seed: int = 0
    kmeans_max_iter: int = 25

    def __post_init__(self):
        if self.connectivity not in (4, 8):
            raise ValueError(f"connectivity must be 4 or 8, got {self.connectivity}")
        if self.min_component_area < 1:
            raise ValueError("min_component_area must be >= 1")
        if self.strategy is Strategy.KMEANS and self.kmeans_k < 2:
            raise ValueError("kmeans_k must be >= 2")


@dataclass(frozen=True)
class LabelMap:
    """Connected-component labels: 0 background, 1..count in first-encounter order."""

    height: int
    width: int
    labels: np.ndarray
    count: int

    def mask_of(self, label: int) -> Mask:
        return Mask.from_array(self.labels == label)


@dataclass(frozen=True)
class PixelLabels:
    """Per-pixel query assignment: -1 unlabeled, else index into the query list."""

    assignments: np.ndarray  # int32 (h, w)
    best_scores: np.ndarray  # float32 (h, w), max cosine regardless of threshold


def region_descriptor(field: DescriptorField, mask: Mask) -> np.ndarray:
    """Mean descriptor over the masked pixels (float64 accumulation)."""
    validate_shapes(field, mask)
    if mask.is_empty:
        raise EmptyRegionError("region descriptor of an empty mask")
    rows = field.flat[mask.values.ravel()]
    return rows.sum(axis=0, dtype=np.float64) / mask.nonzero_count


def _query_matrix(field: DescriptorField, queries: list[QueryDescriptor]) -> np.ndarray:
    if not queries:
        raise ValueError("at least one query is required")
    for q in queries:
        if q.dim != field.dim:
            raise DimensionMismatchError(
                f"query {q.label!r} has dim {q.dim}, field has dim {field.dim}"
            )
    return np.stack([q.vector for q in queries])


def _scores_against(vector: np.ndarray, queries: list[QueryDescriptor],
                    epsilon: float) -> np.ndarray:
    """Cosine of one region vector against every query, float64, unclamped."""
    qmat = np.stack([q.vector.astype(np.float64) for q in queries])
    vnorm = np.linalg.norm(vector)
    qnorms = np.linalg.norm(qmat, axis=1)
    return (qmat @ vector) / (vnorm * qnorms + epsilon)


def classify_regions(
    field: DescriptorField,
    masks: list[Mask],
    queries: list[QueryDescriptor],
    cfg: DetectionConfig = DetectionConfig(),
) -> list[LabeledRegion]:
    """Label each candidate mask with its best-matching query, or leave it unlabeled.

    Empty masks are not fatal: they come back unlabeled with score 0 and a
    warning. Output order follows the input mask order.
    """
    _query_matrix(field, queries)
    alpha = cfg.similarity.alpha
    eps = cfg.similarity.epsilon
    out: list[LabeledRegion] = []
    for i, mask in enumerate(masks):
        validate_shapes(field, mask)
        if mask.is_empty:
            log.warning("candidate mask %d is empty; leaving it unlabeled", i)
            out.append(LabeledRegion(mask=mask, label=UNLABELED, score=0.0))
            continue
        if cfg.strategy is Strategy.MAJORITY_VOTE:
            label, score = classify_region_majority(field, mask, queries, alpha, eps)
        elif cfg.strategy is Strategy.KMEANS:
            label, score = classify_region_kmeans(
                field, mask, queries, cfg.kmeans_k, alpha, eps,
                seed=cfg.kmeans_seed, max_iter=cfg.kmeans_max_iter,
            )
        else:
            scores = _scores_against(region_descriptor(field, mask), queries, eps)
            best = int(scores.argmax())
            raw = float(scores[best])
            score = float(np.clip(raw, -1.0, 1.0))
            label = queries[best].label if raw >= alpha else UNLABELED
        out.append(LabeledRegion(mask=mask, label=label, score=score))
    return out


def classify_single(
    field: DescriptorField,
    masks: list[Mask],
    query: QueryDescriptor,
    cfg: DetectionConfig = DetectionConfig(),
) -> list[LabeledRegion]:
    """Single-query special case of classify_regions."""
    return classify_regions(field, masks, [query], cfg)


def pixel_similarities(
    field: DescriptorField, queries: list[QueryDescriptor], epsilon: float
) -> tuple[np.ndarray, np.ndarray]:
    """Best query index and best cosine per pixel (argmax over the query set).

    Float32 throughout; ties go to the lowest query index via argmax.
    """
    qmat = _query_matrix(field, queries)
    flat = field.flat
    qnorms = np.linalg.norm(qmat.astype(np.float64), axis=1).astype(np.float32)
    dots = flat @ qmat.T  # (N, m)
    denom = field.pixel_norms[:, None] * qnorms[None, :] + np.float32(epsilon)
    scores = dots / denom
    if len(queries) == 1:
        best_idx = np.zeros(flat.shape[0], dtype=np.int32)
        best_scores = scores[:, 0]
    else:
        best_idx = scores.argmax(axis=1).astype(np.int32)
        best_scores = np.take_along_axis(scores, best_idx[:, None], axis=1).ravel()
    # float32 cannot absorb the epsilon stabilizer, so rounding may nudge a
    # perfect match past 1; clamp to keep the [-1, 1] score contract
    np.clip(best_scores, -1.0, 1.0, out=best_scores)
    h, w = field.height, field.width
    return best_idx.reshape(h, w), best_scores.reshape(h, w)


def pixel_label_map(
    field: DescriptorField, queries: list[QueryDescriptor], alpha: float
) -> PixelLabels:
    """Assign each pixel its argmax query when the max cosine clears alpha."""
    best_idx, best_scores = pixel_similarities(
        field, queries, SimilarityConfig().epsilon
    )
    assignments = np.where(best_scores >= alpha, best_idx, -1).astype(np.int32)
    return PixelLabels(assignments=assignments, best_scores=best_scores)


def connected_components(
    binary: Mask, connectivity: int = 8, min_area: int = 1
) -> LabelMap:
    """Label connected sets of 1-pixels 1..c in row-major first-encounter order.

    Components smaller than min_area are relabeled to background and the
    surviving labels re-compacted, preserving encounter order.
    """
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    structure = _STRUCTURE_4 if connectivity == 4 else _STRUCTURE_8
    raw, count = ndimage.label(binary.values, structure=structure)
    labels = raw.astype(np.int32)
    if count:
        labels = _first_encounter_order(labels, count)
        if min_area > 1:
            areas = np.bincount(labels.ravel(), minlength=count + 1)
            keep = areas >= min_area
            keep[0] = False
            remap = np.zeros(count + 1, dtype=np.int32)
            remap[keep] = np.arange(1, int(keep.sum()) + 1)
            labels = remap[labels]
            count = int(keep.sum())
    return LabelMap(
        height=binary.height, width=binary.width, labels=labels, count=count
    )


def _first_encounter_order(labels: np.ndarray, count: int) -> np.ndarray:
    flat = labels.ravel()
    values, first_pos = np.unique(flat, return_index=True)
    nonzero = values != 0
    values, first_pos = values[nonzero], first_pos[nonzero]
    order = values[np.argsort(first_pos)]
    remap = np.zeros(count + 1, dtype=np.int32)
    remap[order] = np.arange(1, len(order) + 1)
    return remap[labels]


def coarse_detect(
    field: DescriptorField,
    queries: list[QueryDescriptor],
    target_label: str,
    cfg: DetectionConfig = DetectionConfig(),
) -> list[LabeledRegion]:
    """Detect the target without candidate masks: label pixels, group components.

    Each surviving component becomes one region scored by the mean of its
    pixels' best cosines. Output masks are pairwise disjoint by construction.
    """
    if all(q.label != target_label for q in queries):
        raise ValueError(f"target label {target_label!r} not among queries")
    labels = pixel_label_map(field, queries, cfg.similarity.alpha)
    target_indices = [i for i, q in enumerate(queries) if q.label == target_label]
    binary = np.isin(labels.assignments, target_indices)
    if not binary.any():
        return []
    label_map = connected_components(
        Mask.from_array(binary), cfg.connectivity, cfg.min_component_area
    )
    regions: list[LabeledRegion] = []
    for comp in range(1, label_map.count + 1):
        comp_mask = label_map.labels == comp
        score = float(
            np.clip(labels.best_scores[comp_mask].mean(dtype=np.float64), -1.0, 1.0)
        )
        regions.append(
            LabeledRegion(mask=Mask.from_array(comp_mask), label=target_label,
                          score=score)
        )
    return regions


def classify_region_majority(
    field: DescriptorField,
    mask: Mask,
    queries: list[QueryDescriptor],
    alpha: float,
    epsilon: float = SimilarityConfig().epsilon,
) -> tuple[str | None, float]:
    """Vote each masked pixel for its argmax query (threshold applied per pixel).

    The mask takes the most frequent label; ties break to the lower query
    index; a mask whose pixels all miss the threshold stays unlabeled.
    Score is the mean best-cosine of the pixels that voted for the winner.
    """
    validate_shapes(field, mask)
    if mask.is_empty:
        raise EmptyRegionError("majority vote over an empty mask")
    best_idx, best_scores = pixel_similarities(field, queries, epsilon)
    sel = mask.values
    idx = best_idx[sel]
    scores = best_scores[sel]
    voted = scores >= alpha
    if not voted.any():
        return UNLABELED, 0.0
    counts = np.bincount(idx[voted], minlength=len(queries))
    winner = int(counts.argmax())  # argmax takes the lowest index on ties
    winner_scores = scores[voted & (idx == winner)]
    score = float(np.clip(winner_scores.mean(dtype=np.float64), -1.0, 1.0))
    return queries[winner].label, score


def classify_region_kmeans(
    field: DescriptorField,
    mask: Mask,
    queries: list[QueryDescriptor],
    k: int,
    alpha: float,
    epsilon: float = SimilarityConfig().epsilon,
    seed: int = 0,
    max_iter: int = 25,
) -> tuple[str | None, float]:
    """Cluster the masked descriptors into k representatives; let each vote.

    Each centroid votes for its thresholded argmax query; the mask takes the
    majority of centroid votes (ties to the lower query index). Masks with
    fewer pixels than k fall back to the mean strategy with a warning.
    """
    validate_shapes(field, mask)
    if mask.is_empty:
        raise EmptyRegionError("k-means vote over an empty mask")
    if mask.nonzero_count < k:
        log.warning(
            "mask has %d pixels < k=%d; falling back to mean strategy",
            mask.nonzero_count, k,
        )
        scores = _scores_against(region_descriptor(field, mask), queries, epsilon)
        best = int(scores.argmax())
        raw = float(scores[best])
        label = queries[best].label if raw >= alpha else UNLABELED
        return label, float(np.clip(raw, -1.0, 1.0))

    points = field.flat[mask.values.ravel()].astype(np.float64)
    centroids = _kmeans(points, k, seed=seed, max_iter=max_iter)
    votes = np.full(len(queries), 0, dtype=np.int64)
    centroid_scores: dict[int, list[float]] = {}
    for c in centroids:
        scores = _scores_against(c, queries, epsilon)
        best = int(scores.argmax())
        if float(scores[best]) >= alpha:
            votes[best] += 1
            centroid_scores.setdefault(best, []).append(float(scores[best]))
    if votes.sum() == 0:
        return UNLABELED, 0.0
    winner = int(votes.argmax())
    score = float(np.clip(np.mean(centroid_scores[winner]), -1.0, 1.0))
    return queries[winner].label, score


def _kmeans(points: np.ndarray, k: int, seed: int, max_iter: int) -> np.ndarray:
    """Seeded k-means++ with an iteration cap; euclidean metric."""
    rng = np.random.default_rng(seed)
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[i:] = centroids[0]
            break
        probs = d2 / total
        centroids[i] = points[rng.choice(n, p=probs)]
        d2 = np.minimum(d2, ((points - centroids[i]) ** 2).sum(axis=1))
    for _ in range(max_iter):
        dists = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assign = dists.argmin(axis=1)
        new = centroids.copy()
        for j in range(k):
            members = points[assign == j]
            if len(members):
                new[j] = members.mean(axis=0)
        if np.allclose(new, centroids):
            break
        centroids = new
    return centroids
