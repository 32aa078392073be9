"""Recovery of a lost track.

While tracking is healthy, the object's mean descriptor is stored every tau
frames into a bounded ring. After loss, the mean of the stored descriptors
becomes the recovery query, matched against candidate masks or via the
coarse per-pixel route. Human recovery turns a click or box into a fresh
detection directly.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field as dc_field
from enum import Enum

import numpy as np

from .core import (
    DescriptorField,
    EmptyMemoryError,
    LabeledRegion,
    Mask,
    OutOfBoundsError,
    QueryDescriptor,
    QueryKind,
)
from .detection import (
    DetectionConfig,
    classify_single,
    coarse_detect,
    connected_components,
    pixel_similarities,
    region_descriptor,
)

log = logging.getLogger(__name__)


class RecoveryMode(Enum):
    TRACKER_ONLY = "TRACKER_ONLY"
    HUMAN = "HUMAN"
    AUTOMATIC = "AUTOMATIC"


@dataclass
class FeatureMemory:
    """Ring of object descriptors sampled every tau frames (single writer)."""

    tau: int = 10
    capacity: int = 64
    stored: deque = dc_field(default_factory=deque)
    last_stored_index: int | None = None

    def __post_init__(self):
        if self.tau < 1:
            raise ValueError("tau must be >= 1")
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.stored = deque(self.stored, maxlen=self.capacity)

    def __len__(self) -> int:
        return len(self.stored)


def maybe_store(
    memory: FeatureMemory,
    frame_index: int,
    field: DescriptorField,
    object_mask: Mask,
) -> FeatureMemory:
    """Store the object's mean descriptor when frame_index lands on the tau grid.

    Idempotent within a frame; an empty mask at a storing frame is skipped
    with a warning.
    """
    if frame_index % memory.tau != 0:
        return memory
    if memory.last_stored_index == frame_index:
        return memory
    if object_mask.is_empty:
        log.warning("skipping descriptor store at frame %d: empty mask", frame_index)
        return memory
    memory.stored.append(region_descriptor(field, object_mask))
    memory.last_stored_index = frame_index
    return memory


def recovery_query(memory: FeatureMemory, label: str) -> QueryDescriptor:
    """Mean of the stored descriptors as a query for the lost object.

    Raises EmptyMemoryError with nothing stored, ValueError when the mean
    degenerates to zero norm; callers fall back to the original query.
    """
    if len(memory) == 0:
        raise EmptyMemoryError("no stored descriptors to recover from")
    mean = np.mean(np.stack(list(memory.stored)), axis=0)
    return QueryDescriptor(label=label, vector=mean, kind=QueryKind.PRECOMPUTED)


def redetect(
    query: QueryDescriptor,
    field: DescriptorField,
    cfg: DetectionConfig,
    candidates: list[Mask] | None = None,
) -> LabeledRegion | None:
    """Find the best region matching the recovery query, or None.

    With candidate masks the mask route is used; without them the coarse
    per-pixel route runs. Ties break to the earliest candidate.
    """
    if candidates is not None:
        regions = classify_single(field, candidates, query, cfg)
        labeled = [r for r in regions if r.is_labeled]
        if not labeled:
            return None
        return max(labeled, key=lambda r: r.score)  # max keeps the earliest on ties
    regions = coarse_detect(field, [query], query.label, cfg)
    if not regions:
        return None
    return max(regions, key=lambda r: r.score)


def human_redetect(
    field: DescriptorField,
    label: str,
    click: tuple[int, int] | None = None,
    box: tuple[int, int, int, int] | None = None,
    alpha: float = 0.5,
    epsilon: float = 1e-8,
    min_area: int = 1,
) -> LabeledRegion:
    """Turn operator input into a detection.

    A box is refined to the pixels inside it whose cosine to the box's mean
    descriptor clears alpha. A click grows the connected component of pixels
    similar to the clicked descriptor that contains the click.
    """
    if (click is None) == (box is None):
        raise ValueError("provide exactly one of click or box")
    h, w = field.height, field.width
    if box is not None:
        x, y, bw, bh = box
        if bw <= 0 or bh <= 0:
            raise OutOfBoundsError(f"box {box} must have positive area")
        if x < 0 or y < 0 or x + bw > w or y + bh > h:
            raise OutOfBoundsError(f"box {box} outside {w}x{h} frame")
        box_values = np.zeros((h, w), dtype=bool)
        box_values[y : y + bh, x : x + bw] = True
        box_mask = Mask.from_array(box_values)
        mean = region_descriptor(field, box_mask)
        query = QueryDescriptor(label=label, vector=mean, kind=QueryKind.REGION)
        _, best_scores = pixel_similarities(field, [query], epsilon)
        refined = box_values & (best_scores >= alpha)
        if not refined.any():
            refined = box_values  # degenerate refinement keeps the raw box
        mask = Mask.from_array(refined)
        score = float(np.clip(best_scores[refined].mean(dtype=np.float64), -1.0, 1.0))
        return LabeledRegion(mask=mask, label=label, score=score)

    x, y = click
    if not (0 <= x < w and 0 <= y < h):
        raise OutOfBoundsError(f"click ({x},{y}) outside {w}x{h} frame")
    vec = field.descriptor_at(x, y).copy()
    query = QueryDescriptor(label=label, vector=vec, kind=QueryKind.CLICK)
    _, best_scores = pixel_similarities(field, [query], epsilon)
    hits = best_scores >= alpha
    hits[y, x] = True  # the clicked pixel always belongs to its own component
    comps = connected_components(Mask.from_array(hits), 8, min_area)
    comp_id = int(comps.labels[y, x])
    if comp_id == 0:
        values = np.zeros((h, w), dtype=bool)
        values[y, x] = True
        return LabeledRegion(mask=Mask.from_array(values), label=label, score=1.0)
    comp = comps.labels == comp_id
    score = float(np.clip(best_scores[comp].mean(dtype=np.float64), -1.0, 1.0))
    return LabeledRegion(mask=Mask.from_array(comp), label=label, score=score)
