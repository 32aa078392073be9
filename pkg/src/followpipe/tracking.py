"""Descriptor-correlation tracker.

Propagates the tracked mask frame to frame by matching a running template
descriptor inside an inflated window around the last bounding box. Loss is a
state (patience on consecutive missed matches), not an error.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .core import (
    DescriptorField,
    EmptyRegionError,
    LabeledRegion,
    Mask,
)
from .detection import connected_components, region_descriptor


class TrackStatus(Enum):
    ACTIVE = "ACTIVE"
    LOST = "LOST"


@dataclass(frozen=True)
class TrackerConfig:
    search_inflation: float = 2.0
    alpha_track: float = 0.5
    template_blend: float = 0.05  # 0 freezes the template
    loss_patience: int = 5
    min_area: int = 9
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.search_inflation < 1.0:
            raise ValueError("search_inflation must be >= 1")
        if not (0.0 <= self.template_blend <= 1.0):
            raise ValueError("template_blend must be in [0,1]")
        if self.loss_patience < 1:
            raise ValueError("loss_patience must be >= 1")


@dataclass(frozen=True)
class TrackState:
    template: np.ndarray  # float64 running mean descriptor
    last_mask: Mask
    last_centroid: tuple[float, float]
    frames_since_seen: int
    status: TrackStatus
    label: str | None = None
    last_score: float = 0.0  # mean match cosine of the last matched component

    def __post_init__(self):
        template = np.ascontiguousarray(self.template, dtype=np.float64)
        template.flags.writeable = False
        object.__setattr__(self, "template", template)


def init_track(
    detection: LabeledRegion, field: DescriptorField, cfg: TrackerConfig
) -> TrackState:
    if detection.mask.is_empty:
        raise EmptyRegionError("cannot start a track from an empty mask")
    template = region_descriptor(field, detection.mask)
    return TrackState(
        template=template,
        last_mask=detection.mask,
        last_centroid=detection.mask.centroid(),
        frames_since_seen=0,
        status=TrackStatus.ACTIVE,
        label=detection.label,
        last_score=detection.score,
    )


def _search_window(
    mask: Mask, inflation: float, height: int, width: int
) -> tuple[int, int, int, int]:
    """Inflated bounding box (x0, y0, x1, y1), half-open, clipped to the frame."""
    x, y, w, h = mask.bbox()
    cx, cy = x + w / 2, y + h / 2
    hw, hh = w * inflation / 2, h * inflation / 2
    x0 = max(0, int(np.floor(cx - hw)))
    y0 = max(0, int(np.floor(cy - hh)))
    x1 = min(width, int(np.ceil(cx + hw)) + 1)
    y1 = min(height, int(np.ceil(cy + hh)) + 1)
    return x0, y0, x1, y1


def step_track(
    state: TrackState, field: DescriptorField, cfg: TrackerConfig
) -> tuple[TrackState, Mask]:
    """Advance the track one frame.

    Match: largest connected component of window pixels whose cosine to the
    template clears alpha_track and whose area clears min_area. On a match
    the template moves by template_blend toward the fresh region descriptor;
    on a miss the patience counter grows and the returned mask is empty.
    A LOST state keeps searching the same window and revives on a match.
    """
    h, w = field.height, field.width
    x0, y0, x1, y1 = _search_window(
        state.last_mask, cfg.search_inflation, h, w
    )
    window = field.data[y0:y1, x0:x1]
    flat = window.reshape(-1, field.dim)
    template = state.template
    tnorm = float(np.linalg.norm(template))
    norms = np.sqrt(np.einsum("ij,ij->i", flat, flat, dtype=np.float64))
    scores = (flat @ template) / (norms * tnorm + cfg.epsilon)
    hits = (scores >= cfg.alpha_track).reshape(window.shape[0], window.shape[1])

    matched = None
    match_score = 0.0
    if hits.any():
        comps = connected_components(Mask.from_array(hits), 8, cfg.min_area)
        if comps.count:
            areas = np.bincount(comps.labels.ravel())[1:]
            best = int(areas.argmax()) + 1  # ties: first-encounter component
            local = comps.labels == best
            full = np.zeros((h, w), dtype=bool)
            full[y0:y1, x0:x1] = local
            matched = Mask.from_array(full)
            match_score = float(
                np.clip(scores.reshape(hits.shape)[local].mean(), -1.0, 1.0)
            )

    if matched is None:
        misses = state.frames_since_seen + 1
        status = (
            TrackStatus.LOST if misses > cfg.loss_patience else state.status
        )
        return replace(state, frames_since_seen=misses, status=status), Mask.empty(h, w)

    fresh = region_descriptor(field, matched)
    mu = cfg.template_blend
    template = (1.0 - mu) * state.template + mu * fresh
    new_state = TrackState(
        template=template,
        last_mask=matched,
        last_centroid=matched.centroid(),
        frames_since_seen=0,
        status=TrackStatus.ACTIVE,
        label=state.label,
        last_score=match_score,
    )
    return new_state, matched


def is_lost(state: TrackState) -> bool:
    return state.status is TrackStatus.LOST
