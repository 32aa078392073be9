"""Real-time orchestration: latest-frame buffering, detect-then-track scheduling,
per-stage timing.

The processor is single-threaded; LatestFrameBuffer is the only structure
shared between a producer and a consumer thread. Commands reconfiguring a
running processor must be applied between frames (the gateway guarantees
this by draining its command queue at frame boundaries).
"""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Iterator

from .core import DescriptorField, LabeledRegion, Mask, QueryDescriptor
from .detection import DetectionConfig, classify_regions, coarse_detect
from .providers import (
    CameraModel,
    SceneScript,
    load_descriptor_field,
    render_frame,
)
from .redetection import (
    FeatureMemory,
    RecoveryMode,
    maybe_store,
    recovery_query,
    redetect,
)
from .tracking import TrackerConfig, TrackState, init_track, is_lost, step_track


class PipelineMode(Enum):
    DETECT_EVERY_FRAME = "DETECT_EVERY_FRAME"
    DETECT_THEN_TRACK = "DETECT_THEN_TRACK"


class DetectPath(Enum):
    MASK = "mask"
    COARSE = "coarse"


class LatestFrameBuffer:
    """Single-slot mailbox: the consumer always sees the newest published frame.

    publish overwrites the slot and bumps the sequence; take_latest returns
    the slot without consuming it, so staleness shows up as an unchanged
    sequence number. Safe for one producer and one consumer thread.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._frame = None
        self._seq = 0

    def publish(self, frame) -> int:
        with self._lock:
            self._frame = frame
            self._seq += 1
            return self._seq

    def take_latest(self):
        """(frame, seq); (None, 0) before the first publish."""
        with self._lock:
            return self._frame, self._seq

    @property
    def sequence(self) -> int:
        with self._lock:
            return self._seq


@dataclass(frozen=True)
class StageTimings:
    render_ms: float = 0.0
    detect_ms: float = 0.0
    track_ms: float = 0.0
    redetect_ms: float = 0.0
    control_ms: float = 0.0

    @property
    def total_ms(self) -> float:
        return (
            self.render_ms + self.detect_ms + self.track_ms
            + self.redetect_ms + self.control_ms
        )

    def to_dict(self) -> dict:
        return {
            "render_ms": self.render_ms,
            "detect_ms": self.detect_ms,
            "track_ms": self.track_ms,
            "redetect_ms": self.redetect_ms,
            "control_ms": self.control_ms,
        }


class RollingStageStats:
    """Rolling per-stage means over the last `window` frames, with derived FPS."""

    STAGES = ("render_ms", "detect_ms", "track_ms", "redetect_ms", "control_ms")

    def __init__(self, window: int = 100):
        self._series = {name: deque(maxlen=window) for name in self.STAGES}
        self._totals = deque(maxlen=window)

    def update(self, timings: StageTimings) -> None:
        for name in self.STAGES:
            self._series[name].append(getattr(timings, name))
        self._totals.append(timings.total_ms)

    def mean_ms(self) -> dict[str, float]:
        return {
            name: (sum(s) / len(s) if s else 0.0)
            for name, s in self._series.items()
        }

    def fps(self) -> dict[str, float]:
        out = {}
        for name, mean in self.mean_ms().items():
            out[name.replace("_ms", "_fps")] = 1000.0 / mean if mean > 0 else 0.0
        total = sum(self._totals) / len(self._totals) if self._totals else 0.0
        out["end_to_end_fps"] = 1000.0 / total if total > 0 else 0.0
        return out


@dataclass(frozen=True)
class ProcessorConfig:
    queries: tuple[QueryDescriptor, ...]
    target_label: str
    detection: DetectionConfig = DetectionConfig()
    tracker: TrackerConfig = TrackerConfig()
    recovery: RecoveryMode = RecoveryMode.AUTOMATIC
    detect_path: DetectPath = DetectPath.COARSE
    mode: PipelineMode = PipelineMode.DETECT_THEN_TRACK
    memory_tau: int = 10
    memory_capacity: int = 64
    # re-run detection every N healthy frames; 0 disables the refresh
    refresh_interval: int = 0

    def __post_init__(self):
        if not self.queries:
            raise ValueError("processor needs at least one query")
        if all(q.label != self.target_label for q in self.queries):
            raise ValueError(
                f"target label {self.target_label!r} not among the queries"
            )


@dataclass(frozen=True)
class ProcessResult:
    frame_index: int
    regions: tuple[LabeledRegion, ...]
    track_mask: Mask | None
    centroid: tuple[float, float] | None
    status: str  # ACTIVE | LOST | SEARCHING
    timings: StageTimings
    recovered: bool = False


class FrameProcessor:
    """Detect-then-track state machine over a stream of descriptor fields.

    One instance per followed object; not thread safe. Reconfiguration
    (queries, alpha, recovery mode) must happen between process() calls.
    """

    def __init__(self, cfg: ProcessorConfig, clock: Callable[[], float] = time.perf_counter):
        self.cfg = cfg
        self.clock = clock
        self.track: TrackState | None = None
        self.memory = FeatureMemory(tau=cfg.memory_tau, capacity=cfg.memory_capacity)
        self.frame_index = -1

    # -- reconfiguration at frame boundaries ---------------------------------

    def set_alpha(self, alpha: float) -> None:
        sim = replace(self.cfg.detection.similarity, alpha=alpha)
        self.cfg = replace(self.cfg, detection=replace(self.cfg.detection, similarity=sim))

    def set_recovery(self, mode: RecoveryMode) -> None:
        self.cfg = replace(self.cfg, recovery=mode)

    def set_queries(self, queries: list[QueryDescriptor], target_label: str) -> None:
        self.cfg = replace(self.cfg, queries=tuple(queries), target_label=target_label)

    def force_redetect(self) -> None:
        """Drop the current track; the next frame starts searching again."""
        self.track = None

    def adopt(self, region: LabeledRegion, field: DescriptorField) -> None:
        """Adopt an externally provided detection (human recovery)."""
        self.track = init_track(region, field, self.cfg.tracker)

    # -- processing -----------------------------------------------------------

    def _detect(self, field: DescriptorField,
                candidates: list[Mask] | None) -> tuple[LabeledRegion | None, list[LabeledRegion]]:
        cfg = self.cfg
        if cfg.detect_path is DetectPath.MASK:
            if not candidates:
                return None, []
            regions = classify_regions(field, candidates, list(cfg.queries), cfg.detection)
        else:
            regions = coarse_detect(field, list(cfg.queries), cfg.target_label, cfg.detection)
        targets = [r for r in regions if r.label == cfg.target_label]
        best = max(targets, key=lambda r: r.score) if targets else None
        return best, regions

    def process(
        self, field: DescriptorField, candidates: list[Mask] | None = None
    ) -> ProcessResult:
        self.frame_index += 1
        cfg = self.cfg
        detect_ms = track_ms = redetect_ms = 0.0
        regions: list[LabeledRegion] = []
        track_mask: Mask | None = None
        centroid = None
        status = "SEARCHING"
        recovered = False

        if cfg.mode is PipelineMode.DETECT_EVERY_FRAME:
            t0 = self.clock()
            best, regions = self._detect(field, candidates)
            detect_ms = (self.clock() - t0) * 1000.0
            if best is not None:
                status = "ACTIVE"
                centroid = best.mask.centroid()
                track_mask = best.mask
            return ProcessResult(
                frame_index=self.frame_index, regions=tuple(regions),
                track_mask=track_mask, centroid=centroid, status=status,
                timings=StageTimings(detect_ms=detect_ms, track_ms=track_ms,
                                     redetect_ms=redetect_ms),
                recovered=recovered,
            )

        if self.track is None:
            t0 = self.clock()
            best, regions = self._detect(field, candidates)
            detect_ms = (self.clock() - t0) * 1000.0
            if best is not None:
                self.track = init_track(best, field, cfg.tracker)
                maybe_store(self.memory, self.frame_index, field, best.mask)
                track_mask = best.mask
                centroid = self.track.last_centroid
                status = "ACTIVE"
        elif is_lost(self.track) and cfg.recovery is RecoveryMode.HUMAN:
            status = "LOST"  # frozen until the operator clicks or boxes
        elif is_lost(self.track) and cfg.recovery is RecoveryMode.AUTOMATIC:
            t0 = self.clock()
            region = self._attempt_recovery(field, candidates)
            redetect_ms = (self.clock() - t0) * 1000.0
            if region is not None:
                self.track = init_track(region, field, cfg.tracker)
                maybe_store(self.memory, self.frame_index, field, region.mask)
                track_mask = region.mask
                centroid = self.track.last_centroid
                status = "ACTIVE"
                recovered = True
            else:
                status = "SEARCHING"
        else:
            # healthy, within patience, or TRACKER_ONLY loss: the tracker
            # keeps scanning its window
            t0 = self.clock()
            was_lost = is_lost(self.track)
            self.track, matched = step_track(self.track, field, cfg.tracker)
            track_ms = (self.clock() - t0) * 1000.0
            if not matched.is_empty:
                maybe_store(self.memory, self.frame_index, field, matched)
                track_mask = matched
                centroid = self.track.last_centroid
                status = "ACTIVE"
                recovered = was_lost
                if (
                    cfg.refresh_interval
                    and self.frame_index % cfg.refresh_interval == 0
                ):
                    t0 = self.clock()
                    best, regions = self._detect(field, candidates)
                    detect_ms = (self.clock() - t0) * 1000.0
                    if best is not None:
                        self.track = init_track(best, field, cfg.tracker)
                        track_mask = best.mask
                        centroid = self.track.last_centroid
            elif is_lost(self.track):
                if cfg.recovery is RecoveryMode.AUTOMATIC:
                    # loss crossed the patience line this frame: recover now
                    t0 = self.clock()
                    region = self._attempt_recovery(field, candidates)
                    redetect_ms = (self.clock() - t0) * 1000.0
                    if region is not None:
                        self.track = init_track(region, field, cfg.tracker)
                        maybe_store(self.memory, self.frame_index, field, region.mask)
                        track_mask = region.mask
                        centroid = self.track.last_centroid
                        status = "ACTIVE"
                        recovered = True
                    else:
                        status = "SEARCHING"
                elif cfg.recovery is RecoveryMode.TRACKER_ONLY:
                    status = "SEARCHING"
                else:
                    status = "LOST"
            else:
                # missed but within patience: the tracker still owns the object
                status = "ACTIVE"
                centroid = self.track.last_centroid

        return ProcessResult(
            frame_index=self.frame_index, regions=tuple(regions),
            track_mask=track_mask, centroid=centroid, status=status,
            timings=StageTimings(detect_ms=detect_ms, track_ms=track_ms,
                                 redetect_ms=redetect_ms),
            recovered=recovered,
        )

    def _attempt_recovery(
        self, field: DescriptorField, candidates: list[Mask] | None
    ) -> LabeledRegion | None:
        cfg = self.cfg
        try:
            query = recovery_query(self.memory, cfg.target_label)
        except ValueError:
            # empty or degenerate memory: fall back to the original query
            originals = [q for q in cfg.queries if q.label == cfg.target_label]
            query = originals[0]
        mask_candidates = candidates if cfg.detect_path is DetectPath.MASK else None
        return redetect(query, field, cfg.detection, candidates=mask_candidates)


# ---------------------------------------------------------------------------
# frame sources
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SourceFrame:
    index: int
    t: float
    field: DescriptorField
    candidates: list[Mask] | None = None


def scene_playback(
    scene: SceneScript,
    camera: CameraModel,
    max_frames: int | None = None,
    with_candidates: bool = False,
) -> Iterator[SourceFrame]:
    """Render the scene at its frame rate from a fixed camera pose."""
    total = int(round(scene.duration * scene.frame_rate)) + 1
    if max_frames is not None:
        total = min(total, max_frames)
    for i in range(total):
        t = i / scene.frame_rate
        field, gt = render_frame(scene, t, camera)
        candidates = gt.nonempty_masks() if with_candidates else None
        yield SourceFrame(index=i, t=t, field=field, candidates=candidates)


def replay_fields(directory: str | Path) -> Iterator[SourceFrame]:
    """Replay serialized descriptor fields from a directory, in name order."""
    paths = sorted(Path(directory).glob("*.fand"))
    if not paths:
        raise FileNotFoundError(f"no .fand files under {directory}")
    for i, path in enumerate(paths):
        yield SourceFrame(index=i, t=float(i), field=load_descriptor_field(path))


def run_pipeline(
    source: Iterable[SourceFrame],
    processor: FrameProcessor,
) -> Iterator[tuple[SourceFrame, ProcessResult]]:
    """Drive the processor over a frame source, yielding per-frame results."""
    for frame in source:
        yield frame, processor.process(frame.field, frame.candidates)
