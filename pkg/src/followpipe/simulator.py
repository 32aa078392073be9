"""2D kinematic following loop: target moves on its script, the follower
integrates velocity commands, the camera stays centered on the follower.

Every step renders, runs the detect/track/recover processor, converts the
tracked centroid to a pixel error, steps the controller, and Euler-integrates
the follower. The loop is deterministic given (scene seed, configs); stage
latencies come from an injectable clock so logs can be made bit-identical
under a fake clock.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable

import numpy as np

from .control import (
    ControlCommand,
    ControllerConfig,
    ControllerState,
    compute_command,
    pixel_error,
)
from .core import Mask
from .evaluation import iou
from .pipeline import FrameProcessor, ProcessorConfig, StageTimings
from .providers import CameraModel, SceneScript, render_frame


@dataclass(frozen=True)
class WorldState:
    t: float
    follower: tuple[float, float]
    targets: dict[str, tuple[float, float]]


def step_world(
    world: WorldState, command: ControlCommand, scene: SceneScript, dt: float
) -> WorldState:
    """Euler step: follower += command*dt; targets follow their scripts."""
    t = world.t + dt
    follower = (world.follower[0] + command.vx * dt, world.follower[1] + command.vy * dt)
    targets = {obj.object_id: obj.position(t) for obj in scene.objects}
    return WorldState(t=t, follower=follower, targets=targets)


CSV_COLUMNS = [
    "step", "t", "follower_x", "follower_y", "target_x", "target_y",
    "error_x", "error_y", "cmd_vx", "cmd_vy", "status", "iou",
    "render_ms", "detect_ms", "track_ms", "redetect_ms", "control_ms",
]


@dataclass(frozen=True)
class TrajectoryRecord:
    step: int
    t: float
    follower: tuple[float, float]
    target: tuple[float, float]
    error: tuple[float, float]
    command: tuple[float, float]
    status: str
    iou: float
    timings: StageTimings

    def row(self) -> list:
        return [
            self.step, repr(self.t),
            repr(self.follower[0]), repr(self.follower[1]),
            repr(self.target[0]), repr(self.target[1]),
            repr(self.error[0]), repr(self.error[1]),
            repr(self.command[0]), repr(self.command[1]),
            self.status, repr(self.iou),
            repr(self.timings.render_ms), repr(self.timings.detect_ms),
            repr(self.timings.track_ms), repr(self.timings.redetect_ms),
            repr(self.timings.control_ms),
        ]

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "t": self.t,
            "follower": list(self.follower),
            "target": list(self.target),
            "error": list(self.error),
            "command": list(self.command),
            "status": self.status,
            "iou": self.iou,
            "timings": self.timings.to_dict(),
        }


class TrajectoryLog:
    """Per-step records of a following run, exportable as CSV and JSON."""

    def __init__(self):
        self.records: list[TrajectoryRecord] = []

    def append(self, record: TrajectoryRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def follower_points(self) -> np.ndarray:
        return np.array([r.follower for r in self.records])

    def target_points(self) -> np.ndarray:
        return np.array([r.target for r in self.records])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for record in self.records:
                writer.writerow(record.row())

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(self.canonical_json())

    def canonical_json(self) -> str:
        doc = {"records": [r.to_dict() for r in self.records]}
        return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


@dataclass(frozen=True)
class FollowConfig:
    processor: ProcessorConfig
    target_object: str
    camera: CameraModel = CameraModel(view_width=128, view_height=96, scale=0.025)
    controller: ControllerConfig = ControllerConfig()
    follower_start: tuple[float, float] | None = None  # default: over the target


@dataclass
class FollowResult:
    log: TrajectoryLog
    recoveries: list[int] = dc_field(default_factory=list)  # steps that re-acquired
    lost_steps: int = 0


def run_following(
    scene: SceneScript,
    cfg: FollowConfig,
    duration: float | None = None,
    clock: Callable[[], float] = time.perf_counter,
    detections_sink: Callable[[int, object], None] | None = None,
) -> FollowResult:
    """Close the loop for `duration` seconds (defaults to the scene duration).

    Runs render -> detect/track/recover -> pixel error -> controller ->
    world step each frame, logging one record per step. Unrecoverable loss
    is logged, never raised; the run always reaches the duration.
    """
    duration = scene.duration if duration is None else min(duration, scene.duration)
    dt = scene.dt
    steps = int(round(duration / dt))

    target_obj = next(o for o in scene.objects if o.object_id == cfg.target_object)
    start = cfg.follower_start or target_obj.position(0.0)
    world = WorldState(
        t=0.0,
        follower=start,
        targets={o.object_id: o.position(0.0) for o in scene.objects},
    )

    processor = FrameProcessor(cfg.processor, clock=clock)
    controller_state = ControllerState()
    view = (cfg.camera.view_width, cfg.camera.view_height)

    result = FollowResult(log=TrajectoryLog())
    use_masks = processor.cfg.detect_path.value == "mask"

    for step in range(steps):
        t0 = clock()
        camera = cfg.camera.at(world.follower)
        field, gt = render_frame(scene, world.t, camera)
        render_ms = (clock() - t0) * 1000.0

        candidates = gt.nonempty_masks() if use_masks else None
        proc = processor.process(field, candidates)

        if proc.recovered:
            result.recoveries.append(step)
        if proc.status != "ACTIVE":
            result.lost_steps += 1

        t0 = clock()
        if proc.centroid is not None:
            error = pixel_error(proc.centroid, view)
        else:
            error = (0.0, 0.0)  # hold position while the object is unseen
        command, controller_state = compute_command(
            controller_state, error, cfg.controller
        )
        control_ms = (clock() - t0) * 1000.0

        truth = gt.mask_for(cfg.target_object)
        predicted = proc.track_mask if proc.track_mask is not None else Mask.empty(
            field.height, field.width
        )
        step_iou = iou(predicted, truth)

        if detections_sink is not None:
            detections_sink(step, proc)

        result.log.append(
            TrajectoryRecord(
                step=step,
                t=world.t,
                follower=world.follower,
                target=world.targets[cfg.target_object],
                error=error,
                command=(command.vx, command.vy),
                status=proc.status,
                iou=step_iou,
                timings=StageTimings(
                    render_ms=render_ms,
                    detect_ms=proc.timings.detect_ms,
                    track_ms=proc.timings.track_ms,
                    redetect_ms=proc.timings.redetect_ms,
                    control_ms=control_ms,
                ),
            )
        )
        world = step_world(world, command, scene, dt)

    return result
