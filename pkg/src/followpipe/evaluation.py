"""Metrics over detection/tracking runs: TP/FP rates, mask IoU, trajectory
distance, and per-stage FPS tables, emitted as CSV or JSON reports.

False positives are counted per frame; when the ground truth target never
appears the TP rate is undefined and reported as null.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .core import LabeledRegion, Mask, ShapeMismatchError


def mask_to_payload(mask: Mask) -> dict:
    """Compact JSON-safe mask encoding: bit-packed rows, base64."""
    import base64
    packed = np.packbits(mask.values, axis=None)
    return {
        "shape": [mask.height, mask.width],
        "bits": base64.b64encode(packed.tobytes()).decode("ascii"),
    }


def mask_from_payload(doc: dict) -> Mask:
    import base64
    h, w = doc["shape"]
    packed = np.frombuffer(base64.b64decode(doc["bits"]), dtype=np.uint8)
    values = np.unpackbits(packed, count=h * w).reshape(h, w).astype(bool)
    return Mask(height=h, width=w, values=values)


def iou(a: Mask, b: Mask) -> float:
    """Intersection over union; two empty masks count as a perfect match."""
    if (a.height, a.width) != (b.height, b.width):
        raise ShapeMismatchError(
            f"mask shapes differ: {(a.height, a.width)} vs {(b.height, b.width)}"
        )
    inter = int(np.logical_and(a.values, b.values).sum())
    union = int(np.logical_or(a.values, b.values).sum())
    if union == 0:
        return 1.0
    return inter / union


@dataclass(frozen=True)
class AnnotatedSequence:
    """Ground-truth target masks per frame of a sequence."""

    target_class: str
    target_masks: tuple[Mask, ...]

    @property
    def appearance_count(self) -> int:
        return sum(1 for m in self.target_masks if not m.is_empty)


def detection_rates(
    detections_per_frame: list[list[LabeledRegion]],
    annotations: AnnotatedSequence,
    iou_min: float = 0.5,
) -> tuple[float | None, int]:
    """(tp_rate, fp_count) of target-labeled detections against ground truth.

    Per frame, the highest-scoring target-labeled detection is the frame's
    detection: TP when its IoU against the target mask clears iou_min, FP
    otherwise (including frames where the target is absent). Additional
    target-labeled detections in the same frame are FPs. tp_rate is None
    when the target never appears.
    """
    if len(detections_per_frame) != len(annotations.target_masks):
        raise ValueError(
            f"{len(detections_per_frame)} detection frames vs "
            f"{len(annotations.target_masks)} annotated frames"
        )
    tp = 0
    fp = 0
    for detections, truth in zip(detections_per_frame, annotations.target_masks):
        hits = [d for d in detections if d.label == annotations.target_class]
        if not hits:
            continue
        best = max(hits, key=lambda d: d.score)
        extras = len(hits) - 1
        fp += extras
        if not truth.is_empty and iou(best.mask, truth) >= iou_min:
            tp += 1
        else:
            fp += 1
    appearances = annotations.appearance_count
    tp_rate = tp / appearances if appearances else None
    return tp_rate, fp


def sequence_miou(
    masks_per_frame: list[Mask], annotations: AnnotatedSequence
) -> float:
    """Mean per-frame IoU of predicted masks against the target ground truth."""
    if len(masks_per_frame) != len(annotations.target_masks):
        raise ValueError("frame counts differ")
    values = [iou(p, t) for p, t in zip(masks_per_frame, annotations.target_masks)]
    return float(np.mean(values))


def trajectory_distance(follower, target) -> float:
    """Mean distance from each follower point to its closest target point."""
    follower = np.asarray(follower, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if follower.size == 0 or target.size == 0:
        raise ValueError("trajectories must be non-empty")
    if follower.ndim != 2 or follower.shape[1] != 2 or target.ndim != 2 or target.shape[1] != 2:
        raise ValueError("trajectories must be (N, 2) point lists")
    dists, _ = cKDTree(target).query(follower)
    return float(dists.mean())


@dataclass(frozen=True)
class FpsRow:
    stage: str
    width: int
    height: int
    fps: float

    def to_dict(self) -> dict:
        return {"stage": self.stage, "width": self.width, "height": self.height,
                "fps": self.fps}


@dataclass
class EvalReport:
    tp_rate: float | None = None
    fp_count: int | None = None
    iou_per_frame: list[float] | None = None
    miou: float | None = None
    mean_trajectory_distance_m: float | None = None
    fps_table: list[FpsRow] | None = None

    FIELD_ORDER = (
        "tp_rate", "fp_count", "miou", "mean_trajectory_distance_m",
        "iou_per_frame", "fps_table",
    )

    def to_dict(self) -> dict:
        return {
            "tp_rate": self.tp_rate,
            "fp_count": self.fp_count,
            "miou": self.miou,
            "mean_trajectory_distance_m": self.mean_trajectory_distance_m,
            "iou_per_frame": self.iou_per_frame,
            "fps_table": (
                [row.to_dict() for row in self.fps_table]
                if self.fps_table is not None else None
            ),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EvalReport":
        fps_table = doc.get("fps_table")
        return cls(
            tp_rate=doc.get("tp_rate"),
            fp_count=doc.get("fp_count"),
            iou_per_frame=doc.get("iou_per_frame"),
            miou=doc.get("miou"),
            mean_trajectory_distance_m=doc.get("mean_trajectory_distance_m"),
            fps_table=(
                [FpsRow(**row) for row in fps_table]
                if fps_table is not None else None
            ),
        )


def emit_report(report: EvalReport, path: str | Path, format: str = "json") -> None:
    """Write the report; JSON round-trips, CSV is a flat metric,value summary."""
    path = Path(path)
    if format == "json":
        path.write_text(
            json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"
        )
    elif format == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", "value"])
            doc = report.to_dict()
            for key in ("tp_rate", "fp_count", "miou", "mean_trajectory_distance_m"):
                value = doc[key]
                writer.writerow([key, "" if value is None else repr(value)])
            if report.fps_table is not None:
                for row in report.fps_table:
                    writer.writerow(
                        [f"fps[{row.stage}@{row.width}x{row.height}]", repr(row.fps)]
                    )
    else:
        raise ValueError(f"unknown report format {format!r}")


def load_report(path: str | Path) -> EvalReport:
    return EvalReport.from_dict(json.loads(Path(path).read_text()))
