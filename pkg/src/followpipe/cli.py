"""Command-line entry points: detect, follow, serve, eval, bench.

Exit codes: 0 ok, 1 usage error, 2 data/format error, 3 runtime fault.
FAN_LOG_LEVEL in {error, warn, info, debug} controls logging verbosity.
A JSON config file may supply defaults for any flag of the invoked
subcommand; explicit flags win; unknown config keys are rejected.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .control import ControllerConfig, ControlMode
from .core import FileFormatError, Mask, QueryDescriptor, SimilarityConfig
from .detection import DetectionConfig, classify_regions, coarse_detect
from .evaluation import (
    AnnotatedSequence,
    EvalReport,
    FpsRow,
    detection_rates,
    emit_report,
    iou,
    mask_from_payload,
    mask_to_payload,
    trajectory_distance,
)
from .pipeline import DetectPath, ProcessorConfig
from .providers import (
    CameraModel,
    SceneScript,
    class_query,
    ground_truth,
    load_descriptor_field,
    load_masks,
    query_from_click,
    render_frame,
)
from .redetection import RecoveryMode
from .simulator import FollowConfig, run_following
from .tracking import TrackerConfig
from . import scenes

log = logging.getLogger("followpipe")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3

_LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}

_RECOVERY = {
    "tracker": RecoveryMode.TRACKER_ONLY,
    "human": RecoveryMode.HUMAN,
    "auto": RecoveryMode.AUTOMATIC,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        raise UsageError(message)


def _setup_logging() -> None:
    level_name = os.environ.get("FAN_LOG_LEVEL", "warn").lower()
    level = _LOG_LEVELS.get(level_name)
    if level is None:
        print(
            f"FAN_LOG_LEVEL must be one of {sorted(_LOG_LEVELS)}, got {level_name!r}",
            file=sys.stderr,
        )
        level = logging.WARNING
    logging.basicConfig(
        level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s"
    )


def _load_scene(spec: str, seed: int | None) -> SceneScript:
    if spec.startswith("builtin:"):
        scene = scenes.builtin_scene(spec.split(":", 1)[1])
    else:
        scene = SceneScript.from_json(spec)
    if seed is not None:
        scene = dataclasses.replace(scene, seed=seed)
    return scene


def _load_queries(path: str, field, scene) -> list[QueryDescriptor]:
    """Queries file: list of {label, vector|click|class} entries."""
    entries = json.loads(Path(path).read_text())
    if not isinstance(entries, list):
        raise ValueError("queries file must hold a JSON array")
    queries = []
    for entry in entries:
        label = entry["label"]
        if "vector" in entry:
            queries.append(QueryDescriptor(label=label,
                                           vector=np.asarray(entry["vector"])))
        elif "click" in entry:
            if field is None:
                raise ValueError("click queries need a rendered field")
            x, y = entry["click"]
            queries.append(query_from_click(field, int(x), int(y), label))
        elif "class" in entry:
            if scene is None:
                raise ValueError("class queries need a scene")
            queries.append(class_query(scene, entry["class"], label=label))
        else:
            raise ValueError(f"query entry needs vector|click|class: {entry}")
    return queries


def _apply_config_file(parser, args, argv) -> argparse.Namespace:
    if not getattr(args, "config", None):
        return args
    doc = json.loads(Path(args.config).read_text())
    if not isinstance(doc, dict):
        raise ValueError("config file must hold a JSON object")
    sub = parser.subparser_map[args.command]
    valid = {a.dest for a in sub._actions}
    unknown = set(doc) - valid
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    sub.set_defaults(**doc)
    return parser.parse_args(argv)  # explicit flags still win


def _regions_payload(regions) -> list[dict]:
    out = []
    for r in regions:
        bbox = r.mask.bbox()
        out.append({
            "label": r.label,
            "score": float(r.score),
            "bbox": list(bbox) if bbox else None,
            "mask": mask_to_payload(r.mask),
        })
    return out


def _draw_detections_png(field, regions, queries, alpha, path) -> None:
    from PIL import Image, ImageDraw
    from .viz import field_to_rgb
    rgb = field_to_rgb(field, queries, alpha)
    image = Image.fromarray(rgb, "RGB")
    draw = ImageDraw.Draw(image)
    for region in regions:
        if not region.is_labeled:
            continue
        bbox = region.mask.bbox()
        if bbox is None:
            continue
        x, y, w, h = bbox
        draw.rectangle([x, y, x + w - 1, y + h - 1], outline=(255, 255, 255))
        draw.text((x + 1, max(0, y - 10)),
                  f"{region.label} {region.score:.2f}", fill=(255, 255, 255))
    image.save(path)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_detect(args) -> int:
    if bool(args.field) == bool(args.scene):
        raise UsageError("provide exactly one of --field or --scene")
    scene = None
    gt = None
    if args.scene:
        scene = _load_scene(args.scene, args.seed)
        camera = CameraModel(view_width=args.width, view_height=args.height,
                             scale=args.scale)
        field, gt = render_frame(scene, args.t, camera)
    else:
        field = load_descriptor_field(args.field)

    queries = []
    if args.queries:
        queries = _load_queries(args.queries, field, scene)
    if args.query_class:
        if scene is None:
            raise UsageError("--query-class needs --scene")
        queries.append(class_query(scene, args.query_class))
    if not queries:
        raise UsageError("no queries: pass --queries and/or --query-class")

    cfg = DetectionConfig(similarity=SimilarityConfig(alpha=args.alpha))
    if args.mode == "coarse":
        target = args.target or queries[0].label
        regions = coarse_detect(field, queries, target, cfg)
    else:
        if args.masks:
            masks = load_masks(args.masks)
        elif gt is not None:
            masks = gt.nonempty_masks()
        else:
            raise UsageError("--mode mask needs --masks (or --scene ground truth)")
        regions = classify_regions(field, masks, queries, cfg)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "annotations.json").write_text(
        json.dumps(_regions_payload(regions), indent=2) + "\n"
    )
    _draw_detections_png(field, regions, queries, args.alpha, out / "detections.png")
    labeled = sum(1 for r in regions if r.is_labeled)
    print(f"detected {labeled}/{len(regions)} labeled regions -> {out}")
    return EXIT_OK


def cmd_follow(args) -> int:
    scene = _load_scene(args.scene, args.seed)
    camera = CameraModel(view_width=args.width, view_height=args.height,
                         scale=args.scale)
    queries = (
        class_query(scene, args.target_class),
        class_query(scene, scene.background_class),
    )
    processor = ProcessorConfig(
        queries=queries,
        target_label=args.target_class,
        detection=DetectionConfig(similarity=SimilarityConfig(alpha=args.alpha)),
        tracker=TrackerConfig(),
        recovery=_RECOVERY[args.recovery],
        detect_path=DetectPath.MASK if args.detector == "mask" else DetectPath.COARSE,
    )
    controller = ControllerConfig(
        mode=ControlMode.P if args.controller == "P" else ControlMode.PID,
        dt=1.0 / scene.frame_rate,
    )
    target_object = args.target_object
    if target_object is None:
        matches = [o.object_id for o in scene.objects
                   if o.class_id == args.target_class]
        if not matches:
            raise ValueError(f"no object of class {args.target_class!r} in scene")
        target_object = matches[0]
    cfg = FollowConfig(processor=processor, target_object=target_object,
                       camera=camera, controller=controller)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    det_file = open(out / "detections.jsonl", "w")

    def sink(step, proc):
        payload = _regions_payload([r for r in proc.regions if r.is_labeled])
        if not payload and proc.track_mask is not None and not proc.track_mask.is_empty:
            # tracking frames have no detector output; log the tracked mask
            payload = [{
                "label": args.target_class,
                "score": 1.0,
                "bbox": list(proc.track_mask.bbox()),
                "mask": mask_to_payload(proc.track_mask),
            }]
        det_file.write(json.dumps({"frame": step, "detections": payload}) + "\n")

    result = run_following(scene, cfg, duration=args.duration, detections_sink=sink)
    det_file.close()

    result.log.to_csv(out / "trajectory.csv")
    result.log.to_json(out / "trajectory.json")

    with open(out / "annotations.jsonl", "w") as fh:
        for record in result.log.records:
            gt = ground_truth(scene, record.t, camera.at(record.follower))
            objects = [
                {"object_id": oid, "class_id": cid, "mask": mask_to_payload(m)}
                for oid, cid, m in gt.entries
            ]
            fh.write(json.dumps({
                "frame": record.step, "target_class": args.target_class,
                "target_object": target_object, "objects": objects,
            }) + "\n")

    distance = trajectory_distance(result.log.follower_points(),
                                   result.log.target_points())
    ious = [r.iou for r in result.log.records]
    report = EvalReport(
        mean_trajectory_distance_m=distance,
        miou=float(np.mean(ious)),
        iou_per_frame=[float(v) for v in ious],
    )
    emit_report(report, out / "report.json", "json")
    emit_report(report, out / "report.csv", "csv")
    print(
        f"followed {len(result.log)} steps; mean trajectory distance "
        f"{distance:.4f} m; recoveries {len(result.recoveries)} -> {out}"
    )
    return EXIT_OK


def cmd_serve(args) -> int:
    from .gateway import (
        GatewayConfig, ReplaySource, SceneSource, gateway_serve,
    )
    if bool(args.scene) == bool(args.fields_dir):
        raise UsageError("provide exactly one of --scene or --fields-dir")
    cfg = GatewayConfig(
        camera=CameraModel(view_width=args.width, view_height=args.height,
                           scale=args.scale),
        detection=DetectionConfig(similarity=SimilarityConfig(alpha=args.alpha)),
        recovery=_RECOVERY[args.recovery],
        follow=not args.no_follow,
        fps_limit=args.fps,
        max_frames=args.max_frames,
    )
    if args.scene:
        scene = _load_scene(args.scene, args.seed)
        if args.target_class:
            cfg.initial_queries = (class_query(scene, args.target_class),)
            cfg.target_label = args.target_class
        source = SceneSource(scene, cfg)
    else:
        source = ReplaySource(args.fields_dir, cfg)
    console = args.console if args.console else None
    gateway_serve(source, cfg, port=args.port, host=args.host,
                  console_dir=console)
    return EXIT_OK


def _read_jsonl(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def cmd_eval(args) -> int:
    log_dir = Path(args.log) if args.log else None
    det_path = args.detections or (log_dir and log_dir / "detections.jsonl")
    ann_path = args.annotations or (log_dir and log_dir / "annotations.jsonl")
    traj_path = args.trajectory or (log_dir and log_dir / "trajectory.json")

    report = EvalReport()
    if det_path and ann_path and Path(det_path).exists() and Path(ann_path).exists():
        det_rows = _read_jsonl(det_path)
        ann_rows = _read_jsonl(ann_path)
        if len(det_rows) != len(ann_rows):
            raise ValueError(
                f"{len(det_rows)} detection frames vs {len(ann_rows)} annotations"
            )
        from .core import LabeledRegion
        target_class = ann_rows[0]["target_class"]
        truths, detections, predicted = [], [], []
        for det_row, ann_row in zip(det_rows, ann_rows):
            target_object = ann_row.get("target_object")
            truth = None
            for obj in ann_row["objects"]:
                if obj["object_id"] == target_object or (
                    target_object is None and obj["class_id"] == target_class
                ):
                    truth = mask_from_payload(obj["mask"])
                    break
            if truth is None:
                raise ValueError(f"frame {ann_row['frame']}: no target annotation")
            truths.append(truth)
            frame_regions = []
            for det in det_row["detections"]:
                frame_regions.append(LabeledRegion(
                    mask=mask_from_payload(det["mask"]),
                    label=det["label"], score=det["score"],
                ))
            detections.append(frame_regions)
            best = max((r for r in frame_regions if r.label == target_class),
                       key=lambda r: r.score, default=None)
            predicted.append(best.mask if best is not None
                             else Mask.empty(truth.height, truth.width))
        seq = AnnotatedSequence(target_class=target_class,
                                target_masks=tuple(truths))
        tp_rate, fp = detection_rates(detections, seq, iou_min=args.iou_min)
        report.tp_rate = tp_rate
        report.fp_count = fp
        ious = [float(iou(p, t)) for p, t in zip(predicted, truths)]
        report.iou_per_frame = ious
        report.miou = float(np.mean(ious))

    if traj_path and Path(traj_path).exists():
        doc = json.loads(Path(traj_path).read_text())
        follower = [r["follower"] for r in doc["records"]]
        target = [r["target"] for r in doc["records"]]
        report.mean_trajectory_distance_m = trajectory_distance(follower, target)

    if all(v is None for v in (report.tp_rate, report.miou,
                               report.mean_trajectory_distance_m)):
        raise ValueError("nothing to evaluate: no detections/annotations/trajectory")

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    emit_report(report, out, "json")
    emit_report(report, out.with_suffix(".csv"), "csv")
    print(f"report -> {out}")
    return EXIT_OK


def _parse_sizes(spec: str) -> list[tuple[int, int]]:
    sizes = []
    for token in spec.split(","):
        w, _, h = token.partition("x")
        sizes.append((int(w), int(h)))
    return sizes


def cmd_bench(args) -> int:
    from .control import ControllerState, compute_command
    from .redetection import redetect
    from .tracking import init_track, step_track
    from .core import LabeledRegion

    rows: list[FpsRow] = []
    scene = scenes.quality_scene(seed=args.seed if args.seed is not None else 0)
    reps = args.frames

    def timed(fn, n=reps, warmup=2):
        for _ in range(warmup):
            fn()
        times = []
        for _ in range(n):
            t0 = time.perf_counter()
            fn()
            times.append(time.perf_counter() - t0)
        return 1.0 / float(np.median(times))

    bench_t = 1.0
    aim = scene.objects[0].position(bench_t)
    for width, height in _parse_sizes(args.sizes):
        camera = CameraModel(view_width=width, view_height=height,
                             scale=0.02, pose=aim)
        queries = [class_query(scene, "target"), class_query(scene, "ground")]
        single = [class_query(scene, "target")]
        cfg = DetectionConfig(similarity=SimilarityConfig(alpha=0.6))

        rows.append(FpsRow("render", width, height,
                           timed(lambda: render_frame(scene, bench_t, camera))))
        field, gt = render_frame(scene, bench_t, camera)
        candidates = gt.nonempty_masks()
        rows.append(FpsRow("detect_coarse", width, height,
                           timed(lambda: coarse_detect(field, single, "target", cfg))))
        rows.append(FpsRow(
            "detect_mask", width, height,
            timed(lambda: classify_regions(field, candidates, queries,
                                           DetectionConfig()))))
        region = max(coarse_detect(field, single, "target", cfg),
                     key=lambda r: r.score)
        tracker_cfg = TrackerConfig()
        state = init_track(region, field, tracker_cfg)
        rows.append(FpsRow("track", width, height,
                           timed(lambda: step_track(state, field, tracker_cfg))))
        rows.append(FpsRow("redetect", width, height,
                           timed(lambda: redetect(single[0], field, cfg))))
        controller = ControllerConfig()
        rows.append(FpsRow(
            "control", width, height,
            timed(lambda: compute_command(ControllerState(), (12.0, -3.0),
                                          controller))))

    report = EvalReport(fps_table=rows)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    emit_report(report, out / "fps.json", "json")
    emit_report(report, out / "fps.csv", "csv")
    for row in rows:
        print(f"{row.stage:>14} {row.width}x{row.height}: {row.fps:9.1f} fps")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser assembly
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="followpipe",
                     description="detect / track / re-detect / follow pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None,
                       help="override the scene seed (default: scene value)")
        p.add_argument("--config", default=None,
                       help="JSON file with default values for any flag (default: none)")
        p.add_argument("--width", type=int, default=128,
                       help="camera view width in px (default: 128)")
        p.add_argument("--height", type=int, default=96,
                       help="camera view height in px (default: 96)")
        p.add_argument("--scale", type=float, default=0.025,
                       help="camera meters per pixel (default: 0.025)")

    p = sub.add_parser("detect", help="run detection on one frame")
    common(p)
    p.add_argument("--scene", default=None,
                   help="scene JSON path or builtin:<name> (default: none)")
    p.add_argument("--t", type=float, default=0.0,
                   help="scene time to render (default: 0.0)")
    p.add_argument("--field", default=None,
                   help="serialized descriptor field (.fand) (default: none)")
    p.add_argument("--masks", default=None,
                   help="serialized candidate masks (.fanm) (default: none)")
    p.add_argument("--queries", default=None,
                   help="queries JSON: [{label, vector|click|class}] (default: none)")
    p.add_argument("--query-class", default=None,
                   help="add a scene class basis as query (default: none)")
    p.add_argument("--target", default=None,
                   help="target label for coarse mode (default: first query)")
    p.add_argument("--mode", choices=["mask", "coarse"], default="coarse",
                   help="detection route (default: coarse)")
    p.add_argument("--alpha", type=float, default=0.6,
                   help="similarity threshold (default: 0.6)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("follow", help="closed-loop following run")
    common(p)
    p.add_argument("--scene", required=True,
                   help="scene JSON path or builtin:<name>")
    p.add_argument("--controller", choices=["P", "PID"], default="P",
                   help="controller mode (default: P)")
    p.add_argument("--detector", choices=["mask", "coarse"], default="coarse",
                   help="detection route (default: coarse)")
    p.add_argument("--recovery", choices=["tracker", "human", "auto"],
                   default="auto", help="recovery mode on loss (default: auto)")
    p.add_argument("--duration", type=float, default=None,
                   help="seconds to simulate (default: scene duration)")
    p.add_argument("--alpha", type=float, default=0.4,
                   help="similarity threshold (default: 0.4)")
    p.add_argument("--target-class", default="target",
                   help="class to follow (default: target)")
    p.add_argument("--target-object", default=None,
                   help="object id to evaluate against (default: first of class)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_follow)

    p = sub.add_parser("serve", help="run the websocket gateway")
    common(p)
    p.add_argument("--scene", default=None,
                   help="scene JSON path or builtin:<name> (default: none)")
    p.add_argument("--fields-dir", default=None,
                   help="replay serialized fields from this directory (default: none)")
    p.add_argument("--port", type=int, default=8700, help="port (default: 8700)")
    p.add_argument("--host", default="127.0.0.1", help="bind host (default: 127.0.0.1)")
    p.add_argument("--fps", type=float, default=20.0,
                   help="frame pacing limit (default: 20)")
    p.add_argument("--alpha", type=float, default=0.5,
                   help="similarity threshold (default: 0.5)")
    p.add_argument("--recovery", choices=["tracker", "human", "auto"],
                   default="auto", help="recovery mode (default: auto)")
    p.add_argument("--target-class", default=None,
                   help="start with this class as the query (default: wait for clicks)")
    p.add_argument("--no-follow", action="store_true",
                   help="keep the camera still instead of following (default: off)")
    p.add_argument("--max-frames", type=int, default=None,
                   help="stop after N frames (default: endless)")
    p.add_argument("--console", default=None,
                   help="serve the operator console from this directory (default: none)")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("eval", help="compute metrics from follow/detect outputs")
    common(p)
    p.add_argument("--log", default=None,
                   help="follow output directory (default: none)")
    p.add_argument("--detections", default=None,
                   help="detections.jsonl path (default: from --log)")
    p.add_argument("--annotations", default=None,
                   help="annotations.jsonl path (default: from --log)")
    p.add_argument("--trajectory", default=None,
                   help="trajectory.json path (default: from --log)")
    p.add_argument("--iou-min", type=float, default=0.5,
                   help="IoU threshold for a true positive (default: 0.5)")
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="per-stage FPS table")
    common(p)
    p.add_argument("--sizes", default="320x240,640x480",
                   help="comma-separated WxH list (default: 320x240,640x480)")
    p.add_argument("--frames", type=int, default=15,
                   help="measured repetitions per stage (default: 15)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_bench)

    parser.subparser_map = {
        name: sub_parser
        for name, sub_parser in sub.choices.items()
    }
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args = _apply_config_file(parser, args, argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileFormatError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"runtime fault: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # pragma: no cover - last resort
        log.exception("unhandled failure")
        print(f"runtime fault: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
