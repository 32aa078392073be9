"""Websocket gateway: streams annotated frames to operator consoles and
applies their commands (queries, clicks, boxes, mode switches) at frame
boundaries.

Roles: a processing thread renders/processes/broadcasts frames; websocket
handlers validate client messages and enqueue them; the command queue is
drained once per frame so no frame runs under a half-applied configuration.
"""

from __future__ import annotations

import asyncio
import json
import logging
import queue
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse, PlainTextResponse

from .control import ControllerConfig, ControllerState, compute_command, pixel_error
from .core import DescriptorField, OutOfBoundsError, QueryDescriptor
from .detection import DetectionConfig
from .pipeline import (
    DetectPath,
    FrameProcessor,
    PipelineMode,
    ProcessorConfig,
    RollingStageStats,
    StageTimings,
)
from .providers import (
    CameraModel,
    SceneScript,
    load_descriptor_field,
    query_from_click,
    render_frame,
)
from .redetection import RecoveryMode, human_redetect
from .simulator import WorldState, step_world
from .tracking import TrackerConfig
from .viz import encode_png_base64, field_to_rgb

log = logging.getLogger(__name__)

VALID_MODES = {m.value for m in RecoveryMode}


@dataclass
class GatewayConfig:
    camera: CameraModel = CameraModel(view_width=128, view_height=96, scale=0.025)
    detection: DetectionConfig = DetectionConfig()
    tracker: TrackerConfig = TrackerConfig()
    controller: ControllerConfig = ControllerConfig()
    recovery: RecoveryMode = RecoveryMode.AUTOMATIC
    detect_path: DetectPath = DetectPath.COARSE
    follow: bool = True  # move the follower under closed-loop control
    fps_limit: float | None = 20.0
    max_frames: int | None = None  # stop after N frames (tests); None = endless
    initial_queries: tuple[QueryDescriptor, ...] = ()
    target_label: str | None = None


class SceneSource:
    """Renders scene frames; the camera follows the world follower pose."""

    def __init__(self, scene: SceneScript, cfg: GatewayConfig):
        self.scene = scene
        self.cfg = cfg
        start = scene.objects[0].position(0.0) if scene.objects else (0.0, 0.0)
        self.world = WorldState(
            t=0.0, follower=start,
            targets={o.object_id: o.position(0.0) for o in scene.objects},
        )
        self.controller_state = ControllerState()
        self.frame_index = 0

    def next_field(self):
        scene = self.scene
        t = self.world.t
        if t > scene.duration:  # loop the scenario for endless demos
            self.world = WorldState(
                t=0.0,
                follower=scene.objects[0].position(0.0) if scene.objects else (0.0, 0.0),
                targets={o.object_id: o.position(0.0) for o in scene.objects},
            )
            self.controller_state = ControllerState()
            t = 0.0
        camera = self.cfg.camera.at(self.world.follower)
        field, gt = render_frame(scene, t, camera)
        self.frame_index += 1
        return field, gt

    def advance(self, centroid, view) -> None:
        if self.cfg.follow and centroid is not None:
            error = pixel_error(centroid, view)
            command, self.controller_state = compute_command(
                self.controller_state, error, self.cfg.controller
            )
        else:
            command, self.controller_state = compute_command(
                self.controller_state, (0.0, 0.0), self.cfg.controller
            )
        self.world = step_world(self.world, command, self.scene, self.scene.dt)


class ReplaySource:
    """Cycles serialized descriptor fields from a directory in name order."""

    def __init__(self, directory: str | Path, cfg: GatewayConfig):
        self.paths = sorted(Path(directory).glob("*.fand"))
        if not self.paths:
            raise FileNotFoundError(f"no .fand files under {directory}")
        self.cfg = cfg
        self.frame_index = 0

    def next_field(self):
        path = self.paths[self.frame_index % len(self.paths)]
        self.frame_index += 1
        return load_descriptor_field(path), None

    def advance(self, centroid, view) -> None:
        pass


class GatewayRuntime:
    """Owns the processing loop and the connected-client registry."""

    def __init__(self, source, cfg: GatewayConfig):
        self.source = source
        self.cfg = cfg
        self.commands: queue.Queue = queue.Queue()
        self.clients: dict[WebSocket, asyncio.Lock] = {}
        self.loop: asyncio.AbstractEventLoop | None = None
        self.stop_event = threading.Event()
        self.thread: threading.Thread | None = None
        self.stats = RollingStageStats(window=100)
        self.seq = 0
        self.frames_sent = 0
        self.queries: list[QueryDescriptor] = list(cfg.initial_queries)
        self.target_label = cfg.target_label or (
            cfg.initial_queries[0].label if cfg.initial_queries else None
        )
        self.processor: FrameProcessor | None = None
        self.last_field: DescriptorField | None = None
        if self.queries and self.target_label:
            self._build_processor()

    # -- processor lifecycle --------------------------------------------------

    def _build_processor(self) -> None:
        self.processor = FrameProcessor(ProcessorConfig(
            queries=tuple(self.queries),
            target_label=self.target_label,
            detection=self.cfg.detection,
            tracker=self.cfg.tracker,
            recovery=self.cfg.recovery,
            detect_path=self.cfg.detect_path,
            mode=PipelineMode.DETECT_THEN_TRACK,
        ))

    # -- command handling (processing thread, between frames) -----------------

    def _apply_command(self, message: dict) -> None:
        kind = message["type"]
        field = self.last_field
        if kind in ("click", "box") and field is None:
            return  # nothing rendered yet; the client retries on user action
        if kind == "click":
            x, y, label = int(message["x"]), int(message["y"]), message["label"]
            if self._route_human_input(field, label, click=(x, y)):
                return
            query = query_from_click(field, x, y, label)
            self._add_query(query, label)
        elif kind == "box":
            x, y = int(message["x"]), int(message["y"])
            w, h = int(message["w"]), int(message["h"])
            label = message["label"]
            if self._route_human_input(field, label, box=(x, y, w, h)):
                return
            region = human_redetect(
                field, label, box=(x, y, w, h),
                alpha=self.cfg.tracker.alpha_track,
            )
            from .providers import query_from_region
            query = query_from_region(field, region.mask, label)
            self._add_query(query, label)
        elif kind == "set_mode":
            mode = RecoveryMode(message["mode"])
            self.cfg.recovery = mode
            if self.processor:
                self.processor.set_recovery(mode)
        elif kind == "set_alpha":
            alpha = float(message["alpha"])
            sim = self.cfg.detection.similarity
            from dataclasses import replace
            self.cfg.detection = replace(
                self.cfg.detection, similarity=replace(sim, alpha=alpha)
            )
            if self.processor:
                self.processor.set_alpha(alpha)
        elif kind == "redetect":
            if self.processor:
                self.processor.force_redetect()

    def _route_human_input(self, field, label, click=None, box=None) -> bool:
        """Route clicks/boxes to human recovery when the track is lost."""
        if (
            self.processor is not None
            and self.cfg.recovery is RecoveryMode.HUMAN
            and self.processor.track is not None
            and self.processor.track.status.value == "LOST"
        ):
            region = human_redetect(
                field, label or self.target_label, click=click, box=box,
                alpha=self.cfg.tracker.alpha_track,
            )
            self.processor.adopt(region, field)
            return True
        return False

    def _add_query(self, query: QueryDescriptor, label: str) -> None:
        self.queries.append(query)
        self.target_label = label
        if self.processor is None:
            self._build_processor()
        else:
            self.processor.set_queries(self.queries, label)

    # -- frame loop (processing thread) ---------------------------------------

    def run_loop(self) -> None:
        period = 1.0 / self.cfg.fps_limit if self.cfg.fps_limit else 0.0
        while not self.stop_event.is_set():
            started = time.perf_counter()
            try:
                self._one_frame()
            except Exception:
                log.exception("frame loop error; stopping gateway")
                break
            if self.cfg.max_frames is not None and self.frames_sent >= self.cfg.max_frames:
                break
            if period:
                elapsed = time.perf_counter() - started
                if period > elapsed:
                    self.stop_event.wait(period - elapsed)

    def _one_frame(self) -> None:
        t0 = time.perf_counter()
        field, gt = self.source.next_field()
        render_ms = (time.perf_counter() - t0) * 1000.0
        self.last_field = field

        # drain the command queue: all reconfiguration lands between frames
        while True:
            try:
                message = self.commands.get_nowait()
            except queue.Empty:
                break
            try:
                self._apply_command(message)
            except (OutOfBoundsError, ValueError, KeyError):
                log.warning("dropping bad command %s", message, exc_info=True)

        candidates = None
        if gt is not None and self.cfg.detect_path is DetectPath.MASK:
            candidates = gt.nonempty_masks()

        status = "SEARCHING"
        annotations = []
        centroid = None
        timings = StageTimings(render_ms=render_ms)
        if self.processor is not None:
            result = self.processor.process(field, candidates)
            status = result.status
            centroid = result.centroid
            timings = StageTimings(
                render_ms=render_ms,
                detect_ms=result.timings.detect_ms,
                track_ms=result.timings.track_ms,
                redetect_ms=result.timings.redetect_ms,
            )
            annotations = self._annotations(result)
        self.stats.update(timings)

        view = (field.width, field.height)
        self.source.advance(centroid, view)

        self.seq += 1
        payload = {
            "type": "frame",
            "seq": self.seq,
            "width": field.width,
            "height": field.height,
            "png": encode_png_base64(field_to_rgb(
                field, self.queries or None,
                self.cfg.detection.similarity.alpha,
            )),
            "annotations": annotations,
            "status": status,
            "timings": {
                **{k: round(v, 3) for k, v in self.stats.mean_ms().items()},
                **{k: round(v, 2) for k, v in self.stats.fps().items()},
            },
        }
        self._broadcast(json.dumps(payload))
        self.frames_sent += 1

    def _annotations(self, result) -> list[dict]:
        out = []
        regions = list(result.regions)
        if not regions and result.track_mask is not None:
            bbox = result.track_mask.bbox()
            if bbox:
                out.append({
                    "label": self.target_label or "",
                    "score": 1.0 if self.processor is None else round(
                        float(getattr(self.processor.track, "last_score", 1.0)), 4),
                    "bbox": list(bbox),
                })
            return out
        for region in regions:
            if not region.is_labeled:
                continue
            bbox = region.mask.bbox()
            if bbox is None:
                continue
            out.append({
                "label": region.label,
                "score": round(float(region.score), 4),
                "bbox": list(bbox),
            })
        return out

    # -- client registry (event loop) ------------------------------------------

    def _broadcast(self, text: str) -> None:
        if self.loop is None:
            return
        for ws, lock in list(self.clients.items()):
            asyncio.run_coroutine_threadsafe(self._send(ws, lock, text), self.loop)

    async def _send(self, ws: WebSocket, lock: asyncio.Lock, text: str) -> None:
        try:
            async with lock:
                await ws.send_text(text)
        except Exception:
            self.clients.pop(ws, None)

    def start(self) -> None:
        self.loop = asyncio.get_event_loop()
        self.thread = threading.Thread(target=self.run_loop, daemon=True)
        self.thread.start()

    def stop(self) -> None:
        self.stop_event.set()
        if self.thread is not None:
            self.thread.join(timeout=5.0)


def _validate_client_message(raw: str) -> tuple[dict | None, dict | None]:
    """(message, error_reply); exactly one is set."""
    def err(code: str, detail: str) -> tuple[None, dict]:
        return None, {"type": "error", "code": code, "detail": detail}

    try:
        message = json.loads(raw)
    except json.JSONDecodeError as exc:
        return err("BAD_MESSAGE", f"invalid JSON: {exc}")
    if not isinstance(message, dict) or "type" not in message:
        return err("BAD_MESSAGE", "message must be an object with a 'type'")
    kind = message["type"]
    required = {
        "click": {"x", "y", "label"},
        "box": {"x", "y", "w", "h", "label"},
        "set_mode": {"mode"},
        "set_alpha": {"alpha"},
        "redetect": set(),
    }
    if kind not in required:
        return err("BAD_MESSAGE", f"unknown message type {kind!r}")
    missing = required[kind] - set(message)
    if missing:
        return err("BAD_MESSAGE", f"{kind} message missing {sorted(missing)}")
    numeric = {"x", "y", "w", "h", "alpha"} & set(message)
    for key in numeric:
        if not isinstance(message[key], (int, float)) or isinstance(message[key], bool):
            return err("BAD_MESSAGE", f"field {key!r} must be a number")
    if kind in ("click", "box"):
        if not isinstance(message.get("label"), str) or not message["label"]:
            return err("BAD_MESSAGE", "label must be a non-empty string")
        if any(message[k] < 0 for k in ({"x", "y", "w", "h"} & set(message))):
            return err("OUT_OF_BOUNDS", "coordinates must be non-negative")
        if kind == "box" and (message["w"] == 0 or message["h"] == 0):
            return err("OUT_OF_BOUNDS", "box must have positive area")
    if kind == "set_mode" and message["mode"] not in VALID_MODES:
        return err("BAD_MESSAGE", f"mode must be one of {sorted(VALID_MODES)}")
    if kind == "set_alpha" and not (0.0 <= float(message["alpha"]) <= 1.0):
        return err("BAD_MESSAGE", "alpha must be in [0, 1]")
    return message, None


def create_app(runtime: GatewayRuntime, console_dir: str | Path | None = None) -> FastAPI:
    from contextlib import asynccontextmanager

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        runtime.start()
        yield
        runtime.stop()

    app = FastAPI(lifespan=lifespan)
    app.state.runtime = runtime

    @app.get("/healthz")
    async def healthz():
        return JSONResponse({
            "ok": True,
            "frames": runtime.frames_sent,
            "clients": len(runtime.clients),
        })

    serve_console = console_dir is not None and Path(console_dir).exists()
    if not serve_console:
        @app.get("/")
        async def index():
            return PlainTextResponse(
                "frame gateway running; connect a websocket client to /ws"
            )

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        lock = asyncio.Lock()
        runtime.clients[ws] = lock
        try:
            while True:
                raw = await ws.receive_text()
                message, error = _validate_client_message(raw)
                if error is not None:
                    async with lock:
                        await ws.send_text(json.dumps(error))
                    continue
                # bounds that depend on the live frame are checked here so the
                # client gets a reply instead of a silent drop
                frame = runtime.last_field
                if frame is not None and message["type"] in ("click", "box"):
                    x, y = int(message["x"]), int(message["y"])
                    if message["type"] == "click":
                        outside = x >= frame.width or y >= frame.height
                    else:
                        outside = (
                            x + int(message["w"]) > frame.width
                            or y + int(message["h"]) > frame.height
                        )
                    if outside:
                        async with lock:
                            await ws.send_text(json.dumps({
                                "type": "error", "code": "OUT_OF_BOUNDS",
                                "detail": f"input exceeds {frame.width}x{frame.height}",
                            }))
                        continue
                runtime.commands.put(message)
        except WebSocketDisconnect:
            pass
        finally:
            runtime.clients.pop(ws, None)

    if serve_console:
        # mounted last so /ws and /healthz keep priority; serves index.html
        # at / and the compiled module files beside it
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=console_dir, html=True),
                  name="console")

    return app


def gateway_serve(
    source, cfg: GatewayConfig, port: int, host: str = "127.0.0.1",
    console_dir: str | Path | None = None,
) -> None:
    """Run the gateway on a real port (blocking)."""
    import uvicorn

    runtime = GatewayRuntime(source, cfg)
    app = create_app(runtime, console_dir=console_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
