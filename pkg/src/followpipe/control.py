"""Visual servoing: pixel error of the tracked centroid to planar velocity.

P or PID on the per-axis pixel error, anti-windup clamp on the integral,
exponential low-pass on the command, then a per-axis speed clamp. Positive
commands move the follower toward the target under the camera convention
(pixel x grows with world x).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum


class ControlMode(Enum):
    P = "P"
    PID = "PID"


@dataclass(frozen=True)
class ControllerConfig:
    kp: float = 0.01  # m/s per pixel
    ki: float = 0.001  # m/s per pixel-second
    kd: float = 0.005  # m/s per pixel/second
    mode: ControlMode = ControlMode.P
    beta: float = 0.3  # low-pass coefficient; 1 disables smoothing
    v_max: float = 2.0  # per-axis command clamp, m/s
    integral_clamp: float = 200.0  # px*s anti-windup bound
    dt: float = 0.05

    def __post_init__(self):
        if min(self.kp, self.ki, self.kd) < 0:
            raise ValueError("gains must be non-negative")
        if not (0.0 < self.beta <= 1.0):
            raise ValueError("beta must be in (0, 1]")
        if self.v_max <= 0:
            raise ValueError("v_max must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")


@dataclass(frozen=True)
class ControlCommand:
    vx: float
    vy: float


@dataclass(frozen=True)
class ControllerState:
    integral: tuple[float, float] = (0.0, 0.0)
    prev_error: tuple[float, float] | None = None
    prev_command: tuple[float, float] = (0.0, 0.0)


def pixel_error(
    centroid: tuple[float, float], view: tuple[int, int]
) -> tuple[float, float]:
    """Offset of the centroid from the view center, (x - w/2, y - h/2)."""
    w, h = view
    return (centroid[0] - w / 2, centroid[1] - h / 2)


def compute_command(
    state: ControllerState, error: tuple[float, float], cfg: ControllerConfig
) -> tuple[ControlCommand, ControllerState]:
    """One controller step: raw PID -> low-pass -> clamp.

    Non-finite errors are a controller fault: the command zeroes and the
    state resets.
    """
    ex, ey = error
    if not (math.isfinite(ex) and math.isfinite(ey)):
        return ControlCommand(0.0, 0.0), reset(state)

    clamp_i = cfg.integral_clamp
    ix = min(max(state.integral[0] + ex * cfg.dt, -clamp_i), clamp_i)
    iy = min(max(state.integral[1] + ey * cfg.dt, -clamp_i), clamp_i)

    raw = [cfg.kp * ex, cfg.kp * ey]
    if cfg.mode is ControlMode.PID:
        raw[0] += cfg.ki * ix
        raw[1] += cfg.ki * iy
        if state.prev_error is not None:
            raw[0] += cfg.kd * (ex - state.prev_error[0]) / cfg.dt
            raw[1] += cfg.kd * (ey - state.prev_error[1]) / cfg.dt

    ux = cfg.beta * raw[0] + (1.0 - cfg.beta) * state.prev_command[0]
    uy = cfg.beta * raw[1] + (1.0 - cfg.beta) * state.prev_command[1]
    ux = min(max(ux, -cfg.v_max), cfg.v_max)
    uy = min(max(uy, -cfg.v_max), cfg.v_max)

    new_state = ControllerState(
        integral=(ix, iy), prev_error=(ex, ey), prev_command=(ux, uy)
    )
    return ControlCommand(vx=ux, vy=uy), new_state


def reset(state: ControllerState) -> ControllerState:
    """Zero all controller memory."""
    return ControllerState()
