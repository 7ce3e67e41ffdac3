"""Ego-vehicle propagation via the discrete kinematic bicycle model.

State derivative: (v cos h, v sin h, v tan(steer) / wheelbase, accel),
integrated with classic RK4 at a fixed substep inside each control
interval. Reverse motion is not modelled: speed is floored at zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from crashbench import kernels
from crashbench.geometry import EgoState, OrientedBox, Pose2


class IntegrationError(RuntimeError):
    """State became non-finite, indicating a faulty planner/controller chain."""


@dataclass(frozen=True, slots=True)
class ControlInput:
    steering: float
    acceleration: float


@dataclass(frozen=True, slots=True)
class VehicleParams:
    """Vehicle geometry and control limits.

    Defaults model the data-collection vehicle class (wheelbase 2.588 m,
    footprint 4.084 x 1.730 m); everything is overridable from the scenario
    config.
    """

    wheelbase: float = 2.588
    length: float = 4.084
    width: float = 1.730
    max_steer: float = 0.78
    min_accel: float = -7.0
    max_accel: float = 3.0
    max_speed: float = 30.0
    integration_substep: float = 0.01

    def __post_init__(self) -> None:
        if self.wheelbase <= 0.0 or self.length <= 0.0 or self.width <= 0.0:
            raise ValueError("vehicle dimensions must be positive")
        if self.max_steer <= 0.0 or self.max_speed <= 0.0 or self.integration_substep <= 0.0:
            raise ValueError("limits must be positive")
        if self.min_accel >= 0.0 or self.max_accel <= 0.0:
            raise ValueError("acceleration limits must bracket zero")


def clamp_control(u: ControlInput, p: VehicleParams) -> ControlInput:
    """Saturate a control input to the vehicle limits. Idempotent."""
    steer = u.steering
    if steer > p.max_steer:
        steer = p.max_steer
    elif steer < -p.max_steer:
        steer = -p.max_steer
    accel = u.acceleration
    if accel > p.max_accel:
        accel = p.max_accel
    elif accel < p.min_accel:
        accel = p.min_accel
    if steer == u.steering and accel == u.acceleration:
        return u
    return ControlInput(steer, accel)


def step(state: EgoState, u: ControlInput, dt: float, p: VehicleParams) -> EgoState:
    """Propagate the ego state by dt under an already-clamped control input."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    n = max(1, round(dt / p.integration_substep))
    x, y, heading, speed = kernels.bicycle_step(
        state.pose.x,
        state.pose.y,
        state.pose.heading,
        state.speed,
        u.steering,
        u.acceleration,
        dt,
        n,
        p.wheelbase,
        p.max_speed,
    )
    if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(heading) and math.isfinite(speed)):
        raise IntegrationError(
            f"non-finite state after step from t={state.time:.3f}: "
            f"({x!r}, {y!r}, {heading!r}, {speed!r})"
        )
    return EgoState(Pose2(x, y, heading), speed, state.time + dt)


def footprint(state: EgoState, p: VehicleParams) -> OrientedBox:
    """Ego footprint box; the state pose is taken as the footprint center."""
    return OrientedBox(state.pose, p.length, p.width)
