"""LQR trajectory tracking.

The tracker works on error coordinates measured in the frame of a preview
point on the planned trajectory: (lateral, heading, longitudinal, speed)
errors, controlled by (steering, acceleration). The bicycle model is
linearized about the reference speed, discretized exactly (the error
dynamics are nilpotent), and the gain comes from iterating the discrete
algebraic Riccati equation to a fixed point. Gains are cached per 1 m/s
speed bucket; caching is exact because the solve is deterministic.

Steering feed-forward adds atan(wheelbase * path curvature); acceleration
feed-forward adds the reference acceleration, both from finite differences
along the plan. Clamping to the vehicle limits happens last.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from crashbench.geometry import (
    EgoState,
    PlannedTrajectory,
    interpolate_pose,
    wrap_angle,
)
from crashbench.vehicle import ControlInput, VehicleParams, clamp_control


class RiccatiError(RuntimeError):
    """The Riccati iteration failed to converge; controller misconfigured."""


@dataclass(frozen=True, slots=True)
class TrackingError:
    """Ego state relative to the reference; lateral/heading are left-positive."""

    lateral: float
    heading: float
    longitudinal: float
    speed: float


@dataclass(frozen=True, slots=True)
class LqrConfig:
    state_cost: tuple[float, float, float, float] = (1.0, 10.0, 1.0, 1.0)
    control_cost: tuple[float, float] = (10.0, 1.0)
    preview_time: float = 0.1
    dt: float = 0.1
    riccati_tol: float = 1e-10
    riccati_max_iter: int = 10_000
    feedforward_probe: float = 0.05
    # Stop mode: when both the reference and the ego are near standstill,
    # position feedback would chase the stop point in a slow creep; command
    # a plain deceleration instead and let the speed floor hold the vehicle.
    stopping_speed: float = 0.5
    stopping_decel: float = -3.5

    def __post_init__(self) -> None:
        if any(q < 0.0 for q in self.state_cost):
            raise ValueError("state costs must be non-negative")
        if any(r <= 0.0 for r in self.control_cost):
            raise ValueError("control costs must be strictly positive")
        if self.dt <= 0.0 or self.preview_time < 0.0 or self.feedforward_probe <= 0.0:
            raise ValueError("time constants must be positive")
        if self.stopping_decel >= 0.0:
            raise ValueError("stopping_decel must be negative")


def solve_dare(
    A: np.ndarray,
    B: np.ndarray,
    Q: np.ndarray,
    R: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> np.ndarray:
    """Gain matrix K from the fixed point of the discrete Riccati iteration.

    Iterates P <- A'PA - A'PB (R + B'PB)^-1 B'PA + Q until the max-norm
    update falls below tol; raises RiccatiError when the cap is hit.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    P = Q.copy()
    for _ in range(max_iter):
        BtP = B.T @ P
        K = np.linalg.solve(R + BtP @ B, BtP @ A)
        P_next = A.T @ P @ A - (A.T @ P @ B) @ K + Q
        if np.max(np.abs(P_next - P)) < tol:
            BtP = B.T @ P_next
            return np.linalg.solve(R + BtP @ B, BtP @ A)
        P = P_next
    raise RiccatiError(f"no fixed point within {max_iter} iterations (tol={tol:g})")


def _error_model(speed: float, dt: float, wheelbase: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact discretization of the linearized error dynamics at a given speed."""
    A = np.array(
        [
            [1.0, speed * dt, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, dt],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )
    B = np.array(
        [
            [0.5 * speed * speed * dt * dt / wheelbase, 0.0],
            [speed * dt / wheelbase, 0.0],
            [0.0, 0.5 * dt * dt],
            [0.0, dt],
        ]
    )
    return A, B


class LqrTracker:
    """Converts planned trajectories into steering/acceleration commands.

    The gain cache is read-mostly and replaced atomically per bucket, so
    shared use behaves as if the gain were recomputed on every call.
    """

    def __init__(self, cfg: LqrConfig, params: VehicleParams) -> None:
        self.cfg = cfg
        self.params = params
        self._gains: dict[int, tuple[tuple[float, ...], tuple[float, ...]]] = {}

    def gain(self, speed: float) -> tuple[tuple[float, ...], tuple[float, ...]]:
        """LQR gain for the 1 m/s speed bucket containing speed.

        Buckets below 1 m/s share the 1 m/s linearization; at standstill the
        lateral states are uncontrollable and the Riccati iteration would
        diverge.
        """
        bucket = max(1, round(speed))
        cached = self._gains.get(bucket)
        if cached is not None:
            return cached
        A, B = _error_model(float(bucket), self.cfg.dt, self.params.wheelbase)
        K = solve_dare(
            A,
            B,
            np.diag(self.cfg.state_cost),
            np.diag(self.cfg.control_cost),
            tol=self.cfg.riccati_tol,
            max_iter=self.cfg.riccati_max_iter,
        )
        rows = (tuple(float(v) for v in K[0]), tuple(float(v) for v in K[1]))
        self._gains[bucket] = rows
        return rows

    def tracking_error(
        self, ego: EgoState, plan: PlannedTrajectory, plan_time: float | None = None
    ) -> TrackingError:
        """Error between the ego state and the preview reference point."""
        err, _ = self._reference(ego, plan, plan_time)
        return err

    def _reference(
        self, ego: EgoState, plan: PlannedTrajectory, plan_time: float | None
    ) -> tuple[TrackingError, float]:
        cfg = self.cfg
        if plan_time is None:
            plan_time = ego.time
        q = (ego.time - plan_time) + cfg.preview_time
        horizon = plan.horizon
        qc = 0.0 if q < 0.0 else horizon if q > horizon else q
        ref = interpolate_pose(plan, qc)
        # Plans that end before the preview: hold the last pose, zero speed.
        ref_speed = 0.0 if q > horizon else ref.speed
        ch = math.cos(ego.pose.heading)
        sh = math.sin(ego.pose.heading)
        px = ego.pose.x + ego.speed * cfg.preview_time * ch
        py = ego.pose.y + ego.speed * cfg.preview_time * sh
        cr = math.cos(ref.pose.heading)
        sr = math.sin(ref.pose.heading)
        dx = px - ref.pose.x
        dy = py - ref.pose.y
        err = TrackingError(
            lateral=dy * cr - dx * sr,
            heading=wrap_angle(ego.pose.heading - ref.pose.heading),
            longitudinal=dx * cr + dy * sr,
            speed=ego.speed - ref_speed,
        )
        return err, ref_speed

    def _feedforward(self, plan: PlannedTrajectory, q: float) -> tuple[float, float]:
        """(path curvature, reference acceleration) at offset q, by finite differences."""
        probe = self.cfg.feedforward_probe
        horizon = plan.horizon
        lo = q - probe
        if lo < 0.0:
            lo = 0.0
        hi = q + probe
        if hi > horizon:
            hi = horizon
        if hi <= lo:
            return 0.0, 0.0
        a = interpolate_pose(plan, lo)
        b = interpolate_pose(plan, hi)
        dth = wrap_angle(b.pose.heading - a.pose.heading)
        ds = math.hypot(b.pose.x - a.pose.x, b.pose.y - a.pose.y)
        kappa = dth / ds if ds > 1e-9 else 0.0
        accel = (b.speed - a.speed) / (hi - lo)
        return kappa, accel

    def compute_control(
        self,
        ego: EgoState,
        plan: PlannedTrajectory | None,
        plan_time: float | None = None,
    ) -> ControlInput:
        """Command for the current state; missing plan falls back to hold-brake."""
        if plan is None:
            return ControlInput(0.0, self.params.min_accel)
        cfg = self.cfg
        err, ref_speed = self._reference(ego, plan, plan_time)
        k_steer, k_accel = self.gain(ref_speed)
        steer = -(
            k_steer[0] * err.lateral
            + k_steer[1] * err.heading
            + k_steer[2] * err.longitudinal
            + k_steer[3] * err.speed
        )
        accel = -(
            k_accel[0] * err.lateral
            + k_accel[1] * err.heading
            + k_accel[2] * err.longitudinal
            + k_accel[3] * err.speed
        )
        if plan_time is None:
            plan_time = ego.time
        q = (ego.time - plan_time) + cfg.preview_time
        horizon = plan.horizon
        qc = 0.0 if q < 0.0 else horizon if q > horizon else q
        kappa, ref_accel = self._feedforward(plan, qc)
        steer += math.atan(self.params.wheelbase * kappa)
        accel += ref_accel
        if ref_speed < cfg.stopping_speed and ego.speed < cfg.stopping_speed:
            accel = cfg.stopping_decel
        return clamp_control(ControlInput(steer, accel), self.params)
