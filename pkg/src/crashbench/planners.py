"""Built-in reference planners, the waypoint post-processor, and the
external-planner bridge.

All built-in planners are deterministic functions of their inputs; none
owns hidden random state. Plans are emitted at 0.5 s waypoint spacing out
to a 3 s horizon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from crashbench.geometry import (
    OrientedBox,
    PlannedTrajectory,
    Pose2,
    Waypoint,
    to_ego_frame,
)
from crashbench.observe import Observation
from crashbench.scenario import ScenarioInstance, ScenarioType
from crashbench.vehicle import ControlInput, VehicleParams
from crashbench import wire

PLAN_STEP = 0.5
PLAN_HORIZON = 3.0

Planner = Callable[[Observation], "PlannerVerdict"]


@dataclass(frozen=True)
class PlannerVerdict:
    """Planner output: exactly one of a waypoint plan or a control sequence."""

    plan: PlannedTrajectory | None = None
    controls: tuple[tuple[float, ControlInput], ...] | None = None
    latency: float = 0.0
    diagnostics: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if (self.plan is None) == (self.controls is None):
            raise ValueError("verdict must carry exactly one of plan or controls")


def _offsets() -> list[float]:
    return [PLAN_STEP * k for k in range(1, int(PLAN_HORIZON / PLAN_STEP) + 1)]


def plan_constant_velocity(obs: Observation) -> PlannerVerdict:
    """Extrapolate the current speed along the current heading."""
    ego = obs.ego
    c = math.cos(ego.pose.heading)
    s = math.sin(ego.pose.heading)
    waypoints = tuple(
        Waypoint(
            t,
            Pose2(ego.pose.x + ego.speed * c * t, ego.pose.y + ego.speed * s * t, ego.pose.heading),
            speed=ego.speed,
        )
        for t in _offsets()
    )
    return PlannerVerdict(plan=PlannedTrajectory(waypoints))


def _braking_plan(obs: Observation, brake_accel: float, spacing: float = 0.1) -> PlannerVerdict:
    """Decelerate at brake_accel along the current heading until standstill.

    Sampled on a fine grid so the deceleration profile survives even when
    the stop happens within the first plan interval.
    """
    ego = obs.ego
    v0 = ego.speed
    a = brake_accel
    t_stop = v0 / -a if a < 0.0 else 0.0
    stop_dist = 0.5 * v0 * v0 / -a if a < 0.0 else 0.0
    c = math.cos(ego.pose.heading)
    s = math.sin(ego.pose.heading)
    waypoints = []
    for k in range(1, int(PLAN_HORIZON / spacing) + 1):
        t = spacing * k
        if t < t_stop:
            dist = v0 * t + 0.5 * a * t * t
            speed = v0 + a * t
        else:
            dist = stop_dist
            speed = 0.0
        waypoints.append(
            Waypoint(t, Pose2(ego.pose.x + dist * c, ego.pose.y + dist * s, ego.pose.heading), speed=speed)
        )
    return PlannerVerdict(plan=PlannedTrajectory(tuple(waypoints)))


def corridor_occupied(obs: Observation, lateral: float = 2.0) -> bool:
    """Any observed object center inside the braking corridor?

    The corridor spans [0, 2 * ego speed] ahead and +/-lateral to the sides,
    i.e. an object in front closer than 2 s time-to-collision. Membership is
    tested on the box center.
    """
    reach = 2.0 * obs.ego.speed
    for actor in obs.objects:
        px, py = to_ego_frame(actor.box.center.position(), obs.ego.pose)
        if 0.0 <= px <= reach and -lateral <= py <= lateral:
            return True
    return False


def make_naive_baseline(params: VehicleParams) -> Planner:
    """Constant velocity unless an object sits in the corridor, then full brake."""

    def planner(obs: Observation) -> PlannerVerdict:
        if corridor_occupied(obs):
            return _braking_plan(obs, params.min_accel)
        return plan_constant_velocity(obs)

    return planner


def make_scripted_oracle(
    instance: ScenarioInstance,
    params: VehicleParams,
    dodge_offset: float = 3.5,
    dodge_time: float = 2.0,
) -> Planner:
    """Scenario-aware upper-bound planner (test-only privilege).

    Stationary and side targets are handled by braking to a stop from the
    first live tick. Frontal targets cannot be out-braked, so the oracle
    shifts one lane width away from the oncoming lane over ``dodge_time``
    seconds and then drives parallel to the route.
    """
    spec = instance.spec
    route = spec.ego_route
    v0 = spec.ego_init.speed

    def planner(obs: Observation) -> PlannerVerdict:
        if spec.scenario_type in (ScenarioType.STATIONARY, ScenarioType.SIDE):
            if obs.time < 0.0:
                return plan_constant_velocity(obs)
            return _braking_plan(obs, params.min_accel)
        if obs.time < 0.0:
            return plan_constant_velocity(obs)
        s_ego = route.project(obs.ego.pose.x, obs.ego.pose.y)
        waypoints = []
        for t in _offsets():
            live_t = obs.time + t
            frac = min(max(live_t / dodge_time, 0.0), 1.0)
            offset = dodge_offset * 0.5 * (1.0 - math.cos(math.pi * frac))
            s = s_ego + v0 * t
            x, y = route.point_at(s)
            h = route.heading_at(s)
            # Shift to the right of the lane (away from the oncoming side).
            waypoints.append(
                Waypoint(t, Pose2(x + math.sin(h) * offset, y - math.cos(h) * offset, h), speed=v0)
            )
        return PlannerVerdict(plan=PlannedTrajectory(tuple(waypoints)))

    return planner


# ---------------------------------------------------------------------------
# waypoint post-processing


def _exit_direction(px: float, py: float, hl: float, hw: float, ax: float, ay: float) -> tuple[float, float, float]:
    """Exit distance and box-frame direction of the nearest face.

    (px, py) is the point in the box frame, (ax, ay) the anchor in the box
    frame. Ties between faces are broken toward the anchor side; a dead
    tie pushes along +x.
    """
    candidates = (
        (hl - px, 1.0, 0.0),
        (hl + px, -1.0, 0.0),
        (hw - py, 0.0, 1.0),
        (hw + py, 0.0, -1.0),
    )
    best = None
    for dist, ux, uy in candidates:
        if best is None or dist < best[0] - 1e-12:
            best = (dist, ux, uy)
        elif abs(dist - best[0]) <= 1e-12:
            # Prefer the face on the anchor's side of the center.
            if ax * ux + ay * uy > ax * best[1] + ay * best[2]:
                best = (dist, ux, uy)
    return best


@dataclass(frozen=True, slots=True)
class PostProcessConfig:
    """Cost weights for the per-waypoint repulsion optimization.

    The penalty is quadratic in (penetration + boundary_push) inside the
    inflated box and zero outside; the push offset makes the repulsion win
    against the anchor pull at the boundary, so trapped waypoints actually
    exit. The anchor term is quadratic about the original waypoint.
    """

    penalty_weight: float = 10.0
    anchor_weight: float = 1.0
    boundary_push: float = 0.5
    step_size: float = 0.05
    step_decay: float = 0.1  # eta_k = step_size / (1 + step_decay * k)
    iterations: int = 100
    inflation: float = 0.965  # half ego width + 0.1 m margin by default
    time_window: float = 0.26


def _waypoint_cost_and_grad(
    wx: float,
    wy: float,
    ox: float,
    oy: float,
    boxes: Sequence[OrientedBox],
    cfg: PostProcessConfig,
    inflation: float,
) -> tuple[float, float, float]:
    cost = cfg.anchor_weight * ((wx - ox) ** 2 + (wy - oy) ** 2)
    gx = 2.0 * cfg.anchor_weight * (wx - ox)
    gy = 2.0 * cfg.anchor_weight * (wy - oy)
    for box in boxes:
        hl = 0.5 * box.length + inflation
        hw = 0.5 * box.width + inflation
        c = math.cos(box.center.heading)
        s = math.sin(box.center.heading)
        dx = wx - box.center.x
        dy = wy - box.center.y
        px = dx * c + dy * s
        py = dy * c - dx * s
        if abs(px) >= hl or abs(py) >= hw:
            continue
        adx = ox - box.center.x
        ady = oy - box.center.y
        apx = adx * c + ady * s
        apy = ady * c - adx * s
        depth, ux, uy = _exit_direction(px, py, hl, hw, apx, apy)
        d = depth + cfg.boundary_push
        cost += cfg.penalty_weight * d * d
        # Descending the cost moves the waypoint along +exit direction.
        gmag = 2.0 * cfg.penalty_weight * d
        gx -= gmag * (ux * c - uy * s)
        gy -= gmag * (ux * s + uy * c)
    return cost, gx, gy


def postprocess_waypoints(
    plan: PlannedTrajectory,
    occupancy: Sequence[tuple[float, OrientedBox]],
    cfg: PostProcessConfig | None = None,
    extent_inflation: bool = True,
) -> PlannedTrajectory:
    """Repel each waypoint out of predicted occupancy, independently.

    Every waypoint is optimized on its own (no smoothness coupling between
    neighbours) by plain gradient descent on the stated cost, returning the
    best iterate. Waypoints that moved get their headings recomputed from
    the displaced segment directions; if nothing moves the original plan is
    returned unchanged. Disabling ``extent_inflation`` shrinks the inflated
    boxes to the raw occupancy footprint.
    """
    if cfg is None:
        cfg = PostProcessConfig()
    inflation = cfg.inflation if extent_inflation else 0.0
    moved = False
    new_positions: list[tuple[float, float]] = []
    for wp in plan.waypoints:
        boxes = [box for t, box in occupancy if abs(t - wp.time_offset) <= cfg.time_window]
        ox, oy = wp.pose.x, wp.pose.y
        if not boxes:
            new_positions.append((ox, oy))
            continue
        wx, wy = ox, oy
        best_cost, _, _ = _waypoint_cost_and_grad(wx, wy, ox, oy, boxes, cfg, inflation)
        best = (wx, wy)
        for k in range(cfg.iterations):
            _, gx, gy = _waypoint_cost_and_grad(wx, wy, ox, oy, boxes, cfg, inflation)
            eta = cfg.step_size / (1.0 + cfg.step_decay * k)
            wx -= eta * gx
            wy -= eta * gy
            cost, _, _ = _waypoint_cost_and_grad(wx, wy, ox, oy, boxes, cfg, inflation)
            if cost < best_cost:
                best_cost = cost
                best = (wx, wy)
        if best != (ox, oy):
            moved = True
        new_positions.append(best)
    if not moved:
        return plan
    waypoints = []
    for i, wp in enumerate(plan.waypoints):
        x, y = new_positions[i]
        if i + 1 < len(new_positions):
            nx, ny = new_positions[i + 1]
            heading = math.atan2(ny - y, nx - x) if (nx, ny) != (x, y) else wp.pose.heading
        else:
            px, py = new_positions[i - 1] if i > 0 else (x, y)
            heading = math.atan2(y - py, x - px) if (px, py) != (x, y) else wp.pose.heading
        waypoints.append(Waypoint(wp.time_offset, Pose2(x, y, heading), speed=wp.speed))
    return PlannedTrajectory(tuple(waypoints), max_horizon=plan.max_horizon)


def predicted_occupancy(
    obs: Observation, offsets: Sequence[float] | None = None
) -> list[tuple[float, OrientedBox]]:
    """Constant-velocity extrapolation of the observed objects."""
    if offsets is None:
        offsets = _offsets()
    out = []
    for t in offsets:
        for actor in obs.objects:
            c = actor.box.center
            out.append(
                (t, OrientedBox(Pose2(c.x + actor.velocity[0] * t, c.y + actor.velocity[1] * t, c.heading), actor.box.length, actor.box.width))
            )
    return out


def with_postprocessing(
    planner: Planner,
    cfg: PostProcessConfig | None = None,
    extent_inflation: bool = True,
) -> Planner:
    """Wrap a waypoint planner with the repulsion post-processor."""

    def wrapped(obs: Observation) -> PlannerVerdict:
        verdict = planner(obs)
        if verdict.plan is None:
            return verdict
        occupancy = predicted_occupancy(obs)
        plan = postprocess_waypoints(verdict.plan, occupancy, cfg, extent_inflation)
        return PlannerVerdict(plan=plan, latency=verdict.latency, diagnostics=verdict.diagnostics)

    return wrapped


class ExternalPlanner:
    """Plans over the wire; protocol violations and timeouts abort the run."""

    def __init__(self, client: wire.PlannerClient, max_horizon: float = PLAN_HORIZON) -> None:
        self._client = client
        self.max_horizon = max_horizon
        self.capability = client.capability

    def __call__(self, obs: Observation) -> PlannerVerdict:
        kind, payload = self._client.plan(obs, self.max_horizon)
        if kind == "plan":
            if self.capability != "waypoints":
                raise wire.ProtocolError("controls-capability planner sent a waypoint plan")
            return PlannerVerdict(plan=payload)
        if self.capability != "controls":
            raise wire.ProtocolError("waypoints-capability planner sent controls")
        return PlannerVerdict(controls=payload)

    def close(self) -> None:
        self._client.close()
