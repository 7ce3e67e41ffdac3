"""Scenario specs, seeded jittering, and collision-guaranteed instances.

A scenario places a single target actor on a collision course with the ego
vehicle: if the ego maintains its initial speed and steering, the boxes
touch roughly ``ttc_init`` seconds into the run. Three target behaviours
are supported: stationary in the ego lane, oncoming inside the ego lane
(frontal), and a perpendicular lane crossing (side).

Instances are built from a counter-hash of (seed, run_index, attempt), so
any run can be reconstructed independently and in parallel. Jitter draws
that break the collision guarantee are rejected and redrawn with the next
attempt counter, up to a bounded retry count.
"""

from __future__ import annotations

import hashlib
import math
import random
import struct
from dataclasses import dataclass, field, replace
from enum import Enum

from crashbench.geometry import (
    ActorClass,
    ActorState,
    EgoState,
    OrientedBox,
    Pose2,
    boxes_intersect,
    impact_speed,
    wrap_angle,
)
from crashbench.vehicle import ControlInput, VehicleParams, footprint, step

# Accepted window around ttc_init for the no-action box contact, in seconds
# ("approximately" is read as +/- 0.5 s).
TTC_TOLERANCE = 0.5
MAX_JITTER_ATTEMPTS = 16
COLLISION_CHECK_DT = 0.01


class ScenarioError(ValueError):
    """Malformed scenario specification."""


class ConstructionError(RuntimeError):
    """Instance construction failed (no feasible jitter draw, or no contact)."""


class ScenarioType(str, Enum):
    STATIONARY = "stationary"
    FRONTAL = "frontal"
    SIDE = "side"


class Command(str, Enum):
    LEFT = "left"
    STRAIGHT = "straight"
    RIGHT = "right"


@dataclass(frozen=True, slots=True)
class RoutePoint:
    x: float
    y: float
    speed: float


@dataclass(frozen=True)
class Route:
    """Reference lane polyline with per-point target speeds."""

    points: tuple[RoutePoint, ...]
    _cum: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(self.points) < 2:
            raise ScenarioError("route needs at least two points")
        cum = [0.0]
        for a, b in zip(self.points, self.points[1:]):
            d = math.hypot(b.x - a.x, b.y - a.y)
            if d <= 0.0:
                raise ScenarioError("route points must be distinct")
            cum.append(cum[-1] + d)
        object.__setattr__(self, "_cum", tuple(cum))

    @property
    def length(self) -> float:
        return self._cum[-1]

    def _segment(self, s: float) -> int:
        lo, hi = 0, len(self._cum) - 2
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self._cum[mid] <= s:
                lo = mid
            else:
                hi = mid - 1
        return lo

    def segment_heading(self, i: int) -> float:
        a, b = self.points[i], self.points[i + 1]
        return math.atan2(b.y - a.y, b.x - a.x)

    def point_at(self, s: float) -> tuple[float, float]:
        """Position at arc length s; extrapolates beyond either end."""
        if s <= 0.0:
            h = self.segment_heading(0)
            p = self.points[0]
            return (p.x + s * math.cos(h), p.y + s * math.sin(h))
        if s >= self.length:
            h = self.segment_heading(len(self.points) - 2)
            p = self.points[-1]
            ds = s - self.length
            return (p.x + ds * math.cos(h), p.y + ds * math.sin(h))
        i = self._segment(s)
        a, b = self.points[i], self.points[i + 1]
        frac = (s - self._cum[i]) / (self._cum[i + 1] - self._cum[i])
        return (a.x + frac * (b.x - a.x), a.y + frac * (b.y - a.y))

    def heading_at(self, s: float) -> float:
        if s <= 0.0:
            return self.segment_heading(0)
        if s >= self.length:
            return self.segment_heading(len(self.points) - 2)
        return self.segment_heading(self._segment(s))

    def speed_at(self, s: float) -> float:
        if s <= 0.0:
            return self.points[0].speed
        if s >= self.length:
            return self.points[-1].speed
        i = self._segment(s)
        frac = (s - self._cum[i]) / (self._cum[i + 1] - self._cum[i])
        return self.points[i].speed + frac * (self.points[i + 1].speed - self.points[i].speed)

    def project(self, x: float, y: float) -> float:
        """Arc length of the closest point on the polyline."""
        best_d2 = math.inf
        best_s = 0.0
        for i in range(len(self.points) - 1):
            a, b = self.points[i], self.points[i + 1]
            abx, aby = b.x - a.x, b.y - a.y
            seg_len2 = abx * abx + aby * aby
            t = ((x - a.x) * abx + (y - a.y) * aby) / seg_len2
            t = 0.0 if t < 0.0 else 1.0 if t > 1.0 else t
            cx, cy = a.x + t * abx, a.y + t * aby
            d2 = (x - cx) ** 2 + (y - cy) ** 2
            if d2 < best_d2:
                best_d2 = d2
                best_s = self._cum[i] + t * math.sqrt(seg_len2)
        return best_s


def high_level_command(
    ego: Pose2,
    route: Route,
    command_horizon: float = 20.0,
    threshold: float = math.radians(15.0),
) -> Command:
    """Route-derived navigation command from the upcoming heading change."""
    s0 = route.project(ego.x, ego.y)
    if s0 >= route.length:
        return Command.STRAIGHT
    s1 = min(s0 + command_horizon, route.length)
    i0 = route._segment(min(s0, route.length - 1e-12))
    i1 = route._segment(min(s1, route.length - 1e-12))
    total = 0.0
    for i in range(i0, i1):
        total += wrap_angle(route.segment_heading(i + 1) - route.segment_heading(i))
    if total > threshold:
        return Command.LEFT
    if total < -threshold:
        return Command.RIGHT
    return Command.STRAIGHT


@dataclass(frozen=True, slots=True)
class JitterRanges:
    """Closed jitter intervals for the target actor; each must contain 0."""

    longitudinal: tuple[float, float] = (0.0, 0.0)
    lateral: tuple[float, float] = (0.0, 0.0)
    rotation: tuple[float, float] = (0.0, 0.0)
    speed: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        for name in ("longitudinal", "lateral", "rotation", "speed"):
            lo, hi = getattr(self, name)
            if not (lo <= 0.0 <= hi):
                raise ScenarioError(f"jitter interval {name}=[{lo}, {hi}] must contain 0")


@dataclass(frozen=True, slots=True)
class TargetTemplate:
    """Nominal target actor before jittering."""

    class_label: ActorClass = ActorClass.CAR
    length: float = 4.084
    width: float = 1.730
    speed: float = 0.0
    heading_offset: float = 0.0  # extra rotation relative to the lane, pre-jitter
    from_side: str = "right"  # side scenarios: which side the target crosses from

    def __post_init__(self) -> None:
        if self.from_side not in ("left", "right"):
            raise ScenarioError("from_side must be 'left' or 'right'")


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    scenario_type: ScenarioType
    ego_init: EgoState
    ego_route: Route
    target: TargetTemplate
    jitter: JitterRanges = JitterRanges()
    background_actors: tuple[ActorState, ...] = ()
    t_pre: float = 4.0
    horizon: float = 20.0
    ttc_init: float = 4.0
    runs: int = 100
    seed: int = 0
    ego_init_steer: float = 0.0

    def __post_init__(self) -> None:
        if self.ttc_init <= 0.0:
            raise ScenarioError("ttc_init must be positive")
        if self.horizon <= self.ttc_init:
            raise ScenarioError("horizon must exceed ttc_init")
        if self.t_pre < 0.0 or self.runs < 1:
            raise ScenarioError("t_pre must be >= 0 and runs >= 1")
        if self.scenario_type is ScenarioType.STATIONARY and self.jitter.speed != (0.0, 0.0):
            raise ScenarioError("stationary scenarios must not jitter the target speed")
        if self.scenario_type is ScenarioType.STATIONARY and self.target.speed != 0.0:
            raise ScenarioError("stationary target template must have speed 0")


@dataclass(frozen=True, slots=True)
class ActorTrack:
    """Predetermined straight constant-velocity actor trajectory."""

    initial: ActorState  # state at t = 0 (scenario start)

    def state_at(self, t: float) -> ActorState:
        vx, vy = self.initial.velocity
        if vx == 0.0 and vy == 0.0:
            return self.initial
        box = self.initial.box
        center = Pose2(box.center.x + vx * t, box.center.y + vy * t, box.center.heading)
        return replace(self.initial, box=replace(box, center=center))


@dataclass(frozen=True)
class ScenarioInstance:
    """One seeded realization of a scenario."""

    spec: ScenarioSpec
    run_index: int
    derived_seed: int
    observation_seed: int
    attempts: int
    ego_init: EgoState
    target_track: ActorTrack
    background_tracks: tuple[ActorTrack, ...]
    jitter_draw: tuple[float, float, float, float]
    reference_impact_speed: float  # v_r
    no_action_contact_time: float

    def tracks(self) -> tuple[ActorTrack, ...]:
        return (self.target_track, *self.background_tracks)

    def actors_at(self, t: float) -> tuple[ActorState, ...]:
        return tuple(track.state_at(t) for track in self.tracks())


def derive_seed(seed: int, run_index: int, attempt: int = 0, domain: str = "jitter") -> int:
    """Splittable counter-hash seed derivation; stable across platforms."""
    payload = domain.encode() + struct.pack("<qqq", seed, run_index, attempt)
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "little")


def scripted_ego_state(spec: ScenarioSpec, t: float) -> EgoState:
    """Ego state on the scripted approach (warm-up) and at the start line.

    The ego replays the route at its initial speed; t <= 0, with t = 0 being
    the scenario start.
    """
    s0 = spec.ego_route.project(spec.ego_init.pose.x, spec.ego_init.pose.y)
    s = s0 + spec.ego_init.speed * t
    x, y = spec.ego_route.point_at(s)
    return EgoState(Pose2(x, y, spec.ego_route.heading_at(s)), spec.ego_init.speed, t)


def _no_action_rollout(
    ego_init: EgoState,
    steer: float,
    tracks: tuple[ActorTrack, ...],
    params: VehicleParams,
    horizon: float,
    dt: float = COLLISION_CHECK_DT,
) -> tuple[float, float, str] | None:
    """Roll the ego forward under constant speed and steering until first contact.

    Returns (contact time, impact speed, actor id), or None when nothing is
    hit within the horizon.
    """
    u = ControlInput(steer, 0.0)
    state = ego_init
    n = int(round(horizon / dt))
    for _ in range(n):
        state = step(state, u, dt, params)
        ego_box = footprint(state, params)
        for track in tracks:
            actor = track.state_at(state.time)
            if boxes_intersect(ego_box, actor.box):
                return state.time, impact_speed(state.velocity(), actor.velocity), actor.actor_id
    return None


def reference_impact_speed(
    ego_init: EgoState,
    steer: float,
    tracks: tuple[ActorTrack, ...],
    params: VehicleParams,
    horizon: float,
    dt: float = COLLISION_CHECK_DT,
) -> float:
    """Impact speed of the no-action rollout (the score denominator v_r)."""
    hit = _no_action_rollout(ego_init, steer, tracks, params, horizon, dt)
    if hit is None:
        raise ConstructionError("no-action rollout does not contact any actor within the horizon")
    return hit[1]


def _build_target(
    spec: ScenarioSpec,
    lon: float,
    lat: float,
    rot: float,
    dspeed: float,
) -> ActorTrack:
    """Place the target on its collision course for one jitter draw.

    Placement uses the center-distance convention: the nominal center sits
    closing_speed * ttc_init ahead along the collision course, so the box
    contact lands slightly before ttc_init; the rollout check enforces the
    accepted window.
    """
    ego = spec.ego_init
    phi = ego.pose.heading
    ux, uy = math.cos(phi), math.sin(phi)
    nx, ny = -uy, ux  # left normal of the lane
    t = spec.target
    ttc = spec.ttc_init
    v0 = ego.speed

    if spec.scenario_type is ScenarioType.STATIONARY:
        heading = wrap_angle(phi + t.heading_offset + rot)
        d = v0 * ttc
        cx = ego.pose.x + ux * (d + lon) + nx * lat
        cy = ego.pose.y + uy * (d + lon) + ny * lat
        velocity = (0.0, 0.0)
    elif spec.scenario_type is ScenarioType.FRONTAL:
        v_t = t.speed + dspeed
        heading = wrap_angle(phi + math.pi + t.heading_offset + rot)
        d = (v0 + v_t) * ttc
        cx = ego.pose.x + ux * (d + lon) + nx * lat
        cy = ego.pose.y + uy * (d + lon) + ny * lat
        velocity = (v_t * math.cos(heading), v_t * math.sin(heading))
    else:  # SIDE
        v_t = t.speed + dspeed
        sign = 1.0 if t.from_side == "right" else -1.0
        heading = wrap_angle(phi + sign * 0.5 * math.pi + t.heading_offset + rot)
        # Crossing point on the ego path, reached by the target at ttc.
        px = ego.pose.x + ux * (v0 * ttc + lon)
        py = ego.pose.y + uy * (v0 * ttc + lon)
        cx = px - v_t * ttc * math.cos(heading) + nx * lat
        cy = py - v_t * ttc * math.sin(heading) + ny * lat
        velocity = (v_t * math.cos(heading), v_t * math.sin(heading))

    box = OrientedBox(Pose2(cx, cy, heading), t.length, t.width)
    actor = ActorState(box, velocity, t.class_label, "target")
    return ActorTrack(actor)


def instantiate_run(
    spec: ScenarioSpec,
    run_index: int,
    params: VehicleParams | None = None,
    max_attempts: int = MAX_JITTER_ATTEMPTS,
) -> ScenarioInstance:
    """Build the seeded instance for one run of a scenario.

    Draws the jitter from a counter-hashed seed, places the target, and
    verifies by no-action rollout that the first box contact falls inside
    ttc_init +/- TTC_TOLERANCE. Infeasible draws are redrawn with the next
    attempt counter; exhausting the retries is a scenario error.
    """
    if not (0 <= run_index < spec.runs):
        raise ValueError(f"run_index {run_index} outside [0, {spec.runs})")
    if params is None:
        params = VehicleParams()
    background = tuple(ActorTrack(a) for a in spec.background_actors)
    ego_init = replace(spec.ego_init, time=0.0)
    for attempt in range(max_attempts):
        seed = derive_seed(spec.seed, run_index, attempt)
        rng = random.Random(seed)
        lon = rng.uniform(*spec.jitter.longitudinal)
        lat = rng.uniform(*spec.jitter.lateral)
        rot = rng.uniform(*spec.jitter.rotation)
        dspeed = rng.uniform(*spec.jitter.speed)
        target = _build_target(spec, lon, lat, rot, dspeed)
        hit = _no_action_rollout(
            ego_init, spec.ego_init_steer, (target, *background), params, spec.horizon
        )
        if hit is None:
            continue
        contact_time, v_r, actor_id = hit
        if actor_id != "target" or abs(contact_time - spec.ttc_init) > TTC_TOLERANCE:
            continue
        return ScenarioInstance(
            spec=spec,
            run_index=run_index,
            derived_seed=seed,
            observation_seed=derive_seed(spec.seed, run_index, domain="observation"),
            attempts=attempt + 1,
            ego_init=ego_init,
            target_track=target,
            background_tracks=background,
            jitter_draw=(lon, lat, rot, dspeed),
            reference_impact_speed=v_r,
            no_action_contact_time=contact_time,
        )
    tried = [derive_seed(spec.seed, run_index, a) for a in range(max_attempts)]
    raise ConstructionError(
        f"scenario {spec.name!r} run {run_index}: no feasible jitter draw in "
        f"{max_attempts} attempts (seeds {tried})"
    )
