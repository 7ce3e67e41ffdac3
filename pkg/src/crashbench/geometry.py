"""Planar geometry core: poses, oriented boxes, trajectories, collision math.

All types are immutable value objects and all operations are pure, so they
are safe to share across threads and worker processes.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from enum import Enum

from crashbench import kernels

Vec2 = tuple[float, float]

wrap_angle = kernels.wrap_angle

DEFAULT_PLAN_HORIZON = 3.0


class ActorClass(str, Enum):
    """Rigid-actor categories (deformable actors are out of scope)."""

    CAR = "car"
    TRUCK = "truck"
    BUS = "bus"
    TRAILER = "trailer"
    MOTORCYCLE = "motorcycle"
    BICYCLE = "bicycle"


@dataclass(frozen=True, slots=True)
class Pose2:
    """Planar pose in the global frame; heading is kept in (-pi, pi]."""

    x: float
    y: float
    heading: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    def position(self) -> Vec2:
        return (self.x, self.y)


@dataclass(frozen=True, slots=True)
class EgoState:
    pose: Pose2
    speed: float
    time: float

    def velocity(self) -> Vec2:
        """Global-frame velocity vector implied by speed and heading."""
        return (
            self.speed * math.cos(self.pose.heading),
            self.speed * math.sin(self.pose.heading),
        )


@dataclass(frozen=True, slots=True)
class OrientedBox:
    """2D rectangle footprint; length runs along the heading axis."""

    center: Pose2
    length: float
    width: float

    def __post_init__(self) -> None:
        if not (self.length > 0.0 and self.width > 0.0):
            raise ValueError("box dimensions must be positive")

    def corners(self) -> tuple[Vec2, Vec2, Vec2, Vec2]:
        """Corners in counter-clockwise order starting front-left."""
        c = math.cos(self.center.heading)
        s = math.sin(self.center.heading)
        hl = 0.5 * self.length
        hw = 0.5 * self.width
        x = self.center.x
        y = self.center.y
        return (
            (x + hl * c - hw * s, y + hl * s + hw * c),
            (x - hl * c - hw * s, y - hl * s + hw * c),
            (x - hl * c + hw * s, y - hl * s - hw * c),
            (x + hl * c + hw * s, y + hl * s - hw * c),
        )


@dataclass(frozen=True, slots=True)
class ActorState:
    box: OrientedBox
    velocity: Vec2
    class_label: ActorClass
    actor_id: str

    @property
    def speed(self) -> float:
        return math.hypot(self.velocity[0], self.velocity[1])


@dataclass(frozen=True, slots=True)
class Waypoint:
    time_offset: float
    pose: Pose2
    speed: float | None = None


@dataclass(frozen=True, slots=True)
class TrajectorySample:
    pose: Pose2
    speed: float


@dataclass(frozen=True, slots=True)
class PlannedTrajectory:
    """Timestamped waypoints; offsets are relative to the plan's birth time."""

    waypoints: tuple[Waypoint, ...]
    max_horizon: float = DEFAULT_PLAN_HORIZON
    _offsets: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(self.waypoints) < 1:
            raise ValueError("a trajectory needs at least one waypoint")
        offsets = tuple(w.time_offset for w in self.waypoints)
        prev = 0.0
        for t in offsets:
            if t <= prev:
                raise ValueError("waypoint time offsets must be positive and strictly increasing")
            prev = t
        if offsets[-1] > self.max_horizon + 1e-9:
            raise ValueError(f"horizon {offsets[-1]:.3f}s exceeds maximum {self.max_horizon:.3f}s")
        object.__setattr__(self, "_offsets", offsets)

    @property
    def horizon(self) -> float:
        return self.waypoints[-1].time_offset


def to_ego_frame(point: Vec2, ego: Pose2) -> Vec2:
    """Express a global-frame point in the ego frame (x forward, y left)."""
    c = math.cos(ego.heading)
    s = math.sin(ego.heading)
    dx = point[0] - ego.x
    dy = point[1] - ego.y
    return (dx * c + dy * s, dy * c - dx * s)


def from_ego_frame(point: Vec2, ego: Pose2) -> Vec2:
    """Inverse of :func:`to_ego_frame`."""
    c = math.cos(ego.heading)
    s = math.sin(ego.heading)
    return (ego.x + point[0] * c - point[1] * s, ego.y + point[0] * s + point[1] * c)


def boxes_separation(a: OrientedBox, b: OrientedBox) -> float:
    """Signed separation proxy: max separating-axis gap (<= 0 means overlap)."""
    return kernels.obb_max_gap(
        a.center.x, a.center.y, a.center.heading, 0.5 * a.length, 0.5 * a.width,
        b.center.x, b.center.y, b.center.heading, 0.5 * b.length, 0.5 * b.width,
    )


def boxes_intersect(a: OrientedBox, b: OrientedBox) -> bool:
    """Closed-rectangle overlap test; boundary contact counts as collision."""
    return boxes_separation(a, b) <= 0.0


def impact_speed(ego_vel: Vec2, actor_vel: Vec2) -> float:
    """Magnitude of the relative velocity between two bodies."""
    return math.hypot(ego_vel[0] - actor_vel[0], ego_vel[1] - actor_vel[1])


def _segment_speed(a: Waypoint, b: Waypoint) -> float:
    ds = math.hypot(b.pose.x - a.pose.x, b.pose.y - a.pose.y)
    return ds / (b.time_offset - a.time_offset)


def _waypoint_speed(traj: PlannedTrajectory, i: int) -> float:
    """Speed at waypoint i, falling back to finite differences of neighbours."""
    wps = traj.waypoints
    if wps[i].speed is not None:
        return wps[i].speed
    if len(wps) == 1:
        return 0.0
    if i + 1 < len(wps):
        return _segment_speed(wps[i], wps[i + 1])
    return _segment_speed(wps[i - 1], wps[i])


def interpolate_pose(traj: PlannedTrajectory, t: float) -> TrajectorySample:
    """Sample the trajectory at offset t.

    Position is piecewise-linear, heading follows the shortest arc, and
    speed comes from the stored per-waypoint values or finite differences of
    consecutive waypoints when absent. Queries at exact waypoint times
    return the stored values bit-exactly. Plans start strictly after their
    birth time, so queries in [0, first offset) extrapolate the first
    segment backwards; a single-waypoint plan is held constant there.
    """
    if not (0.0 <= t <= traj.horizon):
        raise ValueError(f"query time {t!r} outside [0, {traj.horizon!r}]")
    offsets = traj._offsets
    wps = traj.waypoints
    i = bisect.bisect_left(offsets, t)
    if i < len(offsets) and offsets[i] == t:
        return TrajectorySample(wps[i].pose, _waypoint_speed(traj, i))
    if i == 0:
        if len(wps) == 1:
            return TrajectorySample(wps[0].pose, _waypoint_speed(traj, 0))
        a = wps[0]
        b = wps[1]
        i = 1
    else:
        a = wps[i - 1]
        b = wps[i]
    frac = (t - a.time_offset) / (b.time_offset - a.time_offset)
    x = a.pose.x + frac * (b.pose.x - a.pose.x)
    y = a.pose.y + frac * (b.pose.y - a.pose.y)
    heading = wrap_angle(a.pose.heading + frac * wrap_angle(b.pose.heading - a.pose.heading))
    va = _waypoint_speed(traj, i - 1)
    vb = _waypoint_speed(traj, i)
    if a.speed is not None and b.speed is not None:
        speed = va + frac * (vb - va)
    else:
        speed = _segment_speed(a, b)
    return TrajectorySample(Pose2(x, y, heading), speed)
