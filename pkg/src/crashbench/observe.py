"""Observation providers: the seam where rendering/perception would plug in.

The ground-truth provider reads actor states straight from the simulator,
optionally degraded by a synthetic perception-noise model (range-binned
dropout plus Gaussian field noise). The external provider brokers each step
to a render server over the wire protocol and returns opaque sensor
payloads instead of object lists.

Each run owns one provider with its own RNG stream, derived independently
of the scenario-jitter stream.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from crashbench.geometry import ActorState, EgoState, Pose2
from crashbench.scenario import Command


@dataclass(frozen=True, slots=True)
class Camera:
    camera_id: str
    position: tuple[float, float, float]  # ego frame, meters
    yaw: float  # radians relative to ego heading
    intrinsics: tuple[float, float, float, float, int, int]  # fx, fy, cx, cy, width, height


DEFAULT_RIG: tuple[Camera, ...] = (
    Camera("front", (1.7, 0.0, 1.5), 0.0, (1266.0, 1266.0, 800.0, 450.0, 1600, 900)),
    Camera("front_left", (1.5, 0.5, 1.5), math.radians(55.0), (1266.0, 1266.0, 800.0, 450.0, 1600, 900)),
    Camera("front_right", (1.5, -0.5, 1.5), math.radians(-55.0), (1266.0, 1266.0, 800.0, 450.0, 1600, 900)),
    Camera("back", (-1.7, 0.0, 1.5), math.pi, (809.0, 809.0, 800.0, 450.0, 1600, 900)),
    Camera("back_left", (-1.0, 0.5, 1.5), math.radians(110.0), (1266.0, 1266.0, 800.0, 450.0, 1600, 900)),
    Camera("back_right", (-1.0, -0.5, 1.5), math.radians(-110.0), (1266.0, 1266.0, 800.0, 450.0, 1600, 900)),
)


@dataclass(frozen=True, slots=True)
class PerceptionNoiseModel:
    """Synthetic perception degradation; the default is lossless.

    Dropout is piecewise-constant over the range bins 5-15 m, 15-25 m and
    25-35 m (closer than 5 m nothing is dropped; the far-bin value extends
    to the detection range). Field noise is zero-mean Gaussian.
    """

    position_sigma: float = 0.0
    heading_sigma: float = 0.0
    velocity_sigma: float = 0.0
    dropout_near: float = 0.0
    dropout_mid: float = 0.0
    dropout_far: float = 0.0
    detection_range: float = 35.0

    def __post_init__(self) -> None:
        for p in (self.dropout_near, self.dropout_mid, self.dropout_far):
            if not 0.0 <= p <= 1.0:
                raise ValueError("dropout probabilities must lie in [0, 1]")
        for s in (self.position_sigma, self.heading_sigma, self.velocity_sigma):
            if s < 0.0:
                raise ValueError("noise sigmas must be non-negative")

    def dropout_probability(self, rng_range: float) -> float:
        if rng_range < 5.0:
            return 0.0
        if rng_range < 15.0:
            return self.dropout_near
        if rng_range < 25.0:
            return self.dropout_mid
        return self.dropout_far


@dataclass(frozen=True)
class Observation:
    """Planner input for one step."""

    time: float
    ego: EgoState
    command: Command
    objects: tuple[ActorState, ...]
    camera_rig: tuple[Camera, ...] = ()
    sensor_payload: Mapping[str, bytes] = field(default_factory=dict)


def observe_ground_truth(
    time: float,
    ego: EgoState,
    actors: Sequence[ActorState],
    command: Command,
    noise: PerceptionNoiseModel,
    rng: random.Random,
) -> Observation:
    """Ground-truth observation with optional dropout and Gaussian noise.

    Actors are processed in the given order; each in-range actor consumes
    one dropout draw and, if kept, one draw per noisy field, so the stream
    is reproducible for a fixed seed.
    """
    objects: list[ActorState] = []
    ex, ey = ego.pose.x, ego.pose.y
    for actor in actors:
        r = math.hypot(actor.box.center.x - ex, actor.box.center.y - ey)
        if r > noise.detection_range:
            continue
        if rng.random() < noise.dropout_probability(r):
            continue
        dx = rng.gauss(0.0, noise.position_sigma)
        dy = rng.gauss(0.0, noise.position_sigma)
        dh = rng.gauss(0.0, noise.heading_sigma)
        dvx = rng.gauss(0.0, noise.velocity_sigma)
        dvy = rng.gauss(0.0, noise.velocity_sigma)
        center = actor.box.center
        perturbed = replace(
            actor,
            box=replace(
                actor.box,
                center=Pose2(center.x + dx, center.y + dy, center.heading + dh),
            ),
            velocity=(actor.velocity[0] + dvx, actor.velocity[1] + dvy),
        )
        objects.append(perturbed)
    return Observation(time=time, ego=ego, command=command, objects=tuple(objects))


class GroundTruthObserver:
    """Per-run observation provider backed by simulator state."""

    def __init__(self, noise: PerceptionNoiseModel | None = None, seed: int = 0) -> None:
        self.noise = noise if noise is not None else PerceptionNoiseModel()
        self._rng = random.Random(seed)

    def observe(
        self,
        time: float,
        ego: EgoState,
        actors: Sequence[ActorState],
        command: Command,
    ) -> Observation:
        return observe_ground_truth(time, ego, actors, command, self.noise, self._rng)

    def close(self) -> None:
        pass


class ExternalObserver:
    """Brokers observations to a render server; objects stay empty.

    The external planner is expected to perceive from the returned pixel
    payloads, mirroring a camera-only stack.
    """

    def __init__(self, client, rig: tuple[Camera, ...] = DEFAULT_RIG) -> None:
        self._client = client
        self.rig = rig

    def observe(
        self,
        time: float,
        ego: EgoState,
        actors: Sequence[ActorState],
        command: Command,
    ) -> Observation:
        payloads = self._client.render(time, ego, self.rig, actors)
        return Observation(
            time=time,
            ego=ego,
            command=command,
            objects=(),
            camera_rig=self.rig,
            sensor_payload=payloads,
        )

    def close(self) -> None:
        self._client.close()
