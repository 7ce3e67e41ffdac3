"""Closed-loop run orchestration.

A run has two phases. During warm-up (t in [-t_pre, 0)) the ego replays its
scripted approach; the planner receives observations to build temporal
context but its plans are not executed. In the live phase the planner is
invoked every planner period, and between invocations the control is
recomputed at every physics substep from the latest plan (receding
reference), the vehicle model is stepped, actors advance along their
predetermined tracks, and ego/actor boxes are checked for contact. The run
stops at the first contact, at the horizon, or on a transport failure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

from crashbench.control import LqrConfig, LqrTracker
from crashbench.geometry import ActorState, EgoState, boxes_intersect, impact_speed
from crashbench.observe import Observation
from crashbench.planners import PlannerVerdict
from crashbench.scenario import (
    Command,
    ScenarioInstance,
    high_level_command,
    scripted_ego_state,
)
from crashbench.serialize import canonical_json, digest
from crashbench.vehicle import ControlInput, VehicleParams, clamp_control, footprint, step
from crashbench.wire import ProtocolError, TransportError

TERMINATION_COLLISION = "collision"
TERMINATION_HORIZON = "horizon_reached"
TERMINATION_TRANSPORT = "transport_failure"


@dataclass(frozen=True, slots=True)
class LoopConfig:
    physics_dt: float = 0.01
    planner_period: float = 0.5

    def __post_init__(self) -> None:
        if self.physics_dt <= 0.0 or self.planner_period <= 0.0:
            raise ValueError("time steps must be positive")
        ratio = self.planner_period / self.physics_dt
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("planner_period must be an integer multiple of physics_dt")

    @property
    def steps_per_plan(self) -> int:
        return round(self.planner_period / self.physics_dt)


@dataclass(frozen=True, slots=True)
class CollisionEvent:
    time: float
    point: tuple[float, float]  # midpoint of the two box centers at contact
    impact_speed: float
    actor_id: str
    ego_velocity: tuple[float, float]
    actor_velocity: tuple[float, float]


@dataclass(frozen=True)
class PlannerTickRecord:
    time: float
    phase: str  # "warmup" | "live"
    command: Command
    objects: tuple[ActorState, ...]
    verdict: PlannerVerdict | None
    fallback: bool = False


@dataclass
class RunLog:
    """Complete per-run record enabling deterministic replay and scoring."""

    scenario_name: str
    scenario_type: str
    run_index: int
    instance: ScenarioInstance
    config_fingerprint: str
    execution: Mapping[str, str]
    ticks: list[tuple[float, float, float, float, float, float, float]] = field(default_factory=list)
    planner_ticks: list[PlannerTickRecord] = field(default_factory=list)
    collision: CollisionEvent | None = None
    termination: str = TERMINATION_HORIZON

    @property
    def v_r(self) -> float:
        return self.instance.reference_impact_speed

    @property
    def collided(self) -> bool:
        return self.collision is not None

    def to_json_dict(self) -> dict:
        inst = self.instance
        target = inst.target_track.initial
        body = {
            "schema": "crashbench.runlog/1",
            "fingerprint": self.config_fingerprint,
            "execution": dict(self.execution),
            "scenario": {
                "name": self.scenario_name,
                "type": self.scenario_type,
                "seed": inst.spec.seed,
                "run_index": self.run_index,
                "derived_seed": inst.derived_seed,
                "observation_seed": inst.observation_seed,
                "attempts": inst.attempts,
            },
            "instance": {
                "v_r": inst.reference_impact_speed,
                "no_action_contact_time": inst.no_action_contact_time,
                "jitter": list(inst.jitter_draw),
                "ego_init": [
                    inst.ego_init.pose.x,
                    inst.ego_init.pose.y,
                    inst.ego_init.pose.heading,
                    inst.ego_init.speed,
                ],
                "target": _actor_dict(target),
                "background": [_actor_dict(t.initial) for t in inst.background_tracks],
            },
            "ticks": [list(t) for t in self.ticks],
            "planner_ticks": [_planner_tick_dict(pt) for pt in self.planner_ticks],
            "collision": None
            if self.collision is None
            else {
                "time": self.collision.time,
                "point": list(self.collision.point),
                "impact_speed": self.collision.impact_speed,
                "actor_id": self.collision.actor_id,
                "ego_velocity": list(self.collision.ego_velocity),
                "actor_velocity": list(self.collision.actor_velocity),
            },
            "termination": self.termination,
        }
        body["integrity"] = digest(
            {
                "ticks": body["ticks"],
                "planner_ticks": body["planner_ticks"],
                "collision": body["collision"],
                "termination": body["termination"],
            }
        )
        return body

    def to_json_bytes(self) -> bytes:
        return canonical_json(self.to_json_dict())


def _actor_dict(actor: ActorState) -> dict:
    return {
        "id": actor.actor_id,
        "class": actor.class_label.value,
        "x": actor.box.center.x,
        "y": actor.box.center.y,
        "heading": actor.box.center.heading,
        "length": actor.box.length,
        "width": actor.box.width,
        "vx": actor.velocity[0],
        "vy": actor.velocity[1],
    }


def _planner_tick_dict(pt: PlannerTickRecord) -> dict:
    verdict = pt.verdict
    plan = None
    controls = None
    if verdict is not None and verdict.plan is not None:
        plan = [
            [w.time_offset, w.pose.x, w.pose.y, w.pose.heading, w.speed]
            for w in verdict.plan.waypoints
        ]
    if verdict is not None and verdict.controls is not None:
        controls = [[t, u.steering, u.acceleration] for t, u in verdict.controls]
    return {
        "time": pt.time,
        "phase": pt.phase,
        "command": pt.command.value,
        "objects": [_actor_dict(a) for a in pt.objects],
        "plan": plan,
        "controls": controls,
        "fallback": pt.fallback,
    }


def _control_from_sequence(
    controls: tuple[tuple[float, ControlInput], ...], offset: float
) -> ControlInput:
    """Zero-order hold over a control sequence; holds the last entry."""
    chosen = controls[0][1]
    for t, u in controls:
        if t <= offset:
            chosen = u
        else:
            break
    return chosen


def run_scenario(
    instance: ScenarioInstance,
    planner: Callable[[Observation], PlannerVerdict],
    observer,
    cfg: LoopConfig | None = None,
    params: VehicleParams | None = None,
    lqr: LqrConfig | None = None,
    config_fingerprint: str = "",
    execution: Mapping[str, str] | None = None,
) -> RunLog:
    """Execute one closed-loop run and return its log."""
    if cfg is None:
        cfg = LoopConfig()
    if params is None:
        params = VehicleParams()
    spec = instance.spec
    tracker = LqrTracker(lqr if lqr is not None else LqrConfig(), params)
    log = RunLog(
        scenario_name=spec.name,
        scenario_type=spec.scenario_type.value,
        run_index=instance.run_index,
        instance=instance,
        config_fingerprint=config_fingerprint,
        execution=dict(execution or {}),
    )
    route = spec.ego_route

    def observe_at(t: float, ego: EgoState) -> Observation:
        command = high_level_command(ego.pose, route)
        return observer.observe(t, ego, instance.actors_at(t), command)

    try:
        # Warm-up: scripted approach; plans are requested but not executed.
        n_warm = round(spec.t_pre / cfg.planner_period)
        for k in range(n_warm):
            t = (k - n_warm) * cfg.planner_period
            ego = scripted_ego_state(spec, t)
            obs = observe_at(t, ego)
            verdict = planner(obs)
            log.planner_ticks.append(
                PlannerTickRecord(t, "warmup", obs.command, obs.objects, verdict)
            )

        # Live phase.
        state = instance.ego_init
        plan = None
        plan_time = 0.0
        controls = None
        fallback = False
        dt = cfg.physics_dt
        n_steps = round(spec.horizon / dt)
        for i in range(n_steps):
            t = i * dt
            if i % cfg.steps_per_plan == 0:
                obs = observe_at(t, state)
                verdict = planner(obs)
                plan = verdict.plan
                controls = verdict.controls
                plan_time = t
                fallback = plan is None and controls is None
                log.planner_ticks.append(
                    PlannerTickRecord(t, "live", obs.command, obs.objects, verdict, fallback)
                )
            if controls is not None:
                u = clamp_control(_control_from_sequence(controls, t - plan_time), params)
            else:
                u = tracker.compute_control(state, plan, plan_time)
            log.ticks.append(
                (t, state.pose.x, state.pose.y, state.pose.heading, state.speed, u.steering, u.acceleration)
            )
            state = step(state, u, dt, params)
            ego_box = footprint(state, params)
            hit = None
            for track in instance.tracks():
                actor = track.state_at(state.time)
                if boxes_intersect(ego_box, actor.box):
                    hit = actor
                    break
            if hit is not None:
                ego_vel = state.velocity()
                log.collision = CollisionEvent(
                    time=state.time,
                    point=(
                        0.5 * (state.pose.x + hit.box.center.x),
                        0.5 * (state.pose.y + hit.box.center.y),
                    ),
                    impact_speed=impact_speed(ego_vel, hit.velocity),
                    actor_id=hit.actor_id,
                    ego_velocity=ego_vel,
                    actor_velocity=hit.velocity,
                )
                log.termination = TERMINATION_COLLISION
                log.ticks.append(
                    (
                        state.time,
                        state.pose.x,
                        state.pose.y,
                        state.pose.heading,
                        state.speed,
                        u.steering,
                        u.acceleration,
                    )
                )
                return log
        log.termination = TERMINATION_HORIZON
        log.ticks.append(
            (
                state.time,
                state.pose.x,
                state.pose.y,
                state.pose.heading,
                state.speed,
                u.steering,
                u.acceleration,
            )
        )
        return log
    except (TransportError, ProtocolError) as exc:
        log.termination = TERMINATION_TRANSPORT
        log.execution = dict(log.execution)
        log.execution["transport_error"] = str(exc)
        return log
