"""Scenario and suite configuration.

Scenarios are one-per-file YAML documents; every physics, controller and
protocol default can be overridden there or from the command line. The
suite fingerprint hashes everything that determines the simulated
trajectories (scenario definitions, vehicle, controller, loop timing,
noise, seed override) so logs and score cards can be matched to the
configuration that produced them. Planner and observer selection are
deliberately not part of the fingerprint: transport-equivalent planners
must produce identical score cards.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import yaml

from crashbench.control import LqrConfig
from crashbench.geometry import ActorClass, ActorState, EgoState, OrientedBox, Pose2
from crashbench.loop import LoopConfig
from crashbench.observe import PerceptionNoiseModel
from crashbench.scenario import (
    JitterRanges,
    Route,
    RoutePoint,
    ScenarioError,
    ScenarioSpec,
    ScenarioType,
    TargetTemplate,
)
from crashbench.serialize import digest
from crashbench.vehicle import VehicleParams


@dataclass(frozen=True)
class LoadedScenario:
    """A scenario spec plus its file-level physics overrides."""

    path: Path
    spec: ScenarioSpec
    vehicle: VehicleParams
    lqr: LqrConfig


def _interval(obj, name: str) -> tuple[float, float]:
    if not (isinstance(obj, (list, tuple)) and len(obj) == 2):
        raise ScenarioError(f"{name} must be a [lo, hi] pair")
    return (float(obj[0]), float(obj[1]))


def _build_dataclass(cls, obj: dict | None, name: str):
    base = cls()
    if not obj:
        return base
    unknown = set(obj) - set(asdict(base))
    if unknown:
        raise ScenarioError(f"unknown {name} fields: {sorted(unknown)}")
    return replace(base, **{k: type(getattr(base, k))(v) for k, v in obj.items()})


def load_scenario(path: str | Path) -> LoadedScenario:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ScenarioError(f"cannot parse scenario file {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ScenarioError(f"scenario file {path} must contain a mapping")
    try:
        scenario_type = ScenarioType(raw["type"])
        ego = raw["ego"]
        route = Route(
            tuple(RoutePoint(float(p["x"]), float(p["y"]), float(p["speed"])) for p in ego["route"])
        )
        sx, sy = float(ego["start"][0]), float(ego["start"][1])
        s0 = route.project(sx, sy)
        ego_init = EgoState(Pose2(sx, sy, route.heading_at(s0)), float(ego["speed"]), 0.0)

        tgt = raw.get("target", {})
        target = TargetTemplate(
            class_label=ActorClass(tgt.get("class", "car")),
            length=float(tgt.get("length", 4.084)),
            width=float(tgt.get("width", 1.730)),
            speed=float(tgt.get("speed", 0.0)),
            heading_offset=float(tgt.get("heading_offset", 0.0)),
            from_side=str(tgt.get("from_side", "right")),
        )
        jit = raw.get("jitter", {})
        jitter = JitterRanges(
            longitudinal=_interval(jit.get("longitudinal", (0.0, 0.0)), "jitter.longitudinal"),
            lateral=_interval(jit.get("lateral", (0.0, 0.0)), "jitter.lateral"),
            rotation=_interval(jit.get("rotation", (0.0, 0.0)), "jitter.rotation"),
            speed=_interval(jit.get("speed", (0.0, 0.0)), "jitter.speed"),
        )
        background = []
        for i, b in enumerate(raw.get("background", []) or []):
            background.append(
                ActorState(
                    box=OrientedBox(
                        Pose2(float(b["x"]), float(b["y"]), float(b.get("heading", 0.0))),
                        float(b.get("length", 4.084)),
                        float(b.get("width", 1.730)),
                    ),
                    velocity=(float(b.get("vx", 0.0)), float(b.get("vy", 0.0))),
                    class_label=ActorClass(b.get("class", "car")),
                    actor_id=str(b.get("id", f"background-{i}")),
                )
            )
        spec = ScenarioSpec(
            name=str(raw.get("name", path.stem)),
            scenario_type=scenario_type,
            ego_init=ego_init,
            ego_route=route,
            target=target,
            jitter=jitter,
            background_actors=tuple(background),
            t_pre=float(raw.get("t_pre", 4.0)),
            horizon=float(raw.get("horizon", 20.0)),
            ttc_init=float(raw.get("ttc_init", 4.0)),
            runs=int(raw.get("runs", 100)),
            seed=int(raw["seed"]),
            ego_init_steer=float(raw.get("ego_init_steer", 0.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"scenario file {path}: {exc!r}") from exc
    vehicle = _build_dataclass(VehicleParams, raw.get("vehicle"), "vehicle")
    lqr_raw = raw.get("controller") or {}
    lqr = LqrConfig(
        state_cost=tuple(float(v) for v in lqr_raw.get("state_cost", (1.0, 10.0, 1.0, 1.0))),
        control_cost=tuple(float(v) for v in lqr_raw.get("control_cost", (10.0, 1.0))),
        preview_time=float(lqr_raw.get("preview_time", 0.1)),
        dt=float(lqr_raw.get("dt", 0.1)),
    )
    # The scripted approach must fit on the route.
    s0 = route.project(ego_init.pose.x, ego_init.pose.y)
    if s0 - ego_init.speed * spec.t_pre < -1e-6:
        raise ScenarioError(
            f"scenario file {path}: route too short for the {spec.t_pre:.1f}s scripted approach"
        )
    return LoadedScenario(path=path, spec=spec, vehicle=vehicle, lqr=lqr)


def load_noise(path: str | Path | None) -> PerceptionNoiseModel:
    if path is None:
        return PerceptionNoiseModel()
    raw = yaml.safe_load(Path(path).read_text())
    if not isinstance(raw, dict):
        raise ScenarioError(f"noise file {path} must contain a mapping")
    return _build_dataclass(PerceptionNoiseModel, raw, "noise")


def spec_to_dict(spec: ScenarioSpec) -> dict:
    return {
        "name": spec.name,
        "type": spec.scenario_type.value,
        "seed": spec.seed,
        "runs": spec.runs,
        "t_pre": spec.t_pre,
        "horizon": spec.horizon,
        "ttc_init": spec.ttc_init,
        "ego_init": [spec.ego_init.pose.x, spec.ego_init.pose.y, spec.ego_init.pose.heading, spec.ego_init.speed],
        "ego_init_steer": spec.ego_init_steer,
        "route": [[p.x, p.y, p.speed] for p in spec.ego_route.points],
        "target": {
            "class": spec.target.class_label.value,
            "length": spec.target.length,
            "width": spec.target.width,
            "speed": spec.target.speed,
            "heading_offset": spec.target.heading_offset,
            "from_side": spec.target.from_side,
        },
        "jitter": {
            "longitudinal": list(spec.jitter.longitudinal),
            "lateral": list(spec.jitter.lateral),
            "rotation": list(spec.jitter.rotation),
            "speed": list(spec.jitter.speed),
        },
        "background": [
            {
                "id": a.actor_id,
                "class": a.class_label.value,
                "x": a.box.center.x,
                "y": a.box.center.y,
                "heading": a.box.center.heading,
                "length": a.box.length,
                "width": a.box.width,
                "vx": a.velocity[0],
                "vy": a.velocity[1],
            }
            for a in spec.background_actors
        ],
    }


@dataclass(frozen=True)
class SuiteConfig:
    scenarios: tuple[LoadedScenario, ...]
    output_dir: Path
    planner: str = "constant_velocity"
    observer: str = "ground_truth"
    postprocess: bool = False
    extent_inflation: bool = True
    parallel: int = 1
    seed_override: int | None = None
    runs_override: int | None = None
    noise: PerceptionNoiseModel = PerceptionNoiseModel()
    loop: LoopConfig = LoopConfig()
    bridge_timeout: float = 10.0

    def resolved_specs(self) -> tuple[LoadedScenario, ...]:
        """Scenarios with seed and run-count overrides applied."""
        out = []
        for loaded in self.scenarios:
            spec = loaded.spec
            if self.seed_override is not None:
                spec = replace(spec, seed=self.seed_override)
            if self.runs_override is not None:
                spec = replace(spec, runs=self.runs_override)
            out.append(replace(loaded, spec=spec))
        return tuple(out)

    def fingerprint(self) -> str:
        payload = {
            "scenarios": [
                {
                    "spec": spec_to_dict(loaded.spec),
                    "vehicle": asdict(loaded.vehicle),
                    "lqr": {
                        "state_cost": list(loaded.lqr.state_cost),
                        "control_cost": list(loaded.lqr.control_cost),
                        "preview_time": loaded.lqr.preview_time,
                        "dt": loaded.lqr.dt,
                    },
                }
                for loaded in self.resolved_specs()
            ],
            "loop": {"physics_dt": self.loop.physics_dt, "planner_period": self.loop.planner_period},
            "noise": asdict(self.noise),
        }
        return digest(payload)


def resolve_scenario_paths(paths: list[str]) -> list[Path]:
    """Expand directories to their sorted *.yaml members; fail on misses."""
    out: list[Path] = []
    for entry in paths:
        p = Path(entry)
        if p.is_dir():
            members = sorted(p.glob("*.yaml"))
            if not members:
                raise ScenarioError(f"no scenario files in directory {p}")
            out.extend(members)
        elif p.is_file():
            out.append(p)
        else:
            raise ScenarioError(f"scenario path {p} does not exist")
    return out


def default_output_dir() -> Path:
    return Path(os.environ.get("CRASHBENCH_OUT", "crashbench-out"))
