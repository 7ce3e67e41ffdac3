from pathlib import Path

import pytest

from crashbench.geometry import EgoState, Pose2
from crashbench.scenario import (
    JitterRanges,
    Route,
    RoutePoint,
    ScenarioSpec,
    ScenarioType,
    TargetTemplate,
)
from crashbench.vehicle import VehicleParams

REPO_ROOT = Path(__file__).resolve().parents[1]
SCENARIO_DIR = REPO_ROOT / "scenarios"
GOLDEN_DIR = Path(__file__).resolve().parent / "golden"


@pytest.fixture(scope="session")
def scenario_dir() -> Path:
    return SCENARIO_DIR


@pytest.fixture(scope="session")
def golden_dir() -> Path:
    return GOLDEN_DIR


@pytest.fixture(scope="session")
def params() -> VehicleParams:
    return VehicleParams()


def straight_route(speed: float = 10.0, start: float = -80.0, end: float = 240.0) -> Route:
    return Route((RoutePoint(start, 0.0, speed), RoutePoint(end, 0.0, speed)))


def make_spec(
    scenario_type: ScenarioType = ScenarioType.STATIONARY,
    ego_speed: float = 10.0,
    target_speed: float = 0.0,
    jitter: JitterRanges | None = None,
    seed: int = 1234,
    name: str = "test-scenario",
    **kwargs,
) -> ScenarioSpec:
    return ScenarioSpec(
        name=name,
        scenario_type=scenario_type,
        ego_init=EgoState(Pose2(0.0, 0.0, 0.0), ego_speed, 0.0),
        ego_route=straight_route(ego_speed),
        target=TargetTemplate(speed=target_speed, **kwargs.pop("target_kwargs", {})),
        jitter=jitter if jitter is not None else JitterRanges(),
        seed=seed,
        **kwargs,
    )
