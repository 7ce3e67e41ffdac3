"""crashbench: a deterministic closed-loop crash-scenario benchmark.

Subjects trajectory planners to collision scenarios (stationary, frontal,
side target actors) in a closed loop of observe -> plan -> control ->
propagate, and scores each run by whether and how hard the ego vehicle
hits the target. Rendering and learned planners stay outside the package,
behind a documented wire protocol.
"""

__version__ = "0.1.0"

from crashbench.geometry import (
    ActorClass,
    ActorState,
    EgoState,
    OrientedBox,
    PlannedTrajectory,
    Pose2,
    Waypoint,
    boxes_intersect,
    impact_speed,
    interpolate_pose,
    to_ego_frame,
)
from crashbench.vehicle import ControlInput, VehicleParams, clamp_control, step
from crashbench.control import LqrConfig, LqrTracker, solve_dare
from crashbench.scenario import (
    JitterRanges,
    Route,
    RoutePoint,
    ScenarioInstance,
    ScenarioSpec,
    ScenarioType,
    TargetTemplate,
    high_level_command,
    instantiate_run,
    reference_impact_speed,
)
from crashbench.observe import GroundTruthObserver, Observation, PerceptionNoiseModel
from crashbench.planners import (
    PlannerVerdict,
    make_naive_baseline,
    make_scripted_oracle,
    plan_constant_velocity,
    postprocess_waypoints,
)
from crashbench.loop import LoopConfig, RunLog, run_scenario
from crashbench.metrics import build_scorecard, collision_rate, safety_score

__all__ = [name for name in dir() if not name.startswith("_")]
