"""Scoring and evaluation metrics.

The per-run safety score is five-star style: 5.0 when no collision occurs,
otherwise 4 * max(0, 1 - v_i / v_r), where v_i is the impact speed at first
contact and v_r the impact speed of the no-action rollout. Aggregates
follow the benchmark table layout: per scenario, per scenario type, and an
overall average over the type means. Transport-failure runs are excluded
from averages and reported separately.

Open-loop metrics (displacement error and plan collision rate at 1/2/3 s)
and target-actor recall by range bin and prediction horizon support
perception-gap studies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from crashbench.geometry import (
    ActorState,
    OrientedBox,
    PlannedTrajectory,
    Pose2,
    boxes_intersect,
)
from crashbench.loop import TERMINATION_TRANSPORT, RunLog
from crashbench.serialize import canonical_json

RANGE_BINS = ((5.0, 15.0), (15.0, 25.0), (25.0, 35.0))
RECALL_HORIZONS = (0.0, 1.0, 2.0, 3.0)
OPEN_LOOP_HORIZONS = (1.0, 2.0, 3.0)
RECALL_MATCH_DISTANCE = 2.0


class MetricError(ValueError):
    """Invalid metric input (empty set, bad reference speed, ...)."""


def safety_score(collided: bool, v_impact: float = 0.0, v_reference: float = 1.0) -> float:
    """Five-star collision score in [0, 5]."""
    if not collided:
        return 5.0
    if v_reference <= 0.0:
        raise MetricError(f"reference impact speed must be positive, got {v_reference!r}")
    return 4.0 * max(0.0, 1.0 - v_impact / v_reference)


def score_run(run: RunLog) -> float:
    if run.termination == TERMINATION_TRANSPORT:
        raise MetricError("transport-failure runs are not scorable")
    if run.collision is None:
        return safety_score(False)
    return safety_score(True, run.collision.impact_speed, run.v_r)


def collision_rate(runs: Sequence[RunLog]) -> float:
    """Fraction of runs that ended in a collision."""
    if not runs:
        raise MetricError("collision rate undefined for an empty run set")
    for run in runs:
        if run.termination == TERMINATION_TRANSPORT:
            raise MetricError("transport-failure runs must be excluded before scoring")
    return sum(1 for r in runs if r.collided) / len(runs)


@dataclass(frozen=True)
class RunScore:
    scenario: str
    scenario_type: str
    run_index: int
    termination: str
    collided: bool
    score: float | None
    v_i: float | None
    v_r: float
    collision_time: float | None


@dataclass(frozen=True)
class Aggregate:
    n: int
    score_mean: float
    collision_rate: float
    transport_failures: int


@dataclass(frozen=True)
class ScoreCard:
    runs: tuple[RunScore, ...]
    per_scenario: Mapping[str, Aggregate]
    per_type: Mapping[str, Aggregate]
    overall: Aggregate
    config_fingerprint: str = ""

    def to_json_dict(self) -> dict:
        def agg(a: Aggregate) -> dict:
            return {
                "n": a.n,
                "score_mean": a.score_mean,
                "collision_rate": a.collision_rate,
                "transport_failures": a.transport_failures,
            }

        return {
            "schema": "crashbench.scorecard/1",
            "fingerprint": self.config_fingerprint,
            "runs": [
                {
                    "scenario": r.scenario,
                    "type": r.scenario_type,
                    "run_index": r.run_index,
                    "termination": r.termination,
                    "collided": r.collided,
                    "score": r.score,
                    "v_i": r.v_i,
                    "v_r": r.v_r,
                    "collision_time": r.collision_time,
                }
                for r in self.runs
            ],
            "per_scenario": {k: agg(v) for k, v in sorted(self.per_scenario.items())},
            "per_type": {k: agg(v) for k, v in sorted(self.per_type.items())},
            "overall": agg(self.overall),
        }

    def to_json_bytes(self) -> bytes:
        return canonical_json(self.to_json_dict())

    def summary_table(self) -> str:
        """Flat table: score and collision-rate columns per scenario type."""
        types = ("stationary", "frontal", "side")
        header = "metric,avg," + ",".join(types)
        score_cells = []
        rate_cells = []
        for t in types:
            a = self.per_type.get(t)
            score_cells.append("" if a is None else repr(a.score_mean))
            rate_cells.append("" if a is None else repr(100.0 * a.collision_rate))
        lines = [
            header,
            f"safety_score,{self.overall.score_mean!r}," + ",".join(score_cells),
            f"collision_rate_pct,{100.0 * self.overall.collision_rate!r}," + ",".join(rate_cells),
        ]
        return "\n".join(lines) + "\n"


def _aggregate(scored: Sequence[RunScore], failures: int) -> Aggregate:
    if not scored:
        raise MetricError("no scorable runs to aggregate")
    return Aggregate(
        n=len(scored),
        score_mean=sum(r.score for r in scored) / len(scored),
        collision_rate=sum(1 for r in scored if r.collided) / len(scored),
        transport_failures=failures,
    )


def scorecard_from_entries(entries: Sequence[RunScore], config_fingerprint: str = "") -> ScoreCard:
    """Aggregate per-run scores into a score card.

    The overall row averages the per-type means (types weigh equally, as in
    the benchmark table), not the raw run pool.
    """
    entries = sorted(entries, key=lambda r: (r.scenario, r.run_index))
    if not entries:
        raise MetricError("no runs to score")

    def split(group: list[RunScore]) -> tuple[list[RunScore], int]:
        ok = [r for r in group if r.termination != TERMINATION_TRANSPORT]
        return ok, len(group) - len(ok)

    per_scenario: dict[str, Aggregate] = {}
    for name in sorted({r.scenario for r in entries}):
        ok, failed = split([r for r in entries if r.scenario == name])
        per_scenario[name] = _aggregate(ok, failed)
    per_type: dict[str, Aggregate] = {}
    for t in sorted({r.scenario_type for r in entries}):
        ok, failed = split([r for r in entries if r.scenario_type == t])
        per_type[t] = _aggregate(ok, failed)
    type_aggs = list(per_type.values())
    overall = Aggregate(
        n=sum(a.n for a in type_aggs),
        score_mean=sum(a.score_mean for a in type_aggs) / len(type_aggs),
        collision_rate=sum(a.collision_rate for a in type_aggs) / len(type_aggs),
        transport_failures=sum(a.transport_failures for a in type_aggs),
    )
    return ScoreCard(
        runs=tuple(entries),
        per_scenario=per_scenario,
        per_type=per_type,
        overall=overall,
        config_fingerprint=config_fingerprint,
    )


def build_scorecard(runs: Iterable[RunLog], config_fingerprint: str = "") -> ScoreCard:
    """Aggregate run logs into a score card."""
    entries: list[RunScore] = []
    for run in runs:
        failed = run.termination == TERMINATION_TRANSPORT
        entries.append(
            RunScore(
                scenario=run.scenario_name,
                scenario_type=run.scenario_type,
                run_index=run.run_index,
                termination=run.termination,
                collided=run.collided,
                score=None if failed else score_run(run),
                v_i=run.collision.impact_speed if run.collision else None,
                v_r=run.v_r,
                collision_time=run.collision.time if run.collision else None,
            )
        )
    return scorecard_from_entries(entries, config_fingerprint)


# ---------------------------------------------------------------------------
# open-loop metrics


@dataclass(frozen=True)
class OpenLoopFrame:
    """One evaluation frame: a plan plus ground truth at each waypoint time.

    ``truth_poses[i]`` is the ground-truth ego pose at waypoint i's time
    offset (None when unavailable), and ``actor_boxes[i]`` the ground-truth
    actor boxes at that time.
    """

    plan: PlannedTrajectory
    truth_poses: tuple[Pose2 | None, ...]
    actor_boxes: tuple[tuple[OrientedBox, ...], ...]

    def __post_init__(self) -> None:
        n = len(self.plan.waypoints)
        if len(self.truth_poses) != n or len(self.actor_boxes) != n:
            raise MetricError("ground truth must align with the plan waypoints")


@dataclass(frozen=True)
class OpenLoopResult:
    ade: Mapping[float, float]
    collision_rate: Mapping[float, float]
    skipped_frames: Mapping[float, int]


def open_loop_ade_cr(
    frames: Sequence[OpenLoopFrame],
    ego_length: float,
    ego_width: float,
    horizons: Sequence[float] = OPEN_LOOP_HORIZONS,
) -> OpenLoopResult:
    """Average displacement error and plan collision rate at each horizon.

    ADE@T averages the waypoint-to-truth displacement over waypoints with
    time offset <= T; CR@T is the fraction of frames where the ego footprint
    placed at any such waypoint overlaps a ground-truth actor box. Frames
    missing ground truth inside a horizon are skipped for it and counted.
    """
    if not frames:
        raise MetricError("no frames")
    ade: dict[float, float] = {}
    cr: dict[float, float] = {}
    skipped: dict[float, int] = {}
    for horizon in horizons:
        frame_means: list[float] = []
        collisions = 0
        used = 0
        skip = 0
        for frame in frames:
            idx = [
                i
                for i, w in enumerate(frame.plan.waypoints)
                if w.time_offset <= horizon + 1e-9
            ]
            if not idx or any(frame.truth_poses[i] is None for i in idx):
                skip += 1
                continue
            used += 1
            disp = [
                math.hypot(
                    frame.plan.waypoints[i].pose.x - frame.truth_poses[i].x,
                    frame.plan.waypoints[i].pose.y - frame.truth_poses[i].y,
                )
                for i in idx
            ]
            frame_means.append(sum(disp) / len(disp))
            hit = False
            for i in idx:
                ego_box = OrientedBox(frame.plan.waypoints[i].pose, ego_length, ego_width)
                if any(boxes_intersect(ego_box, b) for b in frame.actor_boxes[i]):
                    hit = True
                    break
            collisions += 1 if hit else 0
        if used == 0:
            raise MetricError(f"no usable frames at horizon {horizon}")
        ade[horizon] = sum(frame_means) / used
        cr[horizon] = collisions / used
        skipped[horizon] = skip
    return OpenLoopResult(ade=ade, collision_rate=cr, skipped_frames=skipped)


# ---------------------------------------------------------------------------
# target-actor recall


@dataclass(frozen=True)
class RecallFrame:
    """Candidates and target truth for one frame, per prediction horizon."""

    target_range: float  # ego-to-target center distance at the frame
    candidates: Mapping[float, tuple[OrientedBox, ...]]
    target_truth: Mapping[float, OrientedBox]


def range_bin(target_range: float) -> tuple[float, float] | None:
    """Assign a range to its bin; boundary values go to the lower bin."""
    if target_range < RANGE_BINS[0][0]:
        return None
    for lo, hi in RANGE_BINS:
        if target_range <= hi:
            return (lo, hi)
    return None


def _candidate_matches(candidate: OrientedBox, truth: OrientedBox) -> bool:
    d = math.hypot(candidate.center.x - truth.center.x, candidate.center.y - truth.center.y)
    if d < RECALL_MATCH_DISTANCE:
        return True
    return boxes_intersect(candidate, truth)


def target_recall(
    frames: Sequence[RecallFrame],
    horizons: Sequence[float] = RECALL_HORIZONS,
) -> dict[tuple[float, tuple[float, float]], float]:
    """Recall of the target actor per (horizon, range bin).

    A frame counts as recalled at horizon h when any candidate has non-zero
    box overlap or a center distance below 2 m against the target's ground
    truth at h. Frames outside all bins are ignored.
    """
    recalled: dict[tuple[float, tuple[float, float]], int] = {}
    totals: dict[tuple[float, tuple[float, float]], int] = {}
    for frame in frames:
        bin_ = range_bin(frame.target_range)
        if bin_ is None:
            continue
        for h in horizons:
            truth = frame.target_truth.get(h)
            if truth is None:
                continue
            key = (h, bin_)
            totals[key] = totals.get(key, 0) + 1
            candidates = frame.candidates.get(h, ())
            if any(_candidate_matches(c, truth) for c in candidates):
                recalled[key] = recalled.get(key, 0) + 1
    return {key: recalled.get(key, 0) / total for key, total in totals.items()}


def recall_frames_from_run(run: RunLog, horizons: Sequence[float] = RECALL_HORIZONS) -> list[RecallFrame]:
    """Build recall frames from a run log's recorded planner-tick objects.

    Candidates at horizon h are the perceived objects extrapolated at
    constant velocity; the truth is the target's predetermined track.
    """
    track = run.instance.target_track
    ego_at = {tick[0]: (tick[1], tick[2]) for tick in run.ticks}
    frames = []
    for pt in run.planner_ticks:
        ego = _ego_pose_at(run, pt.time, ego_at)
        truth_now = track.state_at(pt.time).box.center
        rng = math.hypot(truth_now.x - ego[0], truth_now.y - ego[1])
        candidates: dict[float, tuple[OrientedBox, ...]] = {}
        truths: dict[float, OrientedBox] = {}
        for h in horizons:
            truths[h] = track.state_at(pt.time + h).box
            candidates[h] = tuple(_extrapolate_box(a, h) for a in pt.objects)
        frames.append(RecallFrame(target_range=rng, candidates=candidates, target_truth=truths))
    return frames


def _extrapolate_box(actor: ActorState, h: float) -> OrientedBox:
    c = actor.box.center
    return OrientedBox(
        Pose2(c.x + actor.velocity[0] * h, c.y + actor.velocity[1] * h, c.heading),
        actor.box.length,
        actor.box.width,
    )


def _ego_pose_at(run: RunLog, t: float, ego_at: Mapping[float, tuple[float, float]]) -> tuple[float, float]:
    """Ego position at a planner tick time."""
    if t < 0.0:
        # Warm-up ticks are not in the physics tick stream; rebuild them.
        from crashbench.scenario import scripted_ego_state

        ego = scripted_ego_state(run.instance.spec, t)
        return (ego.pose.x, ego.pose.y)
    hit = ego_at.get(t)
    if hit is not None:
        return hit
    return min(ego_at.items(), key=lambda kv: abs(kv[0] - t))[1]
