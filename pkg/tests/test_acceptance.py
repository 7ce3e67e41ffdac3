"""Acceptance suite: one test per criterion, one pass/fail line each.

Heavier criteria share fixtures (corpus instance pools and closed-loop run
pools) so the whole module stays inside its runtime budgets.
"""

import math
import random
import subprocess
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from crashbench.config import load_scenario
from crashbench.control import LqrConfig, LqrTracker
from crashbench.geometry import (
    EgoState,
    OrientedBox,
    PlannedTrajectory,
    Pose2,
    Waypoint,
    boxes_intersect,
    boxes_separation,
    wrap_angle,
)
from crashbench.loop import TERMINATION_COLLISION, TERMINATION_HORIZON, run_scenario
from crashbench.metrics import (
    open_loop_ade_cr,
    recall_frames_from_run,
    safety_score,
    score_run,
    target_recall,
)
from crashbench.observe import GroundTruthObserver, Observation, PerceptionNoiseModel
from crashbench.planners import (
    PostProcessConfig,
    make_naive_baseline,
    make_scripted_oracle,
    plan_constant_velocity,
    postprocess_waypoints,
    predicted_occupancy,
)
from crashbench.scenario import Command, instantiate_run, reference_impact_speed
from crashbench.vehicle import ControlInput, VehicleParams, step

from test_geometry import any_point_in_box, random_box, sample_points

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


def report(criterion: str, passed: bool, detail: str = "") -> None:
    status = "PASS" if passed else "FAIL"
    print(f"[acceptance] {status} {criterion}" + (f" ({detail})" if detail else ""))
    assert passed, f"{criterion}: {detail}"


@pytest.fixture(scope="module")
def corpus():
    return {p.stem: load_scenario(p) for p in sorted(SCENARIOS.glob("*.yaml"))}


@pytest.fixture(scope="module")
def instance_pool(corpus):
    """>= 1000 seeded instances per scenario type (500 per scenario)."""
    pool = {"stationary": [], "frontal": [], "side": []}
    for loaded in corpus.values():
        spec = replace(loaded.spec, runs=500)
        for idx in range(500):
            pool[spec.scenario_type.value].append(
                (instantiate_run(spec, idx, params=loaded.vehicle), loaded)
            )
    return pool


def closed_loop(inst, loaded, planner_factory):
    planner = planner_factory(inst, loaded)
    observer = GroundTruthObserver(seed=inst.observation_seed)
    return run_scenario(inst, planner, observer, params=loaded.vehicle, lqr=loaded.lqr)


def cv_factory(inst, loaded):
    return plan_constant_velocity


def oracle_factory(inst, loaded):
    return make_scripted_oracle(inst, loaded.vehicle)


def baseline_factory(inst, loaded):
    return make_naive_baseline(loaded.vehicle)


@pytest.fixture(scope="module")
def corpus_runs(corpus):
    """Full-corpus closed-loop runs at the shipped run counts."""

    def sweep(factory):
        logs = []
        for loaded in corpus.values():
            for idx in range(loaded.spec.runs):
                inst = instantiate_run(loaded.spec, idx, params=loaded.vehicle)
                logs.append(closed_loop(inst, loaded, factory))
        return logs

    return {"oracle": sweep(oracle_factory)}


def test_scoring_exactness():
    t0 = time.perf_counter()
    rng = random.Random(20240602)
    worst = 0.0
    ok = True
    for _ in range(1000):
        v_i = rng.uniform(0.0, 30.0)
        v_r = rng.uniform(0.1, 30.0)
        expected = 4.0 * max(0.0, 1.0 - v_i / v_r)
        got = safety_score(True, v_i, v_r)
        if got != expected and abs(got - expected) > math.ulp(max(got, expected)):
            ok = False
            worst = max(worst, abs(got - expected))
    elapsed = time.perf_counter() - t0
    report(
        "scoring exactness (1000-point grid, <=1 ulp)",
        ok and elapsed < 1.0,
        f"{elapsed:.3f}s",
    )


def test_vehicle_model_fidelity():
    t0 = time.perf_counter()

    def radius_error(steer, speed, substep):
        p = VehicleParams(integration_substep=substep)
        radius = p.wheelbase / math.tan(steer)
        s = EgoState(Pose2(0, 0, 0), speed, 0.0)
        u = ControlInput(steer, 0.0)
        worst = 0.0
        n = int(round(2 * math.pi * radius / speed / substep))
        for _ in range(n):
            s = step(s, u, substep, p)
            worst = max(worst, abs(math.hypot(s.pose.x, s.pose.y - radius) - radius))
        return worst / radius

    ok = True
    details = []
    for steer in (0.05, 0.1, 0.3):
        for speed in (3.0, 10.0):
            err = radius_error(steer, speed, 0.01)
            details.append(f"d={steer} v={speed}: {err:.2e}")
            ok = ok and err < 1e-3
    coarse = radius_error(0.3, 10.0, 0.08)
    fine = radius_error(0.3, 10.0, 0.04)
    order_ratio = coarse / fine
    ok = ok and order_ratio >= 8.0
    elapsed = time.perf_counter() - t0
    report(
        "vehicle-model fidelity (circle radius 0.1%, order >= 8x)",
        ok and elapsed < 5.0,
        f"order ratio {order_ratio:.1f}, {elapsed:.2f}s",
    )


def test_controller_convergence():
    t0 = time.perf_counter()
    params = VehicleParams()

    def track(y0):
        tracker = LqrTracker(LqrConfig(), params)
        state = EgoState(Pose2(0.0, y0, 0.0), 10.0, 0.0)
        lateral, controls = [], []
        plan, plan_time = None, 0.0
        for i in range(800):
            t = i * 0.01
            if i % 50 == 0:
                plan = PlannedTrajectory(
                    tuple(
                        Waypoint(0.5 * k, Pose2(state.pose.x + 5.0 * k, 0.0, 0.0), speed=10.0)
                        for k in range(1, 7)
                    )
                )
                plan_time = t
            u = tracker.compute_control(state, plan, plan_time)
            controls.append(u)
            state = step(state, u, 0.01, params)
            lateral.append((state.time, state.pose.y))
        return lateral, controls

    lateral, up = track(1.0)
    settled = max(abs(y) for t, y in lateral if t >= 5.0)
    overshoot = max(-y for t, y in lateral)
    _, down = track(-1.0)
    mirror_ok = all(
        a.steering == -b.steering and a.acceleration == b.acceleration
        for a, b in zip(up, down)
    )
    elapsed = time.perf_counter() - t0
    report(
        "controller convergence (|e|<0.1m in 5s, overshoot<0.3m, mirror exact)",
        settled < 0.1 and overshoot < 0.3 and mirror_ok and elapsed < 5.0,
        f"settled {settled:.3f}m, overshoot {overshoot:.3f}m, {elapsed:.2f}s",
    )


def test_collision_guarantee_property(instance_pool):
    t0 = time.perf_counter()
    ok = True
    count = 0
    for scenario_type, entries in instance_pool.items():
        assert len(entries) >= 1000
        for inst, loaded in entries:
            count += 1
            if abs(inst.no_action_contact_time - inst.spec.ttc_init) > 0.5:
                ok = False
            v_again = reference_impact_speed(
                inst.ego_init, inst.spec.ego_init_steer, inst.tracks(), loaded.vehicle, inst.spec.horizon
            )
            if abs(v_again - inst.reference_impact_speed) > 0.05 * inst.reference_impact_speed:
                ok = False
    # Constant-velocity planner collides on every frontal and side instance.
    collided = 0
    total = 0
    for scenario_type in ("frontal", "side"):
        for inst, loaded in instance_pool[scenario_type]:
            total += 1
            log = closed_loop(inst, loaded, cv_factory)
            if log.termination == TERMINATION_COLLISION:
                collided += 1
    elapsed = time.perf_counter() - t0
    report(
        "collision guarantee (contact in ttc+/-0.5s, v_r recomputation within 5%, CV 100% on frontal/side)",
        ok and collided == total and elapsed < 300.0,
        f"{count} instances, CV {collided}/{total}, {elapsed:.1f}s",
    )


def test_baseline_behavior(corpus):
    t0 = time.perf_counter()
    stationary_runs = []
    frontal_base = []
    frontal_cv = []
    for name, loaded in corpus.items():
        for idx in range(loaded.spec.runs):
            inst = instantiate_run(loaded.spec, idx, params=loaded.vehicle)
            if loaded.spec.scenario_type.value == "stationary":
                stationary_runs.append(closed_loop(inst, loaded, baseline_factory))
            elif loaded.spec.scenario_type.value == "frontal":
                frontal_base.append(closed_loop(inst, loaded, baseline_factory))
                frontal_cv.append(closed_loop(inst, loaded, cv_factory))
    avoided = sum(1 for r in stationary_runs if r.termination == TERMINATION_HORIZON)
    avoidance = avoided / len(stationary_runs)
    frontal_all_collide = all(r.termination == TERMINATION_COLLISION for r in frontal_base)
    base_scores = [score_run(r) for r in frontal_base]
    cv_scores = [score_run(r) for r in frontal_cv]
    base_mean = sum(base_scores) / len(base_scores)
    cv_mean = sum(cv_scores) / len(cv_scores)
    elapsed = time.perf_counter() - t0
    report(
        "baseline behavior (>=90% stationary avoidance; frontal 100% collision, score>0, mean > CV)",
        avoidance >= 0.90
        and frontal_all_collide
        and all(s > 0.0 for s in base_scores)
        and base_mean > cv_mean
        and elapsed < 300.0,
        f"avoidance {avoidance:.1%}, frontal mean {base_mean:.2f} vs CV {cv_mean:.2f}, {elapsed:.1f}s",
    )


def test_oracle_upper_bound(corpus_runs):
    t0 = time.perf_counter()
    logs = corpus_runs["oracle"]
    scores = [score_run(r) for r in logs]
    ok = all(s == 5.0 for s in scores)
    elapsed = time.perf_counter() - t0
    report(
        "oracle upper bound (score 5.0 on every corpus run)",
        ok,
        f"{len(scores)} runs, min score {min(scores):.2f}",
    )


def test_determinism_serial_vs_parallel(tmp_path):
    t0 = time.perf_counter()
    outs = []
    for label, workers in (("serial", 1), ("parallel", 8)):
        out = tmp_path / label
        proc = subprocess.run(
            [
                sys.executable,
                "-m",
                "crashbench",
                "run",
                str(SCENARIOS),
                "--parallel",
                str(workers),
                "--out",
                str(out),
            ],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        outs.append(out)
    serial, parallel = outs
    same_card = (serial / "scorecard.json").read_bytes() == (parallel / "scorecard.json").read_bytes()
    serial_logs = sorted((serial / "runlogs").glob("*__run*.json"))
    same_logs = all(
        (parallel / "runlogs" / p.name).read_bytes() == p.read_bytes() for p in serial_logs
    )
    same_index = (serial / "runlogs" / "index.json").read_bytes() == (
        parallel / "runlogs" / "index.json"
    ).read_bytes()
    elapsed = time.perf_counter() - t0
    report(
        "determinism (serial vs 8-way parallel byte-identical)",
        same_card and same_logs and same_index and len(serial_logs) == 600,
        f"{len(serial_logs)} run logs, {elapsed:.1f}s",
    )


def test_collision_geometry_oracle():
    t0 = time.perf_counter()
    rng = random.Random(777)
    rng_np = np.random.default_rng(777)
    disagreements = 0
    checked = 0
    for _ in range(1000):
        a = random_box(rng)
        b = random_box(rng)
        if abs(boxes_separation(a, b)) <= 1e-3:
            continue
        checked += 1
        mc = any_point_in_box(sample_points(a, rng_np, 100_000), b) or any_point_in_box(
            sample_points(b, rng_np, 100_000), a
        )
        if mc != boxes_intersect(a, b):
            disagreements += 1
    elapsed = time.perf_counter() - t0
    report(
        "collision-geometry oracle (SAT vs Monte-Carlo containment, zero disagreements)",
        disagreements == 0 and checked > 900,
        f"{checked} pairs, {elapsed:.1f}s",
    )


def test_metric_properties(corpus_runs, corpus):
    t0 = time.perf_counter()
    # CR@T monotone on 100 random synthetic frames.
    rng = random.Random(42)
    monotone = True
    for _ in range(100):
        pts = [(0.5 * k, 5.0 * 0.5 * k, rng.uniform(-2, 2)) for k in range(1, 7)]
        plan = PlannedTrajectory(tuple(Waypoint(t, Pose2(x, y, 0.0)) for t, x, y in pts))
        boxes = tuple(
            (OrientedBox(Pose2(rng.uniform(0, 15), rng.uniform(-3, 3), rng.uniform(-1, 1)), 4.0, 2.0),)
            if rng.random() < 0.5
            else ()
            for _ in range(6)
        )
        from crashbench.metrics import OpenLoopFrame

        frame = OpenLoopFrame(
            plan=plan,
            truth_poses=tuple(Pose2(x, y, 0.0) for _, x, y in pts),
            actor_boxes=boxes,
        )
        res = open_loop_ade_cr([frame], 4.084, 1.73)
        if not res.collision_rate[1.0] <= res.collision_rate[2.0] <= res.collision_rate[3.0]:
            monotone = False

    # Zero-noise recall is 1.0 on every corpus run.
    recall_perfect = True
    for log in corpus_runs["oracle"]:
        frames = recall_frames_from_run(log)
        recalls = target_recall(frames)
        if recalls and min(recalls.values()) < 1.0:
            recall_perfect = False
            break

    # Far-bin dropout strictly degrades far-bin recall.
    loaded = corpus["frontal_a"]
    noisy = PerceptionNoiseModel(dropout_far=0.3)
    far_frames = []
    for idx in range(50):
        inst = instantiate_run(loaded.spec, idx, params=loaded.vehicle)
        log = run_scenario(
            inst,
            plan_constant_velocity,
            GroundTruthObserver(noisy, seed=inst.observation_seed),
            params=loaded.vehicle,
            lqr=loaded.lqr,
        )
        far_frames.extend(recall_frames_from_run(log))
    noisy_recalls = target_recall(far_frames)
    far_bin_keys = [k for k in noisy_recalls if k[1] == (25.0, 35.0)]
    degraded = bool(far_bin_keys) and all(noisy_recalls[k] < 1.0 for k in far_bin_keys)

    elapsed = time.perf_counter() - t0
    report(
        "metric properties (CR@T monotone, zero-noise recall 1.0, far-bin dropout degrades recall)",
        monotone and recall_perfect and degraded,
        f"far-bin recalls {sorted(round(noisy_recalls[k], 3) for k in far_bin_keys)}, {elapsed:.1f}s",
    )


def test_postprocessor_failure_mode(corpus):
    t0 = time.perf_counter()
    cfg = PostProcessConfig()

    # A waypoint seeded inside occupancy moves; neighbours stay put.
    ego = EgoState(Pose2(0.0, 0.0, 0.0), 10.0, 0.0)
    plan = plan_constant_velocity(
        Observation(time=0.0, ego=ego, command=Command.STRAIGHT, objects=())
    ).plan
    box = OrientedBox(Pose2(15.0, 0.0, 0.0), 4.0, 2.0)
    out = postprocess_waypoints(plan, [(1.5, box)], cfg, extent_inflation=False)
    moved = [
        i
        for i, (a, b) in enumerate(zip(plan.waypoints, out.waypoints))
        if (a.pose.x, a.pose.y) != (b.pose.x, b.pose.y)
    ]
    independent = moved == [2]

    def heading_discontinuity(p: PlannedTrajectory) -> float:
        return max(
            (abs(wrap_angle(b.pose.heading - a.pose.heading)) for a, b in zip(p.waypoints, p.waypoints[1:])),
            default=0.0,
        )

    # At least one corpus frontal instance shows a post-processed plan with a
    # larger heading discontinuity than the raw plan (repelled waypoints).
    loaded = corpus["frontal_a"]
    found = False
    best = 0.0
    for idx in range(20):
        inst = instantiate_run(loaded.spec, idx, params=loaded.vehicle)
        observer = GroundTruthObserver(seed=inst.observation_seed)
        for t in (1.5, 2.0, 2.5):
            ego_state = EgoState(Pose2(10.0 * t, 0.0, 0.0), 10.0, t)
            obs = observer.observe(t, ego_state, inst.actors_at(t), Command.STRAIGHT)
            verdict = plan_constant_velocity(obs)
            occupancy = predicted_occupancy(obs)
            processed = postprocess_waypoints(verdict.plan, occupancy, cfg, extent_inflation=False)
            raw_disc = heading_discontinuity(verdict.plan)
            post_disc = heading_discontinuity(processed)
            if post_disc > raw_disc + 0.1:
                found = True
                best = max(best, post_disc)
    elapsed = time.perf_counter() - t0
    report(
        "post-processor failure mode (independent waypoints, heading discontinuity grows)",
        independent and found,
        f"max post discontinuity {best:.2f} rad, {elapsed:.1f}s",
    )
