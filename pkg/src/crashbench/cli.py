"""Command-line entry points: run, replay, validate.

``run`` executes a scenario suite, writing one run log per run plus a
machine-readable score card and a flat summary table. ``replay`` rescores
an existing run log and exports per-tick time series for plotting.
``validate`` probes a scenario file for feasibility of its jitter ranges
and the collision guarantee.

Suite execution is deterministic: serial and parallel runs of the same
configuration produce byte-identical artifacts. Output files carry no
timestamps for that reason.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from functools import lru_cache
from pathlib import Path

from crashbench import metrics
from crashbench.config import (
    LoadedScenario,
    SuiteConfig,
    default_output_dir,
    load_noise,
    load_scenario,
    resolve_scenario_paths,
)
from crashbench.loop import TERMINATION_TRANSPORT, LoopConfig, RunLog, run_scenario
from crashbench.observe import ExternalObserver, GroundTruthObserver
from crashbench.planners import (
    ExternalPlanner,
    make_naive_baseline,
    make_scripted_oracle,
    plan_constant_velocity,
    with_postprocessing,
)
from crashbench.scenario import (
    ConstructionError,
    ScenarioError,
    ScenarioInstance,
    instantiate_run,
)
from crashbench.serialize import canonical_json, digest, sha256_hex
from crashbench.wire import PlannerClient, RenderClient, TransportError

BUILTIN_PLANNERS = ("constant_velocity", "naive_baseline", "oracle")


def _parse_endpoint(value: str) -> tuple[str, int]:
    host, _, port = value.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"endpoint must look like host:port, got {value!r}")
    return host, int(port)


def make_planner(name: str, instance: ScenarioInstance, loaded: LoadedScenario, suite: SuiteConfig):
    """Build the per-run planner callable; returns (planner, closer)."""
    if name.startswith("external:"):
        host, port = _parse_endpoint(name.removeprefix("external:"))
        client = PlannerClient(host, port, timeout=suite.bridge_timeout)
        planner = ExternalPlanner(client)
        return planner, planner.close
    if name == "constant_velocity":
        planner = plan_constant_velocity
    elif name == "naive_baseline":
        planner = make_naive_baseline(loaded.vehicle)
    elif name == "oracle":
        planner = make_scripted_oracle(instance, loaded.vehicle)
    else:
        raise ValueError(f"unknown planner {name!r}")
    if suite.postprocess:
        planner = with_postprocessing(planner, extent_inflation=suite.extent_inflation)
    return planner, lambda: None


def make_observer(name: str, instance: ScenarioInstance, suite: SuiteConfig):
    if name.startswith("external:"):
        host, port = _parse_endpoint(name.removeprefix("external:"))
        client = RenderClient(host, port, timeout=suite.bridge_timeout)
        observer = ExternalObserver(client)
        return observer, observer.close
    if name == "ground_truth":
        observer = GroundTruthObserver(suite.noise, seed=instance.observation_seed)
        return observer, observer.close
    raise ValueError(f"unknown observer {name!r}")


def execute_run(loaded: LoadedScenario, run_index: int, suite: SuiteConfig, fingerprint: str) -> RunLog:
    instance = instantiate_run(loaded.spec, run_index, params=loaded.vehicle)
    planner, close_planner = make_planner(suite.planner, instance, loaded, suite)
    observer, close_observer = make_observer(suite.observer, instance, suite)
    try:
        return run_scenario(
            instance,
            planner,
            observer,
            cfg=suite.loop,
            params=loaded.vehicle,
            lqr=loaded.lqr,
            config_fingerprint=fingerprint,
            execution={"planner": suite.planner, "observer": suite.observer},
        )
    finally:
        close_planner()
        close_observer()


@lru_cache(maxsize=None)
def _worker_scenario(path: str) -> LoadedScenario:
    return load_scenario(path)


_WORKER_SUITE: SuiteConfig | None = None


def _worker_init(suite_state: dict) -> None:
    global _WORKER_SUITE
    _WORKER_SUITE = _suite_from_state(suite_state)


def _worker_run(task: tuple[str, int, str]) -> tuple[str, int, bytes]:
    path, run_index, fingerprint = task
    suite = _WORKER_SUITE
    loaded = _apply_overrides(_worker_scenario(path), suite)
    log = execute_run(loaded, run_index, suite, fingerprint)
    return (loaded.spec.name, run_index, log.to_json_bytes())


def _suite_state(suite: SuiteConfig) -> dict:
    """Picklable reconstruction recipe for worker processes."""
    return {
        "paths": [str(s.path) for s in suite.scenarios],
        "planner": suite.planner,
        "observer": suite.observer,
        "postprocess": suite.postprocess,
        "extent_inflation": suite.extent_inflation,
        "seed_override": suite.seed_override,
        "runs_override": suite.runs_override,
        "noise": asdict(suite.noise),
        "loop": {"physics_dt": suite.loop.physics_dt, "planner_period": suite.loop.planner_period},
        "bridge_timeout": suite.bridge_timeout,
        "output_dir": str(suite.output_dir),
    }


def _suite_from_state(state: dict) -> SuiteConfig:
    from crashbench.observe import PerceptionNoiseModel

    return SuiteConfig(
        scenarios=tuple(_worker_scenario(p) for p in state["paths"]),
        output_dir=Path(state["output_dir"]),
        planner=state["planner"],
        observer=state["observer"],
        postprocess=state["postprocess"],
        extent_inflation=state["extent_inflation"],
        parallel=1,
        seed_override=state["seed_override"],
        runs_override=state["runs_override"],
        noise=PerceptionNoiseModel(**state["noise"]),
        loop=LoopConfig(**state["loop"]),
        bridge_timeout=state["bridge_timeout"],
    )


def _apply_overrides(loaded: LoadedScenario, suite: SuiteConfig) -> LoadedScenario:
    spec = loaded.spec
    if suite.seed_override is not None:
        spec = replace(spec, seed=suite.seed_override)
    if suite.runs_override is not None:
        spec = replace(spec, runs=suite.runs_override)
    return replace(loaded, spec=spec)


def run_suite(suite: SuiteConfig) -> tuple[metrics.ScoreCard, list[RunLog]]:
    """Execute every (scenario, run_index) pair in-process and score them."""
    fingerprint = suite.fingerprint()
    logs: list[RunLog] = []
    for loaded in suite.resolved_specs():
        for run_index in range(loaded.spec.runs):
            logs.append(execute_run(loaded, run_index, suite, fingerprint))
    card = metrics.build_scorecard(logs, fingerprint)
    return card, logs


def _write_artifacts(out: Path, run_bytes: list[tuple[str, int, bytes]], fingerprint: str) -> int:
    """Write run logs, score card, and summary; returns transport-failure count."""
    runlog_dir = out / "runlogs"
    runlog_dir.mkdir(parents=True, exist_ok=True)
    run_bytes.sort(key=lambda item: (item[0], item[1]))
    index = []
    parsed_runs = []
    for name, run_index, body in run_bytes:
        filename = f"{name}__run{run_index:04d}.json"
        (runlog_dir / filename).write_bytes(body)
        index.append({"file": filename, "scenario": name, "run_index": run_index, "sha256": sha256_hex(body)})
        parsed_runs.append(json.loads(body))
    (out / "runlogs" / "index.json").write_bytes(canonical_json({"schema": "crashbench.runindex/1", "runs": index}))

    entries = []
    failures = 0
    for body in parsed_runs:
        collided = body["collision"] is not None
        failed = body["termination"] == TERMINATION_TRANSPORT
        failures += 1 if failed else 0
        score = None
        if not failed:
            score = metrics.safety_score(
                collided,
                body["collision"]["impact_speed"] if collided else 0.0,
                body["instance"]["v_r"],
            )
        entries.append(
            metrics.RunScore(
                scenario=body["scenario"]["name"],
                scenario_type=body["scenario"]["type"],
                run_index=body["scenario"]["run_index"],
                termination=body["termination"],
                collided=collided,
                score=score,
                v_i=body["collision"]["impact_speed"] if collided else None,
                v_r=body["instance"]["v_r"],
                collision_time=body["collision"]["time"] if collided else None,
            )
        )
    card = metrics.scorecard_from_entries(entries, fingerprint)
    (out / "scorecard.json").write_bytes(card.to_json_bytes())
    (out / "summary.csv").write_text(card.summary_table())
    return failures


def cmd_run(args: argparse.Namespace) -> int:
    try:
        paths = resolve_scenario_paths(args.scenarios)
        scenarios = tuple(load_scenario(p) for p in paths)
        suite = SuiteConfig(
            scenarios=scenarios,
            output_dir=Path(args.out) if args.out else default_output_dir(),
            planner=args.planner,
            observer=args.observer,
            postprocess=args.postprocess,
            extent_inflation=not args.no_extent_inflation,
            parallel=args.parallel,
            seed_override=args.seed,
            runs_override=args.runs,
            noise=load_noise(args.noise),
            loop=LoopConfig(physics_dt=args.physics_dt, planner_period=args.planner_period),
            bridge_timeout=args.timeout,
        )
    except (ScenarioError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if suite.parallel > 1 and (suite.planner.startswith("external:") or suite.observer.startswith("external:")):
        print("error: external endpoints require --parallel 1 (one bridge session)", file=sys.stderr)
        return 1
    if suite.observer.startswith("external:") and not suite.planner.startswith("external:"):
        # Built-in planners read object lists; an external observer returns
        # pixel payloads only, which just an external planner can consume.
        print("error: an external observer requires an external planner", file=sys.stderr)
        return 1

    fingerprint = suite.fingerprint()
    tasks = [
        (str(loaded.path), run_index, fingerprint)
        for loaded in suite.resolved_specs()
        for run_index in range(loaded.spec.runs)
    ]
    run_bytes: list[tuple[str, int, bytes]] = []
    try:
        if suite.parallel <= 1:
            _worker_init(_suite_state(suite))
            for task in tasks:
                run_bytes.append(_worker_run(task))
        else:
            with ProcessPoolExecutor(
                max_workers=suite.parallel,
                initializer=_worker_init,
                initargs=(_suite_state(suite),),
            ) as pool:
                run_bytes = list(pool.map(_worker_run, tasks, chunksize=4))
    except (ConstructionError, ScenarioError, TransportError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    out = suite.output_dir
    out.mkdir(parents=True, exist_ok=True)
    failures = _write_artifacts(out, run_bytes, fingerprint)
    card_path = out / "scorecard.json"
    print((out / "summary.csv").read_text(), end="")
    print(f"wrote {len(run_bytes)} run logs and {card_path}")
    if failures:
        print(f"warning: {failures} transport failure(s); excluded from averages", file=sys.stderr)
        return 2
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    path = Path(args.runlog)
    try:
        body = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read run log {path}: {exc}", file=sys.stderr)
        return 1
    recorded = body.get("integrity")
    recomputed = digest(
        {
            "ticks": body.get("ticks"),
            "planner_ticks": body.get("planner_ticks"),
            "collision": body.get("collision"),
            "termination": body.get("termination"),
        }
    )
    if recorded != recomputed:
        print("error: integrity check failed (run log content was modified)", file=sys.stderr)
        return 1
    if args.expect_fingerprint and body.get("fingerprint") != args.expect_fingerprint:
        print(
            f"error: fingerprint mismatch: log has {body.get('fingerprint')}, expected {args.expect_fingerprint}",
            file=sys.stderr,
        )
        return 1

    collided = body["collision"] is not None
    score = None
    if body["termination"] != TERMINATION_TRANSPORT:
        score = metrics.safety_score(
            collided,
            body["collision"]["impact_speed"] if collided else 0.0,
            body["instance"]["v_r"],
        )
    entry = {
        "scenario": body["scenario"]["name"],
        "run_index": body["scenario"]["run_index"],
        "termination": body["termination"],
        "score": score,
        "v_i": body["collision"]["impact_speed"] if collided else None,
        "v_r": body["instance"]["v_r"],
    }
    print(json.dumps(entry, sort_keys=True))

    if args.export:
        export = Path(args.export)
        export.mkdir(parents=True, exist_ok=True)
        with (export / "ego.csv").open("w") as f:
            f.write("time,x,y,heading,speed,steering,acceleration\n")
            for tick in body["ticks"]:
                f.write(",".join(repr(v) for v in tick) + "\n")
        with (export / "actors.csv").open("w") as f:
            f.write("time,actor_id,x,y,heading\n")
            actors = [body["instance"]["target"]] + list(body["instance"]["background"])
            for tick in body["ticks"]:
                t = tick[0]
                for a in actors:
                    f.write(
                        f"{t!r},{a['id']},{a['x'] + a['vx'] * t!r},{a['y'] + a['vy'] * t!r},{a['heading']!r}\n"
                    )
        with (export / "plans.csv").open("w") as f:
            f.write("tick_time,offset,x,y,heading,speed\n")
            for pt in body["planner_ticks"]:
                for wp in pt.get("plan") or []:
                    speed = "" if wp[4] is None else repr(wp[4])
                    f.write(f"{pt['time']!r},{wp[0]!r},{wp[1]!r},{wp[2]!r},{wp[3]!r},{speed}\n")
        print(f"exported plot data to {export}")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        loaded = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    spec = replace(loaded.spec, runs=max(loaded.spec.runs, args.probes))
    attempts = []
    contact_times = []
    v_rs = []
    for run_index in range(args.probes):
        try:
            inst = instantiate_run(spec, run_index, params=loaded.vehicle)
        except ConstructionError as exc:
            print(f"FAIL probe {run_index}: {exc}", file=sys.stderr)
            return 1
        attempts.append(inst.attempts)
        contact_times.append(inst.no_action_contact_time)
        v_rs.append(inst.reference_impact_speed)
    rejection_rate = (sum(attempts) - args.probes) / sum(attempts)
    print(f"scenario: {spec.name} ({spec.scenario_type.value})")
    print(f"probes: {args.probes}, rejected draws: {sum(attempts) - args.probes} (rate {rejection_rate:.3f})")
    print(
        "contact time: "
        f"min {min(contact_times):.3f}s mean {statistics.fmean(contact_times):.3f}s max {max(contact_times):.3f}s "
        f"(target {spec.ttc_init:.1f}s +/- 0.5s)"
    )
    print(f"v_r: min {min(v_rs):.3f} mean {statistics.fmean(v_rs):.3f} max {max(v_rs):.3f} m/s")
    print("PASS")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crashbench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario suite")
    p_run.add_argument("scenarios", nargs="+", help="scenario files or directories")
    p_run.add_argument("--planner", default="constant_velocity",
                       help="constant_velocity | naive_baseline | oracle | external:HOST:PORT")
    p_run.add_argument("--observer", default="ground_truth", help="ground_truth | external:HOST:PORT")
    p_run.add_argument("--postprocess", action="store_true", help="enable waypoint post-processing")
    p_run.add_argument("--no-extent-inflation", action="store_true",
                       help="disable ego-extent inflation in the post-processor")
    p_run.add_argument("--parallel", type=int, default=1, help="worker processes")
    p_run.add_argument("--out", default=None, help="output directory (env CRASHBENCH_OUT)")
    p_run.add_argument("--seed", type=int, default=None, help="override every scenario seed")
    p_run.add_argument("--runs", type=int, default=None, help="override runs per scenario")
    p_run.add_argument("--noise", default=None, help="perception-noise YAML file")
    p_run.add_argument("--physics-dt", type=float, default=0.01)
    p_run.add_argument("--planner-period", type=float, default=0.5)
    p_run.add_argument("--timeout", type=float, default=10.0, help="bridge request deadline, seconds")
    p_run.set_defaults(func=cmd_run)

    p_replay = sub.add_parser("replay", help="rescore a run log and export plot data")
    p_replay.add_argument("runlog")
    p_replay.add_argument("--export", default=None, help="directory for time-series CSV export")
    p_replay.add_argument("--expect-fingerprint", default=None, help="refuse on fingerprint mismatch")
    p_replay.set_defaults(func=cmd_replay)

    p_val = sub.add_parser("validate", help="probe a scenario file for feasibility")
    p_val.add_argument("scenario")
    p_val.add_argument("--probes", type=int, default=100)
    p_val.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
