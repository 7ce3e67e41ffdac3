"""Example planner: constant-velocity extrapolation.

Emits waypoints at 0.5 s spacing out to 3 s, continuing the current speed
along the current heading. Run it with ``crashbench-example-planner`` and
point the simulator at ``external:HOST:PORT``.
"""

from __future__ import annotations

import argparse
import math

from crashbench_sdk.protocol import Observation, PlanReply
from crashbench_sdk.server import serve


def constant_velocity_planner(obs: Observation) -> PlanReply:
    waypoints = []
    for k in range(1, 7):
        t = 0.5 * k
        waypoints.append(
            (
                t,
                obs.x + obs.speed * math.cos(obs.heading) * t,
                obs.y + obs.speed * math.sin(obs.heading) * t,
                obs.heading,
                obs.speed,
            )
        )
    return PlanReply(tuple(waypoints))


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=4711)
    args = parser.parse_args(argv)
    serve(constant_velocity_planner, host=args.host, port=args.port)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
