"""SDK for serving external planners to the crashbench simulator.

Implements the simulator's planner wire protocol (see the simulator repo's
docs/wire-protocol.md): length-prefixed canonical-JSON messages over TCP,
one synchronous step/reply exchange per simulation tick. Bring a callback
that maps an observation to a plan; the SDK handles framing, the
handshake, validation, and fault containment.
"""

__version__ = "0.1.0"

from crashbench_sdk.protocol import (
    Actor,
    Observation,
    PlanReply,
    ControlsReply,
    ProtocolError,
)
from crashbench_sdk.server import PlannerServer, serve
from crashbench_sdk.example import constant_velocity_planner

__all__ = [
    "Actor",
    "Observation",
    "PlanReply",
    "ControlsReply",
    "ProtocolError",
    "PlannerServer",
    "serve",
    "constant_velocity_planner",
]
