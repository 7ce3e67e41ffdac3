"""Wire protocol: framing, message schemas, and typed views.

Framing is a 4-byte big-endian length prefix followed by canonical JSON
(sorted keys, compact separators, UTF-8). Handshake: the simulator sends
``hello`` {type, version, role}; the server answers ``hello_ack`` {type,
version, capability} with capability ``waypoints`` or ``controls``. Every
subsequent ``step`` message carries the observation; the reply is either a
``plan`` (waypoints [{t, x, y, heading, speed?}], offsets strictly
increasing within (0, 3] seconds) or a ``controls`` sequence. ``error``
replies abort the session.
"""

from __future__ import annotations

import base64
import json
import socket
import struct
from dataclasses import dataclass, field

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 64 * 1024 * 1024
PLAN_MAX_HORIZON = 3.0


class ProtocolError(RuntimeError):
    """Schema or invariant violation on either side of the bridge."""


class TransportError(RuntimeError):
    """Connection failure: timeout, reset, or truncated frame."""


def encode_message(msg: dict) -> bytes:
    return json.dumps(msg, sort_keys=True, separators=(",", ":")).encode("utf-8")


def decode_message(data: bytes) -> dict:
    try:
        msg = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"malformed message: {exc}") from exc
    if not isinstance(msg, dict) or not isinstance(msg.get("type"), str):
        raise ProtocolError("message must be a JSON object with a string 'type'")
    return msg


def write_frame(sock: socket.socket, msg: dict) -> None:
    body = encode_message(msg)
    try:
        sock.sendall(struct.pack(">I", len(body)) + body)
    except OSError as exc:
        raise TransportError(f"send failed: {exc}") from exc


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    while n > 0:
        try:
            chunk = sock.recv(n)
        except socket.timeout as exc:
            raise TransportError("receive timed out") from exc
        except OSError as exc:
            raise TransportError(f"receive failed: {exc}") from exc
        if not chunk:
            raise TransportError("connection closed mid-frame")
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> dict:
    (length,) = struct.unpack(">I", _recv_exact(sock, 4))
    if length > MAX_FRAME_BYTES:
        raise ProtocolError(f"frame of {length} bytes exceeds limit")
    return decode_message(_recv_exact(sock, length))


@dataclass(frozen=True)
class Actor:
    actor_id: str
    class_label: str
    x: float
    y: float
    heading: float
    length: float
    width: float
    vx: float
    vy: float


@dataclass(frozen=True)
class Observation:
    """Typed view of a step message; exactly what the simulator sent."""

    time: float
    x: float
    y: float
    heading: float
    speed: float
    command: str
    actors: tuple[Actor, ...] = ()
    payloads: dict[str, bytes] = field(default_factory=dict)


def observation_from_step(msg: dict) -> Observation:
    try:
        pose = msg["ego_pose"]
        actors = tuple(
            Actor(
                actor_id=str(a["actor_id"]),
                class_label=str(a["class_label"]),
                x=float(a["pose"]["x"]),
                y=float(a["pose"]["y"]),
                heading=float(a["pose"]["heading"]),
                length=float(a["length"]),
                width=float(a["width"]),
                vx=float(a["velocity"][0]),
                vy=float(a["velocity"][1]),
            )
            for a in msg["actors"]
        )
        payloads = {k: base64.b64decode(v) for k, v in msg.get("payloads", {}).items()}
        return Observation(
            time=float(msg["time"]),
            x=float(pose["x"]),
            y=float(pose["y"]),
            heading=float(pose["heading"]),
            speed=float(msg["speed"]),
            command=str(msg["command"]),
            actors=actors,
            payloads=payloads,
        )
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ProtocolError(f"bad step message: {exc!r}") from exc


@dataclass(frozen=True)
class PlanReply:
    """Waypoint plan: (time_offset, x, y, heading[, speed]) tuples."""

    waypoints: tuple[tuple, ...]

    def validate(self) -> None:
        if not self.waypoints:
            raise ProtocolError("plan must carry at least one waypoint")
        prev = 0.0
        for wp in self.waypoints:
            if len(wp) not in (4, 5):
                raise ProtocolError(f"waypoint must be (t, x, y, heading[, speed]): {wp!r}")
            t = float(wp[0])
            if t <= prev:
                raise ProtocolError("waypoint offsets must be positive and strictly increasing")
            prev = t
        if prev > PLAN_MAX_HORIZON + 1e-9:
            raise ProtocolError(f"plan horizon {prev}s exceeds {PLAN_MAX_HORIZON}s")

    def to_message(self) -> dict:
        self.validate()
        out = []
        for wp in self.waypoints:
            entry = {"t": wp[0], "x": wp[1], "y": wp[2], "heading": wp[3]}
            if len(wp) == 5 and wp[4] is not None:
                entry["speed"] = wp[4]
            out.append(entry)
        return {"type": "plan", "waypoints": out}


@dataclass(frozen=True)
class ControlsReply:
    """Control sequence: (time_offset, steering, acceleration) tuples."""

    controls: tuple[tuple[float, float, float], ...]

    def validate(self) -> None:
        if not self.controls:
            raise ProtocolError("controls reply must carry at least one entry")
        prev = -1.0
        for t, _, _ in self.controls:
            if t < 0.0 or t <= prev:
                raise ProtocolError("control offsets must be non-negative and strictly increasing")
            prev = t

    def to_message(self) -> dict:
        self.validate()
        return {
            "type": "controls",
            "controls": [
                {"t": t, "steering": s, "acceleration": a} for t, s, a in self.controls
            ],
        }


def hello_ack(capability: str) -> dict:
    return {"type": "hello_ack", "version": PROTOCOL_VERSION, "capability": capability}


def error_message(message: str) -> dict:
    return {"type": "error", "message": message}
