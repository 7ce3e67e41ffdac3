"""Wire protocol shared by the planner bridge and the render bridge.

Framing: a 4-byte big-endian unsigned length prefix followed by a UTF-8
JSON document. Encoding is canonical (sorted keys, no whitespace, shortest
round-trip floats) so messages are byte-stable and golden files can be
compared exactly.

Message types (all carry "type"; handshakes carry "version"):

  hello       {type, version, role}
  hello_ack   {type, version, capability}        capability: waypoints|controls
  step        {type, time, ego_pose, speed, command, actors[], cameras[], payloads{}}
  plan        {type, waypoints[]}                waypoint: {t, x, y, heading, speed?}
  controls    {type, controls[]}                 control: {t, steering, acceleration}
  render      {type, time, ego_pose, cameras[], actors[]}
  frames      {type, payloads{}}                 payloads keyed by camera_id, base64
  error       {type, message}

See docs/wire-protocol.md for the full schema.
"""

from __future__ import annotations

import base64
import json
import socket
import struct
from typing import Mapping, Sequence

from crashbench.geometry import (
    ActorClass,
    ActorState,
    EgoState,
    OrientedBox,
    PlannedTrajectory,
    Pose2,
    Waypoint,
)
from crashbench.observe import Camera, Observation
from crashbench.vehicle import ControlInput

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 64 * 1024 * 1024
CAPABILITIES = ("waypoints", "controls")


class ProtocolError(RuntimeError):
    """Peer violated the message schema or an invariant."""


class TransportError(RuntimeError):
    """Connection-level failure: timeout, refused, or truncated stream."""


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
    remaining = n
    while remaining > 0:
        try:
            chunk = sock.recv(remaining)
        except socket.timeout as exc:
            raise TransportError("receive timed out") from exc
        except OSError as exc:
            raise TransportError(f"receive failed: {exc}") from exc
        if not chunk:
            raise TransportError("connection closed mid-frame")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> dict:
    (length,) = struct.unpack(">I", _recv_exact(sock, 4))
    if length > MAX_FRAME_BYTES:
        raise ProtocolError(f"frame of {length} bytes exceeds limit")
    return decode_message(_recv_exact(sock, length))


# ---------------------------------------------------------------------------
# message builders


def pose_to_wire(pose: Pose2) -> dict:
    return {"x": pose.x, "y": pose.y, "heading": pose.heading}


def pose_from_wire(obj: dict) -> Pose2:
    try:
        return Pose2(float(obj["x"]), float(obj["y"]), float(obj["heading"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"bad pose: {obj!r}") from exc


def actor_to_wire(actor: ActorState) -> dict:
    return {
        "actor_id": actor.actor_id,
        "class_label": actor.class_label.value,
        "pose": pose_to_wire(actor.box.center),
        "length": actor.box.length,
        "width": actor.box.width,
        "velocity": [actor.velocity[0], actor.velocity[1]],
    }


def actor_from_wire(obj: dict) -> ActorState:
    try:
        return ActorState(
            box=OrientedBox(pose_from_wire(obj["pose"]), float(obj["length"]), float(obj["width"])),
            velocity=(float(obj["velocity"][0]), float(obj["velocity"][1])),
            class_label=ActorClass(obj["class_label"]),
            actor_id=str(obj["actor_id"]),
        )
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ProtocolError(f"bad actor: {obj!r}") from exc


def camera_to_wire(camera: Camera) -> dict:
    fx, fy, cx, cy, width, height = camera.intrinsics
    return {
        "camera_id": camera.camera_id,
        "position": list(camera.position),
        "yaw": camera.yaw,
        "intrinsics": {"fx": fx, "fy": fy, "cx": cx, "cy": cy, "width": width, "height": height},
    }


def hello(role: str, version: int = PROTOCOL_VERSION) -> dict:
    return {"type": "hello", "version": version, "role": role}


def hello_ack(capability: str, version: int = PROTOCOL_VERSION) -> dict:
    return {"type": "hello_ack", "version": version, "capability": capability}


def error_message(message: str) -> dict:
    return {"type": "error", "message": message}


def step_message(obs: Observation) -> dict:
    return {
        "type": "step",
        "time": obs.time,
        "ego_pose": pose_to_wire(obs.ego.pose),
        "speed": obs.ego.speed,
        "command": obs.command.value,
        "actors": [actor_to_wire(a) for a in obs.objects],
        "cameras": [camera_to_wire(c) for c in obs.camera_rig],
        "payloads": {k: base64.b64encode(v).decode("ascii") for k, v in sorted(obs.sensor_payload.items())},
    }


def render_request(time: float, ego: EgoState, cameras: Sequence[Camera], actors: Sequence[ActorState]) -> dict:
    return {
        "type": "render",
        "time": time,
        "ego_pose": pose_to_wire(ego.pose),
        "cameras": [camera_to_wire(c) for c in cameras],
        "actors": [actor_to_wire(a) for a in actors],
    }


def frames_message(payloads: Mapping[str, bytes]) -> dict:
    return {
        "type": "frames",
        "payloads": {k: base64.b64encode(v).decode("ascii") for k, v in sorted(payloads.items())},
    }


def payloads_from_wire(obj: dict) -> dict[str, bytes]:
    raw = obj.get("payloads")
    if not isinstance(raw, dict):
        raise ProtocolError("missing payloads{}")
    try:
        return {str(k): base64.b64decode(v) for k, v in raw.items()}
    except (TypeError, ValueError) as exc:
        raise ProtocolError(f"bad payload encoding: {exc}") from exc


def plan_reply(plan: PlannedTrajectory) -> dict:
    waypoints = []
    for w in plan.waypoints:
        entry = {"t": w.time_offset, "x": w.pose.x, "y": w.pose.y, "heading": w.pose.heading}
        if w.speed is not None:
            entry["speed"] = w.speed
        waypoints.append(entry)
    return {"type": "plan", "waypoints": waypoints}


def controls_reply(controls: Sequence[tuple[float, ControlInput]]) -> dict:
    return {
        "type": "controls",
        "controls": [{"t": t, "steering": u.steering, "acceleration": u.acceleration} for t, u in controls],
    }


def plan_from_reply(msg: dict, max_horizon: float) -> PlannedTrajectory:
    """Decode and validate a plan reply; invariant violations are protocol errors."""
    entries = msg.get("waypoints")
    if not isinstance(entries, list) or len(entries) == 0:
        raise ProtocolError("plan reply must carry at least one waypoint")
    waypoints = []
    for obj in entries:
        try:
            speed = obj.get("speed")
            waypoints.append(
                Waypoint(
                    time_offset=float(obj["t"]),
                    pose=Pose2(float(obj["x"]), float(obj["y"]), float(obj["heading"])),
                    speed=None if speed is None else float(speed),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"bad waypoint: {obj!r}") from exc
    try:
        return PlannedTrajectory(tuple(waypoints), max_horizon=max_horizon)
    except ValueError as exc:
        raise ProtocolError(f"invalid trajectory: {exc}") from exc


def controls_from_reply(msg: dict) -> tuple[tuple[float, ControlInput], ...]:
    entries = msg.get("controls")
    if not isinstance(entries, list) or len(entries) == 0:
        raise ProtocolError("controls reply must carry at least one control")
    out = []
    prev = -1.0
    for obj in entries:
        try:
            t = float(obj["t"])
            u = ControlInput(float(obj["steering"]), float(obj["acceleration"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"bad control: {obj!r}") from exc
        if t < 0.0 or t <= prev:
            raise ProtocolError("control time offsets must be non-negative and strictly increasing")
        prev = t
        out.append((t, u))
    return tuple(out)


class BridgeClient:
    """Synchronous request/response client over the framed byte stream."""

    def __init__(self, host: str, port: int, timeout: float = 10.0) -> None:
        self.host = host
        self.port = port
        self.timeout = timeout
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise TransportError(f"cannot connect to {host}:{port}: {exc}") from exc
        self._sock.settimeout(timeout)

    def request(self, msg: dict) -> dict:
        write_frame(self._sock, msg)
        reply = read_frame(self._sock)
        if reply.get("type") == "error":
            raise ProtocolError(f"peer error: {reply.get('message')!r}")
        return reply

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


class PlannerClient(BridgeClient):
    """Planner-bridge session: handshake once, then step/reply exchanges."""

    def __init__(self, host: str, port: int, timeout: float = 10.0) -> None:
        super().__init__(host, port, timeout)
        ack = self.request(hello("simulator"))
        if ack.get("type") != "hello_ack":
            raise ProtocolError(f"expected hello_ack, got {ack.get('type')!r}")
        if ack.get("version") != PROTOCOL_VERSION:
            raise ProtocolError(f"protocol version mismatch: {ack.get('version')!r}")
        capability = ack.get("capability")
        if capability not in CAPABILITIES:
            raise ProtocolError(f"unknown capability {capability!r}")
        self.capability = capability

    def plan(self, obs: Observation, max_horizon: float):
        """Returns ('plan', PlannedTrajectory) or ('controls', tuple)."""
        reply = self.request(step_message(obs))
        kind = reply.get("type")
        if kind == "plan":
            return "plan", plan_from_reply(reply, max_horizon)
        if kind == "controls":
            return "controls", controls_from_reply(reply)
        raise ProtocolError(f"unexpected reply type {kind!r}")


class RenderClient(BridgeClient):
    """Render-bridge session used by the external observation provider."""

    def __init__(self, host: str, port: int, timeout: float = 10.0) -> None:
        super().__init__(host, port, timeout)
        ack = self.request(hello("simulator"))
        if ack.get("type") != "hello_ack":
            raise ProtocolError(f"expected hello_ack, got {ack.get('type')!r}")
        if ack.get("version") != PROTOCOL_VERSION:
            raise ProtocolError(f"protocol version mismatch: {ack.get('version')!r}")

    def render(
        self,
        time: float,
        ego: EgoState,
        cameras: Sequence[Camera],
        actors: Sequence[ActorState],
    ) -> dict[str, bytes]:
        reply = self.request(render_request(time, ego, cameras, actors))
        if reply.get("type") != "frames":
            raise ProtocolError(f"unexpected reply type {reply.get('type')!r}")
        payloads = payloads_from_wire(reply)
        expected = {c.camera_id for c in cameras}
        if set(payloads) != expected:
            raise ProtocolError(
                f"payload cameras {sorted(payloads)} do not match the rig {sorted(expected)}"
            )
        return payloads
