import socket
import threading

import pytest

from crashbench_sdk import protocol
from crashbench_sdk.example import constant_velocity_planner
from crashbench_sdk.protocol import ControlsReply, PlanReply
from crashbench_sdk.server import PlannerServer


def start_server(callback, capability="waypoints"):
    server = PlannerServer(callback, port=0, capability=capability)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server


def connect(server):
    sock = socket.create_connection((server.host, server.port), timeout=5.0)
    sock.settimeout(5.0)
    return sock


def handshake(sock):
    protocol.write_frame(sock, {"type": "hello", "version": protocol.PROTOCOL_VERSION, "role": "simulator"})
    return protocol.read_frame(sock)


STEP = {
    "type": "step",
    "time": 0.0,
    "ego_pose": {"x": 1.0, "y": 2.0, "heading": 0.5},
    "speed": 8.0,
    "command": "straight",
    "actors": [],
    "cameras": [],
    "payloads": {},
}


class TestSession:
    def test_handshake_and_step(self):
        server = start_server(constant_velocity_planner)
        sock = connect(server)
        ack = handshake(sock)
        assert ack == {"type": "hello_ack", "version": 1, "capability": "waypoints"}
        protocol.write_frame(sock, STEP)
        reply = protocol.read_frame(sock)
        assert reply["type"] == "plan"
        assert len(reply["waypoints"]) == 6
        assert reply["waypoints"][0]["t"] == 0.5
        sock.close()
        server.close()

    def test_sequential_sessions(self):
        server = start_server(constant_velocity_planner)
        for _ in range(3):
            sock = connect(server)
            assert handshake(sock)["type"] == "hello_ack"
            protocol.write_frame(sock, STEP)
            assert protocol.read_frame(sock)["type"] == "plan"
            sock.close()
        server.close()

    def test_unknown_version_refused(self):
        server = start_server(constant_velocity_planner)
        sock = connect(server)
        protocol.write_frame(sock, {"type": "hello", "version": 99, "role": "simulator"})
        reply = protocol.read_frame(sock)
        assert reply["type"] == "error"
        sock.close()
        server.close()

    def test_callback_exception_contained(self):
        def broken(obs):
            raise RuntimeError("boom")

        server = start_server(broken)
        sock = connect(server)
        handshake(sock)
        protocol.write_frame(sock, STEP)
        reply = protocol.read_frame(sock)
        assert reply["type"] == "error"
        assert "boom" in reply["message"]
        # Session is closed after the error.
        with pytest.raises(protocol.TransportError):
            protocol.read_frame(sock)
        sock.close()
        server.close()

    def test_invalid_reply_rejected_before_sending(self):
        def empty_plan(obs):
            return PlanReply(())

        server = start_server(empty_plan)
        sock = connect(server)
        handshake(sock)
        protocol.write_frame(sock, STEP)
        reply = protocol.read_frame(sock)
        assert reply["type"] == "error"
        sock.close()
        server.close()

    def test_capability_mismatch_rejected(self):
        def controls(obs):
            return ControlsReply(((0.0, 0.0, -1.0),))

        server = start_server(controls, capability="waypoints")
        sock = connect(server)
        handshake(sock)
        protocol.write_frame(sock, STEP)
        assert protocol.read_frame(sock)["type"] == "error"
        sock.close()
        server.close()

    def test_controls_capability_roundtrip(self):
        def controls(obs):
            return ControlsReply(((0.0, 0.05, -2.0), (1.0, 0.0, 0.0)))

        server = start_server(controls, capability="controls")
        sock = connect(server)
        ack = handshake(sock)
        assert ack["capability"] == "controls"
        protocol.write_frame(sock, STEP)
        reply = protocol.read_frame(sock)
        assert reply["type"] == "controls"
        assert reply["controls"][0]["acceleration"] == -2.0
        sock.close()
        server.close()

    def test_callback_sees_observation_verbatim(self):
        seen = {}

        def spy(obs):
            seen["obs"] = obs
            return constant_velocity_planner(obs)

        server = start_server(spy)
        sock = connect(server)
        handshake(sock)
        protocol.write_frame(sock, STEP)
        protocol.read_frame(sock)
        sock.close()
        server.close()
        obs = seen["obs"]
        assert (obs.x, obs.y, obs.heading, obs.speed) == (1.0, 2.0, 0.5, 8.0)
        assert obs.command == "straight"
