"""Synchronous single-session planner server.

One client session at a time: the simulator connects, handshakes, then
exchanges one step/reply pair per tick until it disconnects; the server
then accepts the next session (the simulator opens one session per run).
The callback sees exactly the observation the simulator sent and its reply
is validated against the plan invariants before leaving the process; a
callback exception turns into an error reply and a clean session close.
"""

from __future__ import annotations

import socket
from typing import Callable, Union

from crashbench_sdk import protocol
from crashbench_sdk.protocol import (
    ControlsReply,
    Observation,
    PlanReply,
    ProtocolError,
    TransportError,
)

PlannerCallback = Callable[[Observation], Union[PlanReply, ControlsReply]]


class PlannerServer:
    def __init__(
        self,
        callback: PlannerCallback,
        host: str = "127.0.0.1",
        port: int = 0,
        capability: str = "waypoints",
    ) -> None:
        if capability not in ("waypoints", "controls"):
            raise ValueError(f"unknown capability {capability!r}")
        self.callback = callback
        self.capability = capability
        self._sock = socket.create_server((host, port))
        self.host, self.port = self._sock.getsockname()[:2]
        self._running = True

    def serve_forever(self) -> None:
        """Accept and serve sessions until close() is called."""
        while self._running:
            try:
                conn, _ = self._sock.accept()
            except OSError:
                break
            with conn:
                self._serve_session(conn)

    def _serve_session(self, conn: socket.socket) -> None:
        try:
            hello = protocol.read_frame(conn)
        except (TransportError, ProtocolError):
            return
        if hello.get("type") != "hello" or hello.get("version") != protocol.PROTOCOL_VERSION:
            protocol.write_frame(
                conn, protocol.error_message(f"unsupported handshake: {hello.get('version')!r}")
            )
            return
        protocol.write_frame(conn, protocol.hello_ack(self.capability))
        while True:
            try:
                msg = protocol.read_frame(conn)
            except TransportError:
                return  # simulator closed the session
            except ProtocolError as exc:
                self._try_error(conn, str(exc))
                return
            if msg.get("type") != "step":
                self._try_error(conn, f"unexpected message type {msg.get('type')!r}")
                return
            try:
                obs = protocol.observation_from_step(msg)
                reply = self.callback(obs)
                body = reply.to_message()
            except ProtocolError as exc:
                self._try_error(conn, f"invalid reply: {exc}")
                return
            except Exception as exc:  # fault containment for the callback
                self._try_error(conn, f"planner callback failed: {exc!r}")
                return
            expected = "plan" if self.capability == "waypoints" else "controls"
            if body["type"] != expected:
                self._try_error(conn, f"reply kind {body['type']!r} does not match capability")
                return
            try:
                protocol.write_frame(conn, body)
            except TransportError:
                return

    @staticmethod
    def _try_error(conn: socket.socket, message: str) -> None:
        try:
            protocol.write_frame(conn, protocol.error_message(message))
        except TransportError:
            pass

    def close(self) -> None:
        self._running = False
        try:
            self._sock.close()
        except OSError:
            pass


def serve(
    callback: PlannerCallback,
    host: str = "127.0.0.1",
    port: int = 4711,
    capability: str = "waypoints",
) -> None:
    """Blocking convenience entry point."""
    server = PlannerServer(callback, host, port, capability)
    print(f"planner server listening on {server.host}:{server.port}")
    try:
        server.serve_forever()
    finally:
        server.close()
