"""Expose an environment over TCP, or drive a remote one as if it were local.

Every message is a single JSON object on one UTF-8 line. The client sends
``spec``, ``reset`` and ``step`` requests; the server answers each with
exactly one ``spec``, ``obs``, ``transition`` or ``error`` message::

    -> {"type": "spec"}
    <- {"type": "spec", "protocol_version": 1, "obs_dim": 9, "act_dim": 2,
        "act_low": [0.0, 0.0], "act_high": [1.0, 1.0], ...}
    -> {"type": "reset", "seed": 7}
    <- {"type": "obs", "observation": [...]}
    -> {"type": "step", "action": [0.5, 1.0]}
    <- {"type": "transition", "observation": [...], "reward": -0.3,
        "done": false, "info": {...}}

Floats are written in their shortest round-trip form, so values survive the
trip bit-for-bit. A connection must follow ``spec* (reset step*)*``;
anything else gets an error reply and the server hangs up.
"""

from __future__ import annotations

import json
import logging
import math
import socket
import threading

import numpy as np

from .env_api import ActionSpec, Environment, ObservationSpec, StepResult
from .errors import ActionDimensionMismatch, ConnectError, EpisodeFinished, ProtocolVersionMismatch, RemoteError

PROTOCOL_VERSION = 1
MAX_LINE = 1 << 20

log = logging.getLogger(__name__)


def parse_address(address) -> tuple[str, int]:
    if isinstance(address, tuple):
        return address[0], int(address[1])
    host, sep, port = str(address).rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"expected HOST:PORT, got {address!r}")
    return host or "127.0.0.1", int(port)


def encode(message: dict) -> bytes:
    return (json.dumps(message, allow_nan=False, separators=(",", ":")) + "\n").encode("utf-8")


def _floats(values) -> list:
    return [float(v) for v in np.asarray(values, dtype=np.float64).reshape(-1)]


class _ProtocolViolation(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


class BridgeServer:
    """Serves one environment to one client at a time.

    Bind happens in the constructor, so ``address`` is usable immediately
    (pass port 0 to get a free port).
    """

    def __init__(self, env: Environment, address=("127.0.0.1", 0), protocol_version: int = PROTOCOL_VERSION):
        self.env = env
        self.protocol_version = protocol_version
        self._sock = socket.create_server(parse_address(address))
        self._closed = threading.Event()

    @property
    def address(self) -> tuple[str, int]:
        return self._sock.getsockname()[:2]

    def serve_forever(self, max_clients: int | None = None) -> None:
        served = 0
        while not self._closed.is_set() and (max_clients is None or served < max_clients):
            try:
                conn, peer = self._sock.accept()
            except OSError:
                if self._closed.is_set():
                    return
                raise
            served += 1
            log.info("bridge client connected from %s:%s", *peer[:2])
            try:
                with conn:
                    self._handle(conn)
            except OSError as exc:
                log.warning("bridge connection dropped: %s", exc)
            log.info("bridge client disconnected")
            self.env.reset()

    def start(self, max_clients: int | None = None) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, args=(max_clients,), daemon=True)
        thread.start()
        return thread

    def close(self) -> None:
        self._closed.set()
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _handle(self, conn: socket.socket) -> None:
        reader = conn.makefile("rb")
        started = False
        while True:
            line = reader.readline(MAX_LINE + 1)
            if not line:
                return
            try:
                reply, started = self._dispatch(line, started)
            except _ProtocolViolation as exc:
                conn.sendall(encode({"type": "error", "code": exc.code, "message": str(exc)}))
                return
            conn.sendall(encode(reply))

    def _dispatch(self, line: bytes, started: bool) -> tuple[dict, bool]:
        if len(line) > MAX_LINE or not line.endswith(b"\n"):
            raise _ProtocolViolation("parse", "message is not a complete line")
        try:
            msg = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise _ProtocolViolation("parse", f"cannot parse message: {exc}") from None
        if not isinstance(msg, dict) or not isinstance(msg.get("type"), str):
            raise _ProtocolViolation("parse", "message must be a JSON object with a string 'type'")

        kind = msg["type"]
        if kind == "spec":
            if started:
                raise _ProtocolViolation("out_of_order", "spec is only allowed before the first reset")
            return self._spec_message(), started
        if kind == "reset":
            seed = msg.get("seed")
            if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int) or seed < 0):
                raise _ProtocolViolation("bad_request", f"seed must be a nonnegative integer, got {seed!r}")
            obs = self.env.reset(seed=seed)
            return {"type": "obs", "observation": _floats(obs)}, True
        if kind == "step":
            if not started:
                raise _ProtocolViolation("not_reset", "step received before any reset")
            action = msg.get("action")
            if not isinstance(action, list) or not all(
                isinstance(a, (int, float)) and not isinstance(a, bool) for a in action
            ):
                raise _ProtocolViolation("bad_request", "action must be an array of numbers")
            try:
                result = self.env.step(np.array(action, dtype=np.float64))
            except ActionDimensionMismatch as exc:
                return {"type": "error", "code": "action_dim", "message": str(exc)}, started
            except EpisodeFinished as exc:
                return {"type": "error", "code": "episode_finished", "message": str(exc)}, started
            return {
                "type": "transition",
                "observation": _floats(result.observation),
                "reward": float(result.reward),
                "done": bool(result.done),
                "info": {k: float(v) for k, v in result.info.items()},
            }, started
        raise _ProtocolViolation("unknown_type", f"unknown message type {kind!r}")

    def _spec_message(self) -> dict:
        a, o = self.env.action_spec, self.env.observation_spec
        return {
            "type": "spec",
            "protocol_version": self.protocol_version,
            "obs_dim": o.dim,
            "act_dim": a.dim,
            "act_low": _floats(a.low),
            "act_high": _floats(a.high),
            "obs_low": _floats(o.low),
            "obs_high": _floats(o.high),
        }


def serve(env: Environment, address, max_clients: int | None = None) -> None:
    """Block serving ``env`` at ``address``."""
    with BridgeServer(env, address) as server:
        log.info("bridge listening on %s:%s", *server.address)
        server.serve_forever(max_clients)


class RemoteEnvironment(Environment):
    """Environment whose reset/step are forwarded to a bridge server."""

    def __init__(self, address, timeout: float = 30.0):
        host, port = parse_address(address)
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise ConnectError(f"cannot connect to bridge at {host}:{port}: {exc}") from exc
        self._sock.settimeout(timeout)
        self._reader = self._sock.makefile("rb")
        spec = self._request({"type": "spec"}, "spec")
        version = spec.get("protocol_version")
        if version != PROTOCOL_VERSION:
            self.close()
            raise ProtocolVersionMismatch(
                f"server speaks protocol version {version}, client speaks {PROTOCOL_VERSION}"
            )
        self.action_spec = ActionSpec(spec["act_dim"], spec["act_low"], spec["act_high"])
        obs_dim = spec["obs_dim"]
        self.observation_spec = ObservationSpec(
            obs_dim,
            spec.get("obs_low", [-math.inf] * obs_dim),
            spec.get("obs_high", [math.inf] * obs_dim),
        )

    def _request(self, message: dict, expect: str) -> dict:
        try:
            self._sock.sendall(encode(message))
            line = self._reader.readline(MAX_LINE + 1)
        except socket.timeout as exc:
            raise ConnectError("bridge server did not answer in time") from exc
        except OSError as exc:
            raise ConnectError(f"bridge connection failed: {exc}") from exc
        if not line:
            raise ConnectError("bridge server closed the connection")
        try:
            reply = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ConnectError(f"unreadable reply from bridge server: {exc}") from exc
        if reply.get("type") == "error":
            raise RemoteError(reply.get("code", "unknown"), reply.get("message", ""))
        if reply.get("type") != expect:
            raise RemoteError("unexpected_reply", f"expected {expect!r}, got {reply.get('type')!r}")
        return reply

    def reset(self, seed: int | None = None) -> np.ndarray:
        message = {"type": "reset"}
        if seed is not None:
            message["seed"] = int(seed)
        return np.array(self._request(message, "obs")["observation"], dtype=np.float64)

    def step(self, action) -> StepResult:
        action = np.asarray(action, dtype=np.float64).reshape(-1)
        if action.shape[0] != self.action_spec.dim:
            raise ActionDimensionMismatch(
                f"expected an action of length {self.action_spec.dim}, got {action.shape[0]}"
            )
        reply = self._request({"type": "step", "action": _floats(action)}, "transition")
        return StepResult(
            np.array(reply["observation"], dtype=np.float64),
            float(reply["reward"]),
            bool(reply["done"]),
            {k: float(v) for k, v in reply.get("info", {}).items()},
        )

    def close(self) -> None:
        try:
            self._reader.close()
            self._sock.close()
        except OSError:
            pass


def remote_environment(address, timeout: float = 30.0) -> RemoteEnvironment:
    return RemoteEnvironment(address, timeout)
