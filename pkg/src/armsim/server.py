"""Live operator service: a WebSocket endpoint that paces the simulation
against the wall clock, broadcasts snapshots at the display rate, and
applies client inputs through the same message schema the trace replayer
uses. See PROTOCOL.md for the exact wire format.
"""

from __future__ import annotations

import asyncio
import json
import logging
import time
from pathlib import Path

from .emg import GESTURE_NAMES, GestureClass
from .session import PROTOCOL_VERSION, SessionConfig, TrialRunner, build_gesture_feed
from .world import arrangements

log = logging.getLogger("armsim.server")

MAX_CATCHUP_STEPS = 100  # cap wall-clock catch-up per wake


class LiveSession:
    """Lifecycle and input routing for one operator session."""

    IDLE = "idle"
    RUNNING = "running"
    DONE = "done"

    def __init__(self, config: SessionConfig, log_dir=None):
        self.config = config
        self.log_dir = Path(log_dir or config.log_dir)
        self.log_dir.mkdir(parents=True, exist_ok=True)
        self.trial_index = 0
        self.runner: TrialRunner | None = None
        self.lifecycle = self.IDLE
        self.method_override: str | None = None
        self.log_paths: list[Path] = []

    # -- lifecycle ---------------------------------------------------------

    def start_trial(self) -> str | None:
        if self.lifecycle == self.RUNNING:
            return "trial already running"
        if self.trial_index >= len(self.config.trials):
            return "no trials left in the session plan"
        trial = self.config.trials[self.trial_index]
        if self.method_override is not None:
            from dataclasses import replace
            trial = replace(trial, method=self.method_override)
        path = self.log_dir / f"trial_{self.trial_index:03d}_{trial.method}.ndjson"
        feed = build_gesture_feed(self.config.gesture_source)
        self.runner = TrialRunner(self.config, trial, path, feed=feed)
        self.log_paths.append(path)
        self.lifecycle = self.RUNNING
        return None

    def stop_trial(self) -> str | None:
        if self.lifecycle != self.RUNNING or self.runner is None:
            return "no trial running"
        if not self.runner.finished:
            self.runner._finish("stopped")
        self.trial_index += 1
        self.lifecycle = self.IDLE
        return None

    def reset_trial(self) -> str | None:
        """Abandon the current trial without advancing the plan."""
        if self.runner is None:
            return "no trial to reset"
        if not self.runner.finished:
            self.runner._finish("reset")
        self.runner = None
        self.lifecycle = self.IDLE
        return None

    def select_method(self, method: str) -> str | None:
        if self.lifecycle == self.RUNNING:
            return "cannot change method mid-trial"
        self.method_override = method
        return None


def handle_message(session: LiveSession, msg) -> tuple[bool, dict | None]:
    """Validate and apply one client message; returns (ok, reply).

    Streaming inputs (gesture, gaze, shoulder) are applied silently; trial
    controls and method selection are acknowledged. Malformed messages are
    rejected without touching the session.
    """
    if not isinstance(msg, dict):
        return False, {"kind": "reject", "reason": "message must be a JSON object"}
    kind = msg.get("kind")
    try:
        if kind == "hello":
            return True, {"kind": "hello", "version": PROTOCOL_VERSION}
        if kind == "gesture":
            name = msg.get("gesture")
            if name not in GESTURE_NAMES:
                return False, {"kind": "reject", "of": "gesture", "reason": f"unknown gesture {name!r}"}
            if session.runner is not None and not session.runner.finished:
                session.runner.inject_gesture(GestureClass[name], session.runner.world.time)
            return True, None
        if kind == "gaze":
            origin = [float(v) for v in msg["origin"]]
            direction = [float(v) for v in msg["direction"]]
            if len(origin) != 3 or len(direction) != 3:
                raise ValueError("origin and direction must be 3-vectors")
            if session.runner is not None and not session.runner.finished:
                session.runner.inject_gaze(origin, direction, session.runner.world.time)
            return True, None
        if kind == "shoulder":
            position = [float(v) for v in msg["position"]]
            rotation = [float(v) for v in msg.get("rotation", (1.0, 0.0, 0.0, 0.0))]
            if len(position) != 3 or len(rotation) != 4:
                raise ValueError("position must be a 3-vector, rotation a quaternion")
            if session.runner is not None and not session.runner.finished:
                session.runner.inject_shoulder(position, rotation)
            return True, None
        if kind == "trial":
            action = msg.get("action")
            if action == "start":
                err = session.start_trial()
            elif action == "stop":
                err = session.stop_trial()
            elif action == "reset":
                err = session.reset_trial()
            else:
                return False, {"kind": "reject", "of": "trial", "reason": f"unknown action {action!r}"}
            if err:
                return False, {"kind": "reject", "of": "trial", "reason": err}
            return True, {"kind": "ack", "of": "trial", "action": action,
                          "trial_index": session.trial_index, "state": session.lifecycle}
        if kind == "method":
            method = msg.get("method")
            if method not in ("A", "B", "C", "D"):
                return False, {"kind": "reject", "of": "method", "reason": f"unknown method {method!r}"}
            err = session.select_method(method)
            if err:
                return False, {"kind": "reject", "of": "method", "reason": err}
            return True, {"kind": "ack", "of": "method", "method": method}
        return False, {"kind": "reject", "reason": f"unknown message kind {kind!r}"}
    except (KeyError, TypeError, ValueError) as err:
        return False, {"kind": "reject", "of": kind, "reason": str(err)}


async def serve(config: SessionConfig, host=None, port=None, log_dir=None, ready=None):
    """Run the live WebSocket session until cancelled.

    The simulation advances only while at least one client is connected; a
    full disconnect pauses the trial, and a reconnect resumes it from the
    next snapshot.
    """
    import websockets

    session = LiveSession(config, log_dir=log_dir)
    clients: set = set()
    host = host or config.bind_host
    port = config.bind_port if port is None else port

    async def handler(websocket):
        clients.add(websocket)
        try:
            hello = {
                "kind": "hello",
                "version": PROTOCOL_VERSION,
                "methods": ["A", "B", "C", "D"],
                "trial_index": session.trial_index,
                "trials": len(config.trials),
                "arrangements": len(arrangements()),
                "state": session.lifecycle,
            }
            await websocket.send(json.dumps(hello))
            if session.runner is not None:
                await websocket.send(json.dumps(session.runner.scene_message()))
            async for raw in websocket:
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError:
                    await websocket.send(json.dumps({"kind": "reject", "reason": "invalid JSON"}))
                    continue
                ok, reply = handle_message(session, msg)
                if reply is not None:
                    await websocket.send(json.dumps(reply))
                if (
                    ok
                    and isinstance(reply, dict)
                    and reply.get("of") == "trial"
                    and reply.get("action") == "start"
                    and session.runner is not None
                ):
                    await broadcast(json.dumps(session.runner.scene_message()))
        finally:
            clients.discard(websocket)

    async def broadcast(payload: str):
        dead = []
        for ws in clients:
            try:
                await ws.send(payload)
            except Exception:
                dead.append(ws)
        for ws in dead:
            clients.discard(ws)

    async def loop():
        tick = config.tick
        last_wall = time.monotonic()
        sent_snapshots = 0
        while True:
            await asyncio.sleep(tick * 4)
            now = time.monotonic()
            elapsed = now - last_wall
            last_wall = now
            runner = session.runner
            if session.lifecycle != LiveSession.RUNNING or runner is None:
                continue
            if not clients:
                continue  # paused until a client returns
            steps = min(int(elapsed / tick), MAX_CATCHUP_STEPS)
            for _ in range(steps):
                runner.tick()
                if runner.snapshot_count > sent_snapshots and runner.latest_snapshot is not None:
                    sent_snapshots = runner.snapshot_count
                    await broadcast(json.dumps(runner.latest_snapshot))
                if runner.finished:
                    session.lifecycle = LiveSession.DONE if (
                        session.trial_index + 1 >= len(config.trials)
                    ) else LiveSession.IDLE
                    session.trial_index += 1
                    await broadcast(json.dumps({
                        "kind": "trial_end",
                        "reason": runner.end_reason,
                        "outcomes": runner.outcomes,
                    }))
                    break

    server = await websockets.serve(handler, host, port)
    bound_port = server.sockets[0].getsockname()[1] if server.sockets else port
    if ready is not None:
        ready.set_result((host, bound_port))
    log.info("serving on ws://%s:%s", host, bound_port)
    try:
        await loop()
    finally:
        server.close()
        await server.wait_closed()
