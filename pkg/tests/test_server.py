import asyncio
import json

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from armsim.server import LiveSession, handle_message, serve
from armsim.session import SessionConfig
from armsim.world import TrialConfig


def make_session(tmp_path, duration=5.0, method="D"):
    cfg = SessionConfig()
    cfg.trials = [TrialConfig(method=method, duration=duration)]
    return LiveSession(cfg, log_dir=tmp_path)


# --- handle_message -------------------------------------------------------------

def test_hello_roundtrip(tmp_path):
    ok, reply = handle_message(make_session(tmp_path), {"kind": "hello", "version": 1})
    assert ok and reply["kind"] == "hello"


def test_trial_start_stop(tmp_path):
    session = make_session(tmp_path)
    ok, reply = handle_message(session, {"kind": "trial", "action": "start"})
    assert ok and reply["kind"] == "ack"
    assert session.lifecycle == LiveSession.RUNNING
    ok, reply = handle_message(session, {"kind": "trial", "action": "start"})
    assert not ok and "running" in reply["reason"]
    ok, reply = handle_message(session, {"kind": "trial", "action": "stop"})
    assert ok
    assert session.lifecycle == LiveSession.IDLE


def test_gesture_applied_to_running_trial(tmp_path):
    session = make_session(tmp_path)
    handle_message(session, {"kind": "trial", "action": "start"})
    ok, reply = handle_message(session, {"kind": "gesture", "gesture": "WF"})
    assert ok and reply is None
    session.runner.tick()
    assert session.runner.current_gesture.name == "WF"


def test_unknown_gesture_rejected(tmp_path):
    session = make_session(tmp_path)
    handle_message(session, {"kind": "trial", "action": "start"})
    ok, reply = handle_message(session, {"kind": "gesture", "gesture": "FIST"})
    assert not ok and reply["kind"] == "reject"


def test_gaze_and_shoulder_applied(tmp_path):
    session = make_session(tmp_path)
    handle_message(session, {"kind": "trial", "action": "start"})
    ok, _ = handle_message(session, {"kind": "gaze", "origin": [0, 0, 1.6], "direction": [0, 0, -1]})
    assert ok
    ok, _ = handle_message(session, {"kind": "shoulder", "position": [0, 0.01, 1.4]})
    assert ok
    session.runner.tick()
    assert session.runner.gaze is not None
    assert session.runner.world.shoulder.translation[1] == pytest.approx(0.01)


def test_malformed_payload_rejected_without_side_effects(tmp_path):
    session = make_session(tmp_path)
    handle_message(session, {"kind": "trial", "action": "start"})
    before = session.runner.world.shoulder.translation.copy()
    ok, reply = handle_message(session, {"kind": "shoulder", "position": [0, 0]})
    assert not ok and reply["kind"] == "reject"
    assert np.array_equal(session.runner.world.shoulder.translation, before)


def test_method_select_between_trials(tmp_path):
    session = make_session(tmp_path)
    ok, reply = handle_message(session, {"kind": "method", "method": "B"})
    assert ok
    handle_message(session, {"kind": "trial", "action": "start"})
    assert session.runner.trial.method == "B"
    ok, reply = handle_message(session, {"kind": "method", "method": "A"})
    assert not ok and "mid-trial" in reply["reason"]


def test_reset_does_not_advance_plan(tmp_path):
    session = make_session(tmp_path)
    handle_message(session, {"kind": "trial", "action": "start"})
    assert session.trial_index == 0
    ok, _ = handle_message(session, {"kind": "trial", "action": "reset"})
    assert ok
    assert session.trial_index == 0
    ok, _ = handle_message(session, {"kind": "trial", "action": "start"})
    assert ok


def test_unknown_kind_rejected(tmp_path):
    ok, reply = handle_message(make_session(tmp_path), {"kind": "selfdestruct"})
    assert not ok and "unknown message kind" in reply["reason"]


json_values = st.recursive(
    st.none() | st.booleans() | st.floats(allow_nan=False, allow_infinity=False)
    | st.integers(-10, 10) | st.text(max_size=8),
    lambda children: st.lists(children, max_size=4) | st.dictionaries(st.text(max_size=6), children, max_size=4),
    max_leaves=8,
)
fuzz_messages = st.dictionaries(
    st.sampled_from(["kind", "gesture", "origin", "direction", "position", "rotation",
                     "action", "method", "version", "extra"]),
    json_values,
    max_size=6,
)


@settings(max_examples=150, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(msg=fuzz_messages)
def test_fuzz_messages_never_corrupt_world(tmp_path_factory, msg):
    tmp = tmp_path_factory.mktemp("fuzz")
    session = make_session(tmp, duration=1.0)
    handle_message(session, {"kind": "trial", "action": "start"})
    ok, reply = handle_message(session, msg)
    if not ok:
        assert reply is None or reply["kind"] == "reject"
    runner = session.runner
    for _ in range(3):
        if runner is not None and not runner.finished:
            runner.tick()
    # world invariants hold regardless of the message
    if runner is not None:
        world = runner.world
        attached = [bid for bid in world.blocks if bid == world.attached]
        assert len(attached) <= 1
        assert len(world.blocks) == 4
        if runner.belief.probabilities:
            assert sum(runner.belief.probabilities.values()) == pytest.approx(1.0, abs=1e-9)


# --- live websocket e2e -----------------------------------------------------------

def test_live_server_roundtrip(tmp_path):
    import websockets

    async def scenario():
        cfg = SessionConfig()
        cfg.trials = [TrialConfig(method="D", duration=30.0)]
        ready = asyncio.get_running_loop().create_future()
        task = asyncio.create_task(serve(cfg, port=0, log_dir=tmp_path, ready=ready))
        host, port = await asyncio.wait_for(ready, timeout=5)
        async with websockets.connect(f"ws://{host}:{port}") as ws:
            hello = json.loads(await asyncio.wait_for(ws.recv(), timeout=2))
            assert hello["kind"] == "hello" and hello["version"] == 1
            await ws.send(json.dumps({"kind": "trial", "action": "start"}))
            snapshots = []
            ack = None
            deadline = asyncio.get_running_loop().time() + 5
            while asyncio.get_running_loop().time() < deadline and len(snapshots) < 8:
                msg = json.loads(await asyncio.wait_for(ws.recv(), timeout=3))
                if msg["kind"] == "ack":
                    ack = msg
                    await ws.send(json.dumps({"kind": "gesture", "gesture": "WF"}))
                    await ws.send(json.dumps({
                        "kind": "gaze", "origin": [0, 0, 1.65], "direction": [0.3, -0.05, -0.6],
                    }))
                elif msg["kind"] == "snapshot":
                    snapshots.append(msg)
            assert ack is not None and ack["of"] == "trial"
            assert len(snapshots) >= 8
            snap = snapshots[-1]
            for key in ("q", "hand", "blocks", "mode", "remaining", "selection"):
                assert key in snap
            # simulated snapshot cadence is 1/60 s
            deltas = np.diff([s["t"] for s in snapshots])
            assert np.allclose(deltas, 1 / 60, atol=2e-3)
        task.cancel()
        try:
            await task
        except asyncio.CancelledError:
            pass

    asyncio.run(scenario())


def test_live_server_reconnect_resumes(tmp_path):
    import websockets

    async def scenario():
        cfg = SessionConfig()
        cfg.trials = [TrialConfig(method="A", duration=30.0)]
        ready = asyncio.get_running_loop().create_future()
        task = asyncio.create_task(serve(cfg, port=0, log_dir=tmp_path, ready=ready))
        host, port = await asyncio.wait_for(ready, timeout=5)
        uri = f"ws://{host}:{port}"
        async with websockets.connect(uri) as ws:
            await ws.recv()
            await ws.send(json.dumps({"kind": "trial", "action": "start"}))
            t_last = None
            for _ in range(10):
                msg = json.loads(await asyncio.wait_for(ws.recv(), timeout=3))
                if msg["kind"] == "snapshot":
                    t_last = msg["t"]
        await asyncio.sleep(0.2)  # no clients: simulation paused
        async with websockets.connect(uri) as ws:
            hello = json.loads(await ws.recv())
            assert hello["kind"] == "hello"
            msg = None
            for _ in range(10):
                msg = json.loads(await asyncio.wait_for(ws.recv(), timeout=3))
                if msg["kind"] == "snapshot":
                    break
            assert msg is not None and msg["kind"] == "snapshot"
            # resumed within a few snapshot periods of where it paused
            assert msg["t"] - t_last < 0.5
        task.cancel()
        try:
            await task
        except asyncio.CancelledError:
            pass

    asyncio.run(scenario())
