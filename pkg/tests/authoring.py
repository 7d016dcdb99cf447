"""Trace authors for end-to-end trials, written against the default world.

Each author derives its timings from the session constants (joint speed,
plan hold windows) so the traces stay valid if those defaults move.
"""

from __future__ import annotations

import numpy as np

from armsim.kinematics import RigidTransform
from armsim.planner import PoseTarget, ik_solve
from armsim.session import SessionConfig
from armsim.world import TrialConfig, spawn_trial

PLAN_HOLD = 12.0   # generous WE hold covering any plan duration at 0.7 rad/s
DOWN = np.array([0.0, 0.0, -1.0])


def _eye_origin(config: SessionConfig) -> np.ndarray:
    return np.array([0.0, 0.0, config.shoulder_height + 0.25])


def _gaze(t: float, origin: np.ndarray, point_world: np.ndarray) -> dict:
    d = point_world - origin
    d = d / np.linalg.norm(d)
    return {
        "t": round(t, 3),
        "kind": "gaze",
        "origin": [float(v) for v in origin],
        "direction": [float(v) for v in d],
    }


def _gesture(t: float, name: str) -> dict:
    return {"t": round(t, 3), "kind": "gesture", "gesture": name}


def _world_for(config: SessionConfig, trial: TrialConfig):
    shoulder = RigidTransform(translation=np.array([0.0, 0.0, config.shoulder_height]))
    return spawn_trial(trial, shoulder, config.geometry)


def transfer_events(config, box, origin, bid: str, t0: float,
                    marker_world: np.ndarray | None = None) -> tuple[list[dict], float]:
    """One full pick-and-place of block bid starting at t0; returns the
    events and the end time. The place marker defaults to the block's own
    target."""
    sx, sy = box.slots[bid]
    block_top = box.to_world(np.array([sx, sy, 0.05]))
    if marker_world is None:
        tx, ty = box.targets[bid]
        marker_world = box.to_world(np.array([tx, ty, 0.0]))
    ev = [
        _gaze(t0 + 0.05, origin, block_top),
        _gesture(t0 + 0.30, "WF"),                      # lock selection
        _gesture(t0 + 0.50, "WE"),                      # plan + execute reach
        _gesture(t0 + 0.50 + PLAN_HOLD, "HC"),          # close: attach
        _gaze(t0 + 0.70 + PLAN_HOLD, origin, marker_world),
        _gesture(t0 + 0.90 + PLAN_HOLD, "WF"),          # freeze marker
        _gesture(t0 + 1.10 + PLAN_HOLD, "WE"),          # plan + execute place
        _gesture(t0 + 1.10 + 2 * PLAN_HOLD, "HC"),      # open: release
        _gesture(t0 + 1.30 + 2 * PLAN_HOLD, "NM"),
    ]
    return ev, t0 + 1.60 + 2 * PLAN_HOLD


def perfect_method_d_trace(config: SessionConfig, trial: TrialConfig) -> list[dict]:
    """All four blocks transferred onto their targets in order."""
    world = _world_for(config, trial)
    origin = _eye_origin(config)
    events: list[dict] = []
    t = 0.0
    for bid in trial.order:
        ev, t = transfer_events(config, world.box, origin, bid, t)
        events.extend(ev)
    return events


def dropped_same_side_trace(config: SessionConfig, trial: TrialConfig) -> list[dict]:
    """Grasp the first block, then release it in place without moving."""
    world = _world_for(config, trial)
    origin = _eye_origin(config)
    bid = trial.order[0]
    sx, sy = world.box.slots[bid]
    return [
        _gaze(0.05, origin, world.box.to_world(np.array([sx, sy, 0.05]))),
        _gesture(0.30, "WF"),
        _gesture(0.50, "WE"),
        _gesture(0.50 + PLAN_HOLD, "HC"),
        _gesture(0.80 + PLAN_HOLD, "NM"),
        _gesture(1.00 + PLAN_HOLD, "HC"),
    ]


def crossed_not_reached_trace(config: SessionConfig, trial: TrialConfig) -> list[dict]:
    """Full transfer of the first block, placed far from its target."""
    world = _world_for(config, trial)
    origin = _eye_origin(config)
    bid = trial.order[0]
    wrong_spot = world.box.to_world(np.array([0.10, 0.22, 0.0]))
    ev, _ = transfer_events(config, world.box, origin, bid, 0.0, marker_world=wrong_spot)
    return ev


def nm_abort_trace(config: SessionConfig, trial: TrialConfig) -> list[dict]:
    """Start a reach, abort it mid-plan with NM, then replan."""
    world = _world_for(config, trial)
    origin = _eye_origin(config)
    bid = trial.order[0]
    sx, sy = world.box.slots[bid]
    return [
        _gaze(0.05, origin, world.box.to_world(np.array([sx, sy, 0.05]))),
        _gesture(0.30, "WF"),
        _gesture(0.50, "WE"),
        _gesture(1.50, "NM"),   # mid-plan abort
        _gesture(1.70, "WE"),   # second plan attempt
        _gesture(1.70 + PLAN_HOLD, "NM"),
    ]


def dropped_floor_trace(config: SessionConfig, trial: TrialConfig) -> list[dict]:
    """Method A script: march each joint to the grasp pose, attach, swing
    the arm away from the partition until the block hangs past the table
    edge, and release it onto the room floor."""
    assert trial.method == "A"
    world = _world_for(config, trial)
    box = world.box
    bid = trial.order[0]
    sx, sy = box.slots[bid]
    hover = np.array([sx, sy, 0.075])
    target = PoseTarget(
        position=world.base_in_box().inverse().apply(hover),
        approach_axis=DOWN,
    )
    q_hover = ik_solve(config.geometry, target, [config.geometry.home_configuration])
    assert q_hover is not None, "authoring failed: grasp pose unreachable"

    events: list[dict] = []
    speed = config.speeds.joint
    t = 0.1
    q = config.geometry.home_configuration.copy()

    def add(ts, name):
        events.append(_gesture(ts, name))

    for j in range(7):
        dq = q_hover[j] - q[j]
        if abs(dq) > 1e-4:
            add(t, "WF" if dq > 0 else "WE")
            t += round(abs(dq) / speed, 3)
            add(t, "NM")
            t += 0.05
        if j < 6:
            add(t, "HO")
            t += 0.05
            add(t, "NM")
            t += 0.05
    add(t, "HC")        # attach
    t += 0.3
    for _ in range(2):  # cycle joint 6 -> 0 -> 1 (shoulder add/abd)
        add(t, "HO")
        t += 0.05
        add(t, "NM")
        t += 0.05
    swing = -1.1 - q_hover[1]   # past the table edge, away from the partition
    add(t, "WE" if swing < 0 else "WF")
    t += round(abs(swing) / speed, 3)
    add(t, "NM")
    t += 0.1
    add(t, "HC")        # release over the floor
    return events
