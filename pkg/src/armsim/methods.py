"""Finite-state controllers mapping debounced gesture events to arm motion.

Method A drives one joint at a time, B drives the end-effector along base
frame axes through the pseudoinverse velocity step, and C/D plan and execute
reaches to gaze-selected targets (D differs from C only in the belief it is
fed). Hold-to-move gestures act level-triggered; mode cycling, hand
toggling, locking and execution act on gesture-change edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .emg import GestureClass
from .intent import Belief, Selection, STAGE_PICK, STAGE_PLACE
from .kinematics import (
    DEFAULT_COND_LIMIT,
    JOINT_NAMES,
    NUM_JOINTS,
    ArmGeometry,
    eef_velocity_step,
)
from .planner import (
    STATUS_ABORTED,
    STATUS_DONE,
    JointTrajectory,
    PlanExecutor,
    PlanningError,
)
from .world import HAND_CLOSED, HAND_OPEN

METHOD_IDS = ("A", "B", "C", "D")

AXIS_LABELS = (
    "X translation",
    "Y translation",
    "Z translation",
    "X rotation",
    "Y rotation",
    "Z rotation",
)


@dataclass(frozen=True)
class SpeedPresets:
    joint: float = 0.5            # rad/s, method A
    eef_translation: float = 0.08  # m/s, method B
    eef_rotation: float = 0.5      # rad/s, method B


@dataclass
class ControllerState:
    method: str
    joint_index: int = 0
    axis_index: int = 0
    selection: Selection = field(default_factory=Selection)
    hand: str = HAND_OPEN
    marker: np.ndarray | None = None      # box frame, place stage
    marker_frozen: bool = False
    executor: PlanExecutor | None = None
    plan_elapsed: float = 0.0
    plan_goal_kind: str | None = None
    plan_status: str | None = None        # requested|running|done|aborted|failed|invalidated
    plan_shoulder_key: bytes | None = None
    guard: bool = False
    stage: str = STAGE_PICK

    def __post_init__(self):
        if self.method not in METHOD_IDS:
            raise ValueError(f"unknown method {self.method!r}")


@dataclass(frozen=True)
class GestureInput:
    """Current debounced gesture plus whether this tick saw it change."""

    gesture: GestureClass
    is_change: bool = False


def mode_label(state: ControllerState) -> str:
    if state.method == "A":
        return JOINT_NAMES[state.joint_index]
    if state.method == "B":
        return AXIS_LABELS[state.axis_index]
    if state.stage == STAGE_PICK:
        return f"pick: {'locked' if state.selection.locked else 'unlocked'}"
    return f"place: {'locked' if state.marker_frozen else 'unlocked'}"


def _toggle_hand(state: ControllerState) -> None:
    state.hand = HAND_CLOSED if state.hand == HAND_OPEN else HAND_OPEN


def step_method_a(
    state: ControllerState,
    q: np.ndarray,
    inp: GestureInput,
    dt: float,
    geometry: ArmGeometry,
    speeds: SpeedPresets = SpeedPresets(),
) -> np.ndarray:
    """Direct joint control: HO cycles the selected joint, WF/WE run it at
    the preset speed while held, HC toggles the hand."""
    if inp.is_change:
        if inp.gesture == GestureClass.HO:
            state.joint_index = (state.joint_index + 1) % NUM_JOINTS
        elif inp.gesture == GestureClass.HC:
            _toggle_hand(state)
    if inp.gesture == GestureClass.WF:
        delta = speeds.joint * dt
    elif inp.gesture == GestureClass.WE:
        delta = -speeds.joint * dt
    else:
        return q
    q2 = q.copy()
    q2[state.joint_index] += delta
    return geometry.clamp(q2)


def step_method_b(
    state: ControllerState,
    q: np.ndarray,
    inp: GestureInput,
    dt: float,
    geometry: ArmGeometry,
    speeds: SpeedPresets = SpeedPresets(),
    cond_limit: float = DEFAULT_COND_LIMIT,
) -> np.ndarray:
    """Direct end-effector control: HO cycles the task-space direction,
    WF/WE move along it via the pseudoinverse step, HC toggles the hand.
    A condition-number rejection is surfaced on state.guard."""
    if inp.is_change:
        if inp.gesture == GestureClass.HO:
            state.axis_index = (state.axis_index + 1) % len(AXIS_LABELS)
        elif inp.gesture == GestureClass.HC:
            _toggle_hand(state)
    if inp.gesture == GestureClass.WF:
        sign = 1.0
    elif inp.gesture == GestureClass.WE:
        sign = -1.0
    else:
        state.guard = False
        return q
    twist = np.zeros(6)
    axis = state.axis_index % 3
    if state.axis_index < 3:
        twist[axis] = sign * speeds.eef_translation
    else:
        twist[3 + axis] = sign * speeds.eef_rotation
    result = eef_velocity_step(geometry, q, twist, dt, cond_limit)
    state.guard = result.guarded
    return result.q


@dataclass
class AssistContext:
    """Per-tick inputs for the assisted methods, assembled by the session."""

    belief: Belief
    stage: str
    marker_point: np.ndarray | None              # latest valid gaze hit, box frame
    shoulder_key: bytes                          # changes when the base moves
    plan_pick: Callable[[np.ndarray, str], JointTrajectory]
    plan_place: Callable[[np.ndarray, np.ndarray], JointTrajectory]
    order: tuple[str, ...] = ()


def step_method_assist(
    state: ControllerState,
    q: np.ndarray,
    inp: GestureInput,
    dt: float,
    ctx: AssistContext,
) -> tuple[np.ndarray, list[dict]]:
    """Shared machine for methods C and D.

    Pick stage: the selection tracks the belief argmax until WF locks it; a
    change to WE plans a reach to the selected block and the plan executes
    only while WE is held; NM aborts immediately; HC toggles the hand.
    Place stage: the same contract against the gaze marker, which WF
    freezes. A new plan is attempted on every change to WE; holding WE
    reuses the existing plan. Moving the arm base invalidates the plan.
    """
    events: list[dict] = []

    if state.stage != ctx.stage:
        state.stage = ctx.stage
        state.selection = Selection()
        state.marker_frozen = False
        state.marker = None

    if ctx.stage == STAGE_PICK:
        if not state.selection.locked:
            state.selection = Selection(block=ctx.belief.argmax(ctx.order), locked=False)
    else:
        if not state.marker_frozen and ctx.marker_point is not None:
            state.marker = ctx.marker_point.copy()

    if inp.is_change:
        if inp.gesture == GestureClass.HC:
            _toggle_hand(state)
        elif inp.gesture == GestureClass.WF:
            if ctx.stage == STAGE_PICK:
                state.selection = Selection(block=state.selection.block, locked=not state.selection.locked)
            else:
                state.marker_frozen = not state.marker_frozen
        elif inp.gesture == GestureClass.WE:
            _request_plan(state, q, ctx, events)
        elif inp.gesture == GestureClass.NM:
            if state.executor is not None and state.executor.status not in (STATUS_DONE, STATUS_ABORTED):
                state.executor.step(state.plan_elapsed, abort=True)
                state.plan_status = "aborted"
                events.append({"kind": "plan", "status": "aborted"})
                state.executor = None

    # base motion invalidates the active plan
    if (
        state.executor is not None
        and state.executor.status not in (STATUS_DONE, STATUS_ABORTED)
        and state.plan_shoulder_key != ctx.shoulder_key
    ):
        state.executor = None
        state.plan_status = "invalidated"
        events.append({"kind": "plan", "status": "invalidated"})

    if (
        inp.gesture == GestureClass.WE
        and state.executor is not None
        and state.executor.status not in (STATUS_DONE, STATUS_ABORTED)
    ):
        state.plan_elapsed += dt
        q, status = state.executor.step(state.plan_elapsed)
        if status == STATUS_DONE and state.plan_status != "done":
            state.plan_status = "done"
            events.append({"kind": "plan", "status": "done"})
        elif status == "running":
            state.plan_status = "running"
        return q, events

    return q, events


def _request_plan(state, q, ctx: AssistContext, events: list[dict]) -> None:
    if ctx.stage == STAGE_PICK:
        target = state.selection.block
        if target is None:
            state.plan_status = "failed"
            events.append({"kind": "plan", "status": "failed", "reason": "no selection"})
            return
        events.append({"kind": "plan", "status": "requested", "goal": f"pick {target}"})
        plan = lambda: ctx.plan_pick(q, target)
    else:
        if state.marker is None:
            state.plan_status = "failed"
            events.append({"kind": "plan", "status": "failed", "reason": "no marker"})
            return
        marker = state.marker
        events.append({
            "kind": "plan",
            "status": "requested",
            "goal": f"place ({marker[0]:.3f}, {marker[1]:.3f})",
        })
        plan = lambda: ctx.plan_place(q, marker)
    try:
        trajectory = plan()
    except PlanningError as err:
        state.executor = None
        state.plan_status = "failed"
        events.append({"kind": "plan", "status": "failed", "reason": str(err)})
        return
    state.executor = PlanExecutor(trajectory)
    state.plan_elapsed = 0.0
    state.plan_goal_kind = trajectory.goal_kind
    state.plan_status = "running"
    state.plan_shoulder_key = ctx.shoulder_key
    events.append({
        "kind": "plan",
        "status": "planned",
        "goal_kind": trajectory.goal_kind,
        "duration": trajectory.duration,
    })


def step_method_c(state, q, inp, dt, ctx) -> tuple[np.ndarray, list[dict]]:
    """Gaze-assisted control; expects a uniform-prior belief in ctx."""
    return step_method_assist(state, q, inp, dt, ctx)


def step_method_d(state, q, inp, dt, ctx) -> tuple[np.ndarray, list[dict]]:
    """Context-assisted control; expects the color-weighted belief in ctx."""
    return step_method_assist(state, q, inp, dt, ctx)
