"""Session orchestration: configuration, the fixed-step simulation loop,
snapshot emission, gesture sources, and scripted-trace execution.

One session owns a queue of trials. Each trial runs a 1 ms fixed step;
snapshots are taken every 1/60 s of simulated time and double as the log's
state stream. Headless runs step as fast as possible and are bit-for-bit
reproducible for a fixed (config, trace, seeds) triple; the live server
paces the same loop against the wall clock.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import emg
from .emg import Debouncer, GestureClass, GestureEvent, LatestMailbox
from .intent import (
    STAGE_PICK,
    STAGE_PLACE,
    Belief,
    GazeSample,
    TaskContext,
    noisy_gaze,
    place_marker_target,
    image_plane_distances,
    posterior_belief,
)
from .kinematics import DEFAULT_COND_LIMIT, ArmGeometry, RigidTransform
from .metrics import LOG_SCHEMA_VERSION, LogWriter
from .methods import (
    AssistContext,
    ControllerState,
    GestureInput,
    SpeedPresets,
    mode_label,
    step_method_a,
    step_method_b,
    step_method_assist,
)
from .planner import (
    DEFAULT_JOINT_SPEED,
    HeldBlock,
    PlanRequest,
    PoseTarget,
    plan_reach,
)
from .world import (
    BLOCK_IDS,
    BLOCK_SPECS,
    HAND_OPEN,
    TARGET_RADIUS,
    TrialConfig,
    WorldState,
    all_blocks_placed,
    classify_all,
    grasp_update,
    method_plan,
    spawn_trial,
    world_tick,
)

TICK_SECONDS = 0.001
SNAPSHOT_RATE = 60.0
PROTOCOL_VERSION = 1

GESTURE_SOURCES = ("client-events", "synthetic", "emg-file")


@dataclass
class SessionConfig:
    geometry: ArmGeometry = field(default_factory=ArmGeometry)
    speeds: SpeedPresets = field(default_factory=SpeedPresets)
    trials: list[TrialConfig] = field(default_factory=lambda: [TrialConfig()])
    gesture_source: dict = field(default_factory=lambda: {"kind": "client-events"})
    sigma: float = 0.05
    reference_depth: float = 1.0
    prior_same: float = 0.125
    prior_opposite: float = 0.375
    cond_limit: float = DEFAULT_COND_LIMIT
    plan_time_budget: float = 0.5
    plan_joint_speed: float = DEFAULT_JOINT_SPEED
    shoulder_height: float = 1.4
    grasp_clearance: float = 0.025   # hand above block top at the pick pose
    place_clearance: float = 0.05    # held-block bottom above floor pre-release
    bind_host: str = "127.0.0.1"
    bind_port: int = 8765
    log_dir: str = "logs"
    tick: float = TICK_SECONDS
    snapshot_rate: float = SNAPSHOT_RATE

    @staticmethod
    def from_dict(data: dict) -> "SessionConfig":
        cfg = SessionConfig()
        geo = data.get("geometry", {})
        if geo:
            kwargs = {}
            if "segment_lengths" in geo:
                kwargs["segment_lengths"] = tuple(geo["segment_lengths"])
            if "joint_limits" in geo:
                kwargs["joint_limits"] = np.asarray(geo["joint_limits"], dtype=float)
            if "home_configuration" in geo:
                kwargs["home_configuration"] = np.asarray(geo["home_configuration"], dtype=float)
            if "joint_axes" in geo:
                kwargs["joint_axes"] = np.asarray(geo["joint_axes"], dtype=float)
            cfg.geometry = ArmGeometry(**kwargs)
        sp = data.get("speeds", {})
        cfg.speeds = SpeedPresets(
            joint=sp.get("joint", 0.5),
            eef_translation=sp.get("eef_translation", 0.08),
            eef_rotation=sp.get("eef_rotation", 0.5),
        )
        intent = data.get("intent", {})
        cfg.sigma = intent.get("sigma", cfg.sigma)
        cfg.reference_depth = intent.get("reference_depth", cfg.reference_depth)
        cfg.prior_same = intent.get("prior_same", cfg.prior_same)
        cfg.prior_opposite = intent.get("prior_opposite", cfg.prior_opposite)
        planner = data.get("planner", {})
        cfg.cond_limit = planner.get("cond_limit", cfg.cond_limit)
        cfg.plan_time_budget = planner.get("time_budget", cfg.plan_time_budget)
        cfg.plan_joint_speed = planner.get("joint_speed", cfg.plan_joint_speed)
        world = data.get("world", {})
        cfg.shoulder_height = world.get("shoulder_height", cfg.shoulder_height)
        source = data.get("gesture_source", {"kind": "client-events"})
        if source.get("kind") not in GESTURE_SOURCES:
            raise ValueError(f"unknown gesture source {source.get('kind')!r}")
        if source["kind"] == "emg-file":
            for key in ("path", "model"):
                if key not in source:
                    raise ValueError(f"emg-file gesture source needs {key!r}")
                if not Path(source[key]).exists():
                    raise ValueError(f"gesture source file not found: {source[key]}")
        cfg.gesture_source = source
        trials = data.get("trials")
        if trials is None and "session_plan" in data:
            plan = data["session_plan"]
            methods = method_plan(plan.get("participant", 0), plan.get("trials_per_method", 3))
            trials = [
                {"method": m, "arrangement": i % 6, "seed": i} for i, m in enumerate(methods)
            ]
        if trials:
            cfg.trials = [
                TrialConfig(
                    method=t.get("method", "D"),
                    arrangement=t.get("arrangement", 0),
                    order=tuple(t.get("order", BLOCK_IDS)),
                    duration=t.get("duration", 300.0),
                    seed=t.get("seed", 0),
                    gaze_noise=t.get("gaze_noise", False),
                )
                for t in trials
            ]
        net = data.get("network", {})
        cfg.bind_host = net.get("host", cfg.bind_host)
        cfg.bind_port = net.get("port", cfg.bind_port)
        cfg.log_dir = data.get("log_dir", cfg.log_dir)
        return cfg

    @staticmethod
    def from_file(path) -> "SessionConfig":
        with open(path, encoding="utf-8") as fh:
            return SessionConfig.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# gesture feeds
# ---------------------------------------------------------------------------

class ClassifierFeed:
    """Streams debounced gesture events from a classified signal buffer."""

    def __init__(self, classifications):
        deb = Debouncer()
        self.events = []
        for gesture, t in classifications:
            ev = deb.update(gesture, t)
            if ev is not None:
                self.events.append(ev)
        self._index = 0

    def events_until(self, t: float) -> list[GestureEvent]:
        out = []
        while self._index < len(self.events) and self.events[self._index].timestamp <= t + 1e-12:
            out.append(self.events[self._index])
            self._index += 1
        return out


def build_gesture_feed(source: dict) -> ClassifierFeed | None:
    """Feeds for the non-interactive gesture sources; client-events runs on
    injected messages instead."""
    kind = source.get("kind", "client-events")
    if kind == "client-events":
        return None
    if kind == "emg-file":
        buffer, _ = emg.load_recording(source["path"])
        model = emg.load_model(source["model"])
        return ClassifierFeed(emg.classify_stream(model, buffer))
    if kind == "synthetic":
        seed = source.get("seed", 0)
        recording, segments = emg.synthetic_recording(seed=seed)
        feats, labels = emg.features_from_segments(recording, segments)
        model = emg.train_lda(feats, labels)
        script_buffer, _ = emg.synthetic_recording(seed=seed + 1)
        return ClassifierFeed(emg.classify_stream(model, script_buffer))
    raise ValueError(f"unknown gesture source kind {kind!r}")


# ---------------------------------------------------------------------------
# one trial
# ---------------------------------------------------------------------------

class TrialRunner:
    """Owns one trial's world, controller, inputs, and log."""

    def __init__(self, config: SessionConfig, trial: TrialConfig, log_path,
                 feed: ClassifierFeed | None = None):
        self.config = config
        self.trial = trial
        shoulder = RigidTransform(translation=np.array([0.0, 0.0, config.shoulder_height]))
        self.world: WorldState = spawn_trial(trial, shoulder, config.geometry)
        self.state = ControllerState(method=trial.method)
        self.feed = feed
        self.mailbox = LatestMailbox()
        self.current_gesture = GestureClass.NM
        self.gaze: GazeSample | None = None
        self.pending_shoulder: RigidTransform | None = None
        self.belief = Belief(probabilities={})
        self.context = TaskContext()
        self.last_valid_marker = self._place_half_center()
        self.snapshot_count = 0
        self._next_snapshot = 0.0
        self.latest_snapshot: dict | None = None
        self._cues: list[str] = []
        self._plan_counter = 0
        self._gaze_rng = np.random.default_rng(trial.seed ^ 0x5EED)
        self.finished = False
        self.end_reason: str | None = None
        self.outcomes: dict[str, str] = {}
        self.log = LogWriter(log_path)
        box = self.world.box
        self.log.write(
            0.0, "trial_start",
            method=trial.method,
            arrangement=trial.arrangement,
            order=list(trial.order),
            duration=trial.duration,
            seed=trial.seed,
            schema=LOG_SCHEMA_VERSION,
            slots={bid: list(box.slots[bid]) for bid in BLOCK_IDS},
            targets={bid: list(box.targets[bid]) for bid in BLOCK_IDS},
            box_origin=list(box.world_from_box.translation),
        )

    # -- input injection -----------------------------------------------------

    def inject_gesture(self, gesture: GestureClass, t: float) -> None:
        self.mailbox.put(GestureEvent(gesture=gesture, timestamp=t))

    def inject_gaze(self, origin, direction, t: float) -> None:
        sample = GazeSample(origin=np.asarray(origin, dtype=float),
                            direction=np.asarray(direction, dtype=float), timestamp=t)
        if self.trial.gaze_noise:
            sample = noisy_gaze(sample, self._gaze_rng)
        self.gaze = sample

    def inject_shoulder(self, position, rotation) -> None:
        self.pending_shoulder = RigidTransform(
            rotation=np.asarray(rotation, dtype=float),
            translation=np.asarray(position, dtype=float),
        )

    # -- helpers ---------------------------------------------------------

    def _place_half_center(self):
        x_lo, x_hi, y_lo, y_hi = self.world.box.place_half_rect()
        return np.array([(x_lo + x_hi) / 2.0, (y_lo + y_hi) / 2.0, 0.0])

    def _selectable_blocks(self) -> list[str]:
        """Blocks still in play: not attached, resting inside the box, and
        not already sitting in their own target region."""
        out = []
        for bid, block in self.world.blocks.items():
            if bid == self.world.attached or not block.resting:
                continue
            if not self.world.box.inside_box(block.position):
                continue
            tx, ty = self.world.box.targets[bid]
            if np.hypot(block.position[0] - tx, block.position[1] - ty) <= TARGET_RADIUS:
                continue
            out.append(bid)
        return out

    def _update_belief(self) -> None:
        remaining = self._selectable_blocks()
        if self.gaze is None or not remaining:
            self.belief = Belief(probabilities={})
            return
        centers = {
            bid: self.world.box.to_world(self.world.blocks[bid].position)
            for bid in remaining
        }
        distances = image_plane_distances(self.gaze, centers, self.config.reference_depth)
        self.belief = posterior_belief(
            distances,
            self.context,
            remaining,
            sigma=self.config.sigma,
            use_context=(self.trial.method == "D"),
            prior_same=self.config.prior_same,
            prior_opposite=self.config.prior_opposite,
        )

    def _plan_seed(self) -> int:
        self._plan_counter += 1
        return (self.trial.seed * 100003 + self._plan_counter) & 0x7FFFFFFF

    def _held_block(self) -> HeldBlock | None:
        if self.world.attached is None:
            return None
        spec = self.world.blocks[self.world.attached].spec
        return HeldBlock(
            radius=spec.radius,
            height=spec.height,
            grasp_offset=spec.height / 2.0 + self.config.grasp_clearance,
        )

    def _plan_to(self, start_q, goal_box: np.ndarray, exclude: str | None):
        base = self.world.base_in_box()
        target = PoseTarget(
            position=base.inverse().apply(goal_box),
            approach_axis=np.array([0.0, 0.0, -1.0]),
        )
        request = PlanRequest(
            start=start_q,
            goal=target,
            obstacles=self.world.box.obstacles(self.world.block_cylinders(exclude=exclude)),
            held_block=self._held_block(),
            base_pose=base,
            time_budget=self.config.plan_time_budget,
            rng_seed=self._plan_seed(),
        )
        return plan_reach(self.config.geometry, request, self.config.plan_joint_speed)

    def _plan_pick(self, start_q, block_id: str):
        block = self.world.blocks[block_id]
        hover = block.position + np.array([0.0, 0.0, block.spec.height / 2.0 + self.config.grasp_clearance])
        return self._plan_to(start_q, hover, exclude=block_id)

    def _plan_place(self, start_q, marker: np.ndarray):
        held = self.world.attached
        spec = self.world.blocks[held].spec if held else BLOCK_SPECS["R1"]
        # hand height putting the held block's bottom one clearance above the floor
        hand_z = self.config.place_clearance + spec.height + self.config.grasp_clearance
        goal = np.array([marker[0], marker[1], hand_z])
        return self._plan_to(start_q, goal, exclude=held)

    # -- the 1 ms step ---------------------------------------------------

    def tick(self) -> None:
        if self.finished:
            return
        world = self.world
        t = world.time
        dt = self.config.tick

        if self.pending_shoulder is not None:
            world.shoulder = self.pending_shoulder
            self.pending_shoulder = None

        if self.feed is not None:
            for ev in self.feed.events_until(t):
                self.mailbox.put(ev)

        event = self.mailbox.take()
        is_change = False
        if event is not None:
            is_change = event.gesture != self.current_gesture
            self.current_gesture = event.gesture
            if is_change:
                self.log.write(t, "gesture", gesture=event.gesture.name)
        inp = GestureInput(gesture=self.current_gesture, is_change=is_change)

        snapshot_due = t + 1e-12 >= self._next_snapshot
        stage = STAGE_PLACE if world.attached is not None else STAGE_PICK
        if snapshot_due:
            self._update_belief()
            if stage == STAGE_PLACE and self.gaze is not None:
                hit = place_marker_target(self.gaze, world.box)
                if hit is not None:
                    self.last_valid_marker = hit

        method = self.trial.method
        if method == "A":
            q_new = step_method_a(self.state, world.q, inp, dt, self.config.geometry, self.config.speeds)
            events = []
        elif method == "B":
            q_new = step_method_b(
                self.state, world.q, inp, dt, self.config.geometry,
                self.config.speeds, self.config.cond_limit,
            )
            events = []
        else:
            ctx = AssistContext(
                belief=self.belief,
                stage=stage,
                marker_point=self.last_valid_marker,
                shoulder_key=world.shoulder.translation.tobytes() + world.shoulder.rotation.tobytes(),
                plan_pick=self._plan_pick,
                plan_place=self._plan_place,
                order=self.trial.order,
            )
            q_new, events = step_method_assist(self.state, world.q, inp, dt, ctx)

        world.q = q_new
        world.hand = self.state.hand
        for ev in grasp_update(world):
            self.log.write(t, ev["kind"], block=ev["block"], cue=ev["cue"])
            self._cues.append(ev["cue"])
            if ev["kind"] == "detach":
                color = world.blocks[ev["block"]].spec.color
                self.context = TaskContext(previous_color=color, stage=self.context.stage)
        for ev in events:
            self.log.write(t, "plan", **{k: v for k, v in ev.items() if k != "kind"})

        for ev in world_tick(world, dt):
            if ev["kind"] == "crossing":
                self.log.write(world.time, "crossing", block=ev["block"], direction=ev["direction"])
            elif ev["kind"] == "timeout":
                self.log.write(world.time, "timeout")

        if snapshot_due:
            self._write_snapshot(t, stage)
            self._next_snapshot += 1.0 / self.config.snapshot_rate

        if world.time + 1e-12 >= self.trial.duration:
            self._finish("timeout")
        elif all_blocks_placed(world):
            self._finish("completed")

    def scene_message(self) -> dict:
        """Static per-trial scene geometry for operator clients."""
        box = self.world.box
        import math as _math
        q = box.world_from_box.rotation
        yaw = _math.atan2(
            2.0 * (q[0] * q[3] + q[1] * q[2]),
            1.0 - 2.0 * (q[2] * q[2] + q[3] * q[3]),
        )
        return {
            "kind": "scene",
            "method": self.trial.method,
            "duration": self.trial.duration,
            "order": list(self.trial.order),
            "box_origin": [round(float(v), 9) for v in box.world_from_box.translation],
            "box_yaw": round(yaw, 9),
            "floor_depth": box.floor_depth,
            "floor_width": box.floor_width,
            "wall_height": box.wall_height,
            "wall_thickness": box.wall_thickness,
            "partition_height": box.partition_height,
            "partition_thickness": box.partition_thickness,
            "block_radius": BLOCK_SPECS["R1"].radius,
            "block_height": BLOCK_SPECS["R1"].height,
            "target_radius": TARGET_RADIUS,
            "slots": {bid: list(box.slots[bid]) for bid in BLOCK_IDS},
            "targets": {bid: list(box.targets[bid]) for bid in BLOCK_IDS},
        }

    def _arm_anchors_box(self) -> list[list[float]]:
        """Shoulder, elbow, wrist, and grasp-point positions in the box
        frame, for drawing the arm without client-side kinematics."""
        from .kinematics import fk_arrays
        origins, _, eef_pos, _ = fk_arrays(self.config.geometry, self.world.q)
        base = self.world.base_in_box()
        R = base.rotation_matrix()
        pts = np.stack([np.zeros(3), origins[3], origins[5], eef_pos]) @ R.T + base.translation
        return [[round(float(v), 9) for v in p] for p in pts]

    def _write_snapshot(self, t: float, stage: str) -> None:
        world = self.world
        snap = {
            "q": [round(float(v), 9) for v in world.q],
            "arm": self._arm_anchors_box(),
            "hand": world.hand,
            "blocks": {
                bid: [round(float(v), 9) for v in b.position] for bid, b in world.blocks.items()
            },
            "attached": world.attached,
            "stage": stage,
            "selection": self.state.selection.block,
            "locked": self.state.selection.locked,
            "marker": (
                [round(float(v), 9) for v in self.state.marker[:2]]
                if self.state.marker is not None else None
            ),
            "marker_frozen": self.state.marker_frozen,
            "mode": mode_label(self.state),
            "guard": self.state.guard,
            "plan": self.state.plan_status,
            "cues": self._cues,
            "remaining": round(max(self.trial.duration - t, 0.0), 6),
            "belief": {k: round(v, 9) for k, v in self.belief.probabilities.items()},
        }
        self.log.write(t, "snapshot", **snap)
        self.snapshot_count += 1
        self._cues = []
        if self.gaze is not None:
            self.log.write(
                t, "gaze",
                origin=[round(float(v), 9) for v in self.gaze.origin],
                direction=[round(float(v), 9) for v in self.gaze.direction],
            )
        self.log.write(
            t, "shoulder",
            position=[round(float(v), 9) for v in world.shoulder.translation],
            rotation=[round(float(v), 9) for v in world.shoulder.rotation],
        )
        self.latest_snapshot = {"t": round(t, 6), "kind": "snapshot", **snap}

    def _finish(self, reason: str) -> None:
        self.finished = True
        self.end_reason = reason
        t = self.world.time
        outcomes = classify_all(self.world)
        self.outcomes = {bid: out.value for bid, out in outcomes.items()}
        for bid in BLOCK_IDS:
            self.log.write(t, "outcome", block=bid, outcome=self.outcomes[bid])
        successes = sum(1 for v in self.outcomes.values() if v == "success")
        self.log.write(t, "trial_end", reason=reason, successes=successes)
        self.log.close()


# ---------------------------------------------------------------------------
# headless runs and traces
# ---------------------------------------------------------------------------

def load_trace(path) -> list[dict]:
    events = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                events.append(json.loads(line))
    last_t = -1.0
    for ev in events:
        if ev.get("t", 0.0) < last_t - 1e-12:
            raise ValueError("trace timestamps must be sorted")
        last_t = ev.get("t", 0.0)
    return events


def apply_trace_event(runner: TrialRunner, ev: dict) -> None:
    kind = ev.get("kind")
    t = ev.get("t", runner.world.time)
    if kind == "gesture":
        runner.inject_gesture(GestureClass[ev["gesture"]], t)
    elif kind == "gaze":
        runner.inject_gaze(ev["origin"], ev["direction"], t)
    elif kind == "shoulder":
        runner.inject_shoulder(ev["position"], ev.get("rotation", [1.0, 0.0, 0.0, 0.0]))
    else:
        raise ValueError(f"unknown trace event kind {kind!r}")


def run_trial_headless(
    config: SessionConfig,
    trial: TrialConfig,
    log_path,
    trace: list[dict] | None = None,
) -> TrialRunner:
    """Run one trial to completion as fast as possible, injecting trace
    events at their simulated timestamps."""
    feed = build_gesture_feed(config.gesture_source)
    runner = TrialRunner(config, trial, log_path, feed=feed)
    trace = list(trace or [])
    index = 0
    while not runner.finished:
        t = runner.world.time
        while index < len(trace) and trace[index].get("t", 0.0) <= t + 1e-12:
            apply_trace_event(runner, trace[index])
            index += 1
        runner.tick()
    return runner


def run_session(config: SessionConfig, trace_path=None, log_dir=None) -> list[Path]:
    """Headless session entry: every configured trial in sequence, one log
    file per trial; returns the log paths."""
    log_dir = Path(log_dir or config.log_dir)
    log_dir.mkdir(parents=True, exist_ok=True)
    trace = load_trace(trace_path) if trace_path else None
    paths = []
    for index, trial in enumerate(config.trials):
        path = log_dir / f"trial_{index:03d}_{trial.method}.ndjson"
        run_trial_headless(config, trial, path, trace)
        paths.append(path)
    return paths
