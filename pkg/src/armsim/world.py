"""The modified block-transfer task world.

Two red and two blue numbered cylindrical blocks start on the pick half of a
partitioned open box; each block has a mirrored target spot on the place
half. The arm is purely kinematic: grasping rigidly attaches the nearest
block within a proximity threshold, releasing drops it ballistically (no
bounce, no contact response). All world queries run in the box frame, whose
origin sits at the box center on the interior floor, x along the
participant's heading and z up; the partition occupies the x-z plane.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .kinematics import (
    ArmGeometry,
    RigidTransform,
    fk_arrays,
    quat_from_axis_angle,
    quat_multiply,
    quat_rotate,
)
from .planner import Aabb, CylinderObstacle, ObstacleSet

GRAVITY = 9.81

BLOCK_DIAMETER = 0.05
BLOCK_HEIGHT = 0.05
TARGET_RADIUS = 0.05            # one block diameter
PROXIMITY_THRESHOLD = 0.04      # grasp point to block surface

TABLE_DROP = 0.43               # shoulder height minus table top
BOX_FORWARD = 0.6               # shoulder projection to box center

TRIAL_DURATION = 300.0

HAND_OPEN = "open"
HAND_CLOSED = "closed"


class Color(str, Enum):
    RED = "red"
    BLUE = "blue"


class Outcome(str, Enum):
    SUCCESS = "success"
    CROSSED_NOT_REACHED = "crossed_not_reached"
    DROPPED_SAME_SIDE = "dropped_same_side"
    DROPPED_FLOOR = "dropped_floor"
    NEVER_GRASPED = "never_grasped"
    IN_PROGRESS_AT_TIMEOUT = "in_progress_at_timeout"


@dataclass(frozen=True)
class BlockSpec:
    id: str
    color: Color
    number: int
    diameter: float = BLOCK_DIAMETER
    height: float = BLOCK_HEIGHT

    @property
    def radius(self) -> float:
        return self.diameter / 2.0


# Task sequence order; colors alternate so the context prior is informative.
BLOCK_IDS = ("R1", "B1", "R2", "B2")

BLOCK_SPECS = {
    "R1": BlockSpec("R1", Color.RED, 1),
    "B1": BlockSpec("B1", Color.BLUE, 1),
    "R2": BlockSpec("R2", Color.RED, 2),
    "B2": BlockSpec("B2", Color.BLUE, 2),
}

# Pick-half slots in the box frame (x along heading, y left; pick half y<0).
# Chosen so every slot and its mirrored target stay within comfortable reach
# of the default arm (verified by the IK sweep in the test suite).
SLOT_POSITIONS = (
    (-0.13, -0.08),
    (-0.07, -0.08),
    (-0.13, -0.17),
    (-0.07, -0.17),
)


def arrangements() -> list[dict[str, int]]:
    """All 6 distinct assignments of the two red / two blue blocks to the
    four slots; within a color, #1 takes the lower slot index."""
    out = []
    for red_slots in itertools.combinations(range(4), 2):
        blue_slots = tuple(s for s in range(4) if s not in red_slots)
        out.append({
            "R1": red_slots[0],
            "R2": red_slots[1],
            "B1": blue_slots[0],
            "B2": blue_slots[1],
        })
    return out


# Method presentation orders for multi-trial session plans, one row per
# participant, alternating direct and assisted methods.
METHOD_SEQUENCES = (
    ("A", "C", "B", "D"),
    ("C", "B", "D", "A"),
    ("A", "D", "B", "C"),
    ("D", "B", "C", "A"),
    ("B", "D", "A", "C"),
    ("D", "A", "C", "B"),
    ("B", "C", "A", "D"),
    ("C", "A", "D", "B"),
)


def method_plan(participant: int, trials_per_method: int = 3) -> list[str]:
    row = METHOD_SEQUENCES[participant % len(METHOD_SEQUENCES)]
    return [m for m in row for _ in range(trials_per_method)]


@dataclass(frozen=True)
class BoxSpec:
    """Box and table geometry plus per-block slots and targets.

    world_from_box maps box-frame coordinates into the world; its rotation is
    a pure yaw so that gravity stays along -z in both frames.
    """

    world_from_box: RigidTransform
    floor_depth: float = 0.35    # x extent of the interior floor
    floor_width: float = 0.55    # y extent
    wall_height: float = 0.08
    wall_thickness: float = 0.01
    floor_thickness: float = 0.01
    partition_thickness: float = 0.012
    partition_height: float = 0.12
    table_margin: float = 0.02
    room_floor_z: float = 0.0    # world z of the room floor
    slots: dict[str, tuple[float, float]] = field(default_factory=dict)
    targets: dict[str, tuple[float, float]] = field(default_factory=dict)

    @property
    def half_depth(self) -> float:
        return self.floor_depth / 2.0

    @property
    def half_width(self) -> float:
        return self.floor_width / 2.0

    def to_box(self, p_world: np.ndarray) -> np.ndarray:
        return self.world_from_box.inverse().apply(p_world)

    def to_world(self, p_box: np.ndarray) -> np.ndarray:
        return self.world_from_box.apply(p_box)

    def inside_box(self, p: np.ndarray) -> bool:
        """Horizontal containment in the outer box footprint (box frame)."""
        return bool(
            abs(p[0]) <= self.half_depth + self.wall_thickness
            and abs(p[1]) <= self.half_width + self.wall_thickness
        )

    def inside_table(self, p: np.ndarray) -> bool:
        m = self.table_margin + self.wall_thickness
        return bool(abs(p[0]) <= self.half_depth + m and abs(p[1]) <= self.half_width + m)

    def on_place_half(self, p: np.ndarray) -> bool:
        return bool(p[1] >= 0.0)

    def place_half_rect(self) -> tuple[float, float, float, float]:
        """(x_lo, x_hi, y_lo, y_hi) of the place-half interior floor."""
        return (
            -self.half_depth,
            self.half_depth,
            self.partition_thickness / 2.0,
            self.half_width,
        )

    def table_top_z(self) -> float:
        """Box-frame z of the table top (interior floor top is z=0)."""
        return -self.floor_thickness

    def obstacles(self, block_cylinders: list[CylinderObstacle] | None = None) -> ObstacleSet:
        """Static collision geometry in the box frame."""
        hd, hw = self.half_depth, self.half_width
        wt, wh, ft = self.wall_thickness, self.wall_height, self.floor_thickness
        tm = self.table_margin + wt
        boxes = [
            # table slab (thin apron around the box)
            Aabb((-hd - tm, -hw - tm, -ft - 0.03), (hd + tm, hw + tm, -ft)),
            # interior floor
            Aabb((-hd, -hw, -ft), (hd, hw, 0.0)),
            # walls: near/far along x, right/left along y
            Aabb((-hd - wt, -hw - wt, -ft), (-hd, hw + wt, wh)),
            Aabb((hd, -hw - wt, -ft), (hd + wt, hw + wt, wh)),
            Aabb((-hd - wt, -hw - wt, -ft), (hd + wt, -hw, wh)),
            Aabb((-hd - wt, hw, -ft), (hd + wt, hw + wt, wh)),
            # partition along the sagittal plane
            Aabb(
                (-hd, -self.partition_thickness / 2.0, -ft),
                (hd, self.partition_thickness / 2.0, self.partition_height),
            ),
        ]
        return ObstacleSet(boxes=boxes, cylinders=list(block_cylinders or []))


def localize_scene(
    shoulder_pose: RigidTransform,
    table_drop: float = TABLE_DROP,
    forward: float = BOX_FORWARD,
    **box_kwargs,
) -> BoxSpec:
    """Place the box relative to an upright shoulder reference pose.

    The box center sits `forward` meters ahead of the shoulder projection
    along the gravity-projected heading; the table top sits `table_drop`
    below the shoulder. Raises when the heading is degenerate (looking
    straight up or down).
    """
    heading = quat_rotate(shoulder_pose.rotation, np.array([1.0, 0.0, 0.0]))
    heading[2] = 0.0
    n = np.linalg.norm(heading)
    if n < 1e-6:
        raise ValueError("shoulder reference heading is vertical; cannot localize scene")
    heading /= n
    yaw = float(np.arctan2(heading[1], heading[0]))
    shoulder_z = float(shoulder_pose.translation[2])
    floor_thickness = box_kwargs.get("floor_thickness", 0.01)
    origin = np.array([
        shoulder_pose.translation[0] + forward * heading[0],
        shoulder_pose.translation[1] + forward * heading[1],
        shoulder_z - table_drop + floor_thickness,
    ])
    world_from_box = RigidTransform(
        rotation=quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), yaw),
        translation=origin,
    )
    return BoxSpec(world_from_box=world_from_box, **box_kwargs)


@dataclass
class BlockState:
    spec: BlockSpec
    position: np.ndarray          # center, box frame
    velocity: np.ndarray
    resting: bool = True

    @property
    def bottom(self) -> float:
        return float(self.position[2]) - self.spec.height / 2.0

    @property
    def top(self) -> float:
        return float(self.position[2]) + self.spec.height / 2.0


@dataclass
class BlockHistory:
    attaches: list[float] = field(default_factory=list)
    detaches: list[float] = field(default_factory=list)
    crossings: list[float] = field(default_factory=list)

    @property
    def ever_attached(self) -> bool:
        return bool(self.attaches)

    @property
    def ever_crossed(self) -> bool:
        return bool(self.crossings)


@dataclass
class TrialConfig:
    method: str = "D"
    arrangement: int = 0
    order: tuple[str, ...] = BLOCK_IDS
    duration: float = TRIAL_DURATION
    seed: int = 0
    gaze_noise: bool = False

    def __post_init__(self):
        if sorted(self.order) != sorted(BLOCK_IDS):
            raise ValueError("transfer order must cover all four blocks exactly once")
        if self.arrangement not in range(len(arrangements())):
            raise ValueError(f"invalid arrangement id {self.arrangement}")


@dataclass
class WorldState:
    geometry: ArmGeometry
    box: BoxSpec
    config: TrialConfig
    shoulder: RigidTransform      # world
    q: np.ndarray
    hand: str = HAND_OPEN
    blocks: dict[str, BlockState] = field(default_factory=dict)
    histories: dict[str, BlockHistory] = field(default_factory=dict)
    attached: str | None = None
    grasp_rel: np.ndarray | None = None      # block center in hand frame
    time: float = 0.0
    timeout_emitted: bool = False
    _prev_hand: str = HAND_OPEN
    _prev_eef: np.ndarray | None = None
    eef_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    _eef_cache: tuple | None = None

    def base_in_box(self) -> RigidTransform:
        """Arm base (shoulder) pose expressed in the box frame."""
        return self.box.world_from_box.inverse().compose(self.shoulder)

    def eef_pose_box(self) -> tuple[np.ndarray, np.ndarray]:
        """Grasp-point position and rotation in the box frame, cached per
        (q, shoulder) pair."""
        key = (self.q.tobytes(), self.shoulder.translation.tobytes(),
               self.shoulder.rotation.tobytes())
        if self._eef_cache is not None and self._eef_cache[0] == key:
            return self._eef_cache[1], self._eef_cache[2]
        _, _, eef_pos, eef_rot = fk_arrays(self.geometry, self.q)
        base = self.base_in_box()
        pos = base.apply(eef_pos)
        rot = quat_multiply(base.rotation, eef_rot)
        self._eef_cache = (key, pos, rot)
        return pos, rot

    def block_cylinders(self, exclude: str | None = None) -> list[CylinderObstacle]:
        out = []
        for bid, b in self.blocks.items():
            if bid == exclude or bid == self.attached:
                continue
            out.append(CylinderObstacle(center=b.position, radius=b.spec.radius, height=b.spec.height))
        return out


def _surface_distance_to_block(point: np.ndarray, block: BlockState) -> float:
    """Distance from a point to the block cylinder surface (0 if inside)."""
    radial = float(np.hypot(point[0] - block.position[0], point[1] - block.position[1])) - block.spec.radius
    axial = abs(float(point[2] - block.position[2])) - block.spec.height / 2.0
    return float(np.hypot(max(radial, 0.0), max(axial, 0.0)))


def spawn_trial(
    config: TrialConfig,
    shoulder_pose: RigidTransform,
    geometry: ArmGeometry | None = None,
    **box_kwargs,
) -> WorldState:
    """Build the world for one trial: localized box, blocks on their
    arrangement slots, arm at home, clock at zero."""
    geometry = geometry or ArmGeometry()
    box = localize_scene(shoulder_pose, **box_kwargs)
    slot_map = arrangements()[config.arrangement]
    slots = {}
    targets = {}
    for bid in BLOCK_IDS:
        sx, sy = SLOT_POSITIONS[slot_map[bid]]
        slots[bid] = (sx, sy)
        targets[bid] = (sx, -sy)  # mirrored across the partition
    box = replace(box, slots=slots, targets=targets)
    blocks = {}
    histories = {}
    for bid in BLOCK_IDS:
        spec = BLOCK_SPECS[bid]
        sx, sy = slots[bid]
        blocks[bid] = BlockState(
            spec=spec,
            position=np.array([sx, sy, spec.height / 2.0]),
            velocity=np.zeros(3),
            resting=True,
        )
        histories[bid] = BlockHistory()
    return WorldState(
        geometry=geometry,
        box=box,
        config=config,
        shoulder=shoulder_pose,
        q=geometry.home_configuration.copy(),
        blocks=blocks,
        histories=histories,
    )


def grasp_update(world: WorldState) -> list[dict]:
    """Apply hand open/close transitions: closing attaches the nearest block
    whose surface is within the proximity threshold of the grasp point
    (nearest wins); opening detaches. Emits attach/detach events with
    contact cues."""
    events: list[dict] = []
    if world.hand == world._prev_hand:
        return events
    if world.hand == HAND_CLOSED and world.attached is None:
        grasp_point, _ = world.eef_pose_box()
        best = None
        best_dist = PROXIMITY_THRESHOLD
        for bid, block in world.blocks.items():
            d = _surface_distance_to_block(grasp_point, block)
            if d <= best_dist:
                best = bid
                best_dist = d
        if best is not None:
            world.attached = best
            block = world.blocks[best]
            pos, rot = world.eef_pose_box()
            # block center in the hand frame
            inv = RigidTransform(rotation=rot, translation=pos).inverse()
            world.grasp_rel = inv.apply(block.position)
            block.resting = False
            block.velocity = np.zeros(3)
            world.histories[best].attaches.append(world.time)
            events.append({"kind": "attach", "block": best, "cue": "contact_made"})
    elif world.hand == HAND_OPEN and world.attached is not None:
        bid = world.attached
        block = world.blocks[bid]
        world.attached = None
        world.grasp_rel = None
        block.resting = False
        # ballistic drop inherits the horizontal hand velocity
        block.velocity = np.array([world.eef_velocity[0], world.eef_velocity[1], 0.0])
        world.histories[bid].detaches.append(world.time)
        events.append({"kind": "detach", "block": bid, "cue": "contact_lost"})
    world._prev_hand = world.hand
    return events


def _support_height(world: WorldState, bid: str, bottom_before: float) -> float:
    """Box-frame z at which the given block's bottom would rest, given its
    current horizontal position. Only surfaces at or below the block's
    pre-step bottom count, so a fast step never tunnels past its support."""
    block = world.blocks[bid]
    p = block.position
    box = world.box
    room_floor = box.room_floor_z - float(box.world_from_box.translation[2])
    candidates = [room_floor]
    if box.inside_box(p):
        candidates.append(0.0)
    elif box.inside_table(p):
        candidates.append(box.table_top_z())
    for oid, other in world.blocks.items():
        if oid == bid or not other.resting:
            continue
        if np.hypot(p[0] - other.position[0], p[1] - other.position[1]) < block.spec.radius + other.spec.radius:
            candidates.append(other.top)
    return max(c for c in candidates if c <= bottom_before + 1e-9)


def world_tick(world: WorldState, dt: float) -> list[dict]:
    """Advance the world by one fixed step: carried block follows the hand,
    airborne blocks fall, partition crossings and the trial timeout are
    reported as events."""
    events: list[dict] = []
    prev_sides = {bid: (b.position[1] >= 0.0) for bid, b in world.blocks.items()}

    pos, rot = world.eef_pose_box()
    if world._prev_eef is not None and dt > 0.0:
        world.eef_velocity = (pos - world._prev_eef) / dt
    world._prev_eef = pos

    if world.attached is not None:
        block = world.blocks[world.attached]
        hand = RigidTransform(rotation=rot, translation=pos)
        block.position = hand.apply(world.grasp_rel)

    for bid, block in world.blocks.items():
        if bid == world.attached or block.resting:
            continue
        bottom_before = block.bottom
        block.velocity[2] -= GRAVITY * dt
        block.position = block.position + block.velocity * dt
        support = _support_height(world, bid, bottom_before)
        if block.bottom <= support:
            block.position[2] = support + block.spec.height / 2.0
            block.velocity = np.zeros(3)
            block.resting = True
            events.append({"kind": "rest", "block": bid})

    for bid, block in world.blocks.items():
        side = block.position[1] >= 0.0
        if side != prev_sides[bid]:
            world.histories[bid].crossings.append(world.time)
            events.append({
                "kind": "crossing",
                "block": bid,
                "direction": "pick_to_place" if side else "place_to_pick",
            })

    world.time += dt
    if world.time >= world.config.duration - 1e-9 and not world.timeout_emitted:
        world.timeout_emitted = True
        events.append({"kind": "timeout"})
    return events


def all_blocks_placed(world: WorldState) -> bool:
    """True when every block rests within its target region (early finish)."""
    for bid, block in world.blocks.items():
        if not block.resting or bid == world.attached:
            return False
        tx, ty = world.box.targets[bid]
        if np.hypot(block.position[0] - tx, block.position[1] - ty) > TARGET_RADIUS:
            return False
    return True


def classify_outcome(world: WorldState, bid: str) -> Outcome:
    """Assign the single end-of-trial outcome for one block."""
    block = world.blocks[bid]
    hist = world.histories[bid]
    box = world.box
    tx, ty = box.targets[bid]
    on_target = (
        block.resting
        and np.hypot(block.position[0] - tx, block.position[1] - ty) <= TARGET_RADIUS
    )
    if on_target:
        return Outcome.SUCCESS
    if hist.ever_crossed:
        return Outcome.CROSSED_NOT_REACHED
    resting_off_surfaces = (
        block.resting
        and not box.inside_box(block.position)
        and not box.inside_table(block.position)
    )
    if resting_off_surfaces:
        return Outcome.DROPPED_FLOOR
    if hist.detaches:
        return Outcome.DROPPED_SAME_SIDE
    if not hist.ever_attached:
        return Outcome.NEVER_GRASPED
    return Outcome.IN_PROGRESS_AT_TIMEOUT


def classify_all(world: WorldState) -> dict[str, Outcome]:
    return {bid: classify_outcome(world, bid) for bid in world.blocks}
