"""Joint-space motion planning: damped-least-squares IK, collision checking
against the task geometry, bidirectional RRT with shortcut smoothing, and
trajectory execution with immediate abort.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kinematics import (
    NUM_JOINTS,
    ArmGeometry,
    RigidTransform,
    fk_arrays,
    quat_conjugate,
    quat_multiply,
    quat_rotate,
)

IK_POS_TOL = 5e-3          # meters
IK_ORI_TOL = math.radians(2.0)
IK_MAX_ITERS = 200
IK_DAMPING = 0.05

# Collision-sphere layout: 5 samples per link, radii per link.
LINK_SPHERE_COUNT = 5
LINK_RADII = (0.045, 0.040, 0.035)  # upper arm, forearm, hand

# One resolution for tree growth and the emitted-trajectory re-check, so a
# path that grew collision-free stays collision-free under re-validation.
EDGE_CHECK_STEP = 0.02     # rad per joint
FINAL_CHECK_STEP = 0.02
EXTEND_STEP = 0.2          # rad per joint per tree extension
MAX_WAYPOINT_STEP = 0.1    # rad per joint between emitted waypoints
SHORTCUT_ATTEMPTS = 30
DEFAULT_JOINT_SPEED = 0.7  # rad/s, constant-speed time parameterization

# Deterministic substitute for a wall-clock budget: planning effort scales
# with the requested budget but never depends on machine speed.
ITERATIONS_PER_BUDGET_SECOND = 4000


# ---------------------------------------------------------------------------
# targets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PoseTarget:
    """End-effector goal: a position plus either a full orientation, an
    approach axis (hand direction, free rotation about it), or nothing."""

    position: np.ndarray
    rotation: np.ndarray | None = None       # unit quaternion, wxyz
    approach_axis: np.ndarray | None = None  # unit vector in base frame

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        if self.rotation is not None and self.approach_axis is not None:
            raise ValueError("give either a rotation or an approach axis, not both")


def hand_axis(rotation: np.ndarray) -> np.ndarray:
    """Direction the hand points (wrist toward grasp point), base frame."""
    return quat_rotate(rotation, np.array([0.0, 0.0, -1.0]))


def _orientation_error(target: PoseTarget, rotation: np.ndarray) -> np.ndarray:
    if target.rotation is not None:
        q_err = quat_multiply(target.rotation, quat_conjugate(rotation))
        w = float(np.clip(q_err[0], -1.0, 1.0))
        vec = q_err[1:]
        s = np.linalg.norm(vec)
        if s < 1e-12:
            return np.zeros(3)
        angle = 2.0 * math.atan2(s, w)
        if angle > math.pi:
            angle -= 2.0 * math.pi
        return (vec / s) * angle
    if target.approach_axis is not None:
        cur = hand_axis(rotation)
        tgt = np.asarray(target.approach_axis, dtype=float)
        tgt = tgt / np.linalg.norm(tgt)
        cross = np.cross(cur, tgt)
        s = np.linalg.norm(cross)
        d = float(np.dot(cur, tgt))
        if s < 1e-12:
            if d > 0.0:
                return np.zeros(3)
            # antiparallel: rotate about any axis orthogonal to cur
            helper = np.array([1.0, 0.0, 0.0])
            if abs(cur[0]) > 0.9:
                helper = np.array([0.0, 1.0, 0.0])
            axis = np.cross(cur, helper)
            return axis / np.linalg.norm(axis) * math.pi
        return cross / s * math.atan2(s, d)
    return np.zeros(3)


def _pose_error(target: PoseTarget, eef_pos: np.ndarray, eef_rot: np.ndarray) -> tuple[np.ndarray, float, float]:
    e = np.zeros(6)
    e[:3] = target.position - eef_pos
    e[3:] = _orientation_error(target, eef_rot)
    return e, float(np.linalg.norm(e[:3])), float(np.linalg.norm(e[3:]))


def ik_solve(
    geometry: ArmGeometry,
    target: PoseTarget,
    seeds: list[np.ndarray],
    pos_tol: float = IK_POS_TOL,
    ori_tol: float = IK_ORI_TOL,
    max_iters: int = IK_MAX_ITERS,
) -> np.ndarray | None:
    """Damped-least-squares IK from each seed in turn; first success wins.

    Success means position error <= pos_tol and orientation error <= ori_tol.
    Returns None when every seed fails to converge.
    """
    for seed in seeds:
        q = geometry.clamp(np.asarray(seed, dtype=float))
        for _ in range(max_iters + 1):
            origins, axes, eef_pos, eef_rot = fk_arrays(geometry, q)
            e, pos_err, ori_err = _pose_error(target, eef_pos, eef_rot)
            if pos_err <= pos_tol and ori_err <= ori_tol:
                return q
            J = np.zeros((6, NUM_JOINTS))
            J[:3] = np.cross(axes, eef_pos[None, :] - origins).T
            J[3:] = axes.T
            JJt = J @ J.T + (IK_DAMPING ** 2) * np.eye(6)
            dq = J.T @ np.linalg.solve(JJt, e)
            step = np.linalg.norm(dq)
            if step > 0.5:
                dq *= 0.5 / step
            q = geometry.clamp(q + dq)
    return None


# ---------------------------------------------------------------------------
# collision model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Aabb:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float))


@dataclass(frozen=True)
class CylinderObstacle:
    """Upright cylinder: center is the centroid, axis along +Z."""

    center: np.ndarray
    radius: float
    height: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))


@dataclass
class ObstacleSet:
    boxes: list[Aabb] = field(default_factory=list)
    cylinders: list[CylinderObstacle] = field(default_factory=list)

    def stacked(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Pre-stacked arrays for vectorized distance tests."""
        if self.boxes:
            lo = np.stack([b.lo for b in self.boxes])
            hi = np.stack([b.hi for b in self.boxes])
        else:
            lo = np.zeros((0, 3))
            hi = np.zeros((0, 3))
        if self.cylinders:
            cyl = np.stack([
                np.concatenate([c.center, [c.radius, c.height]]) for c in self.cylinders
            ])
        else:
            cyl = np.zeros((0, 5))
        return lo, hi, cyl


@dataclass(frozen=True)
class HeldBlock:
    """Cylinder rigidly attached below the hand frame (grasp offset along
    the local hand axis); collision-tested as a short stack of spheres."""

    radius: float
    height: float
    grasp_offset: float


def _aabb_distances(points: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    # points (n,3), lo/hi (m,3) -> (n,m)
    d = np.maximum(lo[None, :, :] - points[:, None, :], points[:, None, :] - hi[None, :, :])
    d = np.maximum(d, 0.0)
    return np.linalg.norm(d, axis=2)


def _cylinder_distances(points: np.ndarray, cyl: np.ndarray) -> np.ndarray:
    # cyl rows: cx, cy, cz, radius, height -> (n,m)
    delta = points[:, None, :2] - cyl[None, :, :2]
    radial = np.linalg.norm(delta, axis=2) - cyl[None, :, 3]
    axial = np.abs(points[:, None, 2] - cyl[None, :, 2]) - cyl[None, :, 4] / 2.0
    return np.hypot(np.maximum(radial, 0.0), np.maximum(axial, 0.0))


_SPHERE_TS = np.linspace(0.0, 1.0, LINK_SPHERE_COUNT)
_SPHERE_RADII = np.repeat(np.asarray(LINK_RADII), LINK_SPHERE_COUNT)


def _body_spheres(
    geometry: ArmGeometry,
    q: np.ndarray,
    held_block: HeldBlock | None,
) -> tuple[np.ndarray, np.ndarray]:
    origins, _, eef_pos, eef_rot = fk_arrays(geometry, q)
    anchors = np.stack([np.zeros(3), origins[3], origins[5], eef_pos])
    seg = anchors[1:] - anchors[:-1]  # (3,3)
    centers = anchors[:-1][:, None, :] + _SPHERE_TS[None, :, None] * seg[:, None, :]
    centers = centers.reshape(-1, 3)
    radii = _SPHERE_RADII
    if held_block is not None:
        axis = hand_axis(eef_rot)
        mid = eef_pos + axis * held_block.grasp_offset
        # Cover the upper part of the held cylinder only: a just-grasped
        # block still rests on its support surface, which must not read as a
        # collision. offs point from the block center back toward the hand.
        offs = np.array([-held_block.height / 2.0, -held_block.height / 4.0])
        hc = mid[None, :] + offs[:, None] * axis[None, :]
        hr = np.full(2, held_block.radius * 1.02)
        centers = np.concatenate([centers, hc], axis=0)
        radii = np.concatenate([radii, hr])
    return centers, radii


def collision_free(
    geometry: ArmGeometry,
    q: np.ndarray,
    obstacles: ObstacleSet,
    held_block: HeldBlock | None = None,
    base_pose: RigidTransform | None = None,
) -> bool:
    """True when every collision sphere of the arm (and the held block, if
    any) clears every obstacle. Obstacles live in the frame that base_pose
    maps the arm base into (identity: obstacles in the base frame)."""
    centers, radii = _body_spheres(geometry, q, held_block)
    if base_pose is not None:
        centers = centers @ base_pose.rotation_matrix().T + base_pose.translation
    lo, hi, cyl = obstacles.stacked()
    if lo.shape[0]:
        if np.any(_aabb_distances(centers, lo, hi) < radii[:, None]):
            return False
    if cyl.shape[0]:
        if np.any(_cylinder_distances(centers, cyl) < radii[:, None]):
            return False
    return True


# ---------------------------------------------------------------------------
# planning
# ---------------------------------------------------------------------------

@dataclass
class PlanRequest:
    """Planning problem. The goal pose is expressed in the arm base frame;
    obstacles live in the frame base_pose maps the base into."""

    start: np.ndarray
    goal: PoseTarget
    obstacles: ObstacleSet
    held_block: HeldBlock | None = None
    base_pose: RigidTransform | None = None
    time_budget: float = 0.5
    rng_seed: int = 0

    def __post_init__(self):
        self.start = np.asarray(self.start, dtype=float)
        if self.time_budget <= 0.0:
            raise ValueError("time_budget must be positive")


class PlanningError(ValueError):
    pass


GOAL_EXACT = "exact"
GOAL_INTERMEDIATE = "intermediate"


@dataclass(frozen=True)
class JointTrajectory:
    times: np.ndarray
    configs: np.ndarray
    goal_kind: str

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    def sample(self, elapsed: float) -> np.ndarray:
        """Linear interpolation between bracketing waypoints."""
        t = self.times
        if elapsed <= t[0]:
            return self.configs[0].copy()
        if elapsed >= t[-1]:
            return self.configs[-1].copy()
        i = int(np.searchsorted(t, elapsed, side="right")) - 1
        span = t[i + 1] - t[i]
        alpha = (elapsed - t[i]) / span
        return (1.0 - alpha) * self.configs[i] + alpha * self.configs[i + 1]


def _segment_configs(a: np.ndarray, b: np.ndarray, step: float) -> np.ndarray:
    n = int(np.ceil(np.max(np.abs(b - a)) / step)) if np.any(a != b) else 0
    if n == 0:
        return b[None, :]
    ts = np.linspace(0.0, 1.0, n + 1)[1:]
    return a[None, :] + ts[:, None] * (b - a)[None, :]


def _edge_free(geometry, a, b, obstacles, held, base, step) -> bool:
    for q in _segment_configs(a, b, step):
        if not collision_free(geometry, q, obstacles, held, base):
            return False
    return True


def _path_free(geometry, path: np.ndarray, obstacles, held, base, step) -> bool:
    for i in range(len(path) - 1):
        if not _edge_free(geometry, path[i], path[i + 1], obstacles, held, base, step):
            return False
    return True


class _Tree:
    def __init__(self, root: np.ndarray):
        self.nodes = [np.asarray(root, dtype=float)]
        self.parents = [-1]

    def nearest(self, q: np.ndarray) -> int:
        arr = np.stack(self.nodes)
        return int(np.argmin(np.linalg.norm(arr - q[None, :], axis=1)))

    def add(self, q: np.ndarray, parent: int) -> int:
        self.nodes.append(q)
        self.parents.append(parent)
        return len(self.nodes) - 1

    def path_to(self, index: int) -> list[np.ndarray]:
        out = []
        while index >= 0:
            out.append(self.nodes[index])
            index = self.parents[index]
        out.reverse()
        return out


def _steer(a: np.ndarray, b: np.ndarray, step: float) -> np.ndarray:
    delta = b - a
    m = np.max(np.abs(delta))
    if m <= step:
        return b.copy()
    return a + delta * (step / m)


def _shortcut(geometry, path, obstacles, held, base, rng, attempts) -> list[np.ndarray]:
    path = list(path)
    for _ in range(attempts):
        if len(path) <= 2:
            break
        i = int(rng.integers(0, len(path) - 1))
        j = int(rng.integers(0, len(path) - 1))
        if abs(i - j) < 2:
            continue
        i, j = min(i, j), max(i, j)
        if _edge_free(geometry, path[i], path[j], obstacles, held, base, FINAL_CHECK_STEP):
            path = path[: i + 1] + path[j:]
    return path


def _densify(path: list[np.ndarray]) -> np.ndarray:
    out = [path[0]]
    for i in range(len(path) - 1):
        seg = _segment_configs(path[i], path[i + 1], MAX_WAYPOINT_STEP)
        out.extend(seg)
    return np.stack(out)


def _time_parameterize(configs: np.ndarray, goal_kind: str, joint_speed: float) -> JointTrajectory:
    keep = [0]
    for i in range(1, len(configs)):
        if np.max(np.abs(configs[i] - configs[keep[-1]])) > 1e-12:
            keep.append(i)
    configs = configs[keep]
    times = np.zeros(len(configs))
    for i in range(1, len(configs)):
        dt = np.max(np.abs(configs[i] - configs[i - 1])) / joint_speed
        times[i] = times[i - 1] + dt
    return JointTrajectory(times=times, configs=configs, goal_kind=goal_kind)


def plan_reach(
    geometry: ArmGeometry,
    request: PlanRequest,
    joint_speed: float = DEFAULT_JOINT_SPEED,
) -> JointTrajectory:
    """Plan a collision-free joint trajectory to the requested goal pose.

    Bidirectional RRT between the start and an IK-solved goal configuration.
    When the goal is unreachable or the iteration budget runs out, an
    intermediate goal is returned instead: the explored configuration that
    brings the end-effector closest to the goal position.

    Deterministic for a fixed request (including rng_seed).
    """
    start = geometry.clamp(request.start)
    obstacles = request.obstacles
    held = request.held_block
    base = request.base_pose
    if not collision_free(geometry, start, obstacles, held, base):
        raise PlanningError("start configuration is in collision")

    rng = np.random.default_rng(request.rng_seed)
    budget = int(request.time_budget * ITERATIONS_PER_BUDGET_SECOND)

    seeds = [start, geometry.home_configuration]
    for _ in range(3):
        seeds.append(geometry.clamp(start + rng.normal(0.0, 0.3, NUM_JOINTS)))
    goal_q = ik_solve(geometry, request.goal, seeds)
    if goal_q is not None and not collision_free(geometry, goal_q, obstacles, held, base):
        # retry from random seeds for a collision-free solution
        retry = [geometry.random_configuration(rng) for _ in range(5)]
        goal_q = ik_solve(geometry, request.goal, retry)
        if goal_q is not None and not collision_free(geometry, goal_q, obstacles, held, base):
            goal_q = None

    path: list[np.ndarray] | None = None
    goal_kind = GOAL_EXACT
    start_tree = _Tree(start)

    if goal_q is not None:
        if np.max(np.abs(goal_q - start)) < 1e-9:
            return JointTrajectory(times=np.zeros(1), configs=start[None, :], goal_kind=GOAL_EXACT)
        if _edge_free(geometry, start, goal_q, obstacles, held, base, FINAL_CHECK_STEP):
            path = [start, goal_q]
        else:
            goal_tree = _Tree(goal_q)
            a, b = start_tree, goal_tree
            for _ in range(budget):
                q_rand = geometry.random_configuration(rng)
                idx = a.nearest(q_rand)
                q_new = _steer(a.nodes[idx], q_rand, EXTEND_STEP)
                if not _edge_free(geometry, a.nodes[idx], q_new, obstacles, held, base, EDGE_CHECK_STEP):
                    a, b = b, a
                    continue
                new_idx = a.add(q_new, idx)
                # connect the other tree toward the new node
                jdx = b.nearest(q_new)
                q_cur = b.nodes[jdx]
                while True:
                    q_step = _steer(q_cur, q_new, EXTEND_STEP)
                    if not _edge_free(geometry, q_cur, q_step, obstacles, held, base, EDGE_CHECK_STEP):
                        break
                    jdx = b.add(q_step, jdx)
                    q_cur = q_step
                    if np.max(np.abs(q_cur - q_new)) < 1e-9:
                        break
                if np.max(np.abs(q_cur - q_new)) < 1e-9:
                    pa = a.path_to(new_idx)
                    pb = b.path_to(jdx)
                    if a is start_tree:
                        path = pa + pb[::-1][1:]
                    else:
                        path = pb + pa[::-1][1:]
                    break
                a, b = b, a

    if path is None:
        # fallback: walk the end-effector toward the goal position until an
        # obstacle blocks, then take the explored configuration closest to it
        goal_pos = request.goal.position
        tree = start_tree
        q_cur = start
        parent = 0
        for _ in range(200):
            origins, axes, eef_pos, _ = fk_arrays(geometry, q_cur)
            err = goal_pos - eef_pos
            dist = float(np.linalg.norm(err))
            if dist < 1e-3:
                break
            step = err * (min(dist, 0.02) / dist)
            Jp = np.cross(axes, eef_pos[None, :] - origins).T  # 3x7 position rows
            dq = Jp.T @ np.linalg.solve(Jp @ Jp.T + (IK_DAMPING ** 2) * np.eye(3), step)
            q_new = geometry.clamp(q_cur + dq)
            if np.max(np.abs(q_new - q_cur)) < 1e-9:
                break
            if not _edge_free(geometry, q_cur, q_new, obstacles, held, base, EDGE_CHECK_STEP):
                break
            parent = tree.add(q_new, parent)
            q_cur = q_new
        for _ in range(min(budget, 400)):
            q_rand = geometry.random_configuration(rng)
            idx = tree.nearest(q_rand)
            q_new = _steer(tree.nodes[idx], q_rand, EXTEND_STEP)
            if _edge_free(geometry, tree.nodes[idx], q_new, obstacles, held, base, EDGE_CHECK_STEP):
                tree.add(q_new, idx)
        dists = [
            float(np.linalg.norm(fk_arrays(geometry, q)[2] - goal_pos))
            for q in tree.nodes
        ]
        best = int(np.argmin(dists))
        if best == 0:
            return JointTrajectory(times=np.zeros(1), configs=start[None, :], goal_kind=GOAL_INTERMEDIATE)
        path = tree.path_to(best)
        goal_kind = GOAL_INTERMEDIATE

    path = _shortcut(geometry, path, obstacles, held, base, rng, SHORTCUT_ATTEMPTS)
    configs = _densify(path)
    if not _path_free(geometry, configs, obstacles, held, base, FINAL_CHECK_STEP):
        raise PlanningError("emitted trajectory failed densified collision re-check")
    return _time_parameterize(configs, goal_kind, joint_speed)


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------

STATUS_RUNNING = "running"
STATUS_DONE = "done"
STATUS_ABORTED = "aborted"


class PlanExecutor:
    """Plays a trajectory by elapsed time; an abort freezes the arm at the
    configuration of the tick where it was raised."""

    def __init__(self, trajectory: JointTrajectory):
        self.trajectory = trajectory
        self.status = STATUS_RUNNING
        self._frozen: np.ndarray | None = None

    def step(self, elapsed: float, abort: bool = False) -> tuple[np.ndarray, str]:
        if self.status == STATUS_ABORTED:
            return self._frozen.copy(), self.status
        q = self.trajectory.sample(elapsed)
        if abort:
            self.status = STATUS_ABORTED
            self._frozen = q
            return q.copy(), self.status
        if elapsed >= self.trajectory.duration:
            self.status = STATUS_DONE
            q = self.trajectory.configs[-1].copy()
        return q, self.status


def execute_tick(
    trajectory: JointTrajectory, elapsed: float, abort: bool = False
) -> tuple[np.ndarray, str]:
    """Stateless single-shot form of PlanExecutor.step."""
    if elapsed < 0.0:
        raise ValueError("elapsed must be non-negative")
    q = trajectory.sample(elapsed)
    if abort:
        return q, STATUS_ABORTED
    if elapsed >= trajectory.duration:
        return trajectory.configs[-1].copy(), STATUS_DONE
    return q, STATUS_RUNNING
