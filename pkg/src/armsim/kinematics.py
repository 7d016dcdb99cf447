"""Kinematic model of the 7-DOF arm.

Frames: the arm base frame sits at the shoulder, X forward, Y left, Z up.
At q = 0 the arm hangs straight down (-Z) with all link frames aligned to
the base, so the end-effector orientation is the identity. The end-effector
is the grasp point of the hand, one hand-offset beyond the last wrist joint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Joint order mirrors the mode-cycling sequence of the direct joint controller.
JOINT_NAMES = (
    "shoulder flexion/extension",
    "shoulder adduction/abduction",
    "shoulder internal/external rotation",
    "elbow flexion/extension",
    "wrist pronation/supination",
    "wrist ulnar/radial deviation",
    "wrist flexion/extension",
)

NUM_JOINTS = 7

DEFAULT_COND_LIMIT = 60.0

# Singular values below this fraction of the largest are treated as zero
# when pseudo-inverting the Jacobian.
PINV_RCOND = 1e-9


# ---------------------------------------------------------------------------
# quaternions ([w, x, y, z], unit)
# ---------------------------------------------------------------------------

def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ValueError("cannot normalize zero quaternion")
    return q / n


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        return quat_identity()
    half = 0.5 * angle
    return np.concatenate(([np.cos(half)], np.sin(half) * axis / n))


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector v by unit quaternion q."""
    w, x, y, z = q
    vx, vy, vz = v
    # v' = v + w*t + u x t with t = 2 (u x v); expanded to avoid np.cross
    tx = 2.0 * (y * vz - z * vy)
    ty = 2.0 * (z * vx - x * vz)
    tz = 2.0 * (x * vy - y * vx)
    return np.array([
        vx + w * tx + y * tz - z * ty,
        vy + w * ty + z * tx - x * tz,
        vz + w * tz + x * ty - y * tx,
    ])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_angle(q: np.ndarray) -> float:
    """Rotation angle of a unit quaternion, in [0, pi]."""
    w = min(1.0, abs(float(q[0])))
    return 2.0 * float(np.arccos(w))


@dataclass(frozen=True)
class RigidTransform:
    """Rotation (unit quaternion, wxyz) plus translation, in meters."""

    rotation: np.ndarray = field(default_factory=quat_identity)
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", quat_normalize(self.rotation))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float))

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self ∘ other: apply other first, then self."""
        return RigidTransform(
            rotation=quat_multiply(self.rotation, other.rotation),
            translation=self.translation + quat_rotate(self.rotation, other.translation),
        )

    def inverse(self) -> "RigidTransform":
        inv_rot = quat_conjugate(self.rotation)
        return RigidTransform(
            rotation=inv_rot,
            translation=-quat_rotate(inv_rot, self.translation),
        )

    def apply(self, point: np.ndarray) -> np.ndarray:
        return quat_rotate(self.rotation, np.asarray(point, dtype=float)) + self.translation

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform()


def _default_axes() -> np.ndarray:
    return np.array([
        [0.0, -1.0, 0.0],   # shoulder flexion/extension
        [1.0, 0.0, 0.0],    # shoulder adduction/abduction
        [0.0, 0.0, -1.0],   # shoulder internal/external rotation
        [0.0, -1.0, 0.0],   # elbow flexion/extension
        [0.0, 0.0, -1.0],   # wrist pronation/supination
        [1.0, 0.0, 0.0],    # wrist ulnar/radial deviation
        [0.0, -1.0, 0.0],   # wrist flexion/extension
    ])


def _default_limits() -> np.ndarray:
    return np.array([
        [-np.pi, np.pi],
        [-np.pi / 2, np.pi / 2],
        [-np.pi, np.pi],
        [0.0, 2.4],
        [-np.pi, np.pi],
        [-np.pi / 2, np.pi / 2],
        [-np.pi, np.pi],
    ])


def _default_home() -> np.ndarray:
    # Elbow bent and shoulder flexed: non-singular, clear of the task surfaces.
    return np.array([0.5, -0.1, 0.0, 1.1, 0.0, 0.0, 0.0])


@dataclass(frozen=True)
class ArmGeometry:
    """Link dimensions and joint layout of the simulated arm.

    segment_lengths is (upper arm, forearm, hand offset) in meters. Axes are
    unit vectors expressed in the predecessor link frame.
    """

    segment_lengths: tuple[float, float, float] = (0.33, 0.33, 0.08)
    joint_axes: np.ndarray = field(default_factory=_default_axes)
    joint_limits: np.ndarray = field(default_factory=_default_limits)
    home_configuration: np.ndarray = field(default_factory=_default_home)

    def __post_init__(self):
        axes = np.asarray(self.joint_axes, dtype=float)
        limits = np.asarray(self.joint_limits, dtype=float)
        home = np.asarray(self.home_configuration, dtype=float)
        if axes.shape != (NUM_JOINTS, 3):
            raise ValueError(f"expected {NUM_JOINTS} joint axes, got shape {axes.shape}")
        if limits.shape != (NUM_JOINTS, 2):
            raise ValueError(f"expected {NUM_JOINTS} joint limit pairs, got shape {limits.shape}")
        if np.any(limits[:, 0] >= limits[:, 1]):
            raise ValueError("joint limits must satisfy min < max")
        norms = np.linalg.norm(axes, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError("joint axes must be unit vectors")
        if home.shape != (NUM_JOINTS,):
            raise ValueError("home configuration must have 7 entries")
        object.__setattr__(self, "joint_axes", axes)
        object.__setattr__(self, "joint_limits", limits)
        object.__setattr__(self, "home_configuration", home)
        self.check_limits(home)
        # flattened copies for the scalar FK hot path
        object.__setattr__(
            self, "_axes_flat", tuple((float(a[0]), float(a[1]), float(a[2])) for a in axes)
        )
        offs = self.link_offsets()
        object.__setattr__(self, "_offsets_z", tuple(float(offs[j, 2]) for j in range(NUM_JOINTS + 1)))

    @property
    def reach(self) -> float:
        return float(sum(self.segment_lengths))

    def link_offsets(self) -> np.ndarray:
        """Translation from each predecessor frame to the joint, plus the
        final end-effector offset (8 rows)."""
        upper, fore, hand = self.segment_lengths
        offsets = np.zeros((NUM_JOINTS + 1, 3))
        offsets[3] = (0.0, 0.0, -upper)   # shoulder cluster -> elbow
        offsets[5] = (0.0, 0.0, -fore)    # elbow cluster -> wrist
        offsets[7] = (0.0, 0.0, -hand)    # wrist -> grasp point
        return offsets

    def check_limits(self, q: np.ndarray) -> None:
        q = np.asarray(q, dtype=float)
        if q.shape != (NUM_JOINTS,):
            raise ValueError("joint vector must have 7 entries")
        lo, hi = self.joint_limits[:, 0], self.joint_limits[:, 1]
        bad = np.where((q < lo - 1e-12) | (q > hi + 1e-12))[0]
        if bad.size:
            j = int(bad[0])
            raise ValueError(
                f"joint {j} ({JOINT_NAMES[j]}) value {q[j]:.4f} outside limits "
                f"[{lo[j]:.4f}, {hi[j]:.4f}]"
            )

    def clamp(self, q: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(q, dtype=float), self.joint_limits[:, 0], self.joint_limits[:, 1])

    def random_configuration(self, rng: np.random.Generator) -> np.ndarray:
        lo, hi = self.joint_limits[:, 0], self.joint_limits[:, 1]
        return rng.uniform(lo, hi)


@dataclass(frozen=True)
class FkResult:
    """Per-link poses in the base frame plus joint data for the Jacobian."""

    link_poses: list[RigidTransform]
    eef: RigidTransform
    joint_origins: np.ndarray   # (7, 3) joint positions in base frame
    joint_axes_base: np.ndarray  # (7, 3) joint axes in base frame

    @property
    def eef_position(self) -> np.ndarray:
        return self.eef.translation


def fk_arrays(geometry: ArmGeometry, q: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Array-only forward kinematics for hot paths.

    Returns (joint_origins (7,3), joint_axes_base (7,3), eef_position (3,),
    eef_rotation quaternion (4,)) without limit checks or wrapper objects.
    Scalar arithmetic throughout: this runs inside the 1 kHz loop and the
    planner's collision checks.
    """
    axes = geometry._axes_flat
    offsets_z = geometry._offsets_z
    w, x, y, z = 1.0, 0.0, 0.0, 0.0
    px, py, pz = 0.0, 0.0, 0.0
    origins = np.empty((NUM_JOINTS, 3))
    axes_base = np.empty((NUM_JOINTS, 3))
    for j in range(NUM_JOINTS):
        oz = offsets_z[j]
        if oz != 0.0:
            # rotate (0, 0, oz) by current quaternion
            tx = 2.0 * y * oz
            ty = -2.0 * x * oz
            px += w * tx - z * ty
            py += w * ty + z * tx
            pz += oz + x * ty - y * tx
        ax, ay, az = axes[j]
        tx = 2.0 * (y * az - z * ay)
        ty = 2.0 * (z * ax - x * az)
        tz = 2.0 * (x * ay - y * ax)
        axes_base[j, 0] = ax + w * tx + y * tz - z * ty
        axes_base[j, 1] = ay + w * ty + z * tx - x * tz
        axes_base[j, 2] = az + w * tz + x * ty - y * tx
        origins[j, 0] = px
        origins[j, 1] = py
        origins[j, 2] = pz
        half = 0.5 * float(q[j])
        cw = math.cos(half)
        s = math.sin(half)
        bx, by, bz = s * ax, s * ay, s * az
        w, x, y, z = (
            w * cw - x * bx - y * by - z * bz,
            w * bx + x * cw + y * bz - z * by,
            w * by - x * bz + y * cw + z * bx,
            w * bz + x * by - y * bx + z * cw,
        )
    oz = offsets_z[NUM_JOINTS]
    tx = 2.0 * y * oz
    ty = -2.0 * x * oz
    eef_pos = np.array([
        px + w * tx - z * ty,
        py + w * ty + z * tx,
        pz + oz + x * ty - y * tx,
    ])
    return origins, axes_base, eef_pos, np.array([w, x, y, z])


def forward_kinematics(geometry: ArmGeometry, q: np.ndarray) -> FkResult:
    """Pose of every link frame and the grasp point, in the base frame."""
    q = np.asarray(q, dtype=float)
    geometry.check_limits(q)
    offsets = geometry.link_offsets()
    rot = quat_identity()
    pos = np.zeros(3)
    link_poses: list[RigidTransform] = []
    origins = np.zeros((NUM_JOINTS, 3))
    axes_base = np.zeros((NUM_JOINTS, 3))
    for j in range(NUM_JOINTS):
        pos = pos + quat_rotate(rot, offsets[j])
        axes_base[j] = quat_rotate(rot, geometry.joint_axes[j])
        origins[j] = pos
        rot = quat_multiply(rot, quat_from_axis_angle(geometry.joint_axes[j], q[j]))
        link_poses.append(RigidTransform(rotation=rot, translation=pos))
    eef_pos = pos + quat_rotate(rot, offsets[NUM_JOINTS])
    eef = RigidTransform(rotation=rot, translation=eef_pos)
    return FkResult(link_poses=link_poses, eef=eef, joint_origins=origins, joint_axes_base=axes_base)


def jacobian(geometry: ArmGeometry, q: np.ndarray) -> np.ndarray:
    """6x7 geometric Jacobian in the base frame, linear rows on top."""
    fk = forward_kinematics(geometry, q)
    J = np.zeros((6, NUM_JOINTS))
    p_eef = fk.eef_position
    for j in range(NUM_JOINTS):
        axis = fk.joint_axes_base[j]
        J[:3, j] = np.cross(axis, p_eef - fk.joint_origins[j])
        J[3:, j] = axis
    return J


def condition_number(J: np.ndarray) -> float:
    """Ratio of largest to smallest singular value; inf when rank-deficient."""
    J = np.asarray(J, dtype=float)
    if not np.all(np.isfinite(J)):
        raise ValueError("Jacobian must be finite")
    sigma = np.linalg.svd(J, compute_uv=False)
    if sigma[-1] < 1e-12:
        return float("inf")
    return float(sigma[0] / sigma[-1])


@dataclass(frozen=True)
class VelocityStepResult:
    q: np.ndarray
    guarded: bool


def eef_velocity_step(
    geometry: ArmGeometry,
    q: np.ndarray,
    twist: np.ndarray,
    dt: float,
    cond_limit: float = DEFAULT_COND_LIMIT,
) -> VelocityStepResult:
    """One resolved-rate step: q' = clamp(q + pinv(J) @ twist * dt).

    The step is rejected (q returned unchanged, guarded=True) when the
    Jacobian condition number exceeds cond_limit or the update is not finite.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    twist = np.asarray(twist, dtype=float)
    if twist.shape != (6,) or not np.all(np.isfinite(twist)):
        raise ValueError("twist must be 6 finite components")
    q = np.asarray(q, dtype=float)
    J = jacobian(geometry, q)
    if condition_number(J) > cond_limit:
        return VelocityStepResult(q=q.copy(), guarded=True)
    dq = np.linalg.pinv(J, rcond=PINV_RCOND) @ twist * dt
    if not np.all(np.isfinite(dq)):
        return VelocityStepResult(q=q.copy(), guarded=True)
    return VelocityStepResult(q=geometry.clamp(q + dq), guarded=False)
