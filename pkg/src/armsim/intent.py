"""Gaze- and context-based intent estimation over the remaining blocks.

Each candidate block is scored by a Gaussian of its distance from the gaze
point in an image plane normal to the gaze ray, multiplied by a task-context
prior over block colors; the normalized product is the posterior belief.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .kinematics import quat_rotate
from .world import BLOCK_SPECS, BoxSpec, Color

SIGMA_DEFAULT = 0.05          # meters on the reference image plane
REFERENCE_DEPTH = 1.0         # image plane distance along the gaze ray
FAR_SENTINEL = 1e6            # distance assigned to blocks behind the gaze

# Context prior over block colors given the previously released color:
# opposite-color blocks are three times as likely as same-color ones.
PRIOR_OPPOSITE = 0.375
PRIOR_SAME = 0.125

GAZE_ANGLE_NOISE = math.radians(1.5)  # tracker error, for synthetic gaze


@dataclass(frozen=True)
class GazeSample:
    origin: np.ndarray
    direction: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=float)
        direction = np.asarray(self.direction, dtype=float)
        n = np.linalg.norm(direction)
        if abs(n - 1.0) > 1e-9:
            if n < 1e-12:
                raise ValueError("gaze direction must be a nonzero vector")
            direction = direction / n
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "direction", direction)


STAGE_PICK = "pick"
STAGE_PLACE = "place"


@dataclass(frozen=True)
class TaskContext:
    previous_color: Color | None = None
    stage: str = STAGE_PICK


@dataclass(frozen=True)
class Belief:
    """Posterior probability per remaining block; sums to one."""

    probabilities: dict[str, float]
    prior_only: bool = False  # set when the gaze likelihood underflowed

    def argmax(self, order: tuple[str, ...]) -> str | None:
        """Highest-probability block; ties break by task-sequence order."""
        if not self.probabilities:
            return None
        best = None
        best_p = -1.0
        for bid in order:
            if bid not in self.probabilities:
                continue
            p = self.probabilities[bid]
            if p > best_p + 1e-15:
                best = bid
                best_p = p
        return best


@dataclass(frozen=True)
class Selection:
    block: str | None = None
    locked: bool = False


def image_plane_distances(
    gaze: GazeSample,
    block_centers: dict[str, np.ndarray],
    reference_depth: float = REFERENCE_DEPTH,
) -> dict[str, float]:
    """In-plane distance of each block center from the gaze point, on the
    plane normal to the gaze ray at the reference depth.

    Block centers are projected through the gaze origin (perspective), so
    the distance is the angular offset scaled to the reference plane. Blocks
    at or behind the origin get a far sentinel.
    """
    out = {}
    o, d = gaze.origin, gaze.direction
    for bid, center in block_centers.items():
        rel = np.asarray(center, dtype=float) - o
        depth = float(np.dot(rel, d))
        if depth <= 1e-9:
            out[bid] = FAR_SENTINEL
            continue
        projected = rel * (reference_depth / depth)
        out[bid] = float(np.linalg.norm(projected - reference_depth * d))
    return out


def context_prior(
    context: TaskContext,
    block_ids,
    prior_same: float = PRIOR_SAME,
    prior_opposite: float = PRIOR_OPPOSITE,
) -> dict[str, float]:
    """Color-conditioned prior weight per block; uniform before the first
    release."""
    if context.previous_color is None:
        return {bid: 1.0 for bid in block_ids}
    out = {}
    for bid in block_ids:
        same = BLOCK_SPECS[bid].color == context.previous_color
        out[bid] = prior_same if same else prior_opposite
    return out


def posterior_belief(
    distances: dict[str, float],
    context: TaskContext,
    remaining: tuple[str, ...] | list[str],
    sigma: float = SIGMA_DEFAULT,
    use_context: bool = True,
    prior_same: float = PRIOR_SAME,
    prior_opposite: float = PRIOR_OPPOSITE,
) -> Belief:
    """Normalized product of the Gaussian gaze likelihood and the context
    prior over the remaining blocks.

    With use_context False (gaze-only assistance) the prior is uniform
    regardless of context. When every likelihood underflows to zero the
    belief falls back to the prior alone, flagged prior_only.
    """
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    remaining = [bid for bid in remaining]
    if not remaining:
        return Belief(probabilities={})
    missing = [bid for bid in remaining if bid not in distances]
    if missing:
        raise ValueError(f"distances missing for blocks {missing}")
    if use_context:
        prior = context_prior(context, remaining, prior_same, prior_opposite)
    else:
        prior = {bid: 1.0 for bid in remaining}
    two_sigma_sq = 2.0 * sigma * sigma
    weights = {}
    for bid in remaining:
        x = distances[bid]
        weights[bid] = math.exp(-(x * x) / two_sigma_sq) * prior[bid]
    total = sum(weights.values())
    if total <= 0.0:
        prior_total = sum(prior[bid] for bid in remaining)
        probs = {bid: prior[bid] / prior_total for bid in remaining}
        return Belief(probabilities=probs, prior_only=True)
    return Belief(probabilities={bid: w / total for bid, w in weights.items()})


def select_target(belief: Belief, current: Selection, order: tuple[str, ...]) -> Selection:
    """Track the belief argmax while unlocked; a locked selection is frozen."""
    if current.locked:
        return current
    return replace(current, block=belief.argmax(order))


def place_marker_target(gaze: GazeSample, box: BoxSpec) -> np.ndarray | None:
    """Intersection of the gaze ray (world frame) with the place-half
    interior floor, returned in the box frame; None when the ray misses the
    half or runs parallel to the floor."""
    inv = box.world_from_box.inverse()
    origin = inv.apply(gaze.origin)
    direction = quat_rotate(inv.rotation, gaze.direction)
    if abs(direction[2]) < 1e-9:
        return None
    t = -origin[2] / direction[2]
    if t <= 0.0:
        return None
    hit = origin + t * direction
    x_lo, x_hi, y_lo, y_hi = box.place_half_rect()
    if x_lo <= hit[0] <= x_hi and y_lo <= hit[1] <= y_hi:
        return np.array([hit[0], hit[1], 0.0])
    return None


def noisy_gaze(gaze: GazeSample, rng: np.random.Generator, angle_std: float = GAZE_ANGLE_NOISE) -> GazeSample:
    """Perturb the gaze direction by an angular Gaussian, modeling tracker
    error in headless runs."""
    d = gaze.direction
    # two orthonormal vectors spanning the plane normal to d
    helper = np.array([0.0, 0.0, 1.0]) if abs(d[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(d, helper)
    u /= np.linalg.norm(u)
    v = np.cross(d, u)
    a, b = rng.normal(0.0, angle_std, 2)
    perturbed = d + a * u + b * v
    perturbed /= np.linalg.norm(perturbed)
    return GazeSample(origin=gaze.origin, direction=perturbed, timestamp=gaze.timestamp)
