"""Trial logs and the derived performance metrics.

Logs are append-only, line-delimited JSON records with nondecreasing
simulated timestamps. Every metric here is a pure function of a completed
log: transfer durations with their exclusion rules, placement accuracy,
compensatory shoulder motion at 10 Hz, gaze-attention fractions, and
per-method aggregation of trial success counts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kinematics import ArmGeometry, RigidTransform, fk_arrays
from .world import TARGET_RADIUS

LOG_SCHEMA_VERSION = 1

METHOD_USAGE_THRESHOLD = 0.02   # rad of commanded joint displacement
COMPENSATION_RATE = 10.0        # Hz

GAZE_HAND_RADIUS = 0.08
GAZE_LINK_RADIUS = 0.05
GAZE_MODE_RADIUS = 0.10
MODE_DISPLAY_OFFSET = (0.0, 0.0, 0.35)   # above the box center


@dataclass(frozen=True)
class EventRecord:
    t: float
    kind: str
    payload: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"t": self.t, "kind": self.kind, **self.payload})

    @staticmethod
    def from_json(line: str) -> "EventRecord":
        obj = json.loads(line)
        t = obj.pop("t")
        kind = obj.pop("kind")
        return EventRecord(t=t, kind=kind, payload=obj)


class LogWriter:
    """Single-writer append-only log; one JSON object per line."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "w", encoding="utf-8")
        self._last_t = -math.inf

    def write(self, t: float, kind: str, **payload) -> None:
        if t < self._last_t - 1e-12:
            raise ValueError("log timestamps must be nondecreasing")
        self._last_t = max(self._last_t, t)
        self._fh.write(json.dumps({"t": round(t, 6), "kind": kind, **payload}))
        self._fh.write("\n")

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_log(path) -> list[EventRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(EventRecord.from_json(line))
    return records


def _of_kind(records, kind, block=None):
    return [
        r for r in records
        if r.kind == kind and (block is None or r.payload.get("block") == block)
    ]


def _trial_start_time(records) -> float:
    for r in records:
        if r.kind == "trial_start":
            return r.t
    return 0.0


def _targets(records) -> dict[str, tuple[float, float]]:
    for r in records:
        if r.kind == "trial_start":
            return {bid: tuple(xy) for bid, xy in r.payload.get("targets", {}).items()}
    return {}


def _grasp_intervals(records, block, end_time) -> list[tuple[float, float]]:
    """(attach, release) pairs; an unreleased grasp closes at end_time."""
    attaches = [r.t for r in _of_kind(records, "attach", block)]
    detaches = [r.t for r in _of_kind(records, "detach", block)]
    out = []
    for a in attaches:
        later = [d for d in detaches if d >= a]
        out.append((a, later[0] if later else end_time))
    return out


# ---------------------------------------------------------------------------
# transfer durations and accuracy
# ---------------------------------------------------------------------------

def pick_duration(records, block) -> float | None:
    """Time from the previous release (or trial start) to this block's first
    grasp, counted only when some grasp was stable enough for the block to
    cross the partition; excluded (None) otherwise. For blocks grasped
    multiple times the first grasp anchors the duration."""
    end_time = records[-1].t if records else 0.0
    intervals = _grasp_intervals(records, block, end_time)
    if not intervals:
        return None
    crossings = [r.t for r in _of_kind(records, "crossing", block)]
    stable = any(a <= c <= r for (a, r) in intervals for c in crossings)
    if not stable:
        return None
    anchor = intervals[0][0]
    prev_releases = [r.t for r in _of_kind(records, "detach") if r.t < anchor]
    baseline = max(prev_releases) if prev_releases else _trial_start_time(records)
    return anchor - baseline


def _block_positions(records, block):
    out = []
    for r in records:
        if r.kind == "snapshot":
            p = r.payload.get("blocks", {}).get(block)
            if p is not None:
                out.append((r.t, np.asarray(p, dtype=float)))
    return out


def _qualifying_place_interval(records, block) -> tuple[float, float] | None:
    """First grasp interval during which the block crossed the partition and
    entered the target region before being released."""
    end_time = records[-1].t if records else 0.0
    intervals = _grasp_intervals(records, block, end_time)
    crossings = [r.t for r in _of_kind(records, "crossing", block)]
    targets = _targets(records)
    if block not in targets:
        return None
    tx, ty = targets[block]
    positions = _block_positions(records, block)
    detach_times = {r.t for r in _of_kind(records, "detach", block)}
    for a, r in intervals:
        if r not in detach_times:
            continue  # never released: cannot qualify
        if not any(a <= c <= r for c in crossings):
            continue
        entered = any(
            a <= t <= r and math.hypot(p[0] - tx, p[1] - ty) <= TARGET_RADIUS
            for t, p in positions
        )
        if entered:
            return a, r
    return None


def place_duration(records, block) -> float | None:
    """Grasp-to-release time for the grasp during which the block crossed
    the partition, provided the target region was entered before release;
    excluded (None) when either condition fails."""
    interval = _qualifying_place_interval(records, block)
    if interval is None:
        return None
    a, r = interval
    return r - a


def placement_accuracy(records, block) -> float | None:
    """Minimum distance from the target over all post-crossing samples;
    undefined before the block ever crosses."""
    crossings = [r.t for r in _of_kind(records, "crossing", block)]
    if not crossings:
        return None
    t0 = min(crossings)
    targets = _targets(records)
    tx, ty = targets[block]
    best = None
    for t, p in _block_positions(records, block):
        if t < t0:
            continue
        d = math.hypot(p[0] - tx, p[1] - ty)
        if best is None or d < best:
            best = d
    return best


# ---------------------------------------------------------------------------
# compensatory motion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CompensationSummary:
    translation: float  # meters of cumulative path length
    rotation: float     # summed per-step rotation angles (rate-dependent)


def _quat_angle_between(a, b) -> float:
    d = abs(float(np.dot(a, b)))
    if d >= 1.0 - 1e-12:  # identical up to fp noise
        return 0.0
    return 2.0 * math.acos(d)


def resample_shoulder(records, rate: float = COMPENSATION_RATE,
                      t0: float | None = None, t1: float | None = None):
    """Linear resampling of the logged shoulder stream to a fixed rate.
    Returns (positions (n,3), rotations (n,4))."""
    stream = [
        (r.t, np.asarray(r.payload["position"], dtype=float),
         np.asarray(r.payload["rotation"], dtype=float))
        for r in _of_kind(records, "shoulder")
    ]
    if len(stream) < 2:
        return np.zeros((0, 3)), np.zeros((0, 4))
    times = np.array([s[0] for s in stream])
    t0 = times[0] if t0 is None else max(t0, times[0])
    t1 = times[-1] if t1 is None else min(t1, times[-1])
    if t1 <= t0:
        return np.zeros((0, 3)), np.zeros((0, 4))
    sample_ts = np.arange(t0, t1 + 1e-9, 1.0 / rate)
    positions = np.zeros((len(sample_ts), 3))
    rotations = np.zeros((len(sample_ts), 4))
    for k, t in enumerate(sample_ts):
        i = int(np.searchsorted(times, t, side="right")) - 1
        i = min(max(i, 0), len(stream) - 2)
        ta, pa, qa = stream[i]
        tb, pb, qb = stream[i + 1]
        alpha = 0.0 if tb == ta else (t - ta) / (tb - ta)
        positions[k] = (1 - alpha) * pa + alpha * pb
        if np.dot(qa, qb) < 0:
            qb = -qb
        qm = (1 - alpha) * qa + alpha * qb
        rotations[k] = qm / np.linalg.norm(qm)
    return positions, rotations


def compensatory_motion(positions: np.ndarray, rotations: np.ndarray) -> CompensationSummary:
    """Cumulative shoulder translation and summed per-step rotation angles
    over an already-resampled stream. The rotation sum depends on the
    sampling rate except for same-axis paths, so only relative values are
    meaningful."""
    if len(positions) < 2:
        return CompensationSummary(translation=0.0, rotation=0.0)
    translation = float(np.sum(np.linalg.norm(np.diff(positions, axis=0), axis=1)))
    rotation = 0.0
    for i in range(len(rotations) - 1):
        rotation += _quat_angle_between(rotations[i], rotations[i + 1])
    return CompensationSummary(translation=translation, rotation=rotation)


# ---------------------------------------------------------------------------
# method-usage annotation and gaze attention
# ---------------------------------------------------------------------------

def annotate_method_usage(records, t0: float, t1: float,
                          threshold: float = METHOD_USAGE_THRESHOLD) -> bool:
    """True when the interval saw commanded joint motion above the
    threshold (the arm only moves through method commands here), i.e. the
    transfer used the provided method rather than base motion alone."""
    qs = [
        np.asarray(r.payload["q"], dtype=float)
        for r in _of_kind(records, "snapshot")
        if t0 <= r.t <= t1
    ]
    if len(qs) < 2:
        return False
    total = float(np.sum(np.abs(np.diff(np.stack(qs), axis=0))))
    return total > threshold


@dataclass(frozen=True)
class GazeAttention:
    arm: float      # arm links, including the mode display
    hand: float
    targets: float
    other: float


def _ray_sphere_t(origin, direction, center, radius) -> float | None:
    rel = center - origin
    proj = float(np.dot(rel, direction))
    if proj <= 0:
        return None
    closest_sq = float(np.dot(rel, rel)) - proj * proj
    if closest_sq > radius * radius:
        return None
    return proj - math.sqrt(radius * radius - closest_sq)


def gaze_attention(records, t0: float, t1: float, geometry: ArmGeometry) -> GazeAttention:
    """Time-weighted fractions of gaze samples in [t0, t1] whose rays first
    hit the hand region, the arm (links or mode display), a place-target
    disk, or nothing."""
    from .world import BLOCK_IDS  # avoid cycle at import time

    gaze = [r for r in _of_kind(records, "gaze") if t0 <= r.t <= t1]
    if not gaze:
        return GazeAttention(arm=0.0, hand=0.0, targets=0.0, other=0.0)
    snaps = _of_kind(records, "snapshot")
    shoulders = _of_kind(records, "shoulder")
    targets = _targets(records)
    box_origin = None
    for r in records:
        if r.kind == "trial_start":
            box_origin = np.asarray(r.payload.get("box_origin", (0, 0, 0)), dtype=float)
            break
    if box_origin is None:
        box_origin = np.zeros(3)

    def latest(items, t):
        best = None
        for it in items:
            if it.t <= t + 1e-9:
                best = it
            else:
                break
        return best

    weights = {"arm": 0.0, "hand": 0.0, "targets": 0.0, "other": 0.0}
    for i, g in enumerate(gaze):
        dt = (gaze[i + 1].t - g.t) if i + 1 < len(gaze) else max(t1 - g.t, 1e-9)
        origin = np.asarray(g.payload["origin"], dtype=float)
        direction = np.asarray(g.payload["direction"], dtype=float)
        snap = latest(snaps, g.t)
        sh = latest(shoulders, g.t)
        hits = []
        if snap is not None and sh is not None:
            base = RigidTransform(
                rotation=np.asarray(sh.payload["rotation"], dtype=float),
                translation=np.asarray(sh.payload["position"], dtype=float),
            )
            origins, _, eef, _ = fk_arrays(geometry, np.asarray(snap.payload["q"], dtype=float))
            R = base.rotation_matrix()
            anchors = np.stack([np.zeros(3), origins[3], origins[5], eef]) @ R.T + base.translation
            t_hit = _ray_sphere_t(origin, direction, anchors[3], GAZE_HAND_RADIUS)
            if t_hit is not None:
                hits.append((t_hit, "hand"))
            for a, b in zip(anchors[:-1], anchors[1:]):
                for alpha in np.linspace(0.0, 1.0, 5):
                    t_hit = _ray_sphere_t(origin, direction, a + alpha * (b - a), GAZE_LINK_RADIUS)
                    if t_hit is not None:
                        hits.append((t_hit, "arm"))
        mode_center = box_origin + np.asarray(MODE_DISPLAY_OFFSET)
        t_hit = _ray_sphere_t(origin, direction, mode_center, GAZE_MODE_RADIUS)
        if t_hit is not None:
            hits.append((t_hit, "arm"))
        if abs(direction[2]) > 1e-9:
            t_floor = (box_origin[2] - origin[2]) / direction[2]
            if t_floor > 0:
                hit = origin + t_floor * direction
                for bid in BLOCK_IDS:
                    if bid not in targets:
                        continue
                    tx, ty = targets[bid]
                    tw = box_origin + np.array([tx, ty, 0.0])
                    if math.hypot(hit[0] - tw[0], hit[1] - tw[1]) <= TARGET_RADIUS:
                        hits.append((t_floor, "targets"))
                        break
        category = min(hits)[1] if hits else "other"
        weights[category] += dt
    total = sum(weights.values())
    if total <= 0:
        return GazeAttention(arm=0.0, hand=0.0, targets=0.0, other=0.0)
    return GazeAttention(
        arm=weights["arm"] / total,
        hand=weights["hand"] / total,
        targets=weights["targets"] / total,
        other=weights["other"] / total,
    )


# ---------------------------------------------------------------------------
# per-transfer summary and aggregation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TransferMetrics:
    block: str
    pick_duration: float | None
    place_duration: float | None
    min_target_distance: float | None
    used_method_pick: bool
    used_method_place: bool


def transfer_metrics(records) -> dict[str, TransferMetrics]:
    from .world import BLOCK_IDS

    end_time = records[-1].t if records else 0.0
    out = {}
    for bid in BLOCK_IDS:
        intervals = _grasp_intervals(records, bid, end_time)
        pick = pick_duration(records, bid)
        place = place_duration(records, bid)
        used_pick = False
        used_place = False
        if intervals:
            anchor = intervals[0][0]
            prev = [r.t for r in _of_kind(records, "detach") if r.t < anchor]
            baseline = max(prev) if prev else _trial_start_time(records)
            used_pick = annotate_method_usage(records, baseline, anchor)
            place_interval = _qualifying_place_interval(records, bid) or intervals[-1]
            used_place = annotate_method_usage(records, *place_interval)
        out[bid] = TransferMetrics(
            block=bid,
            pick_duration=pick,
            place_duration=place,
            min_target_distance=placement_accuracy(records, bid),
            used_method_pick=used_pick,
            used_method_place=used_place,
        )
    return out


def success_count(records) -> int:
    return sum(
        1 for r in _of_kind(records, "outcome") if r.payload.get("outcome") == "success"
    )


def trial_method(records) -> str | None:
    for r in records:
        if r.kind == "trial_start":
            return r.payload.get("method")
    return None


def aggregate_success(trials: list[dict]) -> dict:
    """Per-method mean, std, min, max, median of per-trial success counts.

    Input rows are {"method": str, "successes": int 0..4}. The standard
    deviation uses the sample convention (n-1), recorded in the metadata.
    """
    by_method: dict[str, list[int]] = {}
    for row in trials:
        by_method.setdefault(row["method"], []).append(int(row["successes"]))
    table = {}
    for method in sorted(by_method):
        counts = np.asarray(by_method[method], dtype=float)
        table[method] = {
            "n": int(len(counts)),
            "mean": float(np.mean(counts)),
            "std": float(np.std(counts, ddof=1)) if len(counts) > 1 else 0.0,
            "min": float(np.min(counts)),
            "max": float(np.max(counts)),
            "median": float(np.median(counts)),
        }
    return {"methods": table, "metadata": {"std_convention": "sample (n-1)"}}


def format_aggregate(agg: dict) -> str:
    lines = [f"{'Method':<8}{'n':>4}{'mean':>8}{'std':>8}{'min':>6}{'max':>6}{'median':>8}"]
    for method, s in agg["methods"].items():
        lines.append(
            f"{method:<8}{s['n']:>4}{s['mean']:>8.2f}{s['std']:>8.2f}"
            f"{s['min']:>6.0f}{s['max']:>6.0f}{s['median']:>8.1f}"
        )
    lines.append(f"(std convention: {agg['metadata']['std_convention']})")
    return "\n".join(lines)
