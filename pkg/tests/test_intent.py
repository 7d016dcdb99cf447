import math

import numpy as np
import pytest

from armsim.intent import (
    PRIOR_OPPOSITE,
    PRIOR_SAME,
    Belief,
    GazeSample,
    Selection,
    TaskContext,
    context_prior,
    image_plane_distances,
    place_marker_target,
    posterior_belief,
    select_target,
)
from armsim.kinematics import RigidTransform
from armsim.world import BLOCK_IDS, Color, TrialConfig, spawn_trial


# --- brute-force oracle: full Bayes with denominator and 1/m ----------------

def belief_oracle(distances, prior, sigma, m_states=6):
    """Literal Bayes: p(a|g,s) = p(g|a,s) p(a|s) / p(g|s) with
    p(g|a,s) = (1/m) exp(-x^2 / (2 sigma^2))."""
    ids = list(distances)
    likelihood = {b: (1.0 / m_states) * math.exp(-distances[b] ** 2 / (2 * sigma ** 2)) for b in ids}
    joint = {b: likelihood[b] * prior[b] for b in ids}
    evidence = sum(joint.values())
    if evidence == 0.0:
        return None
    return {b: joint[b] / evidence for b in ids}


def random_scene(rng):
    n = int(rng.integers(1, 5))
    ids = [f"blk{i}" for i in range(n)]
    gaze = GazeSample(
        origin=rng.normal(0, 0.5, 3),
        direction=rng.normal(0, 1, 3),
    )
    centers = {b: gaze.origin + rng.normal(0, 1.0, 3) + gaze.direction * rng.uniform(0.3, 2.0) for b in ids}
    prior = {b: rng.uniform(0.1, 1.0) for b in ids}
    sigma = rng.uniform(0.01, 0.3)
    return gaze, centers, prior, sigma, ids


# --- image-plane distances ---------------------------------------------------

def test_distance_axial_block_zero():
    gaze = GazeSample(origin=np.zeros(3), direction=np.array([0, 0, 1.0]))
    d = image_plane_distances(gaze, {"b": np.array([0, 0, 0.7])})
    assert d["b"] == pytest.approx(0.0, abs=1e-12)


def test_distance_direct_projection():
    gaze = GazeSample(origin=np.zeros(3), direction=np.array([0, 0, 1.0]))
    d = image_plane_distances(gaze, {"b": np.array([0.1, 0, 1.0])}, reference_depth=1.0)
    assert d["b"] == pytest.approx(0.1, abs=1e-12)


def test_distance_mirror_symmetry():
    gaze = GazeSample(origin=np.zeros(3), direction=np.array([0, 0, 1.0]))
    d = image_plane_distances(gaze, {
        "l": np.array([-0.3, 0.1, 1.4]),
        "r": np.array([0.3, -0.1, 1.4]),
    })
    assert d["l"] == pytest.approx(d["r"], abs=1e-12)


def test_distance_behind_origin_sentinel():
    gaze = GazeSample(origin=np.zeros(3), direction=np.array([0, 0, 1.0]))
    d = image_plane_distances(gaze, {"b": np.array([0.2, 0, -0.5])})
    assert d["b"] >= 1e5


def test_distance_scale_invariance_of_belief():
    rng = np.random.default_rng(8)
    gaze, centers, _, sigma, ids = random_scene(rng)
    distances = image_plane_distances(gaze, centers)
    ctx = TaskContext()
    b1 = posterior_belief(distances, ctx, ids, sigma=sigma)
    scaled = {k: 3.0 * v for k, v in distances.items()}
    b2 = posterior_belief(scaled, ctx, ids, sigma=3.0 * sigma)
    for bid in ids:
        assert b1.probabilities[bid] == pytest.approx(b2.probabilities[bid], abs=1e-12)


# --- posterior belief ----------------------------------------------------------

def test_table_weighting_equidistant():
    # previous red, all four blocks equidistant: blues get 0.375, reds 0.125
    distances = {bid: 0.07 for bid in BLOCK_IDS}
    ctx = TaskContext(previous_color=Color.RED)
    belief = posterior_belief(distances, ctx, BLOCK_IDS, sigma=0.05)
    assert belief.probabilities["B1"] == pytest.approx(0.375, abs=1e-12)
    assert belief.probabilities["B2"] == pytest.approx(0.375, abs=1e-12)
    assert belief.probabilities["R1"] == pytest.approx(0.125, abs=1e-12)
    assert belief.probabilities["R2"] == pytest.approx(0.125, abs=1e-12)
    ctx = TaskContext(previous_color=Color.BLUE)
    belief = posterior_belief(distances, ctx, BLOCK_IDS, sigma=0.05)
    assert belief.probabilities["R1"] == pytest.approx(0.375, abs=1e-12)
    assert belief.probabilities["B1"] == pytest.approx(0.125, abs=1e-12)


def test_single_block_probability_one():
    belief = posterior_belief({"R1": 0.4}, TaskContext(), ["R1"], sigma=0.05)
    assert belief.probabilities["R1"] == pytest.approx(1.0)


def test_gaussian_ratio_example():
    sigma = 0.05
    belief = posterior_belief({"a": 0.02, "b": 0.10}, TaskContext(), ["a", "b"], sigma=sigma)
    expected_ratio = math.exp((0.10 ** 2 - 0.02 ** 2) / (2 * sigma ** 2))
    assert belief.probabilities["a"] / belief.probabilities["b"] == pytest.approx(expected_ratio, rel=1e-9)
    assert expected_ratio == pytest.approx(6.8210, rel=1e-3)


def test_belief_matches_bruteforce_oracle_1000_scenes():
    rng = np.random.default_rng(101)
    for _ in range(1000):
        gaze, centers, prior, sigma, ids = random_scene(rng)
        distances = image_plane_distances(gaze, centers)
        # inject the custom prior through a context-free path
        belief = posterior_belief(distances, TaskContext(), ids, sigma=sigma, use_context=False)
        uniform_prior = {b: 1.0 for b in ids}
        oracle = belief_oracle(distances, uniform_prior, sigma)
        if oracle is None:
            assert belief.prior_only
            continue
        for bid in ids:
            assert belief.probabilities[bid] == pytest.approx(oracle[bid], abs=1e-12)


def test_argmax_invariant_to_dropped_factors():
    rng = np.random.default_rng(77)
    for _ in range(1000):
        gaze, centers, prior, sigma, ids = random_scene(rng)
        distances = image_plane_distances(gaze, centers)
        full = belief_oracle(distances, prior, sigma, m_states=7)
        if full is None:
            continue
        # unnormalized scores without p(g|s) and without 1/m
        unnorm = {b: math.exp(-distances[b] ** 2 / (2 * sigma ** 2)) * prior[b] for b in ids}
        assert max(full, key=full.get) == max(unnorm, key=unnorm.get)


def test_context_prior_table():
    ctx = TaskContext(previous_color=Color.RED)
    prior = context_prior(ctx, BLOCK_IDS)
    assert prior == {"R1": PRIOR_SAME, "B1": PRIOR_OPPOSITE, "R2": PRIOR_SAME, "B2": PRIOR_OPPOSITE}
    assert context_prior(TaskContext(), BLOCK_IDS) == {bid: 1.0 for bid in BLOCK_IDS}


def test_same_color_override_threshold():
    # previous red: red block needs x_same^2 < x_opp^2 - 2 sigma^2 ln 3
    sigma = 0.05
    x_opp = 0.08
    boundary_sq = x_opp ** 2 - 2 * sigma ** 2 * math.log(3.0)
    assert boundary_sq > 0
    ctx = TaskContext(previous_color=Color.RED)
    for eps, winner in ((-1e-6, "R1"), (1e-6, "B1")):
        x_same = math.sqrt(boundary_sq + eps)
        belief = posterior_belief({"R1": x_same, "B1": x_opp}, ctx, ["R1", "B1"], sigma=sigma)
        assert belief.argmax(("R1", "B1")) == winner


def test_underflow_falls_back_to_prior():
    ctx = TaskContext(previous_color=Color.RED)
    belief = posterior_belief({"R1": 1e5, "B1": 1e5}, ctx, ["R1", "B1"], sigma=0.01)
    assert belief.prior_only
    assert belief.probabilities["B1"] == pytest.approx(0.75)
    assert belief.probabilities["R1"] == pytest.approx(0.25)


def test_belief_normalization_random():
    rng = np.random.default_rng(5)
    for _ in range(100):
        gaze, centers, _, sigma, ids = random_scene(rng)
        d = image_plane_distances(gaze, centers)
        belief = posterior_belief(d, TaskContext(), ids, sigma=sigma)
        assert sum(belief.probabilities.values()) == pytest.approx(1.0, abs=1e-9)
        assert all(p >= 0 for p in belief.probabilities.values())


# --- selection ---------------------------------------------------------------

def test_select_argmax():
    belief = Belief(probabilities={"R1": 0.7, "B1": 0.2, "R2": 0.1})
    sel = select_target(belief, Selection(), BLOCK_IDS)
    assert sel.block == "R1" and not sel.locked


def test_select_locked_unchanged():
    belief = Belief(probabilities={"R1": 0.1, "B1": 0.9})
    sel = select_target(belief, Selection(block="R1", locked=True), BLOCK_IDS)
    assert sel.block == "R1" and sel.locked


def test_select_tie_breaks_by_sequence_order():
    belief = Belief(probabilities={"B1": 0.5, "R2": 0.5})
    sel = select_target(belief, Selection(), BLOCK_IDS)
    assert sel.block == "B1"  # earlier in the task order


def test_select_empty_belief():
    sel = select_target(Belief(probabilities={}), Selection(), BLOCK_IDS)
    assert sel.block is None


# --- place marker ---------------------------------------------------------------

@pytest.fixture(scope="module")
def world():
    shoulder = RigidTransform(translation=np.array([0.0, 0.0, 1.4]))
    return spawn_trial(TrialConfig(), shoulder)


def test_marker_normal_incidence(world):
    box = world.box
    center = box.to_world(np.array([0.0, 0.14, 0.0]))
    gaze = GazeSample(origin=center + np.array([0, 0, 0.8]), direction=np.array([0, 0, -1.0]))
    hit = place_marker_target(gaze, box)
    assert hit is not None
    assert np.allclose(hit[:2], [0.0, 0.14], atol=1e-9)


def test_marker_pick_side_clipped(world):
    box = world.box
    spot = box.to_world(np.array([0.0, -0.14, 0.0]))
    gaze = GazeSample(origin=spot + np.array([0, 0, 0.8]), direction=np.array([0, 0, -1.0]))
    assert place_marker_target(gaze, box) is None


def test_marker_oblique_ray(world):
    box = world.box
    origin_w = box.to_world(np.array([-0.4, 0.0, 0.6]))
    target_box = np.array([0.05, 0.12, 0.0])
    d = box.to_world(target_box) - origin_w
    d = d / np.linalg.norm(d)
    hit = place_marker_target(GazeSample(origin=origin_w, direction=d), box)
    assert hit is not None
    assert np.allclose(hit[:2], target_box[:2], atol=1e-9)


def test_marker_parallel_ray(world):
    gaze = GazeSample(origin=np.array([0, 0, 1.2]), direction=np.array([1.0, 0, 0]))
    assert place_marker_target(gaze, world.box) is None
