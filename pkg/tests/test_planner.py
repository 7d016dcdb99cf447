import numpy as np
import pytest

from armsim.kinematics import ArmGeometry, RigidTransform, fk_arrays, forward_kinematics
from armsim.planner import (
    FINAL_CHECK_STEP,
    GOAL_EXACT,
    GOAL_INTERMEDIATE,
    STATUS_ABORTED,
    STATUS_DONE,
    STATUS_RUNNING,
    Aabb,
    CylinderObstacle,
    HeldBlock,
    JointTrajectory,
    ObstacleSet,
    PlanExecutor,
    PlanRequest,
    PlanningError,
    PoseTarget,
    collision_free,
    execute_tick,
    ik_solve,
    plan_reach,
)
from armsim.world import TrialConfig, spawn_trial

DOWN = np.array([0.0, 0.0, -1.0])


@pytest.fixture(scope="module")
def geometry():
    return ArmGeometry()


@pytest.fixture(scope="module")
def world():
    shoulder = RigidTransform(translation=np.array([0.0, 0.0, 1.4]))
    return spawn_trial(TrialConfig(), shoulder)


def densified_collision_ok(geometry, traj, obstacles, held, base):
    """Re-validate an emitted trajectory at the final check resolution."""
    for i in range(len(traj.configs) - 1):
        a, b = traj.configs[i], traj.configs[i + 1]
        steps = max(1, int(np.ceil(np.max(np.abs(b - a)) / FINAL_CHECK_STEP)))
        for alpha in np.linspace(0.0, 1.0, steps + 1):
            if not collision_free(geometry, a + alpha * (b - a), obstacles, held, base):
                return False
    return True


# --- IK -----------------------------------------------------------------------

def test_ik_fixed_point(geometry):
    q0 = geometry.home_configuration
    fk = forward_kinematics(geometry, q0)
    target = PoseTarget(position=fk.eef_position, rotation=fk.eef.rotation)
    out = ik_solve(geometry, target, [q0])
    assert out is not None
    assert np.allclose(out, q0)


def test_ik_converges_from_perturbed_seed(geometry):
    q0 = geometry.home_configuration
    fk = forward_kinematics(geometry, q0)
    target = PoseTarget(position=fk.eef_position, rotation=fk.eef.rotation)
    out = ik_solve(geometry, target, [q0 + 0.1])
    assert out is not None
    reached = forward_kinematics(geometry, out)
    assert np.linalg.norm(reached.eef_position - fk.eef_position) <= 5e-3


def test_ik_unreachable_target(geometry):
    target = PoseTarget(position=np.array([0.0, 0.0, -2 * geometry.reach]), approach_axis=DOWN)
    assert ik_solve(geometry, target, [geometry.home_configuration]) is None


def test_ik_axis_mode_aligns_hand(geometry):
    target = PoseTarget(position=np.array([0.45, -0.05, -0.30]), approach_axis=DOWN)
    out = ik_solve(geometry, target, [geometry.home_configuration])
    assert out is not None
    _, _, pos, rot = fk_arrays(geometry, out)
    from armsim.planner import hand_axis
    assert np.linalg.norm(pos - target.position) <= 5e-3
    assert np.arccos(np.clip(np.dot(hand_axis(rot), DOWN), -1, 1)) <= np.radians(2.0)


# --- collision ------------------------------------------------------------------

def test_empty_obstacles_home_free(geometry):
    assert collision_free(geometry, geometry.home_configuration, ObstacleSet())


def test_eef_inside_box_collides(geometry):
    q = geometry.home_configuration
    _, _, eef, _ = fk_arrays(geometry, q)
    box = Aabb(eef - 0.01, eef + 0.01)
    assert not collision_free(geometry, q, ObstacleSet(boxes=[box]))


def test_grazing_clearance_boundary(geometry):
    # straight-down arm: the hand-tip sphere is the lowest point
    q = np.zeros(7)
    _, _, eef, _ = fk_arrays(geometry, q)
    hand_radius = 0.035
    # slab 1 mm beyond the hand sphere radius below the grasp point
    gap = hand_radius + 0.001
    slab = Aabb(
        (eef[0] - 0.2, eef[1] - 0.2, eef[2] - gap - 0.02),
        (eef[0] + 0.2, eef[1] + 0.2, eef[2] - gap),
    )
    assert collision_free(geometry, q, ObstacleSet(boxes=[slab]))
    slab2 = Aabb(
        (eef[0] - 0.2, eef[1] - 0.2, eef[2] - gap - 0.02),
        (eef[0] + 0.2, eef[1] + 0.2, eef[2] - gap + 0.002),
    )
    assert not collision_free(geometry, q, ObstacleSet(boxes=[slab2]))


def test_cylinder_obstacle(geometry):
    q = geometry.home_configuration
    _, _, eef, _ = fk_arrays(geometry, q)
    cyl = CylinderObstacle(center=eef, radius=0.02, height=0.05)
    assert not collision_free(geometry, q, ObstacleSet(cylinders=[cyl]))
    far = CylinderObstacle(center=eef + np.array([0.5, 0.5, 0]), radius=0.02, height=0.05)
    assert collision_free(geometry, q, ObstacleSet(cylinders=[far]))


def test_held_block_collides_below_hand(geometry):
    # straight-down arm so the hand axis is exactly vertical
    q = np.zeros(7)
    _, _, eef, _ = fk_arrays(geometry, q)
    held = HeldBlock(radius=0.025, height=0.05, grasp_offset=0.05)
    # slab crossing the held block's midsection but clear of the hand sphere
    slab = Aabb(
        (eef[0] - 0.2, eef[1] - 0.2, eef[2] - 0.065),
        (eef[0] + 0.2, eef[1] + 0.2, eef[2] - 0.055),
    )
    assert collision_free(geometry, q, ObstacleSet(boxes=[slab]), held_block=None)
    assert not collision_free(geometry, q, ObstacleSet(boxes=[slab]), held_block=held)


# --- planning ---------------------------------------------------------------------

def pick_goal(world, bid):
    sx, sy = world.box.slots[bid]
    hover = np.array([sx, sy, 0.075])
    base = world.base_in_box()
    return PoseTarget(position=base.inverse().apply(hover), approach_axis=DOWN)


def test_plan_goal_equals_start(geometry, world):
    base = world.base_in_box()
    fk = forward_kinematics(geometry, geometry.home_configuration)
    target = PoseTarget(position=fk.eef_position, rotation=fk.eef.rotation)
    req = PlanRequest(
        start=geometry.home_configuration,
        goal=target,
        obstacles=world.box.obstacles(world.block_cylinders()),
        base_pose=base,
        rng_seed=0,
    )
    traj = plan_reach(geometry, req)
    assert traj.goal_kind == GOAL_EXACT
    assert len(traj.configs) == 1


def test_plan_pick_exact_and_collision_free(geometry, world):
    base = world.base_in_box()
    obstacles = world.box.obstacles(world.block_cylinders(exclude="R1"))
    req = PlanRequest(
        start=geometry.home_configuration,
        goal=pick_goal(world, "R1"),
        obstacles=obstacles,
        base_pose=base,
        rng_seed=3,
    )
    traj = plan_reach(geometry, req)
    assert traj.goal_kind == GOAL_EXACT
    assert densified_collision_ok(geometry, traj, obstacles, None, base)
    assert np.all(np.diff(traj.times) > 0)
    # waypoint step bound
    for i in range(len(traj.configs) - 1):
        assert np.max(np.abs(traj.configs[i + 1] - traj.configs[i])) <= 0.1 + 1e-9


def test_plan_inside_partition_intermediate(geometry, world):
    base = world.base_in_box()
    goal_box = np.array([0.0, 0.0, 0.06])
    target = PoseTarget(position=base.inverse().apply(goal_box), approach_axis=DOWN)
    obstacles = world.box.obstacles(world.block_cylinders())
    req = PlanRequest(
        start=geometry.home_configuration,
        goal=target,
        obstacles=obstacles,
        base_pose=base,
        rng_seed=5,
        time_budget=0.25,
    )
    traj = plan_reach(geometry, req)
    assert traj.goal_kind == GOAL_INTERMEDIATE
    d0 = np.linalg.norm(fk_arrays(geometry, geometry.home_configuration)[2] - target.position)
    d1 = np.linalg.norm(fk_arrays(geometry, traj.configs[-1])[2] - target.position)
    assert d1 < d0


def test_plan_start_in_collision_rejected(geometry, world):
    base = world.base_in_box()
    _, _, eef, _ = fk_arrays(geometry, geometry.home_configuration)
    eef_w = base.apply(eef)
    blocker = Aabb(eef_w - 0.02, eef_w + 0.02)
    req = PlanRequest(
        start=geometry.home_configuration,
        goal=pick_goal(world, "R1"),
        obstacles=ObstacleSet(boxes=[blocker]),
        base_pose=base,
        rng_seed=1,
    )
    with pytest.raises(PlanningError, match="collision"):
        plan_reach(geometry, req)


def test_plan_determinism(geometry, world):
    base = world.base_in_box()
    obstacles = world.box.obstacles(world.block_cylinders(exclude="B2"))
    req = PlanRequest(
        start=geometry.home_configuration,
        goal=pick_goal(world, "B2"),
        obstacles=obstacles,
        base_pose=base,
        rng_seed=17,
    )
    t1 = plan_reach(geometry, req)
    t2 = plan_reach(geometry, req)
    assert np.array_equal(t1.configs, t2.configs)
    assert np.array_equal(t1.times, t2.times)


# --- execution -----------------------------------------------------------------

def linear_trajectory():
    configs = np.stack([np.zeros(7), np.full(7, 0.5), np.full(7, 1.0)])
    return JointTrajectory(times=np.array([0.0, 1.0, 2.0]), configs=configs, goal_kind=GOAL_EXACT)


def test_execute_boundaries():
    traj = linear_trajectory()
    q, status = execute_tick(traj, 0.0)
    assert np.allclose(q, 0.0) and status == STATUS_RUNNING
    q, status = execute_tick(traj, 2.0)
    assert np.allclose(q, 1.0) and status == STATUS_DONE
    q, status = execute_tick(traj, 5.0)
    assert np.allclose(q, 1.0) and status == STATUS_DONE


def test_execute_interpolates():
    traj = linear_trajectory()
    q, status = execute_tick(traj, 0.5)
    assert np.allclose(q, 0.25)
    assert status == STATUS_RUNNING


def test_abort_freezes_arm():
    traj = linear_trajectory()
    ex = PlanExecutor(traj)
    q1, s1 = ex.step(0.8)
    assert s1 == STATUS_RUNNING
    q2, s2 = ex.step(1.0, abort=True)
    assert s2 == STATUS_ABORTED
    q3, s3 = ex.step(1.5)
    assert s3 == STATUS_ABORTED
    assert np.array_equal(q2, q3)


def test_abort_latency_one_tick():
    traj = linear_trajectory()
    ex = PlanExecutor(traj)
    dt = 0.001
    elapsed = 0.0
    for _ in range(100):
        elapsed += dt
        ex.step(elapsed)
    q_abort, status = ex.step(elapsed + dt, abort=True)
    assert status == STATUS_ABORTED
    q_next, _ = ex.step(elapsed + 2 * dt)
    assert np.array_equal(q_abort, q_next)
    # frozen configuration is within one tick of motion from the abort call
    assert np.max(np.abs(q_abort - traj.sample(elapsed))) <= 0.5 * dt + 1e-12
