from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import cached_run
from mobility_hqp.kinematics import Pose, build_human_chain, fk
from mobility_hqp.metrics import (
    EmptyLog,
    TooFewSamples,
    compensation_cost,
    evaluate,
    jerk_cost,
    path_deviation,
    pose_path_deviation,
)
from mobility_hqp.scenarios import (
    REBA_POSTURE,
    TransferRegion,
    Infeasible,
    baseline_hand_pose,
    load_setup,
    min_displacement_transfer_point,
    reba_transfer_point,
    run_baseline,
)
from oracles import human_fk_oracle, jerk_bruteforce, project_grid

LS, LH, LR = (0.0, 0.19, 0.48), (0.0, 0.0, 0.30), (0.0, 0.0, 0.26)
W_NONE = np.zeros(8)
angles = arrays(float, (5, 8), elements=st.floats(-2.0, 2.0))


def human(lr=LR):
    return build_human_chain(LS, LH, lr, np.full(8, -3.0), np.full(8, 3.0))


# ---------------------------------------------------------------- compensation cost


def test_nominal_trajectory_costs_nothing():
    q = np.tile(REBA_POSTURE, (10, 1))
    assert compensation_cost(q, W_NONE, REBA_POSTURE) == 0.0
    assert compensation_cost(q, W_NONE, REBA_POSTURE, "trunk") == 0.0


def test_full_mask_costs_nothing():
    q = np.random.default_rng(0).normal(size=(10, 8))
    assert compensation_cost(q, np.eye(8), np.zeros(8)) == 0.0


def test_two_sample_example():
    # (0.3^2 + 0.5^2) / 2 = 0.17
    q = np.zeros((2, 8))
    q[:, 2] = [0.3, 0.5]
    assert compensation_cost(q, W_NONE, np.zeros(8)) == pytest.approx(0.17, abs=1e-15)
    assert compensation_cost(q, W_NONE, np.zeros(8), "trunk") == 0.0


def test_segment_split():
    q = np.zeros((1, 8))
    q[0, 0] = 0.2
    assert compensation_cost(q, W_NONE, np.zeros(8), "trunk") == pytest.approx(0.04)
    assert compensation_cost(q, W_NONE, np.zeros(8), "arm") == 0.0
    with pytest.raises(ValueError):
        compensation_cost(q, W_NONE, np.zeros(8), "leg")


def test_empty_log_rejected():
    with pytest.raises(EmptyLog):
        compensation_cost(np.zeros((0, 8)), W_NONE, np.zeros(8))


@given(angles, st.integers(1, 20))
def test_appending_nominal_samples_rescales(q, extra):
    base = compensation_cost(q, W_NONE, np.zeros(8))
    padded = compensation_cost(np.vstack([q, np.zeros((extra, 8))]), W_NONE, np.zeros(8))
    assert padded == pytest.approx(base * len(q) / (len(q) + extra), rel=1e-12, abs=1e-15)


@given(angles, angles, st.integers(0, 7))
def test_masked_joint_never_counts(q, other, j):
    W = np.zeros(8)
    W[j] = 1.0
    q2 = q.copy()
    q2[:, j] = other[:, j]
    for seg in ("arm", "trunk"):
        assert compensation_cost(q, W, np.zeros(8), seg) == pytest.approx(compensation_cost(q2, W, np.zeros(8), seg))


# ---------------------------------------------------------------- jerk


def test_affine_velocities_have_no_jerk():
    t = np.arange(10)[:, None] * 0.01
    assert jerk_cost(np.ones((10, 8)), 0.01) == 0.0
    assert jerk_cost(np.tile(2.0 * t, (1, 8)), 0.01) == pytest.approx(0.0, abs=1e-9)


def test_step_example():
    # second differences of (0, 0, 1, 1): 1 and -1, so J = 1 * (1 + 1) = 2
    assert jerk_cost([0.0, 0.0, 1.0, 1.0], 1.0) == 2.0
    assert jerk_bruteforce([0.0, 0.0, 1.0, 1.0], 1.0) == 2.0


def test_jerk_matches_brute_force(rng):
    for _ in range(20):
        v = rng.normal(size=(int(rng.integers(4, 30)), 8))
        assert jerk_cost(v, 0.01) == pytest.approx(jerk_bruteforce(v, 0.01), rel=1e-12)


def test_jerk_needs_four_samples():
    with pytest.raises(TooFewSamples):
        jerk_cost(np.zeros((3, 8)), 0.01)


@given(arrays(float, (12, 3), elements=st.floats(-5, 5)))
def test_jerk_non_negative(v):
    assert jerk_cost(v, 0.01) >= 0.0


# ---------------------------------------------------------------- path deviation


def test_pose_path_deviation_examples():
    a = [Pose([0.0, 0.0, 0.0], [0, 0, 0, 1])] * 3
    b = [Pose([0.1, 0.0, 0.0], [0, 0, 0, 1])] * 2  # held at its last pose for the third tick
    dp, dr = pose_path_deviation(a, b)
    assert dp == pytest.approx(0.1) and dr == 0.0
    assert pose_path_deviation(a, a) == (0.0, 0.0)
    with pytest.raises(EmptyLog):
        pose_path_deviation(a, [])


def test_run_deviates_from_itself_by_nothing():
    _, log = cached_run("ea_standing")
    assert path_deviation(log, log) == (0.0, 0.0)


# ---------------------------------------------------------------- REBA point


def test_reba_posture_has_right_angle_elbow():
    assert abs(REBA_POSTURE[4]) == pytest.approx(np.pi / 2)
    assert np.count_nonzero(REBA_POSTURE) == 2


def test_reba_point_is_fk_of_the_posture():
    h = human()
    np.testing.assert_allclose(reba_transfer_point(h).matrix(), human_fk_oracle(REBA_POSTURE, LS, LH, LR),
                               atol=1e-12)
    pelvis = Pose([1.0, 2.0, 0.5], [0, 0, 1, 0])
    np.testing.assert_allclose(reba_transfer_point(h, pelvis).position,
                               pelvis.compose(fk(h, REBA_POSTURE)).position, atol=1e-12)


def test_doubled_forearm_adds_one_forearm_projection():
    base = reba_transfer_point(human()).position
    longer = reba_transfer_point(human((0.0, 0.0, 0.52))).position
    forearm = human_fk_oracle(REBA_POSTURE, LS, LH, LR)[:3, 3] - human_fk_oracle(REBA_POSTURE, LS, LH, (0, 0, 0))[:3, 3]
    np.testing.assert_allclose(longer - base, forearm, atol=1e-12)
    assert np.linalg.norm(forearm) == pytest.approx(0.26)


# ---------------------------------------------------------------- minimum displacement


def test_feasible_hand_is_unchanged():
    region = TransferRegion(np.array([[0.0, 0.0, 1.0]]), np.array([0.07]))
    p = Pose([0.4, -0.2, 0.3], [0, 0, 0, 1])
    np.testing.assert_allclose(min_displacement_transfer_point(p, region).position, p.position, atol=1e-12)


def test_armrest_projection():
    region = TransferRegion(np.array([[0.0, 0.0, 1.0]]), np.array([0.07]))
    q = Pose([0.4, -0.2, 0.03], [0, 0, 0, 1])
    out = min_displacement_transfer_point(q, region)
    np.testing.assert_allclose(out.position, [0.4, -0.2, 0.07], atol=1e-12)
    np.testing.assert_array_equal(out.quaternion, q.quaternion)


def test_combined_half_spaces_match_grid(rng):
    # mildly tilted planes: acute wedges thinner than the grid spacing would defeat the oracle
    for _ in range(3):
        n = np.eye(3) + 0.1 * rng.normal(size=(3, 3))
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        p0 = rng.normal(size=3) * 0.1
        bounds = n @ p0 + rng.uniform(0.02, 0.1, 3)  # every half-space excludes p0
        out = min_displacement_transfer_point(Pose(p0, [0, 0, 0, 1]), TransferRegion(n, bounds))
        ref = project_grid(p0, n, bounds, half_width=0.25, step=5e-3)
        assert np.all(n @ out.position >= bounds - 1e-9)
        np.testing.assert_allclose(out.position, ref, atol=1e-3)


def test_empty_region_is_infeasible():
    ez = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]])
    with pytest.raises(Infeasible):
        min_displacement_transfer_point(Pose.identity(), TransferRegion(ez, np.array([1.0, 0.0])))


# ---------------------------------------------------------------- baselines


@pytest.mark.parametrize("method", ["reba", "mindisp"])
def test_baseline_point_is_deterministic(method):
    a = baseline_hand_pose(load_setup("wb_seated"), method)
    b = baseline_hand_pose(load_setup("wb_seated"), method)
    np.testing.assert_array_equal(a.position, b.position)
    np.testing.assert_array_equal(a.quaternion, b.quaternion)


def test_baseline_rejects_unknown_method():
    with pytest.raises(ValueError):
        baseline_hand_pose(load_setup("ea_standing"), "random")


def test_seated_baseline_respects_armrest():
    setup = load_setup("wb_seated")
    for method in ("reba", "mindisp"):
        assert baseline_hand_pose(setup, method).position[2] >= setup.config.limits.armrest_z - 1e-9


def test_baseline_keeps_the_robot_grasp_orientation():
    setup = load_setup("ea_standing")
    hand = baseline_hand_pose(setup, "mindisp")
    robot0 = fk(setup.robot, setup.q_robot0)
    np.testing.assert_allclose(hand.compose(setup.grasp_offset).rotation, robot0.rotation, atol=1e-12)


def test_reachable_baseline_point_costs_little():
    # robot already holds the object where the hand is: the closest feasible point is the hand itself
    setup = load_setup("ea_standing")
    robot0 = fk(setup.robot, setup.q_robot0)
    hand0 = setup.pelvis_pose().compose(fk(setup.human, setup.q_human0))
    setup = replace(setup, grasp_offset=hand0.inverse().compose(robot0))
    np.testing.assert_allclose(baseline_hand_pose(setup, "mindisp").position, hand0.position, atol=1e-9)
    log = run_baseline(setup, "mindisp", duration=2.0)
    rep = evaluate(log, setup.profile.severity, setup.q_human0, setup.q_human0, setup.config.dt)
    assert rep.psi_arm < 1e-6 and rep.time_to_interaction == 0.0


def test_seated_min_displacement_bends_the_elbow_more():
    setup, prop = cached_run("wb_seated")
    _, base = cached_run("wb_seated", "mindisp")
    q0 = setup.q_human0
    ex_prop = np.max(np.abs(prop.segment().array("q_human") - q0), axis=0)
    ex_base = np.max(np.abs(base.segment().array("q_human") - q0), axis=0)
    assert ex_base[4] > ex_prop[4]
