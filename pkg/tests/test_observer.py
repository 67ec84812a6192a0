import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_pose, random_slam
from slamctl.lie import SlamElement, SlamTangent, rodrigues, so3_exp
from slamctl.observer import (
    DegenerateMeasurement,
    JumpContractViolation,
    LandmarkMap,
    ObserverGains,
    ObserverState,
    candidate,
    candidate_potentials,
    correction,
    default_delta,
    estimation_error,
    in_jump_set,
    innovation,
    innovation_from_error,
    jump_margin,
    measure,
    observer_flow,
    observer_jump,
    observer_rate,
    potential,
    potential_from_error,
    range_bearing,
    reference_vectors,
    weight_matrix,
)

seeds = st.integers(0, 2**32 - 1)
CENTER = np.array([0.85, 0.0, 1.4])


def _cube(side=3.0):
    h = 0.5 * side
    return LandmarkMap(np.array([CENTER + h * np.array([a, b, c]) for a in (-1, 1) for b in (-1, 1) for c in (-1, 1)]).T)


def _truth(pose, lmap):
    return SlamElement(pose.rot, pose.pos, lmap.positions)


def _zero_twist(n):
    return SlamTangent(np.zeros(3), np.zeros(3), np.zeros((3, n)))


def test_reference_vectors_layout():
    r = reference_vectors(2)
    assert np.array_equal(r, [[0, 0, 0, 1, -1, 0], [0, 0, 0, 1, 0, -1]])


def test_measurement_at_identity_pose_is_landmark():
    lmap = _cube()
    meas = measure(SlamElement(np.eye(3), np.zeros(3), lmap.positions), lmap)
    assert np.allclose(meas.beta[:, :3], lmap.positions.T)
    assert np.array_equal(meas.beta[:, 3:], meas.r[:, 3:])


@given(seeds)
@settings(max_examples=30)
def test_measurement_is_inverse_action(seed):
    lmap = _cube()
    pose = random_pose(np.random.default_rng(seed), 0.5)
    truth = _truth(pose, lmap)
    meas = measure(truth, lmap)
    assert np.allclose(meas.beta.T, np.linalg.inv(truth.matrix()) @ meas.r.T, atol=1e-12)
    ranges, bearings = range_bearing(meas)
    assert np.allclose(ranges, np.linalg.norm(lmap.positions - pose.pos[:, None], axis=0))
    assert np.allclose(pose.rot @ (bearings * ranges[:, None]).T + pose.pos[:, None], lmap.positions)


def test_noise_is_seeded():
    lmap = _cube()
    truth = _truth(random_pose(np.random.default_rng(1), 0.5), lmap)
    a = measure(truth, lmap, np.random.default_rng(7), 0.01, 0.01)
    b = measure(truth, lmap, np.random.default_rng(7), 0.01, 0.01)
    c = measure(truth, lmap)
    assert np.array_equal(a.beta, b.beta)
    assert 0 < np.abs(a.beta - c.beta).max() < 0.2


def test_map_preconditions():
    with pytest.raises(ValueError, match="at least 4"):
        LandmarkMap(np.eye(3))
    flat = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0], [2, 3, 0]], dtype=float).T
    with pytest.raises(ValueError, match="coplanar"):
        LandmarkMap(flat)


def test_measure_rejects_wrong_truth_and_coincident_camera():
    lmap = _cube()
    with pytest.raises(ValueError):
        measure(SlamElement(np.eye(3), np.zeros(3), lmap.positions + 1.0), lmap)
    with pytest.raises(DegenerateMeasurement):
        measure(SlamElement(np.eye(3), lmap.positions[:, 0], lmap.positions), lmap)


@given(seeds)
@settings(max_examples=50)
def test_potential_nonnegative_and_zero_at_truth(seed):
    rng = np.random.default_rng(seed)
    lmap = _cube()
    gains = ObserverGains(k_i=rng.uniform(0.1, 1.0, 8))
    truth = _truth(random_pose(rng, 0.5), lmap)
    meas = measure(truth, lmap)
    assert potential(meas, ObserverState(random_slam(rng, 8, 2.0)), gains) >= 0.0
    assert potential(meas, ObserverState(truth), gains) < 1e-25
    assert np.abs(innovation(meas, ObserverState(truth), gains)).max() < 1e-12


@given(seeds)
@settings(max_examples=50)
def test_measurement_and_error_forms_agree(seed):
    rng = np.random.default_rng(seed)
    lmap = _cube()
    gains = ObserverGains(k_i=rng.uniform(0.1, 1.0, 8))
    truth = _truth(random_pose(rng, 0.5), lmap)
    state = ObserverState(random_slam(rng, 8, 2.0))
    meas = measure(truth, lmap)
    A = weight_matrix(lmap, gains)
    xt = estimation_error(truth, state)
    assert np.isclose(potential(meas, state, gains), potential_from_error(xt, A), rtol=1e-10)
    assert np.allclose(innovation(meas, state, gains), innovation_from_error(xt, A), atol=1e-10)


def test_rate_without_error_is_pure_propagation():
    lmap = _cube()
    gains = ObserverGains(k_i=np.full(8, 0.125))
    truth = _truth(random_pose(np.random.default_rng(4), 0.5), lmap)
    V = SlamTangent([0.1, -0.2, 0.3], [0.5, 0.0, -0.1], np.zeros((3, 8)))
    rate = observer_rate(truth, V, measure(truth, lmap), gains)
    assert np.allclose(rate, truth.matrix() @ V.matrix(), atol=1e-12)


def test_flow_gauge_characterisation():
    """Static truth: attitude error frozen, p~ + sum eta~ conserved, eta~_i -> p~.

    The measurements only see differences ``p~ - eta~_i``, so the flow
    settles on the translation gauge ``(p~0 + sum eta~0) / (n + 1)``.
    """
    rng = np.random.default_rng(0)
    lmap = _cube()
    n = lmap.n
    gains = ObserverGains(k_i=np.full(n, 1.0 / n), k_o=100.0)
    truth = SlamElement(so3_exp([0.1, 0.2, 0.3]), [1.0, 0.2, 1.3], lmap.positions)
    state = ObserverState(SlamElement(
        so3_exp([0.5, -0.3, 0.2]) @ truth.rot, [3.6, 1.0, 0.0], lmap.positions + 0.3 * rng.standard_normal((3, n)),
    ))
    meas = measure(truth, lmap)
    x0 = estimation_error(truth, state)
    s0 = x0.pos + x0.landmarks.sum(axis=1)
    U0 = potential(meas, state, gains)
    for _ in range(1000):
        state = observer_flow(state, _zero_twist(n), meas, gains, 1e-3)
    x1 = estimation_error(truth, state)
    assert np.abs(x1.rot - x0.rot).max() < 1e-12
    assert np.abs(x1.pos + x1.landmarks.sum(axis=1) - s0).max() < 1e-10
    assert np.allclose(x1.pos, s0 / (n + 1), atol=1e-6)
    assert np.abs(x1.landmarks - x1.pos[:, None]).max() < 1e-4
    assert potential(meas, state, gains) < 1e-6 * U0


@given(seeds)
@settings(max_examples=50)
def test_reset_candidates_share_one_potential(seed):
    # a left rotation of Xhat leaves every p^ - eta^_i unchanged
    rng = np.random.default_rng(seed)
    lmap = _cube()
    gains = ObserverGains(k_i=rng.uniform(0.1, 1.0, 8))
    meas = measure(_truth(random_pose(rng, 0.5), lmap), lmap)
    state = ObserverState(random_slam(rng, 8, 2.0))
    pots = candidate_potentials(meas, state, gains)
    assert np.allclose(pots, potential(meas, state, gains), rtol=1e-12)
    for q in range(gains.q_max + 1):
        assert np.isclose(potential(meas, ObserverState(candidate(state, q, gains)), gains), pots[q], rtol=1e-10)
    assert not in_jump_set(meas, state, gains)


def test_jump_outside_jump_set_raises():
    lmap = _cube()
    gains = ObserverGains(k_i=np.full(8, 0.125))
    truth = _truth(random_pose(np.random.default_rng(2), 0.5), lmap)
    state = ObserverState(SlamElement(so3_exp([0.0, 0.0, np.pi]) @ truth.rot, truth.pos, truth.landmarks))
    meas = measure(truth, lmap)
    margin, _ = jump_margin(meas, state, gains)
    assert abs(margin) < 1e-12
    with pytest.raises(JumpContractViolation):
        observer_jump(state, meas, gains)


def test_candidate_zero_is_identity():
    gains = ObserverGains(k_i=np.full(4, 0.25))
    x = random_slam(np.random.default_rng(5), 4)
    assert np.allclose(candidate(ObserverState(x), 0, gains).matrix(), x.matrix())
    c1 = candidate(ObserverState(x), 1, gains)
    assert np.allclose(c1.rot, so3_exp([0, 0, np.pi / 2]) @ x.rot)


def test_default_delta_fallback():
    lmap = _cube()
    gains = ObserverGains(k_i=np.full(8, 0.125))
    truth = _truth(random_pose(np.random.default_rng(3), 0.5), lmap)
    state = ObserverState(random_slam(np.random.default_rng(4), 8))
    assert default_delta(measure(truth, lmap), state, gains) == 1e-2


def test_gain_validation():
    with pytest.raises(ValueError):
        ObserverGains(k_i=np.array([1.0, -1.0]))
    with pytest.raises(ValueError):
        ObserverGains(k_i=np.ones(4), ell=np.array([0.0, 0.0, 2.0]))


def test_weight_matrix_single_landmark_rank_one():
    A = weight_matrix(1, ObserverGains(k_i=np.array([1.0])))
    r = reference_vectors(1)[0]
    assert np.array_equal(A, np.outer(r, r))
    assert np.linalg.matrix_rank(A) == 1


@given(seeds)
@settings(max_examples=30)
def test_weight_matrix_psd(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 12))
    A = weight_matrix(n, ObserverGains(k_i=rng.uniform(0.01, 2.0, n)))
    assert np.array_equal(A, A.T)
    assert np.linalg.eigvalsh(A).min() >= -1e-12


def test_correction_zero_and_linear_in_gain():
    lmap = _cube()
    rng = np.random.default_rng(6)
    truth = _truth(random_pose(rng, 0.5), lmap)
    meas = measure(truth, lmap)
    g1 = ObserverGains(k_i=np.full(8, 0.125), k_o=1.0)
    g2 = ObserverGains(k_i=np.full(8, 0.125), k_o=2.0)
    assert np.abs(correction(meas, ObserverState(truth), g1)).max() < 1e-12
    state = ObserverState(random_slam(rng, 8))
    assert np.allclose(correction(meas, state, g2), 2.0 * correction(meas, state, g1))


def test_flow_identity_when_at_rest_and_exact():
    lmap = _cube()
    truth = _truth(random_pose(np.random.default_rng(9), 0.5), lmap)
    state = ObserverState(truth)
    out = observer_flow(state, _zero_twist(8), measure(truth, lmap), ObserverGains(k_i=np.full(8, 0.125)), 1e-3)
    assert np.allclose(out.xhat.matrix(), truth.matrix(), atol=1e-15)
    assert out.q == state.q


def test_flow_pure_rotation_matches_rodrigues():
    # truth = estimate keeps Delta at zero; the landmark block is unchanged by a body rotation
    lmap = _cube()
    truth = _truth(random_pose(np.random.default_rng(10), 0.5), lmap)
    w = np.array([0.3, -0.4, 1.2])
    dt = 1e-2
    V = SlamTangent(w, np.zeros(3), np.zeros((3, 8)))
    out = observer_flow(ObserverState(truth), V, measure(truth, lmap), ObserverGains(k_i=np.full(8, 0.125)), dt)
    expected = truth.rot @ rodrigues(np.linalg.norm(w) * dt, w / np.linalg.norm(w))
    assert np.abs(out.xhat.rot - expected).max() < 1e-11


def test_potential_decreases_along_noise_free_flow():
    lmap = _cube()
    rng = np.random.default_rng(11)
    gains = ObserverGains(k_i=np.full(8, 0.125), k_o=50.0)
    truth = _truth(random_pose(rng, 0.5), lmap)
    meas = measure(truth, lmap)
    state = ObserverState(random_slam(rng, 8, 1.0))
    U = [potential(meas, state, gains)]
    for _ in range(200):
        state = observer_flow(state, _zero_twist(8), meas, gains, 1e-3)
        U.append(potential(meas, state, gains))
    assert np.all(np.diff(U) <= 0.0)


@given(seeds)
@settings(max_examples=30)
def test_estimation_error_blocks(seed):
    rng = np.random.default_rng(seed)
    truth, xh = random_slam(rng, 5), random_slam(rng, 5)
    xt = estimation_error(truth, ObserverState(xh))
    assert np.allclose(xt.matrix(), truth.matrix() @ np.linalg.inv(xh.matrix()), atol=1e-10)
    assert np.allclose(estimation_error(truth, ObserverState(truth)).matrix(), np.eye(9), atol=1e-12)


def test_potential_strictly_positive_off_truth(rng):
    lmap = _cube()
    gains = ObserverGains(k_i=np.full(8, 0.125))
    truth = _truth(random_pose(rng, 0.5), lmap)
    meas = measure(truth, lmap)
    for _ in range(50):
        xh = random_slam(rng, 8)
        assert potential(meas, ObserverState(xh), gains) > 0.0
