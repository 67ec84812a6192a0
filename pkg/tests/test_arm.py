from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slamctl import arm

seeds = st.integers(0, 2**32 - 1)
Q0 = np.array([0.2, 0.8, 1.2, 0.3, 0.9, 0.1])


def _rot_z(t):
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, -s, 0, 0], [s, c, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1.0]])


def _rot_x(t):
    c, s = np.cos(t), np.sin(t)
    return np.array([[1, 0, 0, 0], [0, c, -s, 0], [0, s, c, 0], [0, 0, 0, 1.0]])


def _trans(x, z):
    T = np.eye(4)
    T[0, 3], T[2, 3] = x, z
    return T


def _chain(params, q):
    """Independent FK: Rz(theta) Tz(d) Tx(a) Rx(alpha) per row."""
    T = np.eye(4)
    for (a, al, d, off), qi in zip(params.dh, q):
        T = T @ _rot_z(qi + off) @ _trans(0.0, d) @ _trans(a, 0.0) @ _rot_x(al)
    return T


def _state(seed, speed=1.0):
    r = np.random.default_rng(seed)
    return arm.JointState(r.uniform(-np.pi, np.pi, 6), speed * r.standard_normal(6))


def test_fk_zero_pose_by_hand(params):
    # hand-composed DH chain: the tool points straight down 0.2 m below the base
    T = arm.forward_kinematics(params, np.zeros(6)).matrix()
    assert np.allclose(T[:3, 3], [0.8, 0.0, -0.2], atol=1e-15)
    assert np.allclose(T[:3, 2], [0.0, 0.0, -1.0], atol=1e-15)


def test_fk_frozen_q0(params):
    ref = np.array([
        [-0.8682892153568212, 0.3990020793119788, 0.29473917147157985, 1.110432295867621],
        [-0.4598233764997212, -0.87030320141037, -0.1764505597589777, 0.2014760553579243],
        [0.1861083042731612, -0.2887380790951868, 0.9391453672147831, 1.417487511369382],
        [0.0, 0.0, 0.0, 1.0],
    ])
    assert np.allclose(arm.forward_kinematics(params, Q0).matrix(), ref, atol=1e-14)


@given(seeds)
@settings(max_examples=40, deadline=None)
def test_fk_matches_independent_chain(seed):
    params = arm.ArmParameters()
    q = np.random.default_rng(seed).uniform(-np.pi, np.pi, 6)
    assert np.allclose(arm.forward_kinematics(params, q).matrix(), _chain(params, q), atol=1e-12)


@given(seeds)
@settings(max_examples=30, deadline=None)
def test_body_jacobian_central_difference(seed):
    params = arm.ArmParameters()
    q = np.random.default_rng(seed).uniform(-np.pi, np.pi, 6)
    T0 = arm.forward_kinematics(params, q).matrix()
    J = arm.jacobian(params, q)
    h = 1e-6
    fd = np.empty((6, 6))
    for k in range(6):
        e = np.zeros(6)
        e[k] = h
        Tp = arm.forward_kinematics(params, q + e).matrix()
        Tm = arm.forward_kinematics(params, q - e).matrix()
        dT = np.linalg.inv(T0) @ (Tp - Tm) / (2 * h)  # body twist matrix
        fd[:3, k] = [dT[2, 1], dT[0, 2], dT[1, 0]]
        fd[3:, k] = dT[:3, 3]
    assert np.abs(fd - J).max() <= 1e-5 * max(1.0, np.abs(J).max())


@given(seeds)
@settings(max_examples=20, deadline=None)
def test_jacobian_dot_central_difference(seed):
    params = arm.ArmParameters()
    s = _state(seed)
    h = 1e-6
    fd = (arm.jacobian(params, s.q + h * s.qdot) - arm.jacobian(params, s.q - h * s.qdot)) / (2 * h)
    assert np.allclose(arm.jacobian_dot(params, s.q, s.qdot), fd, atol=1e-6)


@given(seeds)
@settings(max_examples=20, deadline=None)
def test_mass_matrix_spd(seed):
    M = arm.mass_matrix(arm.ArmParameters(), _state(seed).q)
    assert np.allclose(M, M.T, atol=1e-13)
    assert np.linalg.eigvalsh(M).min() > 0


@given(seeds)
@settings(max_examples=20, deadline=None)
def test_mdot_minus_2c_skew(seed):
    params = arm.ArmParameters()
    s = _state(seed, 2.0)
    h = 1e-6
    Mdot = (arm.mass_matrix(params, s.q + h * s.qdot) - arm.mass_matrix(params, s.q - h * s.qdot)) / (2 * h)
    dM = arm.mass_matrix_derivatives(params, s.q)
    assert np.allclose(np.tensordot(s.qdot, dM, axes=1), Mdot, atol=1e-6)
    N = np.tensordot(s.qdot, dM, axes=1) - 2.0 * arm.coriolis(params, s.q, s.qdot)
    assert np.abs(N + N.T).max() <= 1e-8


@given(seeds)
@settings(max_examples=20, deadline=None)
def test_gravity_is_potential_gradient(seed):
    params = arm.ArmParameters()
    q = _state(seed).q
    h = 1e-6
    fd = np.array([
        (arm.potential_energy(params, q + h * e) - arm.potential_energy(params, q - h * e)) / (2 * h)
        for e in np.eye(6)
    ])
    assert np.allclose(arm.gravity(params, q), fd, atol=1e-6)


@given(seeds)
@settings(max_examples=30, deadline=None)
def test_kernel_matches_reference(seed):
    params = arm.ArmParameters()
    s = _state(seed, 2.0)
    a, b = arm.snapshot(params, s), arm.snapshot_reference(params, s)
    for name in ("J", "jdot_qdot", "M", "bias", "G", "F"):
        assert np.allclose(getattr(a, name), getattr(b, name), atol=1e-11), name
    assert np.allclose(a.pose.matrix(), b.pose.matrix(), atol=1e-13)


@given(seeds)
@settings(max_examples=20, deadline=None)
def test_forward_recursion_equals_christoffel(seed):
    params = arm.ArmParameters()
    s = _state(seed, 2.0)
    ref = arm.coriolis(params, s.q, s.qdot) @ s.qdot
    assert np.allclose(arm.coriolis_product(params, s.q, s.qdot), ref, atol=1e-10)
    jd = arm.jacobian_dot(params, s.q, s.qdot) @ s.qdot
    assert np.allclose(arm.snapshot(params, s).jdot_qdot, jd, atol=1e-10)


@given(seeds)
@settings(max_examples=20, deadline=None)
def test_inverse_forward_dynamics_roundtrip(seed):
    params = arm.ArmParameters()
    s = _state(seed)
    qdd = np.random.default_rng(seed + 1).standard_normal(6)
    tau = arm.inverse_dynamics(params, s, qdd)
    assert np.allclose(arm.forward_dynamics(params, s, tau), qdd, atol=1e-8)


def test_kinetic_energy_matches_link_sum(params):
    s = _state(3)
    # independent: 1/2 sum m |v_c|^2 + 1/2 w^T I w with FD link velocities
    h = 1e-6
    T = arm.frames(params, s.q)
    Tp, Tm = arm.frames(params, s.q + h * s.qdot), arm.frames(params, s.q - h * s.qdot)
    K = 0.0
    for l in range(6):
        R = T[l + 1, :3, :3]
        c = lambda F: F[l + 1, :3, :3] @ params.com[l] + F[l + 1, :3, 3]  # noqa: E731
        v = (c(Tp) - c(Tm)) / (2 * h)
        W = (Tp[l + 1, :3, :3] - Tm[l + 1, :3, :3]) / (2 * h) @ R.T
        w = np.array([W[2, 1], W[0, 2], W[1, 0]])
        K += 0.5 * params.masses[l] * v @ v + 0.5 * w @ R @ params.inertia[l] @ R.T @ w
    assert np.isclose(arm.kinetic_energy(params, s), K, rtol=1e-7)


def _passive(params, dt=1e-3, T=10.0):
    """RK4 with tau = 0; returns (energy residual, peak kinetic energy).

    Potential energy has an arbitrary zero, so the residual is scaled by
    the energy actually exchanged during the fall.
    """
    def f(y):
        s = arm.snapshot(params, arm.JointState(y[:6], y[6:12]))
        return np.concatenate([y[6:12], np.linalg.solve(s.M, -s.bias), [y[6:12] @ s.F]])

    def energy(y):
        return arm.kinetic_energy(params, arm.JointState(y[:6], y[6:12])) + arm.potential_energy(params, y[:6])

    y = np.concatenate([Q0, np.zeros(6), [0.0]])
    E0, scale = energy(y), 0.0
    for _ in range(int(round(T / dt))):
        k1 = f(y)
        k2 = f(y + 0.5 * dt * k1)
        k3 = f(y + 0.5 * dt * k2)
        k4 = f(y + dt * k3)
        y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        scale = max(scale, arm.kinetic_energy(params, arm.JointState(y[:6], y[6:12])))
    # E(t) + dissipated work stays at E0
    return abs(energy(y) + y[12] - E0), scale


@pytest.mark.parametrize("friction", ["none", "viscous"])
def test_passive_energy_balance(params, friction):
    p = replace(params, coulomb=np.zeros(6))
    if friction == "none":
        p = replace(p, viscous=np.zeros(6))
    residual, scale = _passive(p)
    assert residual <= 1e-6 * scale


def test_friction_smoothing(params):
    F = arm.friction(params, np.array([1.0, -1.0, 0.0, 1e-6, 0.5, -2.0]))
    assert F[2] == 0.0
    assert np.isclose(F[0], params.viscous[0] + params.coulomb[0] * np.tanh(1.0 / params.coulomb_eps))
    assert abs(F[3]) < params.coulomb[3] * 1e-2 + 1e-12


def test_rejects_bad_parameters():
    with pytest.raises(ValueError):
        arm.ArmParameters(masses=np.array([1.0, 1, 1, 1, 1, -1]))
    with pytest.raises(ValueError):
        arm.ArmParameters(inertia=np.zeros((6, 3, 3)))
    with pytest.raises(ValueError):
        arm.JointState(np.full(6, np.nan), np.zeros(6))


def test_jdot_qdot_angular_part(params):
    # Jdot qdot angular part is the derivative of omega_b at zero joint accel
    s = _state(11)
    h = 1e-6
    w = lambda q: arm.jacobian(params, q)[:3] @ s.qdot  # noqa: E731
    fd = (w(s.q + h * s.qdot) - w(s.q - h * s.qdot)) / (2 * h)
    assert np.allclose(arm.snapshot(params, s).jdot_qdot[:3], fd, atol=1e-6)


def test_first_joint_rotates_about_base_z(params):
    phi = 0.7
    q = Q0.copy()
    p0 = arm.forward_kinematics(params, q).pos
    q[0] += phi
    p1 = arm.forward_kinematics(params, q).pos
    c, s = np.cos(phi), np.sin(phi)
    assert np.allclose(p1, np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]]) @ p0, atol=1e-14)


def test_fk_rotation_is_orthonormal(rng, params):
    for _ in range(20):
        R = arm.forward_kinematics(params, rng.uniform(-np.pi, np.pi, 6)).rot
        assert np.abs(R.T @ R - np.eye(3)).max() < 1e-12
        assert np.isclose(np.linalg.det(R), 1.0, atol=1e-12)


def test_stretched_arm_is_singular(params):
    # elbow straight and wrist aligned
    q = np.array([0.0, 0.3, -np.pi / 2, 0.0, 0.0, 0.0])
    assert np.linalg.matrix_rank(arm.jacobian(params, q), tol=1e-9) < 6


def test_zero_rates(params):
    zero = np.zeros(6)
    assert np.array_equal(arm.jacobian(params, Q0) @ zero, zero)
    assert np.allclose(arm.jacobian_dot(params, Q0, zero), 0.0)
    s = arm.JointState(Q0, zero)
    assert np.allclose(arm.forward_dynamics(params, s, arm.bias_term(params, s)), 0.0, atol=1e-12)


def test_gravity_vanishes_without_gravity(params):
    p = replace(params, gravity=np.zeros(3))
    assert np.array_equal(arm.gravity(p, Q0), np.zeros(6))


def test_bias_is_sum_of_terms(params):
    s = _state(8)
    M, C, G, F = arm.dynamics_terms(params, s)
    assert np.allclose(arm.bias_term(params, s), C @ s.qdot + G + F)
    assert np.allclose(M, arm.mass_matrix(params, s.q))
    assert np.allclose(C, arm.coriolis(params, s.q, s.qdot))
    tau = np.random.default_rng(2).standard_normal(6)
    assert np.allclose(arm.inverse_dynamics(params, s, arm.forward_dynamics(params, s, tau)), tau, atol=1e-9)
