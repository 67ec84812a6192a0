"""Rigid-body model of a 6-DOF revolute serial arm (standard DH convention).

Joint ``k`` rotates about ``z_k``, the z-axis of frame ``k``; link ``k``
is the body attached to frame ``k + 1``. All Jacobian columns are ordered
``[omega; v]``. The end-effector Jacobian is the *body* Jacobian, so that
``J @ qdot`` is the twist ``W`` in ``Xdot = X W``.

The inertia matrix is assembled from link Jacobians (composite-rigid-body
form), the Coriolis matrix from Christoffel symbols of its analytic joint
derivatives, which keeps ``Mdot - 2C`` skew-symmetric by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernel
from .lie import RigidPose, hat

N_JOINTS = 6


def _rod_inertia(mass, length, radius, axis):
    along = 0.5 * mass * radius**2
    perp = mass * (3 * radius**2 + length**2) / 12.0
    inertia = np.full(3, perp)
    inertia[axis] = along
    return np.diag(inertia)


def _default_dh():
    # a, alpha, d, theta offset: anthropomorphic arm + spherical wrist,
    # 0.5 + 0.8 + 0.6 + 0.1 = 2.0 m of link length
    return np.array([
        [0.0, np.pi / 2, 0.5, 0.0],
        [0.8, 0.0, 0.0, 0.0],
        [0.0, np.pi / 2, 0.0, 0.0],
        [0.0, -np.pi / 2, 0.6, 0.0],
        [0.0, np.pi / 2, 0.0, 0.0],
        [0.0, 0.0, 0.1, 0.0],
    ])


def _default_masses():
    return np.array([20.0, 12.0, 6.0, 4.0, 2.0, 1.0])


def _default_com():
    return np.array([
        [0.0, -0.25, 0.0],
        [-0.4, 0.0, 0.0],
        [0.0, 0.0, 0.0],
        [0.0, 0.3, 0.0],
        [0.0, 0.0, 0.0],
        [0.0, 0.0, -0.05],
    ])


def _default_inertia():
    m = _default_masses()
    return np.array([
        _rod_inertia(m[0], 0.5, 0.10, axis=1),
        _rod_inertia(m[1], 0.8, 0.07, axis=0),
        _rod_inertia(m[2], 0.15, 0.07, axis=2),
        _rod_inertia(m[3], 0.6, 0.05, axis=1),
        _rod_inertia(m[4], 0.10, 0.04, axis=2),
        _rod_inertia(m[5], 0.10, 0.04, axis=2),
    ])


@dataclass(frozen=True, eq=False)
class ArmParameters:
    """Kinematic and inertial description of the arm.

    ``dh`` rows are ``(a, alpha, d, theta_offset)``; ``com`` and
    ``inertia`` are expressed in the link frame, inertia about the COM.
    Coulomb friction is smoothed as ``coulomb * tanh(qdot / coulomb_eps)``.
    """

    dh: np.ndarray = field(default_factory=_default_dh)
    masses: np.ndarray = field(default_factory=_default_masses)
    com: np.ndarray = field(default_factory=_default_com)
    inertia: np.ndarray = field(default_factory=_default_inertia)
    viscous: np.ndarray = field(default_factory=lambda: np.array([2.0, 2.0, 1.0, 0.3, 0.2, 0.1]))
    coulomb: np.ndarray = field(default_factory=lambda: np.array([1.0, 1.0, 0.5, 0.1, 0.05, 0.02]))
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))
    coulomb_eps: float = 1e-3

    def __post_init__(self):
        shapes = {"dh": (6, 4), "masses": (6,), "com": (6, 3), "inertia": (6, 3, 3),
                  "viscous": (6,), "coulomb": (6,), "gravity": (3,)}
        for name, shape in shapes.items():
            value = np.asarray(getattr(self, name), dtype=float).reshape(shape)
            object.__setattr__(self, name, value)
        if np.any(self.masses <= 0):
            raise ValueError("link masses must be positive")
        for k, I in enumerate(self.inertia):
            if not np.allclose(I, I.T) or np.linalg.eigvalsh(I).min() <= 0:
                raise ValueError(f"inertia tensor of link {k} is not symmetric positive definite")
        if np.any(self.viscous < 0) or np.any(self.coulomb < 0) or self.coulomb_eps <= 0:
            raise ValueError("friction coefficients must be non-negative")


@dataclass(frozen=True, eq=False)
class JointState:
    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(N_JOINTS)
        qd = np.asarray(self.qdot, dtype=float).reshape(N_JOINTS)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd))):
            raise ValueError("joint state must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qdot", qd)


def dh_transform(a, alpha, d, theta):
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    return np.array([
        [ct, -st * ca, st * sa, a * ct],
        [st, ct * ca, -ct * sa, a * st],
        [0.0, sa, ca, d],
        [0.0, 0.0, 0.0, 1.0],
    ])


def _cross(a, b):
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0], axis=-1)


def frames(params, q):
    """World transforms of frames 0..6 as an array of shape (7, 4, 4)."""
    a, alpha, d, off = params.dh.T
    theta = np.asarray(q, dtype=float) + off
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    A = np.zeros((N_JOINTS, 4, 4))
    A[:, 0, 0], A[:, 0, 1], A[:, 0, 2], A[:, 0, 3] = ct, -st * ca, st * sa, a * ct
    A[:, 1, 0], A[:, 1, 1], A[:, 1, 2], A[:, 1, 3] = st, ct * ca, -ct * sa, a * st
    A[:, 2, 1], A[:, 2, 2], A[:, 2, 3] = sa, ca, d
    A[:, 3, 3] = 1.0
    T = np.empty((N_JOINTS + 1, 4, 4))
    T[0] = np.eye(4)
    for k in range(N_JOINTS):
        T[k + 1] = T[k] @ A[k]
    return T


def forward_kinematics(params, q):
    return RigidPose.from_matrix(frames(params, q)[-1])


def _geometric_jacobian(T):
    z = T[:N_JOINTS, :3, 2]
    o = T[:N_JOINTS, :3, 3]
    J = np.empty((6, N_JOINTS))
    J[:3] = z.T
    J[3:] = _cross(z, T[-1, :3, 3] - o).T
    return J


def _body_jacobians(T, qdot):
    z = T[:, :3, 2]
    o = T[:, :3, 3]
    # angular velocity of frame j is the sum of upstream joint rates
    w = np.vstack([np.zeros(3), np.cumsum(qdot[:, None] * z[:N_JOINTS], axis=0)])
    od = np.vstack([np.zeros(3), np.cumsum(_cross(w[1:], o[1:] - o[:-1]), axis=0)])
    zd = _cross(w[:N_JOINTS], z[:N_JOINTS])
    Jg = _geometric_jacobian(T)
    Jgd = np.empty((6, N_JOINTS))
    Jgd[:3] = zd.T
    Jgd[3:] = (_cross(zd, o[-1] - o[:N_JOINTS]) + _cross(z[:N_JOINTS], od[-1] - od[:N_JOINTS])).T
    Rt = T[-1, :3, :3].T
    Rt_dot = -hat(Rt @ w[-1]) @ Rt
    J = np.vstack([Rt @ Jg[:3], Rt @ Jg[3:]])
    Jd = np.vstack([Rt_dot @ Jg[:3] + Rt @ Jgd[:3], Rt_dot @ Jg[3:] + Rt @ Jgd[3:]])
    return J, Jd


def jacobian(params, q):
    """Body Jacobian: ``jacobian(q) @ qdot == [omega_b; v_b]`` of the end effector."""
    T = frames(params, q)
    Rt = T[-1, :3, :3].T
    Jg = _geometric_jacobian(T)
    return np.vstack([Rt @ Jg[:3], Rt @ Jg[3:]])


def jacobian_dot(params, q, qdot):
    """Time derivative of the body Jacobian along ``qdot``."""
    return _body_jacobians(frames(params, q), np.asarray(qdot, dtype=float))[1]


_IDX = np.arange(N_JOINTS)
_K, _L, _J = np.meshgrid(_IDX, _IDX, _IDX, indexing="ij")
# column j of link l's Jacobian is nonzero for j <= l
_COL = (_IDX[None, :] <= _IDX[:, None]).astype(float)[..., None]
# d/dq_k of column j of link l: rigid rotation when k < j, COM lever change when j <= k <= l
_UPSTREAM = ((_K < _J) & (_J <= _L)).astype(float)[..., None]
_LEVER = ((_J <= _K) & (_K <= _L)).astype(float)[..., None]
_INERTIA_DEP = (_IDX[:, None] <= _IDX[None, :]).astype(float)[:, :, None, None]


def _link_terms(params, T):
    R = T[1:, :3, :3]
    z = T[:N_JOINTS, :3, 2]
    o = T[:N_JOINTS, :3, 3]
    c = T[1:, :3, 3] + (R @ params.com[:, :, None])[:, :, 0]
    # link Jacobians stored as [link, column, xyz]
    Jv = _cross(z[None, :, :], c[:, None, :] - o[None, :, :]) * _COL
    Jw = z[None, :, :] * _COL
    Ibar = R @ params.inertia @ R.transpose(0, 2, 1)
    return z, o, c, Jv, Jw, Ibar


def _mass_matrix(params, Jv, Jw, Ibar):
    mJv = params.masses[:, None, None] * Jv
    M = np.einsum("lix,ljx->ij", mJv, Jv)
    M += np.einsum("lix,ljx->ij", Jw @ Ibar, Jw)
    return 0.5 * (M + M.T)


def _mass_derivatives(params, z, o, c, Jv, Jw, Ibar):
    """Array ``dM[k] = dM/dq_k``, shape (6, 6, 6)."""
    n = N_JOINTS
    zk = z[:, None, None, :]
    lever = _cross(z[:, None, :], c[None, :, :] - o[:, None, :])  # [k, l]
    dJv = _cross(zk, Jv[None]) * _UPSTREAM + _cross(z[None, None, :, :], lever[:, :, None, :]) * _LEVER
    dJw = _cross(zk, Jw[None]) * _UPSTREAM
    Zk = np.zeros((n, 3, 3))
    Zk[:, 0, 1], Zk[:, 0, 2], Zk[:, 1, 2] = -z[:, 2], z[:, 1], -z[:, 0]
    Zk -= Zk.transpose(0, 2, 1)
    dIbar = (Zk[:, None] @ Ibar[None] - Ibar[None] @ Zk[:, None]) * _INERTIA_DEP
    mJv = (params.masses[:, None, None] * Jv).reshape(n * n, 3)  # [l*j, x]
    # contract over links and xyz with plain matmuls
    dJv_kil = dJv.transpose(0, 2, 1, 3).reshape(n, n, n * 3)
    A = dJv_kil @ mJv.reshape(n, n, 3).transpose(0, 2, 1).reshape(n * 3, n)
    IJw = (Ibar @ Jw.transpose(0, 2, 1)).reshape(n * 3, n)  # [l*x, j]
    B = dJw.transpose(0, 2, 1, 3).reshape(n, n, n * 3) @ IJw
    Cw = (Jw[None] @ dIbar @ Jw.transpose(0, 2, 1)[None]).sum(axis=1)
    return A + A.transpose(0, 2, 1) + B + B.transpose(0, 2, 1) + Cw


def _christoffel(dM, qdot):
    t1 = np.tensordot(qdot, dM, axes=1)  # sum_i qd_i dM[i, k, j]
    # dM[k] is symmetric, so one product gives both remaining terms
    t3 = dM @ qdot  # sum_i qd_i dM[k, j, i]
    return 0.5 * (t1 + t3.T - t3)


def _gravity(params, Jv):
    return -np.einsum("l,lix,x->i", params.masses, Jv, params.gravity)


def mass_matrix(params, q):
    _, _, _, Jv, Jw, Ibar = _link_terms(params, frames(params, q))
    return _mass_matrix(params, Jv, Jw, Ibar)


def mass_matrix_derivatives(params, q):
    return _mass_derivatives(params, *_link_terms(params, frames(params, q)))


def coriolis(params, q, qdot):
    """Christoffel-symbol Coriolis/centrifugal matrix ``C(q, qdot)``."""
    return _christoffel(mass_matrix_derivatives(params, q), np.asarray(qdot, dtype=float))


def gravity(params, q):
    _, _, _, Jv, _, _ = _link_terms(params, frames(params, q))
    return _gravity(params, Jv)


def friction(params, qdot):
    qdot = np.asarray(qdot, dtype=float)
    return params.viscous * qdot + params.coulomb * np.tanh(qdot / params.coulomb_eps)


def potential_energy(params, q):
    _, _, c, _, _, _ = _link_terms(params, frames(params, q))
    return -float(params.masses @ (c @ params.gravity))


def kinetic_energy(params, state):
    return 0.5 * float(state.qdot @ mass_matrix(params, state.q) @ state.qdot)


def dynamics_terms(params, state):
    """``(M, C, G, F)`` evaluated with one shared kinematics pass."""
    terms = _link_terms(params, frames(params, state.q))
    _, _, _, Jv, Jw, Ibar = terms
    M = _mass_matrix(params, Jv, Jw, Ibar)
    C = _christoffel(_mass_derivatives(params, *terms), state.qdot)
    return M, C, _gravity(params, Jv), friction(params, state.qdot)


def bias_term(params, state):
    """``N(q, qdot) = C qdot + G + F``."""
    _, C, G, F = dynamics_terms(params, state)
    return C @ state.qdot + G + F


def forward_dynamics(params, state, tau):
    M, C, G, F = dynamics_terms(params, state)
    return np.linalg.solve(M, np.asarray(tau, dtype=float) - C @ state.qdot - G - F)


def inverse_dynamics(params, state, qddot):
    M, C, G, F = dynamics_terms(params, state)
    return M @ np.asarray(qddot, dtype=float) + C @ state.qdot + G + F


def _rate_terms(params, T, qdot):
    """Quadratic velocity terms with zero joint acceleration.

    Returns ``(C qdot, Jdot qdot)`` from a forward sweep of link angular
    and origin velocities/accelerations, O(n^2) instead of the O(n^3)
    Christoffel tensor. ``Jdot qdot`` is the body-frame value.
    """
    z = T[:N_JOINTS, :3, 2]
    o = T[:, :3, 3]
    w = np.cumsum(qdot[:, None] * z, axis=0)  # link angular velocities
    w_in = np.vstack([np.zeros(3), w[:-1]])
    alpha = np.cumsum(qdot[:, None] * _cross(w_in, z), axis=0)
    r = o[1:] - o[:-1]
    # joint origins lie on the relative rotation axis, so they move with both links
    od = np.vstack([np.zeros(3), np.cumsum(_cross(w, r), axis=0)])
    odd = np.vstack([np.zeros(3), np.cumsum(_cross(alpha, r) + _cross(w, _cross(w, r)), axis=0)])
    R = T[1:, :3, :3]
    s = (R @ params.com[:, :, None])[:, :, 0] + T[1:, :3, 3] - o[:-1]
    acc_c = odd[:-1] + _cross(alpha, s) + _cross(w, _cross(w, s))
    Ibar = R @ params.inertia @ R.transpose(0, 2, 1)
    Iw = (Ibar @ w[:, :, None])[:, :, 0]
    moment = (Ibar @ alpha[:, :, None])[:, :, 0] + _cross(w, Iw)
    c = s + o[:-1]
    Jv = _cross(z[None, :, :], c[:, None, :] - o[None, :N_JOINTS, :]) * _COL
    Jw = z[None, :, :] * _COL
    cq = np.einsum("ljx,lx->j", Jv, params.masses[:, None] * acc_c)
    cq += np.einsum("ljx,lx->j", Jw, moment)
    Rt = T[-1, :3, :3].T
    w_b = Rt @ w[-1]
    jdq = np.concatenate([Rt @ alpha[-1], Rt @ odd[-1] - _cross(w_b, Rt @ od[-1])])
    return cq, jdq


def coriolis_product(params, q, qdot):
    """``C(q, qdot) @ qdot`` without forming ``C``."""
    return _rate_terms(params, frames(params, q), np.asarray(qdot, dtype=float))[0]


@dataclass(frozen=True, eq=False)
class ArmSnapshot:
    """Quantities the simulator needs at one joint state, from one kinematics pass.

    ``bias`` is ``C qdot + G + F`` and ``jdot_qdot`` is ``Jdot qdot`` (body frame).
    """

    pose: RigidPose
    J: np.ndarray
    jdot_qdot: np.ndarray
    M: np.ndarray
    bias: np.ndarray
    G: np.ndarray
    F: np.ndarray


def snapshot_reference(params, state):
    """Pure-numpy ``snapshot``; slower, kept as a cross-check."""
    T = frames(params, state.q)
    Jg = _geometric_jacobian(T)
    Rt = T[-1, :3, :3].T
    _, _, _, Jv, Jw, Ibar = _link_terms(params, T)
    cq, jdq = _rate_terms(params, T, state.qdot)
    G = _gravity(params, Jv)
    F = friction(params, state.qdot)
    return ArmSnapshot(
        pose=RigidPose(T[-1, :3, :3], T[-1, :3, 3]),
        J=np.vstack([Rt @ Jg[:3], Rt @ Jg[3:]]),
        jdot_qdot=jdq,
        M=_mass_matrix(params, Jv, Jw, Ibar),
        bias=cq + G + F,
        G=G,
        F=F,
    )


def snapshot(params, state):
    """Pose, body Jacobian, ``Jdot qdot``, ``M`` and ``C qdot + G + F`` in one pass."""
    Te, J, jdq, M, bias, G, F = _kernel.snapshot(
        params.dh, params.masses, params.com, params.inertia, params.gravity,
        params.viscous, params.coulomb, float(params.coulomb_eps), state.q, state.qdot,
    )
    return ArmSnapshot(RigidPose(Te[:3, :3], Te[:3, 3]), J, jdq, M, bias, G, F)
