"""Compiled arm kernel used on the simulation hot path.

Same quantities as the numpy reference in ``arm`` but written as scalar
loops, since numpy call overhead dominates for 6-joint arrays.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _cross(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@njit(cache=True)
def _mv(A, x):
    out = np.zeros(A.shape[0])
    for i in range(A.shape[0]):
        for j in range(A.shape[1]):
            out[i] += A[i, j] * x[j]
    return out


@njit(cache=True)
def _mtv(A, x):
    out = np.zeros(A.shape[1])
    for i in range(A.shape[0]):
        for j in range(A.shape[1]):
            out[j] += A[i, j] * x[i]
    return out


@njit(cache=True)
def _mm(A, B):
    out = np.zeros((A.shape[0], B.shape[1]))
    for i in range(A.shape[0]):
        for k in range(A.shape[1]):
            for j in range(B.shape[1]):
                out[i, j] += A[i, k] * B[k, j]
    return out


@njit(cache=True)
def frames(dh, q):
    n = dh.shape[0]
    T = np.zeros((n + 1, 4, 4))
    for i in range(4):
        T[0, i, i] = 1.0
    A = np.zeros((4, 4))
    for k in range(n):
        a, al, d, off = dh[k, 0], dh[k, 1], dh[k, 2], dh[k, 3]
        ct, st = np.cos(q[k] + off), np.sin(q[k] + off)
        ca, sa = np.cos(al), np.sin(al)
        A[0, 0], A[0, 1], A[0, 2], A[0, 3] = ct, -st * ca, st * sa, a * ct
        A[1, 0], A[1, 1], A[1, 2], A[1, 3] = st, ct * ca, -ct * sa, a * st
        A[2, 0], A[2, 1], A[2, 2], A[2, 3] = 0.0, sa, ca, d
        A[3, 0], A[3, 1], A[3, 2], A[3, 3] = 0.0, 0.0, 0.0, 1.0
        T[k + 1] = _mm(T[k], A)
    return T


@njit(cache=True)
def snapshot(dh, masses, com, inertia, gravity, viscous, coulomb, eps, q, qdot):
    """Return ``(T_end, J_body, jdot_qdot, M, bias, G, F)``."""
    n = dh.shape[0]
    T = frames(dh, q)
    z = np.empty((n, 3))
    o = np.empty((n + 1, 3))
    for k in range(n + 1):
        o[k] = T[k, :3, 3]
    for k in range(n):
        z[k] = T[k, :3, 2]

    # forward sweep: angular velocity/acceleration and origin velocity/acceleration
    w = np.zeros((n, 3))
    alpha = np.zeros((n, 3))
    od = np.zeros((n + 1, 3))
    odd = np.zeros((n + 1, 3))
    w_prev = np.zeros(3)
    a_prev = np.zeros(3)
    for k in range(n):
        w[k] = w_prev + qdot[k] * z[k]
        alpha[k] = a_prev + qdot[k] * _cross(w_prev, z[k])
        r = o[k + 1] - o[k]
        od[k + 1] = od[k] + _cross(w[k], r)
        odd[k + 1] = odd[k] + _cross(alpha[k], r) + _cross(w[k], _cross(w[k], r))
        w_prev = w[k]
        a_prev = alpha[k]

    M = np.zeros((n, n))
    G = np.zeros(n)
    cq = np.zeros(n)
    Jv = np.zeros((n, 3))
    for l in range(n):
        R = T[l + 1, :3, :3]
        s = _mv(R, com[l]) + T[l + 1, :3, 3] - o[l]
        c = s + o[l]
        Ib = _mm(_mm(R, inertia[l]), R.T)
        acc = odd[l] + _cross(alpha[l], s) + _cross(w[l], _cross(w[l], s))
        mom = _mv(Ib, alpha[l]) + _cross(w[l], _mv(Ib, w[l]))
        for j in range(l + 1):
            Jv[j] = _cross(z[j], c - o[j])
        for i in range(l + 1):
            G[i] -= masses[l] * (Jv[i] @ gravity)
            cq[i] += masses[l] * (Jv[i] @ acc) + z[i] @ mom
            Iz = _mv(Ib, z[i])
            for j in range(l + 1):
                M[i, j] += masses[l] * (Jv[i] @ Jv[j]) + z[j] @ Iz

    F = np.empty(n)
    for k in range(n):
        F[k] = viscous[k] * qdot[k] + coulomb[k] * np.tanh(qdot[k] / eps)

    R = T[n, :3, :3]
    J = np.empty((6, n))
    for j in range(n):
        J[:3, j] = _mtv(R, z[j])
        J[3:, j] = _mtv(R, _cross(z[j], o[n] - o[j]))
    jdq = np.empty(6)
    w_b = _mtv(R, w[n - 1])
    jdq[:3] = _mtv(R, alpha[n - 1])
    jdq[3:] = _mtv(R, odd[n]) - _cross(w_b, _mtv(R, od[n]))
    return T[n], J, jdq, M, cq + G + F, G, F
