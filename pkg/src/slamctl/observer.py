"""Hybrid gradient observer on SLAM_n(3) driven by range/bearing measurements.

The observer only ever sees the measurement vectors ``beta_i`` and the
measured body velocity. Functions with an ``_from_error`` suffix take the
true estimation error and exist for monitoring and testing.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .lie import SlamElement, SlamTangent, project_to_so3, rodrigues, upsilon


class DegenerateMeasurement(ValueError):
    pass


class JumpContractViolation(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class LandmarkMap:
    """Stationary landmark positions, one column per landmark (m)."""

    positions: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.positions, dtype=float)
        if pts.ndim != 2 or pts.shape[0] != 3:
            pts = pts.reshape(-1, 3).T
        object.__setattr__(self, "positions", pts)
        if self.n < 4:
            raise ValueError(f"need at least 4 landmarks, got {self.n}")
        centered = pts - pts.mean(axis=1, keepdims=True)
        smin = np.linalg.svd(centered, compute_uv=False)[-1]
        if smin <= 1e-6:
            raise ValueError(f"landmarks are coplanar (min singular value {smin:.3g})")

    @property
    def n(self):
        return self.positions.shape[1]


@dataclass(frozen=True, eq=False)
class CameraMeasurement:
    """Per-landmark measurement vectors ``beta`` and constant references ``r``, shape (n, n+4)."""

    beta: np.ndarray
    r: np.ndarray

    @property
    def n(self):
        return self.beta.shape[0]


@dataclass(frozen=True, eq=False)
class ObserverGains:
    k_i: np.ndarray
    k_o: float = 100.0
    delta: float = 1e-2
    theta: float = np.pi / 2
    ell: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    q_max: int = 3

    def __post_init__(self):
        k = np.atleast_1d(np.asarray(self.k_i, dtype=float))
        object.__setattr__(self, "k_i", k)
        object.__setattr__(self, "ell", np.asarray(self.ell, dtype=float))
        if np.any(k <= 0):
            raise ValueError("landmark weights k_i must be positive")
        if self.k_o <= 0 or self.delta <= 0 or self.theta <= 0:
            raise ValueError("k_o, delta and theta must be positive")
        if abs(np.linalg.norm(self.ell) - 1.0) > 1e-9:
            raise ValueError("reset axis ell must be a unit vector")
        if self.q_max < 0:
            raise ValueError("q_max must be non-negative")


@dataclass(frozen=True, eq=False)
class ObserverState:
    xhat: SlamElement
    q: int = 0


def reference_vectors(n):
    """Rows ``r_i = [0, 0, 0, 1, -e_i]``."""
    r = np.zeros((n, n + 4))
    r[:, 3] = 1.0
    r[:, 4:] = -np.eye(n)
    return r


def measure(truth, lmap, rng=None, sigma_range=0.0, sigma_bearing=0.0, noise=None):
    """Synthesize ``beta_i = X^-1 r_i`` from the true state.

    Optional zero-mean Gaussian noise is added to range (m) and to the
    bearing direction before renormalisation; it needs ``rng``. A fixed
    draw can be passed instead as ``noise = (d_range, d_bearing)``.
    """
    same = truth.n == lmap.n and (
        np.array_equal(truth.landmarks, lmap.positions)
        or np.allclose(truth.landmarks, lmap.positions, atol=1e-12)
    )
    if not same:
        raise ValueError("true state landmarks must equal the stationary map")
    rel = truth.rot.T @ (lmap.positions - truth.pos[:, None])
    ranges = np.linalg.norm(rel, axis=0)
    if np.any(ranges < 1e-9):
        raise DegenerateMeasurement("landmark coincides with the camera position")
    if noise is not None:
        rel = perturb(rel, *noise)
    elif sigma_range > 0 or sigma_bearing > 0:
        rel = perturb(
            rel,
            sigma_range * rng.standard_normal(lmap.n),
            sigma_bearing * rng.standard_normal((3, lmap.n)),
        )
    r = reference_vectors(lmap.n)
    beta = r.copy()
    beta[:, :3] = rel.T
    return CameraMeasurement(beta=beta, r=r)


def perturb(rel, d_range, d_bearing):
    """Add range and bearing-direction offsets to body-frame landmark vectors (3xn)."""
    ranges = np.linalg.norm(rel, axis=0)
    bearings = rel / ranges + d_bearing
    bearings /= np.linalg.norm(bearings, axis=0)
    return bearings * (ranges + d_range)


def range_bearing(meas):
    """Recover ranges and unit bearings (body frame) from a measurement."""
    rel = meas.beta[:, :3]
    ranges = np.linalg.norm(rel, axis=1)
    return ranges, rel / ranges[:, None]


def weight_matrix(n_or_map, gains):
    n = n_or_map.n if hasattr(n_or_map, "n") else int(n_or_map)
    r = reference_vectors(n)
    k = np.broadcast_to(gains.k_i, (n,))
    return (r.T * k) @ r


def _residuals(meas, xhat_matrix):
    return meas.r - meas.beta @ xhat_matrix.T


def potential(meas, state, gains):
    """Measurement-domain potential ``1/2 sum k_i |r_i - Xhat beta_i|^2``."""
    res = _residuals(meas, state.xhat.matrix())
    k = np.broadcast_to(gains.k_i, (meas.n,))
    return 0.5 * float(np.sum(k * np.sum(res**2, axis=1)))


def innovation(meas, state, gains):
    res = _residuals(meas, state.xhat.matrix())
    k = np.broadcast_to(gains.k_i, (meas.n,))
    return upsilon((res.T * k) @ meas.r)


def correction(meas, state, gains, innov=None):
    """Correction term ``Delta = -k_o Ad_{Xhat^-1} innovation`` in slam_n(3).

    ``innov`` may pass a precomputed innovation.
    """
    X = state.xhat
    if innov is None:
        innov = innovation(meas, state, gains)
    return -gains.k_o * upsilon(X.inverse().matrix() @ innov @ X.matrix())


def potential_from_error(xtilde, A):
    E = np.eye(A.shape[0]) - xtilde.matrix()
    return 0.5 * float(np.trace(E @ A @ E.T))


def innovation_from_error(xtilde, A):
    return upsilon((np.eye(A.shape[0]) - xtilde.inverse().matrix()) @ A)


def estimation_error(truth, state):
    """Right-invariant error ``X Xhat^-1`` (monitoring only)."""
    xh = state.xhat
    Rt = truth.rot @ xh.rot.T
    return SlamElement(Rt, truth.pos - Rt @ xh.pos, truth.landmarks - Rt @ xh.landmarks)


def observer_rate(xhat, twist, meas, gains, innov=None):
    """Time derivative ``Xhat (V - Delta)`` as an (n+4)x(n+4) matrix."""
    state = ObserverState(xhat)
    V = twist.matrix() - correction(meas, state, gains, innov)
    return xhat.matrix() @ V


def observer_flow(state, twist, meas, gains, dt):
    """One RK4 step with twist and measurement held over the step."""
    if dt <= 0:
        raise ValueError("dt must be positive")

    def f(Xm):
        return observer_rate(SlamElement.from_matrix(Xm), twist, meas, gains)

    X0 = state.xhat.matrix()
    k1 = f(X0)
    k2 = f(X0 + 0.5 * dt * k1)
    k3 = f(X0 + 0.5 * dt * k2)
    k4 = f(X0 + dt * k3)
    X1 = SlamElement.from_matrix(X0 + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))
    return replace(state, xhat=X1.reprojected())


def candidate(state, q, gains):
    """Reset candidate ``Psi(rot(q theta, ell), 0, 0) Xhat``."""
    Rq = rodrigues(q * gains.theta, gains.ell)
    n = state.xhat.n
    return SlamElement(Rq, np.zeros(3), np.zeros((3, n))) @ state.xhat


def candidate_rotations(gains):
    return np.array([rodrigues(q * gains.theta, gains.ell) for q in range(gains.q_max + 1)])


def candidate_potentials(meas, state, gains):
    """Measurement-domain potential of every reset candidate ``q = 0..q_max``."""
    res = _residuals(meas, state.xhat.matrix())
    k = np.broadcast_to(gains.k_i, (meas.n,))
    top = meas.r[:, :3] - (meas.r[:, :3] - res[:, :3]) @ candidate_rotations(gains).transpose(0, 2, 1)
    rest = float(np.sum(k * np.sum(res[:, 3:] ** 2, axis=1)))
    return 0.5 * (np.sum(k * np.sum(top**2, axis=2), axis=1) + rest)


def jump_margin(meas, state, gains):
    """Return ``(U(current) - min_q U(candidate_q), argmin q)``."""
    pots = candidate_potentials(meas, state, gains)
    q_star = int(np.argmin(pots))
    return potential(meas, state, gains) - pots[q_star], q_star


def in_jump_set(meas, state, gains):
    return jump_margin(meas, state, gains)[0] >= gains.delta


def observer_jump(state, meas, gains):
    margin, q_star = jump_margin(meas, state, gains)
    if margin < gains.delta:
        raise JumpContractViolation(
            f"observer jump outside the jump set (margin {margin:.3g} < delta {gains.delta:.3g})"
        )
    xhat = candidate(state, q_star, gains)
    return ObserverState(SlamElement(project_to_so3(xhat.rot), xhat.pos, xhat.landmarks), q_star)


def default_delta(meas, state, gains, fallback=1e-2):
    """One tenth of the smallest nonzero candidate gap, else ``fallback``."""
    pots = candidate_potentials(meas, state, gains)
    gaps = np.abs(pots[0] - pots[1:])
    gaps = gaps[gaps > 1e-12 * max(1.0, abs(pots[0]))]
    return 0.1 * float(gaps.min()) if gaps.size else fallback


def measured_tangent(twist_vec, n):
    """Measured body velocity as a slam_n(3) element (stationary landmarks)."""
    return SlamTangent(twist_vec[:3], twist_vec[3:], np.zeros((3, n)))
