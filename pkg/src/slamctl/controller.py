"""Hybrid gradient feedback law on SE(3) for task-space torque control.

Twist vectors are ordered ``[omega; v]``. ``controller_gradient`` returns
``bar_vee`` of the error-frame gradient, so the twist-coordinate gradient
of the potential (the vector ``g`` with ``dU/dt = g @ y``) is twice it.
The torque law shapes the end-effector acceleration to

    zdot = -2 * controller_gradient(x_e, h) - g_d * y

which makes ``U + |y|^2 / 2`` decrease at rate ``g_d |y|^2``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .arm import JointState, snapshot
from .lie import RigidPose, Twist, adjoint_se3, bar_vee, rodrigues

SINGULAR_COND = 1e6
DAMPING = 1e-3


class SingularityWarning(RuntimeWarning):
    pass


def default_theta_grid():
    return np.array([-np.pi / 2, -np.pi / 4, 0.0, np.pi / 4, np.pi / 2])


@dataclass(frozen=True, eq=False)
class ControllerGains:
    """Weight ``G_w`` (4x4 SPD), damping ``g_d``, switching axis and grid.

    ``delta_c`` defaults to ``0.02 * tr(G_w)``.
    """

    G_w: np.ndarray = field(default_factory=lambda: 200.0 * np.eye(4))
    g_d: float = 5.0
    jmath: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    theta_grid: np.ndarray = field(default_factory=default_theta_grid)
    delta_c: float | None = None

    def __post_init__(self):
        G = np.asarray(self.G_w, dtype=float)
        if G.ndim == 0:
            G = float(G) * np.eye(4)
        object.__setattr__(self, "G_w", G.reshape(4, 4))
        object.__setattr__(self, "jmath", np.asarray(self.jmath, dtype=float).reshape(3))
        grid = np.sort(np.atleast_1d(np.asarray(self.theta_grid, dtype=float)))
        object.__setattr__(self, "theta_grid", grid)
        rots = np.zeros((grid.size, 4, 4))
        rots[:, :3, :3] = [rodrigues(h, self.jmath) for h in grid]
        rots[:, 3, 3] = 1.0
        object.__setattr__(self, "_grid_poses", rots)
        if self.delta_c is None:
            object.__setattr__(self, "delta_c", 0.02 * float(np.trace(self.G_w)))
        if not np.allclose(self.G_w, self.G_w.T, atol=1e-12) or np.linalg.eigvalsh(self.G_w).min() <= 0:
            raise ValueError("G_w must be symmetric positive definite")
        if self.g_d <= 0 or self.delta_c <= 0:
            raise ValueError("g_d and delta_c must be positive")
        if abs(np.linalg.norm(self.jmath) - 1.0) > 1e-9:
            raise ValueError("jmath must be a unit vector")
        if not np.any(grid == 0.0) or np.any(np.abs(grid) > np.pi / 2 + 1e-12):
            raise ValueError("theta_grid must contain 0 and lie in [-pi/2, pi/2]")


@dataclass(frozen=True, eq=False)
class DesiredMotion:
    """Desired pose and constant body twist over one reference segment."""

    x_d: RigidPose
    w_d: Twist
    duration: float = np.inf


@dataclass(frozen=True)
class ControllerState:
    h: float = 0.0


def tracking_error(x_d, x):
    """``X_e = X_d^-1 X``."""
    return x_d.inverse() @ x


def velocity_error(x_e, w, w_d):
    """Twist ``Y = W - Ad_{X_e^-1} W_d`` as a vector ``[omega; v]``."""
    w = w.vector() if isinstance(w, Twist) else np.asarray(w, dtype=float)
    w_d = w_d.vector() if isinstance(w_d, Twist) else np.asarray(w_d, dtype=float)
    return w - adjoint_se3(x_e.inverse()) @ w_d


_I4 = np.eye(4)


def switch_pose(h, gains):
    k = np.flatnonzero(gains.theta_grid == h)
    if k.size:
        return RigidPose(gains._grid_poses[k[0], :3, :3].copy(), np.zeros(3))
    return RigidPose(rodrigues(h, gains.jmath), np.zeros(3))


def controller_potential(x_e, h, gains):
    """``1/2 tr((I - X_h X_e) G_w (I - X_h X_e)^T)``."""
    if abs(h) > np.pi / 2 + 1e-12:
        raise ValueError("switch angle outside [-pi/2, pi/2]")
    E = _I4 - (switch_pose(h, gains) @ x_e).matrix()
    return 0.5 * float(np.sum((E @ gains.G_w) * E))


def controller_gradient(x_e, h, gains):
    """``bar_vee((I - (X_h X_e)^-1) G_w)``.

    Pairing with a body twist ``[omega; v]`` of ``X_e``,
    ``dU/dt = 2 * controller_gradient(...) @ [omega; v]``.
    """
    if abs(h) > np.pi / 2 + 1e-12:
        raise ValueError("switch angle outside [-pi/2, pi/2]")
    P_inv = (switch_pose(h, gains) @ x_e).inverse().matrix()
    return bar_vee((_I4 - P_inv) @ gains.G_w)


def grid_potentials(x_e, gains):
    """Potential at every grid angle, evaluated as one stacked product."""
    E = _I4 - gains._grid_poses @ x_e.matrix()
    return 0.5 * np.sum((E @ gains.G_w) * E, axis=(1, 2))


def switch_margin(x_e, state, gains):
    """Return ``(U(h) - min_h' U(h'), argmin h')``."""
    pots = grid_potentials(x_e, gains)
    k = int(np.argmin(pots))
    here = np.flatnonzero(gains.theta_grid == state.h)
    current = pots[here[0]] if here.size else controller_potential(x_e, state.h, gains)
    return current - pots[k], float(gains.theta_grid[k])


def switch_update(x_e, state, gains):
    margin, h_star = switch_margin(x_e, state, gains)
    if margin >= gains.delta_c:
        return ControllerState(h_star)
    return state


def task_acceleration(x_e, y, h, gains):
    """Commanded ``u`` with ``zdot = -u``: ``2 grad + g_d y``."""
    return 2.0 * controller_gradient(x_e, h, gains) + gains.g_d * np.asarray(y, dtype=float)


def solve_jacobian(J, b):
    """``J^-1 b`` by LU, or damped least squares when ``cond(J) > 1e6``.

    Returns ``(x, singular)``.
    """
    if np.linalg.cond(J) <= SINGULAR_COND:
        return np.linalg.solve(J, b), False
    JJt = J @ J.T + DAMPING**2 * np.eye(J.shape[0])
    return J.T @ np.linalg.solve(JJt, b), True


def torque_from_snapshot(snap, u):
    """``tau = N - M J^-1 (Jdot qdot + u)``; returns ``(tau, singular)``."""
    x, singular = solve_jacobian(snap.J, snap.jdot_qdot + u)
    return snap.bias - snap.M @ x, singular


def control_torque(arm, joints, x_e, y, h, gains):
    """Hybrid task-space torque. Warns with ``SingularityWarning`` near singularities."""
    if not (np.all(np.isfinite(x_e.matrix())) and np.all(np.isfinite(y))):
        raise ValueError("non-finite controller input")
    if not isinstance(joints, JointState):
        joints = JointState(*joints)
    tau, singular = torque_from_snapshot(snapshot(arm, joints), task_acceleration(x_e, y, h, gains))
    if singular:
        warnings.warn("Jacobian near singular; using damped least squares", SingularityWarning)
    return tau
