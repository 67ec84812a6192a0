"""Matrix Lie group primitives for SO(3), SE(3) and SLAM_n(3).

Group elements are small frozen dataclasses around numpy arrays; the
maps between matrices and vectors are plain functions. The inner product
on matrices is the Frobenius one, ``<A, B> = tr(A^T B)``.

Block layout of a SLAM_n(3) element (``n`` landmarks)::

    [ R  p  eta ]     R: 3x3, p: 3, eta: 3xn
    [ 0  1   0  ]
    [ 0  0   I  ]
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GROUP_TOL = 1e-9
IDENTITY_TOL = 1e-10


_I3 = np.eye(3)
_I3.flags.writeable = False


def hat(y):
    """Skew matrix with ``hat(y) @ z == cross(y, z)``."""
    y = np.asarray(y, dtype=float)
    return np.array([
        [0.0, -y[2], y[1]],
        [y[2], 0.0, -y[0]],
        [-y[1], y[0], 0.0],
    ])


def vee(A):
    """Axial vector of the skew part of a 3x3 matrix."""
    A = np.asarray(A, dtype=float)
    return 0.5 * np.array([A[2, 1] - A[1, 2], A[0, 2] - A[2, 0], A[1, 0] - A[0, 1]])


def skew(A):
    A = np.asarray(A, dtype=float)
    return 0.5 * (A - A.T)


def bar_vee(M):
    """Map a 4x4 matrix ``[[A, y], [c, d]]`` to ``[vee(A); y / 2]``.

    This is the covector map used for potential gradients: for any twist
    matrix ``W`` with vector ``[w; v]`` one has
    ``<bar_upsilon(M), W> = 2 * bar_vee(M) @ [w; v]``.
    """
    M = np.asarray(M, dtype=float)
    return np.concatenate([vee(M[:3, :3]), 0.5 * M[:3, 3]])


def bar_upsilon(M):
    """Orthogonal projection of a 4x4 matrix onto se(3)."""
    M = np.asarray(M, dtype=float)
    out = np.zeros((4, 4))
    out[:3, :3] = skew(M[:3, :3])
    out[:3, 3] = M[:3, 3]
    return out


def upsilon(B):
    """Orthogonal projection of an (n+4)x(n+4) matrix onto slam_n(3).

    Keeps the skew part of the upper-left 3x3 block and the rest of the
    top three rows; the lower n+1 rows are zeroed.
    """
    B = np.asarray(B, dtype=float)
    out = np.zeros_like(B)
    out[:3, :3] = skew(B[:3, :3])
    out[:3, 3:] = B[:3, 3:]
    return out


def twist_hat(xi):
    """4x4 se(3) matrix of a twist vector ``[w; v]``."""
    xi = np.asarray(xi, dtype=float)
    out = np.zeros((4, 4))
    out[:3, :3] = hat(xi[:3])
    out[:3, 3] = xi[3:]
    return out


def twist_vee(W):
    """Twist vector ``[w; v]`` of an se(3) matrix (no halving, unlike bar_vee)."""
    W = np.asarray(W, dtype=float)
    return np.concatenate([vee(W[:3, :3]), W[:3, 3]])


def rodrigues(theta, axis):
    """Rotation by ``theta`` radians about the unit vector ``axis``."""
    axis = np.asarray(axis, dtype=float)
    if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
        raise ValueError(f"rotation axis must be a unit vector, got norm {np.linalg.norm(axis)}")
    K = hat(axis)
    return _I3 + np.sin(theta) * K + (1.0 - np.cos(theta)) * (K @ K)


def so3_exp(w):
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w)
    if theta < 1e-12:
        return _I3 + hat(w)
    return rodrigues(theta, w / theta)


def so3_log(R):
    """Rotation vector of ``R`` (angle in [0, pi])."""
    R = np.asarray(R, dtype=float)
    s_axis = vee(R)
    c = 0.5 * (np.trace(R) - 1.0)
    theta = np.arctan2(np.linalg.norm(s_axis), c)
    if theta < 1e-6:
        # first-order series keeps the log smooth near the identity
        return s_axis * (1.0 + theta**2 / 6.0)
    if np.pi - theta < 1e-3:
        # near pi the skew part vanishes; read a a^T off the symmetric part
        aat = (0.5 * (R + R.T) - c * _I3) / (1.0 - c)
        k = int(np.argmax(np.diag(aat)))
        axis = aat[:, k] / np.sqrt(aat[k, k])
        if axis @ s_axis < 0:
            axis = -axis
        return theta * axis
    return s_axis * theta / np.sin(theta)


def _left_jacobian_inv(w):
    theta = np.linalg.norm(w)
    K = hat(w)
    if theta < 1e-6:
        return _I3 - 0.5 * K + K @ K / 12.0
    half = 0.5 * theta
    coef = (1.0 - half / np.tan(half)) / theta**2
    return _I3 - 0.5 * K + coef * (K @ K)


def _left_jacobian(w):
    theta = np.linalg.norm(w)
    K = hat(w)
    if theta < 1e-6:
        return _I3 + 0.5 * K + K @ K / 6.0
    return (
        np.eye(3)
        + (1.0 - np.cos(theta)) / theta**2 * K
        + (theta - np.sin(theta)) / theta**3 * (K @ K)
    )


def se3_exp(xi):
    """4x4 matrix exponential of ``twist_hat(xi)`` in closed form."""
    xi = np.asarray(xi, dtype=float)
    T = np.eye(4)
    T[:3, :3] = so3_exp(xi[:3])
    T[:3, 3] = _left_jacobian(xi[:3]) @ xi[3:]
    return T


def slam_exp(V):
    """Exponential of a slam_n(3) tangent as a SlamElement (closed form)."""
    Jl = _left_jacobian(V.omega)
    return SlamElement(so3_exp(V.omega), Jl @ V.vel, Jl @ V.xi)


def se3_log(T):
    """Twist vector ``[w; v]`` with ``expm(twist_hat(xi)) == T``."""
    T = np.asarray(T, dtype=float)
    w = so3_log(T[:3, :3])
    v = _left_jacobian_inv(w) @ T[:3, 3]
    return np.concatenate([w, v])


def project_to_so3(R):
    """Nearest rotation matrix in the Frobenius sense (polar factor)."""
    U, _, Vt = np.linalg.svd(np.asarray(R, dtype=float))
    D = np.eye(3)
    D[2, 2] = np.sign(np.linalg.det(U @ Vt))
    return U @ D @ Vt


def is_rotation(R, tol=GROUP_TOL):
    R = np.asarray(R, dtype=float)
    return (
        R.shape == (3, 3)
        and np.abs(R.T @ R - _I3).max() <= tol
        and abs(np.linalg.det(R) - 1.0) <= tol
    )


@dataclass(frozen=True, eq=False)
class RigidPose:
    """Element of SE(3): attitude ``rot`` and position ``pos`` (m)."""

    rot: np.ndarray
    pos: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rot", np.asarray(self.rot, dtype=float).reshape(3, 3))
        object.__setattr__(self, "pos", np.asarray(self.pos, dtype=float).reshape(3))

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, T):
        T = np.asarray(T, dtype=float)
        return cls(T[:3, :3], T[:3, 3])

    def matrix(self):
        T = np.eye(4)
        T[:3, :3] = self.rot
        T[:3, 3] = self.pos
        return T

    def inverse(self):
        return RigidPose(self.rot.T, -self.rot.T @ self.pos)

    def __matmul__(self, other):
        return RigidPose(self.rot @ other.rot, self.rot @ other.pos + self.pos)

    def reprojected(self):
        return RigidPose(project_to_so3(self.rot), self.pos)


def adjoint_se3(X):
    """6x6 adjoint of a pose acting on twist vectors ordered ``[w; v]``.

    ``twist_hat(adjoint_se3(X) @ xi) == X W X^-1`` with ``W = twist_hat(xi)``.
    """
    R, p = X.rot, X.pos
    out = np.zeros((6, 6))
    out[:3, :3] = R
    out[3:, :3] = hat(p) @ R
    out[3:, 3:] = R
    return out


@dataclass(frozen=True, eq=False)
class Twist:
    """Body twist: angular rate ``omega`` (rad/s) and linear velocity ``vel`` (m/s)."""

    omega: np.ndarray
    vel: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "omega", np.asarray(self.omega, dtype=float).reshape(3))
        object.__setattr__(self, "vel", np.asarray(self.vel, dtype=float).reshape(3))

    @classmethod
    def zero(cls):
        return cls(np.zeros(3), np.zeros(3))

    @classmethod
    def from_vector(cls, xi):
        xi = np.asarray(xi, dtype=float)
        return cls(xi[:3], xi[3:])

    def vector(self):
        return np.concatenate([self.omega, self.vel])

    def matrix(self):
        return twist_hat(self.vector())


@dataclass(frozen=True, eq=False)
class SlamElement:
    """Element of SLAM_n(3): pose plus a 3xn block of landmark positions."""

    rot: np.ndarray
    pos: np.ndarray
    landmarks: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rot", np.asarray(self.rot, dtype=float).reshape(3, 3))
        object.__setattr__(self, "pos", np.asarray(self.pos, dtype=float).reshape(3))
        eta = np.asarray(self.landmarks, dtype=float)
        object.__setattr__(self, "landmarks", eta.reshape(3, -1))

    @property
    def n(self):
        return self.landmarks.shape[1]

    @classmethod
    def identity(cls, n):
        return cls(np.eye(3), np.zeros(3), np.zeros((3, n)))

    @classmethod
    def from_matrix(cls, X):
        X = np.asarray(X, dtype=float)
        return cls(X[:3, :3], X[:3, 3], X[:3, 4:])

    def matrix(self):
        X = np.eye(self.n + 4)
        X[:3, :3] = self.rot
        X[:3, 3] = self.pos
        X[:3, 4:] = self.landmarks
        return X

    def pose(self):
        return RigidPose(self.rot, self.pos)

    def inverse(self):
        Rt = self.rot.T
        return SlamElement(Rt, -Rt @ self.pos, -Rt @ self.landmarks)

    def __matmul__(self, other):
        if self.n != other.n:
            raise ValueError(f"landmark count mismatch: {self.n} vs {other.n}")
        return SlamElement(
            self.rot @ other.rot,
            self.rot @ other.pos + self.pos,
            self.rot @ other.landmarks + self.landmarks,
        )

    def reprojected(self):
        return SlamElement(project_to_so3(self.rot), self.pos, self.landmarks)


def slam_compose(a, b):
    return a @ b


def slam_inverse(a):
    return a.inverse()


@dataclass(frozen=True, eq=False)
class SlamTangent:
    """Element of slam_n(3): ``omega`` (rad/s), ``vel`` (m/s), landmark rates ``xi`` (3xn)."""

    omega: np.ndarray
    vel: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "omega", np.asarray(self.omega, dtype=float).reshape(3))
        object.__setattr__(self, "vel", np.asarray(self.vel, dtype=float).reshape(3))
        object.__setattr__(self, "xi", np.asarray(self.xi, dtype=float).reshape(3, -1))

    @property
    def n(self):
        return self.xi.shape[1]

    @classmethod
    def from_matrix(cls, V):
        V = np.asarray(V, dtype=float)
        return cls(vee(V[:3, :3]), V[:3, 3], V[:3, 4:])

    def matrix(self):
        V = np.zeros((self.n + 4, self.n + 4))
        V[:3, :3] = hat(self.omega)
        V[:3, 3] = self.vel
        V[:3, 4:] = self.xi
        return V


def slam_adjoint(X, V):
    """Transport a slam_n(3) matrix: ``upsilon(X V X^-1)``.

    The conjugate already lies in the algebra; the projection only cleans
    round-off.
    """
    Xm = X.matrix()
    return upsilon(Xm @ np.asarray(V, dtype=float) @ X.inverse().matrix())


def frob(A, B):
    """Frobenius inner product ``tr(A^T B)``."""
    return float(np.sum(np.asarray(A) * np.asarray(B)))
