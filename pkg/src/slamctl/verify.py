"""Randomised property suites for the group identities and gradients.

Each check draws random instances, measures the worst deviation and
compares it with a tolerance. Suites are used by the ``verify`` CLI
command and by the acceptance tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .controller import ControllerGains, controller_gradient, controller_potential
from .lie import (
    RigidPose,
    SlamElement,
    SlamTangent,
    project_to_so3,
    se3_exp,
    slam_exp,
    upsilon,
)
from .observer import (
    LandmarkMap,
    ObserverGains,
    ObserverState,
    estimation_error,
    innovation,
    innovation_from_error,
    measure,
    potential,
    potential_from_error,
    reference_vectors,
    weight_matrix,
)

SIZES = (1, 4, 8)


@dataclass(frozen=True)
class CheckResult:
    name: str
    samples: int
    max_dev: float
    tol: float

    @property
    def passed(self):
        return bool(self.max_dev <= self.tol)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.samples} samples, max deviation {self.max_dev:.3e} (tol {self.tol:.0e})"


def random_rotation(rng):
    return project_to_so3(rng.standard_normal((3, 3)))


def random_slam(rng, n, scale=1.0):
    return SlamElement(random_rotation(rng), scale * rng.standard_normal(3), scale * rng.standard_normal((3, n)))


def random_tangent(rng, n):
    return SlamTangent(rng.standard_normal(3), rng.standard_normal(3), rng.standard_normal((3, n)))


def random_pose(rng, scale=1.0):
    return RigidPose(random_rotation(rng), scale * rng.standard_normal(3))


def _per_size(samples):
    return -(-samples // len(SIZES))


def check_upsilon_transpose(rng, samples=1000, lower_rows_zero=False):
    """``upsilon(X B) == upsilon(X^-T B)``; optionally with B's lower n+1 rows zero."""
    worst = 0.0
    per = _per_size(samples)
    for n in SIZES:
        for _ in range(per):
            X = random_slam(rng, n).matrix()
            B = rng.standard_normal((n + 4, n + 4))
            if lower_rows_zero:
                B[3:] = 0.0
            d = upsilon(X @ B) - upsilon(np.linalg.inv(X).T @ B)
            worst = max(worst, np.abs(d).max())
    name = "upsilon transpose, B with zero lower rows" if lower_rows_zero else "upsilon transpose"
    return CheckResult(name, per * len(SIZES), worst, 1e-10)


def check_inner_projection(rng, samples=1000):
    """``<V, B> == <V, upsilon(B)> == <upsilon(B), V>``."""
    worst = 0.0
    per = _per_size(samples)
    for n in SIZES:
        for _ in range(per):
            V = random_tangent(rng, n).matrix()
            B = rng.standard_normal((n + 4, n + 4))
            a = np.trace(V.T @ B)
            b = np.trace(V.T @ upsilon(B))
            c = np.trace(upsilon(B).T @ V)
            worst = max(worst, abs(a - b), abs(b - c))
    return CheckResult("inner product projection", per * len(SIZES), worst, 1e-10)


def check_trace_cyclic(rng, samples=1000):
    worst = 0.0
    for _ in range(samples):
        m, k, l, p = rng.integers(1, 9, size=4)
        A = rng.standard_normal((m, k))
        B = rng.standard_normal((k, l))
        C = rng.standard_normal((l, p))
        D = rng.standard_normal((p, m))
        t0 = np.trace(A @ B @ C @ D)
        worst = max(worst, abs(t0 - np.trace(C @ D @ A @ B)), abs(t0 - np.trace(D @ A @ B @ C)))
    return CheckResult("trace cyclicity", samples, worst, 1e-10)


def check_metric_invariance(rng, samples=1000):
    """``tr(X^T X Y Y^T) == tr(Y Y^T)`` with ``Y = upsilon(B)``."""
    worst = 0.0
    per = _per_size(samples)
    for n in SIZES:
        for _ in range(per):
            X = random_slam(rng, n).matrix()
            Y = upsilon(rng.standard_normal((n + 4, n + 4)))
            worst = max(worst, abs(np.trace(X.T @ X @ Y @ Y.T) - np.trace(Y @ Y.T)))
    return CheckResult("metric invariance", per * len(SIZES), worst, 1e-10)


def trace_form_derivative(A, X, B, C):
    """Matrix ``D`` with ``D[j, i] = d tr(A X B X^T C) / d X[i, j]``."""
    return B @ X.T @ C @ A + B.T @ X.T @ A.T @ C.T


def check_trace_derivative(rng, samples=1000, step=1e-6):
    """Closed-form derivative of ``tr(A X B X^T C)`` against central differences."""
    worst = 0.0
    per = _per_size(samples)
    for n in SIZES:
        m = n + 4
        E = np.eye(m * m).reshape(m * m, m, m)
        for _ in range(per):
            A, X, B, C = (rng.standard_normal((m, m)) for _ in range(4))

            def f(Xs):
                # tr(A X B X^T C) = sum((C A X B) * X)
                return np.sum((C @ A @ Xs @ B) * Xs, axis=(1, 2))

            fd = ((f(X + step * E) - f(X - step * E)) / (2 * step)).reshape(m, m)
            D = trace_form_derivative(A, X, B, C)
            worst = max(worst, np.abs(fd - D.T).max() / max(np.abs(D).max(), 1e-12))
    return CheckResult("trace-form derivative", per * len(SIZES), worst, 1e-4)


def identity_suite(rng=None, samples=1000):
    rng = np.random.default_rng(0) if rng is None else rng
    return [
        check_upsilon_transpose(rng, samples),
        check_upsilon_transpose(rng, samples, lower_rows_zero=True),
        check_inner_projection(rng, samples),
        check_trace_cyclic(rng, samples),
        check_metric_invariance(rng, samples),
        check_trace_derivative(rng, samples),
    ]


def _rel(fd, an):
    return abs(fd - an) / max(abs(fd), abs(an), 1e-8)


def check_observer_gradient(rng, samples=500, step=1e-6):
    """``dU(X exp(tV))/dt == <upsilon((I - X^-1) A), V>`` by central differences."""
    worst = 0.0
    per = _per_size(samples)
    for n in SIZES:
        r = reference_vectors(n)
        for _ in range(per):
            k = rng.uniform(0.1, 2.0, size=n)
            A = (r.T * k) @ r
            X = random_slam(rng, n)
            V = random_tangent(rng, n)
            up = potential_from_error(X @ slam_exp(_scaled(V, step)), A)
            dn = potential_from_error(X @ slam_exp(_scaled(V, -step)), A)
            an = np.sum(upsilon((np.eye(n + 4) - X.inverse().matrix()) @ A) * V.matrix())
            worst = max(worst, _rel((up - dn) / (2 * step), an))
    return CheckResult("observer gradient", per * len(SIZES), worst, 1e-4)


def _scaled(V, s):
    return SlamTangent(s * V.omega, s * V.vel, s * V.xi)


def check_controller_gradient(rng, samples=500, step=1e-6):
    """``dU(X_e exp(tW))/dt == 2 * controller_gradient @ [w; v]``."""
    worst = 0.0
    for _ in range(samples):
        L = rng.standard_normal((4, 4))
        gains = ControllerGains(G_w=L @ L.T + 0.5 * np.eye(4))
        x_e = random_pose(rng)
        h = float(rng.choice(gains.theta_grid))
        xi = rng.standard_normal(6)
        Xm = x_e.matrix()
        up = controller_potential(RigidPose.from_matrix(Xm @ se3_exp(step * xi)), h, gains)
        dn = controller_potential(RigidPose.from_matrix(Xm @ se3_exp(-step * xi)), h, gains)
        an = 2.0 * controller_gradient(x_e, h, gains) @ xi
        worst = max(worst, _rel((up - dn) / (2 * step), an))
    return CheckResult("controller gradient", samples, worst, 1e-4)


def check_measurement_equivalence(rng, samples=500):
    """Measurement-domain potential and innovation equal their error-domain forms."""
    worst = 0.0
    per = _per_size(samples)
    for n in (4, 8, 12):
        for _ in range(per):
            lmap = LandmarkMap(3.0 * rng.standard_normal((3, n)))
            gains = ObserverGains(k_i=rng.uniform(0.1, 2.0, size=n))
            pose = random_pose(rng, 0.5)
            truth = SlamElement(pose.rot, pose.pos, lmap.positions)
            state = ObserverState(random_slam(rng, n, 2.0))
            meas = measure(truth, lmap)
            A = weight_matrix(lmap, gains)
            xt = estimation_error(truth, state)
            d_pot = abs(potential(meas, state, gains) - potential_from_error(xt, A))
            d_inn = np.abs(innovation(meas, state, gains) - innovation_from_error(xt, A)).max()
            worst = max(worst, d_pot / max(1.0, potential_from_error(xt, A)), d_inn)
    return CheckResult("measurement/error equivalence", per * 3, worst, 1e-10)


def gradient_suite(rng=None, samples=500):
    rng = np.random.default_rng(1) if rng is None else rng
    return [
        check_observer_gradient(rng, samples),
        check_controller_gradient(rng, samples),
        check_measurement_equivalence(rng, samples),
    ]


SUITES = {"identities": identity_suite, "gradients": gradient_suite}


def run_suite(name, rng=None):
    if name == "all":
        return [r for suite in SUITES.values() for r in suite(rng)]
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES) + ['all']}")
    return SUITES[name](rng)
