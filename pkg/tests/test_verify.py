import numpy as np
import pytest

from slamctl import verify
from slamctl.lie import SlamElement, upsilon


def _by_name(results):
    return {r.name: r for r in results}


def test_identity_suite_outcomes():
    res = _by_name(verify.identity_suite(np.random.default_rng(0), samples=150))
    # X B and X^-T B agree in the projected block only when B's lower rows vanish
    assert not res["upsilon transpose"].passed
    assert res["upsilon transpose"].max_dev > 1e-3
    for name in ("upsilon transpose, B with zero lower rows", "inner product projection",
                 "trace cyclicity", "metric invariance", "trace-form derivative"):
        assert res[name].passed, res[name].line()


def test_upsilon_transpose_counterexample():
    # one landmark, X a pure translation; B with a single nonzero lower-row entry
    X = SlamElement(np.eye(3), np.array([1.0, 0.0, 0.0]), np.zeros((3, 1))).matrix()
    B = np.zeros((5, 5))
    B[3, 3] = 1.0
    lhs = upsilon(X @ B)
    rhs = upsilon(np.linalg.inv(X).T @ B)
    # X B picks up p in the translation column, X^-T B does not
    assert np.allclose(lhs[:3, 3], [1.0, 0.0, 0.0]) and np.allclose(rhs, 0.0)
    B[3, 3] = 0.0
    B[0, 1] = 1.0
    assert np.allclose(upsilon(X @ B), upsilon(np.linalg.inv(X).T @ B))


def test_gradient_suite_passes():
    for r in verify.gradient_suite(np.random.default_rng(0), samples=60):
        assert r.passed, r.line()


def test_trace_form_derivative_closed_form():
    # for m = 1 the form is a*b*c*x^2, derivative 2abcx
    a, x, b, c = (np.array([[v]]) for v in (2.0, 3.0, 5.0, 7.0))
    assert verify.trace_form_derivative(a, x, b, c)[0, 0] == pytest.approx(2 * 2 * 3 * 5 * 7)


def test_check_result_line():
    r = verify.CheckResult("demo", 10, 2e-3, 1e-3)
    assert not r.passed
    assert r.line().startswith("FAIL demo: 10 samples")
    assert verify.CheckResult("demo", 10, 1e-3, 1e-3).passed


def test_run_suite_dispatch():
    with pytest.raises(KeyError):
        verify.run_suite("nope")
    assert len(verify.run_suite("gradients")) == 3


def test_suites_deterministic():
    a = [r.max_dev for r in verify.gradient_suite(np.random.default_rng(5), samples=30)]
    b = [r.max_dev for r in verify.gradient_suite(np.random.default_rng(5), samples=30)]
    assert a == b
