import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from conftest import commuting_pair
from mofrac.errors import DimensionMismatch, EigenvalueOutOfDomain, NotCommuting, StencilOutOfDomain
from mofrac.exprfn import MatrixFunction
from mofrac.fracops import (
    DEFAULT_CONFIG,
    OperatorConfig,
    composition_defect,
    d_m,
    d_m_many,
    j_m,
    j_m_many,
    verify_inverse,
    verify_mixed,
    verify_semigroup,
)
from mofrac.matcore import max_norm

XS = np.linspace(0.25, 2.0, 8)
TWO_OVER_SQRT_PI = 2 / math.sqrt(math.pi)


def F(*exprs):
    return MatrixFunction.parse(list(exprs))


def rl(alpha, p, x):
    """Scalar Riemann-Liouville integral (derivative for negative alpha) of t^p."""
    return special.gamma(p + 1) / special.gamma(p + 1 + alpha) * x ** (p + alpha)


@pytest.mark.parametrize(
    "M, fn, x, expected",
    [
        (np.eye(1), F("1"), 1.5, [1.5]),
        (0.5 * np.eye(2), F("1", "1"), 1.0, [TWO_OVER_SQRT_PI] * 2),
        (np.diag([1.0, 2.0]), F("1", "1"), 1.0, [1.0, 0.5]),
    ],
)
def test_integral_examples(M, fn, x, expected):
    np.testing.assert_allclose(j_m(M, fn, x).value[:, 0], expected, rtol=1e-10)


@pytest.mark.parametrize(
    "fn, expected",
    [(F("t", "t"), TWO_OVER_SQRT_PI), (F("1", "1"), 1 / math.sqrt(math.pi))],
)
def test_derivative_examples(fn, expected):
    res = d_m(0.5 * np.eye(2), fn, 1.0)
    np.testing.assert_allclose(res.value[:, 0], expected, rtol=1e-8)
    assert res.err_estimate < 1e-6


@pytest.mark.parametrize("lam", [1.2, 0.0, -0.3, 1.0])
def test_derivative_window(lam):
    with pytest.raises(EigenvalueOutOfDomain):
        d_m([[lam]], F("1"), 1.0)


def test_mixed_window_rejected():
    with pytest.raises(EigenvalueOutOfDomain):
        d_m(np.diag([0.5, 1.5]), F("1", "1"), 1.0)


def test_integral_domain_and_shapes():
    with pytest.raises(EigenvalueOutOfDomain):
        j_m([[-0.1]], F("1"), 1.0)
    with pytest.raises(DimensionMismatch):
        j_m(np.eye(2), F("1"), 1.0)


def test_stencil_out_of_domain():
    with pytest.raises(StencilOutOfDomain):
        d_m([[0.5]], F("1"), 1e-4)


def test_config_validation():
    with pytest.raises(ValueError):
        OperatorConfig(fd_step_scale=0.2)
    with pytest.raises(ValueError):
        OperatorConfig(fd_order=3)


@pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75])
@pytest.mark.parametrize("p", [0, 1, 2])
def test_scalar_reduction(alpha, p):
    xs = np.array([1e-3, 0.1, 0.5, 1.0, 1.5, 2.0])
    vals = j_m_many(alpha * np.eye(2), F(f"t^{p}", f"t^{p}"), xs)[0][:, :, 0]
    exact = rl(alpha, p, xs)[:, None]
    assert np.max(np.abs(vals - exact) / exact) <= 1e-6


@pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75])
@pytest.mark.parametrize("p", [0, 1, 2])
def test_power_rule(alpha, p):
    vals = d_m_many(alpha * np.eye(1), F(f"t^{p}"), XS)[0][:, 0, 0]
    exact = rl(-alpha, p, XS)
    assert np.max(np.abs(vals - exact) / np.abs(exact)) <= 1e-4


def test_fd_order_two_is_coarser():
    cfg = OperatorConfig(fd_order=2, fd_step_scale=0.05)
    v2 = d_m([[0.5]], F("t^2"), 1.0, cfg).value[0, 0]
    v4 = d_m([[0.5]], F("t^2"), 1.0, OperatorConfig(fd_step_scale=0.05)).value[0, 0]
    exact = rl(-0.5, 2, 1.0)
    assert abs(v4 - exact) < abs(v2 - exact)


def test_diagonal_decoupling():
    d = [0.3, 0.65, 1.4]
    fn = F("cos(t)", "1+t", "t^2")
    full = j_m_many(np.diag(d), fn, XS)[0]
    for i, (lam, src) in enumerate(zip(d, ["cos(t)", "1+t", "t^2"])):
        single = j_m_many([[lam]], F(src), XS)[0][:, 0, 0]
        assert max_norm(full[:, i, 0] - single) <= 1e-10


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_similarity_equivariance(seed):
    rng = np.random.default_rng(seed)
    from mofrac.verify import random_order, random_similarity

    M = random_order(rng, 2, 0.2, 0.8)
    S = random_similarity(rng, 2)
    Si = np.linalg.inv(S)
    fn = F("1+t", "sin(t)")

    def SF(t):
        return S @ fn(t)

    for op in (j_m_many, d_m_many):
        a = op(S @ M @ Si, SF, XS)[0]
        b = S @ op(M, fn, XS)[0]
        assert max_norm(a - b) <= 1e-6 * max_norm(b)


@settings(max_examples=15, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2))
def test_linearity(a, b):
    M = [[0.4, 0.1], [0.0, 0.7]]
    f, g = F("t", "cos(t)"), F("exp(t)", "1")

    def h(t):
        return a * f(t) + b * g(t)

    for op in (j_m_many, d_m_many):
        lhs = op(M, h, XS)[0]
        rhs = a * op(M, f, XS)[0] + b * op(M, g, XS)[0]
        assert max_norm(lhs - rhs) <= 1e-8 * (1 + max_norm(rhs))


def test_semigroup_examples():
    assert verify_semigroup([[0.5]], [[0.5]], F("1"), XS)["max_residual"] <= 1e-5
    assert verify_semigroup(np.eye(1), np.eye(1), F("t"), XS)["max_residual"] <= 1e-8
    M, N = commuting_pair(3, 2, 0.2, 1.5)
    rep = verify_semigroup(M, N, F("t", "t^2"), XS)
    assert rep["max_residual"] <= 1e-5
    assert len(rep["residuals"]) == len(XS)


def test_semigroup_needs_commuting():
    with pytest.raises(NotCommuting):
        verify_semigroup([[0.5, 1], [0, 0.6]], [[0.5, 0], [1, 0.6]], F("1", "1"), XS)


def test_inverse_examples():
    assert verify_inverse(0.5 * np.eye(2), F("t", "t"), XS)["max_residual"] <= 1e-4
    assert verify_inverse([[0.3]], F("1"), XS)["max_residual"] <= 1e-4
    assert verify_inverse([[0.3]], F("0"), XS)["max_residual"] <= DEFAULT_CONFIG.quad.abs_tol


def test_mixed_examples():
    rep = verify_mixed([[0.5]], [[1.0]], F("1"), XS)
    assert rep["max_residual"] <= 1e-4
    assert verify_mixed(0.5 * np.eye(2), 0.5 * np.eye(2), F("1", "t"), XS)["max_residual"] <= 1e-4
    M, D = commuting_pair(7, 2, 0.2, 0.8, 0.1, 0.9)
    assert verify_mixed(M, M + D, F("1", "t"), XS)["max_residual"] <= 1e-4


def test_mixed_requires_positive_difference():
    with pytest.raises(EigenvalueOutOfDomain):
        verify_mixed([[0.6]], [[0.4]], F("1"), XS)


def test_derivative_composition_witness():
    # D^0.3 D^0.4 t^-0.6 differs from D^0.7 t^-0.6 by Gamma(0.4)/Gamma(-0.3) x^-1.3
    rep = composition_defect([[0.3]], [[0.4]], F("t^(-0.6)"), [1.0])
    assert rep["max_residual"] > 10 * rep["error_budget"]
    exact = special.gamma(0.4) / special.gamma(-0.3)
    assert rep["max_residual"] == pytest.approx(abs(exact), rel=1e-3)
