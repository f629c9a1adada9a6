import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import commuting_pair
from mofrac.errors import EigenvalueOutOfDomain, NotCommuting, PoleAtEigenvalue
from mofrac.gammafn import (
    mat_beta,
    mat_beta_integral_oracle,
    mat_gamma,
    mat_gamma_integral_oracle,
    mat_gamma_inv,
    scalar_gamma,
    scalar_rgamma,
)
from mofrac.matcore import max_norm

SQRT_PI = math.sqrt(math.pi)


@pytest.mark.parametrize(
    "z",
    [0.5, 1.0, 3.7, 12.25, 29.5, -0.5, -3.3, -9.7, 0.3 + 2j, 2 - 5j, -4.5 + 0.1j],
)
def test_scalar_gamma_vs_mpmath(z):
    ref = complex(mpmath.gamma(mpmath.mpc(z)))
    assert abs(scalar_gamma(z) - ref) <= 1e-12 * abs(ref)
    assert abs(scalar_rgamma(z) - 1 / ref) <= 1e-12 * abs(1 / ref)


def test_identity():
    np.testing.assert_allclose(mat_gamma(np.eye(2)), np.eye(2), atol=1e-14)
    np.testing.assert_allclose(mat_gamma_inv(np.eye(2)), np.eye(2), atol=1e-14)


def test_half_integer_diagonal():
    np.testing.assert_allclose(mat_gamma(np.diag([0.5, 1.5])), np.diag([SQRT_PI, SQRT_PI / 2]), rtol=1e-13)


@pytest.mark.parametrize("pole", [0.0, -1.0, -3.0, 1e-11])
def test_pole(pole):
    with pytest.raises(PoleAtEigenvalue):
        mat_gamma(np.diag([pole, 1.0]))


def test_inverse_at_pole_is_zero():
    assert mat_gamma_inv(np.zeros((1, 1)))[0, 0] == 0


def test_inverse_times_gamma():
    A = np.diag([0.7, 1.3])
    np.testing.assert_allclose(mat_gamma_inv(A) @ mat_gamma(A), np.eye(2), atol=1e-14)


@pytest.mark.parametrize(
    "A, expected, tol",
    [
        ([[1.0]], [[1.0]], 1e-8),
        ([[0.5]], [[SQRT_PI]], 1e-6),
        (np.diag([1.0, 2.0]), np.eye(2), 1e-6),
    ],
)
def test_gamma_oracle_examples(A, expected, tol):
    np.testing.assert_allclose(mat_gamma_integral_oracle(A, 40.0), expected, atol=tol)


def test_gamma_oracle_domain():
    with pytest.raises(EigenvalueOutOfDomain):
        mat_gamma_integral_oracle([[-0.5]])
    with pytest.raises(ValueError):
        mat_gamma_integral_oracle([[1.0]], upper_cut=10)


@pytest.mark.parametrize(
    "M, N, expected",
    [
        (np.eye(2), np.eye(2), np.eye(2)),
        (0.5 * np.eye(2), 0.5 * np.eye(2), math.pi * np.eye(2)),
        ([[2.0]], [[3.0]], [[1 / 12]]),
    ],
)
def test_beta_examples(M, N, expected):
    np.testing.assert_allclose(mat_beta(M, N), expected, rtol=1e-13)


@pytest.mark.parametrize(
    "M, N, expected, tol",
    [
        (np.eye(2), np.eye(2), np.eye(2), 1e-10),
        ([[0.5]], [[0.5]], [[math.pi]], 1e-6),
    ],
)
def test_beta_oracle_examples(M, N, expected, tol):
    np.testing.assert_allclose(mat_beta_integral_oracle(M, N), expected, atol=tol)


def test_beta_oracle_matches_closed_form_on_diagonal():
    M, N = np.diag([0.7, 1.1]), np.diag([1.1, 0.7])
    assert max_norm(mat_beta(M, N) - mat_beta_integral_oracle(M, N)) <= 1e-6


def test_beta_preconditions():
    with pytest.raises(NotCommuting):
        mat_beta([[1, 1], [0, 2]], [[1, 0], [1, 2]])
    with pytest.raises(EigenvalueOutOfDomain):
        mat_beta([[-0.5]], [[1.0]])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_functional_equation(seed):
    from mofrac.verify import random_order

    A = random_order(np.random.default_rng(seed), 3, 0.3, 5.0)
    lhs = mat_gamma(A + np.eye(3))
    assert max_norm(lhs - A @ mat_gamma(A)) <= 1e-8 * max_norm(lhs)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_beta_symmetry_and_reflection(seed):
    M, N = commuting_pair(seed, 2, 0.3, 3.0)
    assert max_norm(mat_beta(M, N) - mat_beta(N, M)) <= 1e-10 * max_norm(mat_beta(M, N))
    W, _ = commuting_pair(seed, 2, 0.1, 0.9)
    I = np.eye(2)
    ref = mat_gamma(W) @ mat_gamma(I - W)
    assert max_norm(mat_beta(W, I - W) - ref) <= 1e-8 * max_norm(ref)
