import math

import numpy as np
import pytest
from scipy import special

from conftest import commuting_pair
from mofrac.errors import (
    EigenvalueOutOfDomain,
    InputError,
    NotCommuting,
    PreconditionViolated,
    SingularCoefficient,
)
from mofrac.exprfn import MatrixFunction
from mofrac.matcore import max_norm
from mofrac.solvers import (
    TOLERANCES,
    parse_grid,
    solve_eigen,
    solve_homogeneous,
    solve_iterated,
    solve_iterated_eigen,
    solve_n_term_homogeneous,
    solve_n_term_nh,
    solve_pde_separable,
    solve_request,
    solve_single,
    solve_system,
    solve_two_term_nh,
)
from mofrac.verify import random_similarity
from oracles import eigen_formula, two_term_formula

XS = np.linspace(0.25, 2.0, 8)
GRID33 = np.linspace(2 / 33, 2.0, 33)
I1 = np.eye(1)


def fn(*exprs):
    return MatrixFunction.parse(list(exprs))


# --------------------------------------------------------------------------- single


def test_single_examples():
    sol = solve_single([[0.5]], fn("1"), [1.0])
    assert sol.values[0, 0, 0] == pytest.approx(2 / math.sqrt(math.pi), rel=1e-10)
    sol = solve_single(0.5 * np.eye(2), fn("t", "t"), XS)
    np.testing.assert_allclose(sol.values[:, :, 0], (XS**1.5 / special.gamma(2.5))[:, None] * [1, 1], rtol=1e-10)


def test_single_residual_on_33_points():
    sol = solve_single([[0.5]], fn("1"), GRID33)
    assert sol.meta["residual_status"] == "computed"
    assert np.all(np.isnan(sol.residuals[GRID33 < 0.25]))
    assert sol.max_residual <= TOLERANCES["single"]
    assert sol.passed


def test_single_rejects_zero_forcing():
    with pytest.raises(PreconditionViolated):
        solve_single([[0.5]], fn("0"), XS)


# --------------------------------------------------------------------------- forced


@pytest.mark.parametrize("x", [0.25, 0.5, 1.0, 2.0])
def test_two_term_reproduces_formula(x):
    # the closed form evaluated by an independent scalar quadrature prototype
    sol = solve_two_term_nh(I1, I1, [[0.9]], [[0.4]], fn("t^2"), None, [x])
    ref = two_term_formula(1.0, 1.0, 0.9, 0.4, lambda s: s * s, lambda s: 2 * s, 0.0, x)
    assert sol.values[0, 0, 0].real == pytest.approx(ref, rel=1e-8)


def test_two_term_with_constant_and_coefficients():
    sol = solve_two_term_nh([[2.0]], [[0.5]], [[0.8]], [[0.3]], fn("sin(t)"), [[0.3]], [0.7, 1.4])
    for x, v in zip([0.7, 1.4], sol.values[:, 0, 0]):
        ref = two_term_formula(2.0, 0.5, 0.8, 0.3, math.sin, math.cos, 0.3, x)
        assert v.real == pytest.approx(ref, rel=1e-8)


def test_forced_zero_propagation():
    for sol in (
        solve_two_term_nh(I1, I1, [[0.9]], [[0.4]], fn("0"), None, XS),
        solve_n_term_nh([I1] * 3, [[[0.9]], [[0.6]], [[0.3]]], fn("0"), None, XS),
    ):
        assert np.all(sol.values == 0)
        assert np.all(sol.residuals == 0)


def test_n_term_two_agrees_with_two_term():
    M, N = commuting_pair(11, 2, 0.5, 0.9, 0.1, 0.3)
    C = [np.eye(2) + 0.2 * np.ones((2, 2)), np.diag([0.5, 1.5])]
    phi = fn("t^2", "t")
    a = solve_two_term_nh(C[0], C[1], M, N, phi, None, XS)
    b = solve_n_term_nh(C, [M, N], phi, None, XS)
    assert max_norm(a.values - b.values) <= 1e-10


def test_n_term_one_is_single_integral():
    sol = solve_n_term_nh([[[2.0]]], [[[0.5]]], fn("t"), None, XS)
    ref = solve_single([[0.5]], fn("t"), XS)
    assert max_norm(sol.values - ref.values / 2) <= 1e-10


def test_forced_preconditions():
    with pytest.raises(PreconditionViolated):
        solve_two_term_nh(I1, I1, [[0.9]], [[0.4]], fn("1+t"), None, XS)
    with pytest.raises(SingularCoefficient):
        solve_two_term_nh([[0.0]], I1, [[0.9]], [[0.4]], fn("t"), None, XS)
    with pytest.raises(EigenvalueOutOfDomain):
        solve_two_term_nh(I1, I1, [[0.4]], [[0.9]], fn("t"), None, XS)
    with pytest.raises(NotCommuting):
        solve_two_term_nh(np.eye(2), np.eye(2), [[0.8, 0.1], [0, 0.9]], [[0.3, 0], [0.1, 0.2]], fn("t", "t"), None, XS)


# --------------------------------------------------------------------------- unforced


@pytest.mark.parametrize("x", [0.5, 1.0, 2.0])
def test_eigen_reproduces_formula(x):
    sol = solve_eigen([I1], [[[0.5]]], [[1.0]], [x])
    assert sol.values[0, 0, 0].real == pytest.approx(eigen_formula(1.0, 0.5, 1.0, x), rel=1e-8)


def test_eigen_records_sign_convention():
    assert "sign_convention" in solve_eigen([I1], [[[0.5]]], None, XS).meta


@pytest.mark.parametrize(
    "call",
    [
        lambda K: solve_eigen([I1], [[[0.5]]], K, XS),
        lambda K: solve_homogeneous(I1, I1, [[0.9]], [[0.4]], K, XS),
        lambda K: solve_iterated_eigen([[[0.4]], [[0.3]]], K, XS),
    ],
)
def test_zero_constant_gives_zero(call):
    sol = call([[0.0]])
    assert np.all(sol.values == 0)


def test_homogeneous_n_term_agrees_with_two_term():
    M, N = commuting_pair(5, 2, 0.5, 0.9, 0.1, 0.3)
    a = solve_homogeneous(np.eye(2), 2 * np.eye(2), M, N, None, XS)
    b = solve_n_term_homogeneous([np.eye(2), 2 * np.eye(2)], [M, N], None, XS)
    assert max_norm(a.values - b.values) <= 1e-10


def test_homogeneous_needs_two_terms():
    with pytest.raises(InputError):
        solve_n_term_homogeneous([I1], [[[0.5]]], None, XS)


def _similar(seed):
    rng = np.random.default_rng(seed)
    S = random_similarity(rng, 2)
    return S, np.linalg.inv(S)


def test_eigen_similarity_equivariance():
    M, N = commuting_pair(2, 2, 0.5, 0.9, 0.1, 0.3)
    C = [np.eye(2), 0.5 * np.eye(2) + 0.1 * M]
    K = np.array([[1.0, 0.2], [-0.3, 0.8]])
    S, Si = _similar(9)
    a = solve_eigen(C, [M, N], K, XS).values
    b = solve_eigen([S @ c @ Si for c in C], [S @ M @ Si, S @ N @ Si], S @ K, XS).values
    assert max_norm(b - S @ a) <= 1e-5 * max_norm(S @ a)


def test_iterated_eigen_similarity_equivariance():
    M, N = commuting_pair(4, 2, 0.2, 0.5)
    K = np.eye(2)
    S, Si = _similar(3)
    a = solve_iterated_eigen([M, N], K, XS).values
    b = solve_iterated_eigen([S @ M @ Si, S @ N @ Si], S @ K, XS).values
    assert max_norm(b - S @ a) <= 1e-5 * max_norm(S @ a)


def test_iterated_eigen_reports_finite_residuals():
    sol = solve_iterated_eigen([[[0.4]], [[0.3]]], [[1.0]], XS)
    assert np.all(np.isfinite(sol.residuals))
    assert np.all(np.isfinite(sol.values))


# --------------------------------------------------------------------------- iterated


@pytest.mark.parametrize(
    "orders, phi, exact",
    [
        ([I1, I1], "1", lambda x: x**2 / 2),
        ([[[0.5]], [[0.5]]], "1", lambda x: x),
        ([[[0.5]], [[0.7]], [[0.8]]], "t", lambda x: x**3 / 6),
    ],
)
def test_iterated_examples(orders, phi, exact):
    sol = solve_iterated(orders, fn(phi), XS)
    np.testing.assert_allclose(sol.values[:, 0, 0].real, exact(XS), rtol=1e-4)
    assert sol.max_residual <= 1e-4


def test_iterated_matrix_cross_check():
    M, N = commuting_pair(8, 2, 0.3, 0.9)
    sol = solve_iterated([M, N, 0.5 * np.eye(2)], fn("1", "t"), XS)
    assert sol.max_residual <= 1e-3


# --------------------------------------------------------------------------- PDE


def test_pde_symmetry():
    M = [[0.5, 0.1], [0.0, 0.6]]
    sol = solve_pde_separable(M, M, np.eye(2), None, None, XS, XS)
    F = sol.values
    assert max_norm(F - np.swapaxes(F, 0, 1)) <= 1e-10


def test_pde_kappa_zero():
    sol = solve_pde_separable([[0.5]], [[0.5]], [[0.0]], None, None, XS, XS)
    assert np.all(sol.values == 0)


def test_pde_needs_commuting_kappa():
    with pytest.raises(NotCommuting):
        solve_pde_separable(np.diag([0.5, 0.6]), np.diag([0.5, 0.6]), [[0, 1], [0, 0]], None, None, XS, XS)


def test_pde_shapes():
    sol = solve_pde_separable([[0.5]], [[0.4]], [[1.0]], None, None, XS, XS[:5])
    assert sol.values.shape == (8, 5, 1, 1)
    assert sol.residuals.shape == (8, 5)


# --------------------------------------------------------------------------- system


def test_system_g_is_minus_r():
    sol = solve_system([[0.5]], [[0.5]], None, XS)
    assert np.array_equal(sol.G.values, -sol.R)
    F, G = sol
    assert F is sol.F and G is sol.G


def test_system_zero_constant():
    sol = solve_system([[0.5]], [[0.5]], [[0.0]], XS)
    assert np.all(sol.F.values == 0) and np.all(sol.G.values == 0)


def test_system_first_equation_residual():
    sol = solve_system([[0.5]], [[0.5]], None, XS)
    assert sol.F.max_residual <= TOLERANCES["system"]


# --------------------------------------------------------------------------- requests


@pytest.mark.parametrize(
    "spec, expected",
    [
        ({"start": 0.5, "stop": 1.0, "count": 3}, [0.5, 0.75, 1.0]),
        ("0.5:1:3", [0.5, 0.75, 1.0]),
        ([0.1, 0.2], [0.1, 0.2]),
    ],
)
def test_parse_grid(spec, expected):
    np.testing.assert_allclose(parse_grid(spec), expected)


@pytest.mark.parametrize("spec", [[0.2, 0.1], [0.0, 1.0], "1:2", {"start": 1}, []])
def test_parse_grid_rejects(spec):
    with pytest.raises(InputError):
        parse_grid(spec)


def test_request_dispatch():
    req = {
        "solver": "solve_single",
        "orders": [{"n_rows": 1, "n_cols": 1, "data": [[0.5, 0.0]]}],
        "forcing": ["1"],
        "grid": [1.0],
    }
    sol = solve_request(req)
    assert sol.values[0, 0, 0] == pytest.approx(2 / math.sqrt(math.pi), rel=1e-10)
    req2 = {"solver": "two_term_nh", "orders": [0.9, 0.4], "forcing": "t^2", "grid": [1.0]}
    assert solve_request(req2).values[0, 0, 0].real == pytest.approx(0.2933234034523741, rel=1e-8)


@pytest.mark.parametrize(
    "req",
    [
        [],
        {"solver": "nope", "orders": [0.5], "grid": [1.0]},
        {"solver": "single", "orders": [0.5], "grid": [1.0]},
        {"solver": "single", "orders": [0.5], "forcing": "1"},
        {"solver": "system", "orders": [0.5], "grid": [1.0]},
        {"solver": "pde_separable", "orders": [0.5, 0.5], "grid": [1.0]},
    ],
)
def test_request_rejects(req):
    with pytest.raises(InputError):
        solve_request(req)


def test_solution_json_round_trip():
    import json

    sol = solve_single([[0.5]], fn("1"), GRID33)
    doc = json.loads(json.dumps(sol.to_json()))
    assert doc["residuals"][0] is None
    assert doc["passed"] is True
