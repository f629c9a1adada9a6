"""Seeded randomized verification suites.

Each suite draws random diagonalizable matrices (or commuting pairs built as
polynomials in one seed matrix), runs the corresponding checker and compares
the residual with a fixed threshold.  Reports contain no timings, so the
same seed always yields the same report.
"""
from __future__ import annotations

import numpy as np
from scipy import special

from .errors import MoFracError
from .exprfn import MatrixFunction
from .fracops import OperatorConfig, DEFAULT_CONFIG, d_m_many, j_m_many, verify_inverse, verify_mixed, verify_semigroup
from .gammafn import mat_beta, mat_beta_integral_oracle, mat_gamma, mat_gamma_integral_oracle
from .matcore import eig_decompose, max_norm
from .solvers import solve_eigen

SUITES = ("gamma", "beta", "semigroup", "inverse", "mixed", "reduction", "equivariance")
DEFAULT_TRIALS = {
    "gamma": 10,
    "beta": 10,
    "semigroup": 15,
    "inverse": 5,
    "mixed": 5,
    "reduction": 9,
    "equivariance": 3,
}
THRESHOLDS = {
    "gamma": 1e-6,
    "beta": 1e-6,
    "semigroup": 1e-5,
    "inverse": 1e-4,
    "mixed": 1e-4,
    "reduction": 1e-6,
    "equivariance": 1e-5,
}
DERIVATIVE_REDUCTION_TOL = 1e-4
MAX_COND = 1e4
XS = np.linspace(0.25, 2.0, 8)


# --------------------------------------------------------------------------- random matrices


def _fit_window(A, lo, hi, rng):
    """Scale and shift ``A`` so the real parts of its eigenvalues lie in ``[lo, hi]``."""
    n = A.shape[0]
    re = np.linalg.eigvals(A).real
    spread = re.max() - re.min()
    width = hi - lo
    s = min(1.0, 0.8 * width / spread) if spread > 0 else 1.0
    slack = width - s * spread
    shift = lo - s * re.min() + rng.uniform(0.1 * slack, 0.9 * slack)
    return s * A + shift * np.eye(n)


def random_order(rng, n, lo, hi):
    """Diagonalizable ``n x n`` matrix with eigenvalue real parts in ``[lo, hi]``."""
    while True:
        A = _fit_window(rng.uniform(-1.0, 1.0, (n, n)), lo, hi, rng)
        try:
            if eig_decompose(A).cond_estimate <= MAX_COND:
                return A
        except MoFracError:
            pass


def commuting_partner(rng, S, lo, hi):
    """Quadratic polynomial in ``S`` refitted to the window ``[lo, hi]``."""
    n = S.shape[0]
    c = rng.uniform(-1.0, 1.0, 3)
    P = c[0] * np.eye(n) + c[1] * S + c[2] * (S @ S)
    return _fit_window(P, lo, hi, rng)


def random_similarity(rng, n):
    while True:
        S = np.eye(n) + 0.5 * rng.uniform(-1.0, 1.0, (n, n))
        if np.linalg.cond(S) <= 10.0:
            return S


def _column(n, exprs):
    return MatrixFunction.parse([exprs[k % len(exprs)] for k in range(n)])


def _rel(a, b) -> float:
    return max_norm(a - b) / max(max_norm(b), 1e-300)


# --------------------------------------------------------------------------- suites


def _gamma_trial(rng, k, cfg):
    n = 2 + k % 2
    A = random_order(rng, n, 0.3, 3.0)
    return {"n": n, "residual": _rel(mat_gamma(A), mat_gamma_integral_oracle(A, tol=1e-9))}


def _beta_trial(rng, k, cfg):
    n = 2 + k % 2
    M = random_order(rng, n, 0.3, 3.0)
    N = commuting_partner(rng, M, 0.3, 3.0)
    beta = _rel(mat_beta(M, N), mat_beta_integral_oracle(M, N, tol=1e-9))
    ident = _rel(mat_gamma(M + np.eye(n)), M @ mat_gamma(M))
    return {"n": n, "residual": beta, "functional_equation": ident}


def _semigroup_trial(rng, k, cfg):
    n = 1 if k % 3 == 2 else 2
    M = random_order(rng, n, 0.2, 1.5)
    N = commuting_partner(rng, M, 0.2, 1.5)
    rep = verify_semigroup(M, N, _column(n, ["t", "t^2"]), XS, cfg)
    return {"n": n, "residual": rep["max_residual"]}


def _inverse_trial(rng, k, cfg):
    n = 1 + k % 2
    M = random_order(rng, n, 0.2, 0.8)
    rep = verify_inverse(M, _column(n, ["t", "1+t^2"]), XS, cfg)
    return {"n": n, "residual": rep["max_residual"]}


def _mixed_trial(rng, k, cfg):
    n = 1 + k % 2
    M = random_order(rng, n, 0.2, 0.8)
    D = commuting_partner(rng, M, 0.1, 0.9)
    rep = verify_mixed(M, M + D, _column(n, ["1", "t"]), XS, cfg)
    return {"n": n, "residual": rep["max_residual"]}


def _scalar_rl(alpha, p, x):
    """``J^alpha t^p`` (``D^-alpha`` for negative ``alpha``) in closed form."""
    return special.gamma(p + 1) / special.gamma(p + 1 + alpha) * x ** (p + alpha)


def _reduction_trial(rng, k, cfg):
    alpha = (0.25, 0.5, 0.75)[k % 3]
    p = (k // 3) % 3
    n = int(rng.integers(1, 4))
    M = alpha * np.eye(n)
    F = MatrixFunction.parse([f"t^{p}"] * n)
    xs = np.linspace(0.25, 2.0, 8)
    J = j_m_many(M, F, xs, cfg)[0][:, :, 0].real
    exact = _scalar_rl(alpha, p, xs)[:, None]
    integral = float(np.max(np.abs(J - exact) / np.abs(exact)))
    Dv = d_m_many(M, F, xs, cfg)[0][:, :, 0].real
    dexact = _scalar_rl(-alpha, p, xs)[:, None]
    derivative = float(np.max(np.abs(Dv - dexact) / np.abs(dexact)))
    # diagonal decoupling with distinct entries
    d = rng.uniform(0.2, 0.9, n)
    f1 = MatrixFunction.parse(f"t^{p}+1")
    Jd = j_m_many(np.diag(d), MatrixFunction.parse([f"t^{p}+1"] * n), xs, cfg)[0]
    dec = max(max_norm(Jd[:, i, 0] - j_m_many([[d[i]]], f1, xs, cfg)[0][:, 0, 0]) for i in range(n))
    return {
        "n": n,
        "alpha": alpha,
        "p": p,
        "residual": integral,
        "derivative_residual": derivative,
        "derivative_passed": derivative <= DERIVATIVE_REDUCTION_TOL,
        "decoupling": dec,
        "decoupling_passed": dec <= 1e-10,
    }


def _equivariance_trial(rng, k, cfg):
    n = 2
    M = random_order(rng, n, 0.2, 0.8)
    S = random_similarity(rng, n)
    Si = np.linalg.inv(S)
    F = _column(n, ["1+t", "t^2"])

    def SF(t):
        return S @ F(t)

    J0 = j_m_many(M, F, XS, cfg)[0]
    J1 = j_m_many(S @ M @ Si, SF, XS, cfg)[0]
    D0 = d_m_many(M, F, XS, cfg)[0]
    D1 = d_m_many(S @ M @ Si, SF, XS, cfg)[0]
    C = [np.eye(n) + 0.3 * rng.uniform(-1, 1, (n, n))]
    K = rng.uniform(-1, 1, (n, n))
    e0 = solve_eigen(C, [M], K, XS, cfg).values
    e1 = solve_eigen([S @ c @ Si for c in C], [S @ M @ Si], S @ K, XS, cfg).values
    res = max(_rel(J1, S @ J0), _rel(D1, S @ D0), _rel(e1, S @ e0))
    return {"n": n, "residual": res}


_TRIALS = {
    "gamma": _gamma_trial,
    "beta": _beta_trial,
    "semigroup": _semigroup_trial,
    "inverse": _inverse_trial,
    "mixed": _mixed_trial,
    "reduction": _reduction_trial,
    "equivariance": _equivariance_trial,
}


def run_suite(suite: str, trials: int | None = None, seed: int = 42, cfg: OperatorConfig = DEFAULT_CONFIG) -> dict:
    """Run one suite and return its report."""
    if suite not in _TRIALS:
        raise ValueError(f"unknown suite {suite!r}")
    trials = DEFAULT_TRIALS[suite] if trials is None else trials
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = np.random.default_rng([seed, SUITES.index(suite)])
    threshold = THRESHOLDS[suite]
    rows = []
    for k in range(trials):
        try:
            row = _TRIALS[suite](rng, k, cfg)
            ok = row["residual"] <= threshold
            ok = ok and row.get("functional_equation", 0.0) <= 1e-8
            ok = ok and row.get("derivative_passed", True) and row.get("decoupling_passed", True)
        except MoFracError as exc:
            row = {"residual": None, "error": f"{type(exc).__name__}: {exc}"}
            ok = False
        rows.append({"trial": k, **row, "passed": bool(ok)})
    return {
        "suite": suite,
        "seed": seed,
        "threshold": threshold,
        "trials": rows,
        "passed": all(r["passed"] for r in rows),
    }


def run(suite: str = "all", trials: int | None = None, seed: int = 42, cfg: OperatorConfig = DEFAULT_CONFIG) -> dict:
    """Run ``suite`` (or every suite for ``"all"``)."""
    names = SUITES if suite == "all" else (suite,)
    reports = [run_suite(s, trials, seed, cfg) for s in names]
    if suite != "all":
        return reports[0]
    return {"suite": "all", "seed": seed, "suites": reports, "passed": all(r["passed"] for r in reports)}
