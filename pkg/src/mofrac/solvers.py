"""Closed-form solvers for matrix-order differential equations.

Every solver follows the same pattern: build the auxiliary function
``G(t; x)`` from an exponential formula, recover ``F = J^M G`` with the
matrix-order integral, then substitute ``F`` back into the original equation
with the numerical operators of :mod:`mofrac.fracops` and report the defect.

The ``G`` formulas contain antiderivatives of kernels such as
``(x - t)**(A - I)`` in which ``x`` is the outer abscissa.  ``x`` is held
fixed and the antiderivative is taken to vanish at ``t = 0``::

    Phi_A(t; x) = A^{-1} (x**A - (x - t)**A)

Constants of integration multiply the matrix exponential from the right,
which keeps every solver equivariant under a simultaneous similarity
transform of its data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import (
    DimensionMismatch,
    EigenvalueOutOfDomain,
    InputError,
    NotCommuting,
    PreconditionViolated,
    SingularCoefficient,
)
from .exprfn import MatrixFunction
from .fracops import (
    COMMUTE_TOL,
    DEFAULT_CONFIG,
    OperatorConfig,
    d_m_many,
    derivative_eig,
    integral_eig,
    j_m_many,
)
from .gammafn import mat_gamma_inv
from .interp import ChebyshevSample
from .matcore import as_matrix, commute_check, matrix_from_json, matrix_to_json, max_norm, pow_series
from .quad import QuadSpec, de_nodes, param_convolution_many

TOLERANCES = {
    "single": 1e-3,
    "two_term_nh": 1e-3,
    "n_term_nh": 1e-3,
    "eigen": 1e-2,
    "homogeneous": 1e-2,
    "iterated": 1e-4,
    "iterated_eigen": 1e-2,
    "pde_separable": 5e-2,
    "system": 1e-2,
}
ITERATED_MATRIX_TOL = 1e-3
RESIDUAL_CUTOFF = 0.125
SINGULAR_COND = 1e12
PANEL_LEVEL = 4
PANEL_POINTS = 8
X_CHUNK = 16


# --------------------------------------------------------------------------- results


@dataclass
class SampledSolution:
    """Solution values on a grid plus the equation defect at each point.

    ``residuals`` is NaN where the defect is not computed (points below the
    residual cutoff, or orders outside the derivative window).  For the
    separable PDE ``grid_y`` is set, ``values`` has shape ``(X, Y, r, c)``
    and ``residuals`` has shape ``(X, Y)``.
    """

    grid: np.ndarray
    values: np.ndarray
    residuals: np.ndarray
    meta: dict = field(default_factory=dict)
    grid_y: np.ndarray | None = None

    @property
    def tolerance(self) -> float:
        return float(self.meta.get("tolerance", math.inf))

    @property
    def max_residual(self) -> float:
        r = self.residuals[np.isfinite(self.residuals)]
        return float(np.max(r)) if r.size else math.nan

    @property
    def passed(self) -> bool:
        r = self.residuals[np.isfinite(self.residuals)]
        return bool(np.all(r <= self.tolerance))

    def to_json(self) -> dict:
        out = {
            "meta": self.meta,
            "grid": [float(x) for x in self.grid],
            "values": _nested_matrices(self.values),
            "residuals": _nan_to_none(self.residuals),
            "max_residual": _none_if_nan(self.max_residual),
            "passed": self.passed,
        }
        if self.grid_y is not None:
            out["grid_y"] = [float(y) for y in self.grid_y]
        return out


@dataclass
class SystemSolution:
    """``(F, G)`` of the two-equation system; ``R`` is the internal ``-G`` sample."""

    F: SampledSolution
    G: SampledSolution
    R: np.ndarray

    def __iter__(self):
        return iter((self.F, self.G))

    @property
    def passed(self) -> bool:
        return self.F.passed and self.G.passed

    def to_json(self) -> dict:
        return {"F": self.F.to_json(), "G": self.G.to_json(), "passed": self.passed}


def _nested_matrices(values):
    if values.ndim == 2:
        return matrix_to_json(values)
    return [_nested_matrices(v) for v in values]


def _none_if_nan(v):
    return None if not math.isfinite(v) else float(v)


def _nan_to_none(a):
    a = np.asarray(a)
    if a.ndim == 0:
        return _none_if_nan(float(a))
    return [_nan_to_none(v) for v in a]


# --------------------------------------------------------------------------- validation


def _grid(grid) -> np.ndarray:
    g = np.asarray(grid, dtype=float).reshape(-1)
    if g.size == 0:
        raise InputError("grid is empty")
    if not np.all(np.isfinite(g)) or np.any(g <= 0):
        raise InputError("grid abscissae must be positive and finite")
    if np.any(np.diff(g) <= 0):
        raise InputError("grid must be strictly increasing")
    return g


def _orders(mats, names) -> list[np.ndarray]:
    mats = [as_matrix(m, square=True) for m in mats]
    if not mats:
        raise InputError("at least one order matrix is required")
    n = mats[0].shape[0]
    for m, name in zip(mats, names):
        if m.shape != (n, n):
            raise DimensionMismatch(f"order {name} has shape {m.shape}, expected {(n, n)}")
    for m, name in zip(mats, names):
        try:
            integral_eig(m)
        except EigenvalueOutOfDomain as exc:
            raise EigenvalueOutOfDomain(f"order {name}: {exc}") from None
    _require_commuting(mats, names)
    return mats


def _require_commuting(mats, names):
    for i in range(len(mats)):
        for j in range(i + 1, len(mats)):
            if not commute_check(mats[i], mats[j], COMMUTE_TOL):
                raise NotCommuting(f"matrices {names[i]} and {names[j]} do not commute")


def _coefficients(cs, n, count) -> list[np.ndarray]:
    if cs is None:
        cs = [np.eye(n)] * count
    cs = [as_matrix(c, square=True) for c in cs]
    if len(cs) != count:
        raise InputError(f"expected {count} coefficient matrices, got {len(cs)}")
    for k, c in enumerate(cs):
        if c.shape != (n, n):
            raise DimensionMismatch(f"coefficient {k + 1} has shape {c.shape}, expected {(n, n)}")
    return cs


def _invert(c, name) -> np.ndarray:
    if max_norm(c) == 0.0 or np.linalg.cond(c) > SINGULAR_COND:
        raise SingularCoefficient(f"coefficient {name} is not invertible")
    return np.linalg.inv(c)


def _forcing(phi, n) -> MatrixFunction:
    if isinstance(phi, (str, list, tuple)):
        phi = MatrixFunction.parse(phi)
    if not isinstance(phi, MatrixFunction):
        raise InputError("forcing must be an expression or a MatrixFunction")
    if phi.n_rows != n:
        raise DimensionMismatch(f"forcing has {phi.n_rows} rows, orders are {n}x{n}")
    return phi


def _require_zero_start(phi: MatrixFunction, abs_tol: float):
    v0 = phi(np.array([0.0]))[0]
    if max_norm(v0) > abs_tol:
        raise PreconditionViolated(f"forcing must vanish at t = 0, got |phi(0)| = {max_norm(v0):.3g}")


def _constant(K, n, c, default) -> np.ndarray:
    if K is None:
        return np.eye(n, dtype=complex) if default == "identity" else np.zeros((n, c), dtype=complex)
    K = as_matrix(K)
    if K.shape[0] != n:
        raise DimensionMismatch(f"constant has {K.shape[0]} rows, orders are {n}x{n}")
    if c is not None and K.shape[1] != c:
        raise DimensionMismatch(f"constant has {K.shape[1]} columns, forcing has {c}")
    return K


# --------------------------------------------------------------------------- building blocks


class _Antiderivative:
    """``left @ Phi_A(t; x)`` on batches of outer abscissae and node fractions."""

    def __init__(self, left, A):
        eig = integral_eig(A)
        self.lam = eig.values
        self.left = np.asarray(left, dtype=complex) @ eig.vectors
        self.right = eig.vectors_inv

    def __call__(self, xs, fl, fr) -> np.ndarray:
        # x**lam (1 - fr**lam) / lam, with fr = 1 - t/x carried exactly
        lam = self.lam
        with np.errstate(divide="ignore"):
            lfr = np.log(fr)
        phi = -np.exp(lam * np.log(xs)[:, None, None]) * np.expm1(lam * lfr[..., None]) / lam
        return self.left @ (phi[..., :, None] * self.right)


def _exponent(terms, xs, fl, fr):
    out = 0
    for term in terms:
        out = out + term(xs, fl, fr)
    return out


def _expm(E) -> np.ndarray:
    if E.shape[-1] == 1:
        return np.exp(E)
    flat = E.reshape((-1,) + E.shape[-2:])
    return scipy.linalg.expm(flat).reshape(E.shape)


def _broadcast_fractions(xs, fl, fr):
    fl = np.broadcast_to(fl, (len(xs),) + np.shape(fl)[-1:]) if np.ndim(fl) == 1 else fl
    fr = np.broadcast_to(fr, fl.shape) if np.ndim(fr) == 1 else fr
    return fl, fr


class _ForcedIntegral:
    """``I(t; x) = int_0^t expm(Q(s; x)) psi(s) ds`` for every outer ``x``.

    Gauss-Legendre panels on a fixed graded grid (the tanh-sinh nodes of a
    moderate level) give a cumulative table; queries add one partial panel.
    """

    def __init__(self, terms, psi: MatrixFunction, Cinv, xs):
        self.terms = terms
        self.psi = psi
        self.Cinv = Cinv
        self.xs = xs
        parts = [de_nodes(level) for level in range(PANEL_LEVEL + 1)]
        fl = np.concatenate([p[0] for p in parts])
        fr = np.concatenate([p[1] for p in parts])
        order = np.argsort(fl)
        self.bl = np.concatenate([[0.0], fl[order], [1.0]])
        self.br = np.concatenate([[1.0], fr[order], [0.0]])
        xi, w = np.polynomial.legendre.leggauss(PANEL_POINTS)
        self.xi = 0.5 * (xi + 1.0)
        self.w = 0.5 * w
        width = np.where(self.bl[:-1] < 0.5, np.diff(self.bl), self.br[:-1] - self.br[1:])
        panels = self._panel_sums(self.bl[:-1], self.br[:-1], width)
        self.table = np.concatenate([np.zeros_like(panels[:, :1]), np.cumsum(panels, axis=1)], axis=1)

    def _h(self, sl, sr):
        # integrand in the fraction variable; sl, sr of shape (X, P, m)
        X = len(self.xs)
        shape = sl.shape
        fl = sl.reshape(X, -1)
        fr = sr.reshape(X, -1)
        E = _exponent(self.terms, self.xs, fl, fr)
        t = (self.xs[:, None] * fl).reshape(-1)
        p = self.Cinv @ self.psi(t).reshape((X, fl.shape[1]) + self.psi.shape)
        vals = _expm(E) @ p * self.xs[:, None, None, None]
        return vals.reshape(shape + vals.shape[-2:])

    def _panel_sums(self, left_l, left_r, width):
        # left_* and width of shape (P,) or (X, P)
        X = len(self.xs)
        left_l = np.broadcast_to(left_l, (X,) + np.shape(left_l)[-1:])
        left_r = np.broadcast_to(left_r, left_l.shape)
        width = np.broadcast_to(width, left_l.shape)
        step = width[..., None] * self.xi
        vals = self._h(left_l[..., None] + step, left_r[..., None] - step)
        return np.einsum("xp,m,xpmrc->xprc", width, self.w, vals)

    def __call__(self, fl, fr) -> np.ndarray:
        p = np.clip(np.searchsorted(self.bl, fl, side="right") - 1, 0, len(self.bl) - 2)
        bl, br = self.bl[p], self.br[p]
        width = np.where(bl < 0.5, fl - bl, br - fr)
        partial = self._panel_sums(bl, br, width)
        return self.table[np.arange(len(self.xs))[:, None], p] + partial


def _chunked(fn, xs):
    """Evaluate ``fn`` on slices of ``xs`` to bound memory."""
    xs = np.asarray(xs, dtype=float)
    return np.concatenate([fn(xs[i : i + X_CHUNK]) for i in range(0, len(xs), X_CHUNK)], axis=0)


def _residual_points(grid, cfg: OperatorConfig):
    mask = grid >= RESIDUAL_CUTOFF * grid[-1]
    mask &= grid - 2 * cfg.step(grid) > 0
    return mask


def _extent(grid, cfg: OperatorConfig, depth: int = 1) -> float:
    xmax = float(grid[-1])
    return xmax + 2.02 * float(cfg.step(xmax)) * depth


def _derivative_ready(orders) -> bool:
    try:
        for m in orders:
            derivative_eig(m)
    except EigenvalueOutOfDomain:
        return False
    return True


def _sample(fn, length, cfg: OperatorConfig, power=None):
    return ChebyshevSample.sample(lambda u: _chunked(fn, u), length, cfg.cheb_nodes, power=power)


def _defect_norm(diff) -> np.ndarray:
    return np.max(np.abs(diff).reshape(diff.shape[0], -1), axis=1)


def _finish(name, grid, values, residual_fn, orders, cfg, meta, tol=None) -> SampledSolution:
    """Attach residuals computed by ``residual_fn(xs)`` on the admissible points."""
    residuals = np.full(len(grid), np.nan)
    meta = {"solver": name, "tolerance": TOLERANCES[name] if tol is None else tol, **meta}
    mask = _residual_points(grid, cfg)
    if not _derivative_ready(orders):
        meta["residual_status"] = "not-computable: an order lies outside the derivative window"
    elif not np.any(mask):
        meta["residual_status"] = "not-computable: no grid point admits a derivative stencil"
    else:
        residuals[mask] = residual_fn(grid[mask])
        meta["residual_status"] = "computed"
    meta["residual_cutoff"] = RESIDUAL_CUTOFF * float(grid[-1])
    return SampledSolution(grid, values, residuals, meta)


def _zero_solution(name, grid, shape, meta) -> SampledSolution:
    meta = {"solver": name, "tolerance": TOLERANCES[name], "residual_status": "computed", **meta}
    return SampledSolution(grid, np.zeros((len(grid),) + tuple(shape), dtype=complex), np.zeros(len(grid)), meta)


def _combination(terms, F, xs, cfg):
    """``sum_k C_k D^{M_k} F`` at ``xs``."""
    out = 0
    for C, M in terms:
        out = out + C @ d_m_many(M, F, xs, cfg)[0]
    return out


def _apply_integral(M, G, xs, cfg):
    """``J^M [G(.; x)](x)`` for an integrand that depends on ``x``."""
    Ginv = mat_gamma_inv(integral_eig(M))
    return Ginv @ param_convolution_many(M, G, xs, cfg.quad)[0]


# --------------------------------------------------------------------------- single term


def solve_single(M, phi, grid, cfg: OperatorConfig = DEFAULT_CONFIG) -> SampledSolution:
    """Solve ``D^M F = phi``: ``F = J^M phi``."""
    M = as_matrix(M, square=True)
    derivative_eig(M)
    grid = _grid(grid)
    phi = _forcing(phi, M.shape[0])
    if phi.is_zero:
        raise PreconditionViolated("forcing must not vanish identically")
    values = j_m_many(M, phi, grid, cfg)[0]

    def residual(xs):
        Fs = _sample(lambda u: j_m_many(M, phi, u, cfg)[0], _extent(grid, cfg), cfg, power=M)
        return _defect_norm(d_m_many(M, Fs, xs, cfg)[0] - phi(xs))

    return _finish("single", grid, values, residual, [M], cfg, {"equation": "D^M F = phi"})


# --------------------------------------------------------------------------- forced, several terms


def solve_n_term_nh(C, M, phi, K=None, grid=None, cfg: OperatorConfig = DEFAULT_CONFIG, *, name="n_term_nh"):
    """Solve ``sum_k C_k D^{M_k} F = phi`` with ``F = J^{M_1} G``.

    ``G(t; x) = expm(-Q) [int_0^t expm(Q(s)) C_1^{-1} phi'(s) ds + K]`` with
    ``Q = C_1^{-1} sum_{k>=2} C_k Gamma^{-1}(A_k) Phi_{A_k}`` and
    ``A_k = M_1 - M_k``.
    """
    names = [f"M{k + 1}" for k in range(len(M))]
    M = _orders(M, names)
    n = M[0].shape[0]
    C = _coefficients(C, n, len(M))
    Cinv = _invert(C[0], "C1")
    A = [M[0] - m for m in M[1:]]
    for a, nm in zip(A, names[1:]):
        try:
            integral_eig(a)
        except EigenvalueOutOfDomain as exc:
            raise EigenvalueOutOfDomain(f"M1 - {nm}: {exc}") from None
    grid = _grid(grid)
    phi = _forcing(phi, n)
    K = _constant(K, n, phi.n_cols, "zero")
    _require_zero_start(phi, cfg.quad.abs_tol)
    meta = {"equation": "sum_k C_k D^{M_k} F = phi", "terms": len(M)}
    if phi.is_zero and max_norm(K) == 0.0:
        return _zero_solution(name, grid, (n, phi.n_cols), meta)

    terms = [_Antiderivative(Cinv @ c @ mat_gamma_inv(a), a) for c, a in zip(C[1:], A)]
    dphi = phi.diff()
    tables = {}

    def G(xs, fl, fr):
        if not terms:
            return (Cinv @ phi(xs[:, None] * fl[None, :]).reshape((len(xs), len(fl)) + phi.shape)) + K
        fl2, fr2 = _broadcast_fractions(xs, fl, fr)
        key = xs.tobytes()
        if key not in tables:
            tables.clear()
            tables[key] = _ForcedIntegral(terms, dphi, Cinv, xs)
        forced = tables[key](fl2, fr2)
        return _expm(-_exponent(terms, xs, fl2, fr2)) @ (forced + K)

    def F(xs):
        return _apply_integral(M[0], G, xs, cfg)

    values = _chunked(F, grid)

    def residual(xs):
        Fs = _sample(F, _extent(grid, cfg), cfg, power=M[0])
        return _defect_norm(_combination(list(zip(C, M)), Fs, xs, cfg) - phi(xs))

    return _finish(name, grid, values, residual, M, cfg, meta)


def solve_two_term_nh(C_m, C_n, M, N, phi, K=None, grid=None, cfg: OperatorConfig = DEFAULT_CONFIG):
    """Solve ``C_m D^M F + C_n D^N F = phi``."""
    return solve_n_term_nh([C_m, C_n], [M, N], phi, K, grid, cfg, name="two_term_nh")


# --------------------------------------------------------------------------- unforced


def solve_eigen(C, M, K=None, grid=None, cfg: OperatorConfig = DEFAULT_CONFIG) -> SampledSolution:
    """Solve ``sum_k C_k D^{M_k} F = F`` with ``F = J^{M_1} G``.

    ``G = expm(C_1^{-1} [Gamma^{-1}(M_1) Phi_{M_1} - sum_{k>=2} C_k Gamma^{-1}(A_k) Phi_{A_k}]) K``.
    """
    names = [f"M{k + 1}" for k in range(len(M))]
    M = _orders(M, names)
    n = M[0].shape[0]
    C = _coefficients(C, n, len(M))
    Cinv = _invert(C[0], "C1")
    A = [M[0] - m for m in M[1:]]
    for a in A:
        integral_eig(a)
    grid = _grid(grid)
    K = _constant(K, n, None, "identity")
    meta = {
        "equation": "sum_k C_k D^{M_k} F = F",
        "terms": len(M),
        "sign_convention": "dG/dt = C1^-1 [Gamma^-1(M1)(x-t)^(M1-I) - sum_k C_k Gamma^-1(A_k)(x-t)^(A_k-I)] G",
    }
    if max_norm(K) == 0.0:
        return _zero_solution("eigen", grid, K.shape, meta)

    terms = [_Antiderivative(Cinv @ mat_gamma_inv(M[0]), M[0])]
    terms += [_Antiderivative(-Cinv @ c @ mat_gamma_inv(a), a) for c, a in zip(C[1:], A)]

    def G(xs, fl, fr):
        fl2, fr2 = _broadcast_fractions(xs, fl, fr)
        return _expm(_exponent(terms, xs, fl2, fr2)) @ K

    def F(xs):
        return _apply_integral(M[0], G, xs, cfg)

    values = _chunked(F, grid)

    def residual(xs):
        Fs = _sample(F, _extent(grid, cfg), cfg, power=M[0])
        return _defect_norm(_combination(list(zip(C, M)), Fs, xs, cfg) - Fs(xs))

    return _finish("eigen", grid, values, residual, M, cfg, meta)


def solve_n_term_homogeneous(C, M, K=None, grid=None, cfg: OperatorConfig = DEFAULT_CONFIG) -> SampledSolution:
    """Solve ``sum_k C_k D^{M_k} F = 0`` with ``G = expm(-C_1^{-1} sum_k C_k Gamma^{-1}(A_k) Phi_{A_k}) K``."""
    names = [f"M{k + 1}" for k in range(len(M))]
    M = _orders(M, names)
    if len(M) < 2:
        raise InputError("the homogeneous equation needs at least two terms")
    n = M[0].shape[0]
    C = _coefficients(C, n, len(M))
    Cinv = _invert(C[0], "C1")
    A = [M[0] - m for m in M[1:]]
    for a in A:
        integral_eig(a)
    grid = _grid(grid)
    K = _constant(K, n, None, "identity")
    meta = {"equation": "sum_k C_k D^{M_k} F = 0", "terms": len(M)}
    if max_norm(K) == 0.0:
        return _zero_solution("homogeneous", grid, K.shape, meta)

    terms = [_Antiderivative(-Cinv @ c @ mat_gamma_inv(a), a) for c, a in zip(C[1:], A)]

    def G(xs, fl, fr):
        fl2, fr2 = _broadcast_fractions(xs, fl, fr)
        return _expm(_exponent(terms, xs, fl2, fr2)) @ K

    def F(xs):
        return _apply_integral(M[0], G, xs, cfg)

    values = _chunked(F, grid)

    def residual(xs):
        Fs = _sample(F, _extent(grid, cfg), cfg, power=M[0])
        return _defect_norm(_combination(list(zip(C, M)), Fs, xs, cfg))

    return _finish("homogeneous", grid, values, residual, M, cfg, meta)


def solve_homogeneous(C_m, C_n, M, N, K=None, grid=None, cfg: OperatorConfig = DEFAULT_CONFIG) -> SampledSolution:
    """Solve ``C_m D^M F + C_n D^N F = 0``."""
    return solve_n_term_homogeneous([C_m, C_n], [M, N], K, grid, cfg)


# --------------------------------------------------------------------------- iterated orders


def _nested_integral(orders, inner, length, cfg, power=None):
    """Sample ``J^{orders[0]} ... J^{orders[-1]} inner`` except the outermost operator."""
    P = np.zeros_like(orders[0]) if power is None else power
    for Mk in reversed(orders[1:]):
        P = P + Mk
        inner = _sample(lambda u, Mk=Mk, f=inner: j_m_many(Mk, f, u, cfg)[0], length, cfg, power=P)
    return inner


def solve_iterated(M_seq, phi, grid, cfg: OperatorConfig = DEFAULT_CONFIG) -> SampledSolution:
    """Solve ``D^{M_n} ... D^{M_1} F = phi`` by ``F = J^{M_1} ... J^{M_n} phi``.

    The residual is the relative disagreement with ``J^{sum M_i} phi``.
    """
    names = [f"M{k + 1}" for k in range(len(M_seq))]
    M = _orders(M_seq, names)
    n = M[0].shape[0]
    grid = _grid(grid)
    phi = _forcing(phi, n)
    tol = TOLERANCES["iterated"] if n == 1 else ITERATED_MATRIX_TOL
    meta = {"equation": "D^{M_n} ... D^{M_1} F = phi", "depth": len(M), "residual": "relative semigroup disagreement"}
    if phi.is_zero:
        sol = _zero_solution("iterated", grid, (n, phi.n_cols), meta)
        sol.meta["tolerance"] = tol
        return sol
    inner = _nested_integral(M, phi, float(grid[-1]), cfg)
    values = j_m_many(M[0], inner, grid, cfg)[0]
    direct = j_m_many(sum(M), phi, grid, cfg)[0]
    scale = np.maximum(_defect_norm(direct), cfg.quad.abs_tol)
    residuals = _defect_norm(values - direct) / scale
    meta = {"solver": "iterated", "tolerance": tol, "residual_status": "computed", **meta}
    return SampledSolution(grid, values, residuals, meta)


def solve_iterated_eigen(M_seq, K=None, grid=None, cfg: OperatorConfig = DEFAULT_CONFIG) -> SampledSolution:
    """Solve ``D^{M_n} ... D^{M_1} F = F``.

    The innermost function is ``G_n(v) = expm(Gamma^{-1}(L + I) v**L) K`` with
    ``L = sum M_i``, followed by the chain ``F = J^{M_1} ... J^{M_n} G_n``.
    """
    names = [f"M{k + 1}" for k in range(len(M_seq))]
    M = _orders(M_seq, names)
    n = M[0].shape[0]
    grid = _grid(grid)
    K = _constant(K, n, None, "identity")
    meta = {"equation": "D^{M_n} ... D^{M_1} F = F", "depth": len(M)}
    if max_norm(K) == 0.0:
        return _zero_solution("iterated_eigen", grid, K.shape, meta)
    L = sum(M)
    leig = integral_eig(L)
    coef = mat_gamma_inv(L + np.eye(n))

    def Gn(v):
        v = np.asarray(v, dtype=float)
        E = np.zeros((len(v), n, n), dtype=complex)
        pos = v > 0
        if np.any(pos):
            E[pos] = coef @ pow_series(leig, v[pos])
        return _expm(E) @ K

    depth = len(M)
    length = _extent(grid, cfg, depth)
    inner = _nested_integral(M, Gn, length, cfg)
    values = j_m_many(M[0], inner, grid, cfg)[0]

    def residual(xs):
        cur = _sample(lambda u: j_m_many(M[0], inner, u, cfg)[0], length, cfg, power=L)
        F_at = cur(xs)
        P = L
        for k, Mk in enumerate(M[:-1]):
            P = P - Mk
            ext = _extent(grid, cfg, depth - k - 1)
            cur = _sample(
                lambda u, Mk=Mk, f=cur: d_m_many(Mk, f, u, cfg, step=np.minimum(cfg.step(u), u / 4))[0],
                ext,
                cfg,
                power=P,
            )
        return _defect_norm(d_m_many(M[-1], cur, xs, cfg)[0] - F_at)

    return _finish("iterated_eigen", grid, values, residual, M, cfg, meta)


# --------------------------------------------------------------------------- separable PDE


def solve_pde_separable(
    M, N, kappa, C_eta=None, C_tau=None, grid_x=None, grid_y=None, cfg: OperatorConfig = DEFAULT_CONFIG
) -> SampledSolution:
    """Solve ``d^M/dx^M F = d^N/dy^N F`` with ``F(x, y) = Psi_x(x) Psi_y(y)``.

    ``eta(t; x) = expm(kappa Gamma^{-1}(M) Phi_M(t; x)) C_eta`` and
    ``Psi_x = kappa J^M eta``; likewise ``Psi_y`` with ``N`` and ``C_tau``.
    """
    M, N = _orders([M, N], ["M", "N"])
    n = M.shape[0]
    kappa = as_matrix(kappa, square=True)
    if kappa.shape != (n, n):
        raise DimensionMismatch(f"kappa has shape {kappa.shape}, expected {(n, n)}")
    _require_commuting([kappa, M, N], ["kappa", "M", "N"])
    C_eta = _constant(C_eta, n, None, "identity")
    C_tau = _constant(C_tau, n, None, "identity")
    if C_eta.shape != (n, n) or C_tau.shape != (n, n):
        raise DimensionMismatch("C_eta and C_tau must be square like the orders")
    gx = _grid(grid_x)
    gy = _grid(grid_x if grid_y is None else grid_y)
    meta = {
        "solver": "pde_separable",
        "tolerance": TOLERANCES["pde_separable"],
        "equation": "d^M/dx^M F = d^N/dy^N F",
        "exponent": "kappa Gamma^-1(order) Phi_order",
        "residual_cutoff": RESIDUAL_CUTOFF * float(max(gx[-1], gy[-1])),
    }
    shape = (len(gx), len(gy), n, n)
    if max_norm(kappa) == 0.0:
        meta["residual_status"] = "computed"
        return SampledSolution(gx, np.zeros(shape, dtype=complex), np.zeros(shape[:2]), meta, gy)

    def psi_fn(order, C):
        term = _Antiderivative(kappa @ mat_gamma_inv(order), order)

        def aux(xs, fl, fr):
            fl2, fr2 = _broadcast_fractions(xs, fl, fr)
            return _expm(term(xs, fl2, fr2)) @ C

        return lambda xs: kappa @ _apply_integral(order, aux, xs, cfg)

    psi_x = psi_fn(M, C_eta)
    psi_y = psi_fn(N, C_tau)
    px = _chunked(psi_x, gx)
    py = _chunked(psi_y, gy)
    values = px[:, None] @ py[None, :]
    residuals = np.full(shape[:2], np.nan)
    mx = _residual_points(gx, cfg)
    my = _residual_points(gy, cfg)
    if not _derivative_ready([M, N]):
        meta["residual_status"] = "not-computable: an order lies outside the derivative window"
    elif not (np.any(mx) and np.any(my)):
        meta["residual_status"] = "not-computable: no grid point admits a derivative stencil"
    else:
        sx = _sample(psi_x, _extent(gx, cfg), cfg, power=M)
        sy = _sample(psi_y, _extent(gy, cfg), cfg, power=N)
        xs, ys = gx[mx], gy[my]
        dx = d_m_many(M, sx, xs, cfg)[0][:, None] @ py[my][None, :]
        dy = np.stack([d_m_many(N, lambda tau, P=p: P @ sy(tau), ys, cfg)[0] for p in px[mx]])
        diff = np.abs(dx - dy).reshape(len(xs), len(ys), -1)
        residuals[np.ix_(mx, my)] = np.max(diff, axis=2)
        meta["residual_status"] = "computed"
    return SampledSolution(gx, values, residuals, meta, gy)


# --------------------------------------------------------------------------- system


def solve_system(M, N, K=None, grid=None, cfg: OperatorConfig = DEFAULT_CONFIG) -> SystemSolution:
    """Solve ``D^N F + G = 0``, ``D^M G - F = 0``.

    ``H = expm(-Gamma^{-1}(N + M) Phi_{N+M}) K``, ``G = J^M H``, ``R = -G``
    and ``F = J^N R``.
    """
    M, N = _orders([M, N], ["M", "N"])
    n = M.shape[0]
    S = M + N
    integral_eig(S)
    grid = _grid(grid)
    K = _constant(K, n, None, "identity")
    meta = {"equation": "D^N F + G = 0, D^M G - F = 0", "sign_convention": "F = J^N R with R = -G"}
    if max_norm(K) == 0.0:
        zF = _zero_solution("system", grid, K.shape, {**meta, "component": "F"})
        zG = _zero_solution("system", grid, K.shape, {**meta, "component": "G"})
        return SystemSolution(zF, zG, np.zeros_like(zG.values))

    term = _Antiderivative(-mat_gamma_inv(S), S)

    def H(xs, fl, fr):
        fl2, fr2 = _broadcast_fractions(xs, fl, fr)
        return _expm(term(xs, fl2, fr2)) @ K

    def G_at(xs):
        return _apply_integral(M, H, xs, cfg)

    length = _extent(grid, cfg, 2)
    Gs = _sample(G_at, length, cfg, power=M)
    Rs = ChebyshevSample(Gs.nodes, -Gs.h_values, Gs.power)

    def F_at(xs):
        return j_m_many(N, Rs, xs, cfg)[0]

    G_vals = _chunked(G_at, grid)
    R_vals = -G_vals
    F_vals = F_at(grid)

    def res_first(xs):
        Fs = _sample(F_at, _extent(grid, cfg), cfg, power=S)
        return _defect_norm(d_m_many(N, Fs, xs, cfg)[0] + G_at(xs))

    def res_second(xs):
        return _defect_norm(d_m_many(M, Gs, xs, cfg)[0] - F_at(xs))

    Fsol = _finish("system", grid, F_vals, res_first, [N], cfg, {**meta, "component": "F", "residual": "D^N F + G"})
    Gsol = _finish("system", grid, G_vals, res_second, [M], cfg, {**meta, "component": "G", "residual": "D^M G - F"})
    return SystemSolution(Fsol, Gsol, R_vals)


# --------------------------------------------------------------------------- requests


SOLVERS = (
    "single",
    "two_term_nh",
    "n_term_nh",
    "eigen",
    "homogeneous",
    "iterated",
    "iterated_eigen",
    "pde_separable",
    "system",
)


def _matrix(obj, what):
    if isinstance(obj, (int, float)) and not isinstance(obj, bool):
        return np.array([[complex(obj)]])
    try:
        return matrix_from_json(obj)
    except InputError as exc:
        raise InputError(f"{what}: {exc}") from None


def _matrices(req, key, required=True):
    if key not in req:
        if required:
            raise InputError(f"request is missing {key!r}")
        return None
    items = req[key]
    if not isinstance(items, list):
        raise InputError(f"{key!r} must be a list")
    return [_matrix(m, f"{key}[{k}]") for k, m in enumerate(items)]


def parse_grid(spec) -> np.ndarray:
    """Grid from ``{"start", "stop", "count"}``, a ``"start:stop:count"`` string or a list."""
    if isinstance(spec, str):
        parts = spec.split(":")
        if len(parts) != 3:
            raise InputError(f"grid {spec!r} must look like start:stop:count")
        try:
            spec = {"start": float(parts[0]), "stop": float(parts[1]), "count": int(parts[2])}
        except ValueError:
            raise InputError(f"grid {spec!r} must look like start:stop:count") from None
    if isinstance(spec, dict):
        try:
            start, stop, count = float(spec["start"]), float(spec["stop"]), spec["count"]
        except (KeyError, TypeError, ValueError):
            raise InputError("grid object needs numeric start, stop and count") from None
        if not isinstance(count, int) or count < 1:
            raise InputError("grid count must be a positive integer")
        return _grid(np.linspace(start, stop, count))
    if isinstance(spec, list) and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in spec):
        return _grid(spec)
    raise InputError("grid must be {start, stop, count}, 'start:stop:count' or a list of numbers")


def parse_config(obj, base: OperatorConfig = DEFAULT_CONFIG) -> OperatorConfig:
    if obj is None:
        return base
    if not isinstance(obj, dict):
        raise InputError("config must be an object")
    q = {k: obj[k] for k in ("rel_tol", "abs_tol", "max_refinements") if k in obj}
    o = {k: obj[k] for k in ("fd_step_scale", "fd_order", "cheb_nodes") if k in obj}
    unknown = set(obj) - set(q) - set(o)
    if unknown:
        raise InputError(f"unknown config keys: {sorted(unknown)}")
    try:
        quad = QuadSpec(**{**base.quad.__dict__, **q})
        return OperatorConfig(quad=quad, **{**{k: getattr(base, k) for k in ("fd_step_scale", "fd_order", "cheb_nodes")}, **o})
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid config: {exc}") from None


def solve_request(req: dict, base: OperatorConfig = DEFAULT_CONFIG):
    """Dispatch a JSON solve request to its solver."""
    if not isinstance(req, dict):
        raise InputError("request must be a JSON object")
    name = req.get("solver")
    if isinstance(name, str) and name.startswith("solve_"):
        name = name[len("solve_") :]
    if name not in SOLVERS:
        raise InputError(f"unknown solver {req.get('solver')!r}; expected one of {', '.join(SOLVERS)}")
    cfg = parse_config(req.get("config"), base)
    orders = _matrices(req, "orders")
    coefs = _matrices(req, "coefficients", required=False)
    K = _matrix(req["constant"], "constant") if "constant" in req else None
    forcing = req.get("forcing")
    grid = parse_grid(req["grid"]) if "grid" in req else None
    if grid is None:
        raise InputError("request is missing 'grid'")

    def need_forcing():
        if forcing is None:
            raise InputError(f"solver {name!r} needs 'forcing'")
        return forcing

    def pair():
        if len(orders) != 2:
            raise InputError(f"solver {name!r} needs exactly two orders")
        cs = coefs if coefs is not None else [np.eye(orders[0].shape[0])] * 2
        if len(cs) != 2:
            raise InputError(f"solver {name!r} needs exactly two coefficients")
        return cs

    if name == "single":
        if len(orders) != 1:
            raise InputError("solver 'single' needs exactly one order")
        return solve_single(orders[0], need_forcing(), grid, cfg)
    if name == "two_term_nh":
        cs = pair()
        return solve_two_term_nh(cs[0], cs[1], orders[0], orders[1], need_forcing(), K, grid, cfg)
    if name == "n_term_nh":
        return solve_n_term_nh(coefs, orders, need_forcing(), K, grid, cfg)
    if name == "eigen":
        return solve_eigen(coefs, orders, K, grid, cfg)
    if name == "homogeneous":
        return solve_n_term_homogeneous(coefs, orders, K, grid, cfg)
    if name == "iterated":
        return solve_iterated(orders, need_forcing(), grid, cfg)
    if name == "iterated_eigen":
        return solve_iterated_eigen(orders, K, grid, cfg)
    if name == "system":
        if len(orders) != 2:
            raise InputError("solver 'system' needs orders [M, N]")
        return solve_system(orders[0], orders[1], K, grid, cfg)
    # pde_separable
    if len(orders) != 2:
        raise InputError("solver 'pde_separable' needs orders [M, N]")
    if "kappa" not in req:
        raise InputError("solver 'pde_separable' needs 'kappa'")
    kappa = _matrix(req["kappa"], "kappa")
    c_eta = _matrix(req["c_eta"], "c_eta") if "c_eta" in req else None
    c_tau = _matrix(req["c_tau"], "c_tau") if "c_tau" in req else None
    grid_y = parse_grid(req["grid_y"]) if "grid_y" in req else None
    return solve_pde_separable(orders[0], orders[1], kappa, c_eta, c_tau, grid, grid_y, cfg)
