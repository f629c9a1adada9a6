"""Weakly singular quadrature.

Everything here is built on one double-exponential (tanh-sinh) rule on the
unit interval.  Node positions are carried as *two* fractions, the distance
from the left end and the distance from the right end, each computed without
cancellation, so kernels such as ``(x - t)**(lam - 1)`` are evaluated
accurately right up to the singular endpoint.  Refinement halves the step in
the transformed variable; the nodes are nested, so each level only evaluates
the new odd-indexed points.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionMismatch, EigenvalueOutOfDomain, FunctionEvalError, MoFracError, ToleranceUnmet
from .matcore import EigenSystem, eig_decompose, max_norm

# exp(-pi sinh(TAU_MAX)) ~ 1e-200: the outermost nodes sit 1e-200 from the ends
TAU_MAX = math.asinh(200 * math.log(10) / math.pi)
H0 = 0.5
MIN_LEVEL = 3
LEVEL_CAP = 12


@dataclass(frozen=True)
class QuadSpec:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-12
    max_refinements: int = 20

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("rel_tol and abs_tol must be positive")
        if self.max_refinements < 1:
            raise ValueError("max_refinements must be at least 1")


@dataclass
class QuadResult:
    value: np.ndarray
    err_estimate: float
    evaluations: int


def _de_nodes(level: int):
    """Fractions and weights of the nodes *added* at ``level``.

    Returns ``(fl, fr, w)``: distance of each node from the left end and from
    the right end of [0, 1], and the weight including the step ``h``.
    """
    h = H0 / 2**level
    kmax = int(TAU_MAX / h)
    if level == 0:
        k = np.arange(-kmax, kmax + 1)
    else:
        k = np.arange(-kmax, kmax + 1)
        k = k[k % 2 != 0]
    tau = k * h
    a = np.abs(tau)
    e = np.exp(-math.pi * np.sinh(a))
    near = e / (1.0 + e)
    far = 1.0 / (1.0 + e)
    w = h * math.pi * np.cosh(a) * e / (1.0 + e) ** 2
    pos = tau >= 0
    fl = np.where(pos, far, near)
    fr = np.where(pos, near, far)
    return fl, fr, w


def _extreme_fraction(level: int) -> float:
    h = H0 / 2**level
    tau = int(TAU_MAX / h) * h
    e = math.exp(-math.pi * math.sinh(tau))
    return e / (1.0 + e)


_NODE_CACHE: dict[int, tuple] = {}


def de_nodes(level: int):
    if level not in _NODE_CACHE:
        _NODE_CACHE[level] = tuple(np.asarray(a).copy() for a in _de_nodes(level))
        for a in _NODE_CACHE[level]:
            a.setflags(write=False)
    return _NODE_CACHE[level]


def de_integrate(
    integrand: Callable[[np.ndarray, np.ndarray], np.ndarray],
    spec: QuadSpec,
    *,
    left_exp=None,
    right_exp=None,
    min_level: int = MIN_LEVEL,
):
    """Adaptive tanh-sinh quadrature of ``integrand`` over [0, 1].

    ``integrand(fl, fr)`` receives the node distances from both ends, each
    of shape ``(K,)``, and returns an array of shape ``(K, *batch)``.  All
    batch entries are refined together until every one meets
    ``max(abs_tol, rel_tol*|I|)``.

    ``left_exp``/``right_exp`` (broadcastable to the batch shape) declare an
    algebraic endpoint behaviour ``u**p``; the piece of the integral beyond
    the outermost node is then added analytically.

    Returns ``(value, err, evaluations, level)`` with ``err`` elementwise.
    """
    total = None
    prev = None
    absum = None
    evals = 0
    last = min(spec.max_refinements, LEVEL_CAP)
    for level in range(0, last + 1):
        fl, fr, w = de_nodes(level)
        vals = np.asarray(integrand(fl, fr))
        evals += len(fl)
        wv = w.reshape((-1,) + (1,) * (vals.ndim - 1))
        part = np.sum(wv * vals, axis=0)
        apart = np.sum(wv * np.abs(vals), axis=0)
        if total is None:
            total, absum = part, apart
        else:
            total = 0.5 * total + part
            absum = 0.5 * absum + apart
        est = total + _tails(integrand, level, left_exp, right_exp)
        if not np.all(np.isfinite(est)):
            raise FunctionEvalError("integrand produced non-finite values")
        if prev is not None and level >= min(min_level, last):
            err = np.abs(est - prev)
            floor = 64 * np.finfo(float).eps * absum
            target = np.maximum(np.maximum(spec.abs_tol, spec.rel_tol * np.abs(est)), floor)
            if np.all(err <= target):
                return est, err + floor, evals, level
        prev = est
    err = np.abs(est - prev) if prev is not None else np.full(np.shape(est), np.inf)
    raise ToleranceUnmet(
        f"quadrature did not converge after {last} refinements (error estimate {np.max(err):.3g})",
        err_estimate=float(np.max(err)),
    )


def _tails(integrand, level, left_exp, right_exp):
    out = 0.0
    if left_exp is None and right_exp is None:
        return out
    f = _extreme_fraction(level)
    far = 1.0 - f
    if left_exp is not None:
        v = np.asarray(integrand(np.array([f]), np.array([far])))[0]
        out = out + v * f / (np.asarray(left_exp) + 1.0)
    if right_exp is not None:
        v = np.asarray(integrand(np.array([far]), np.array([f])))[0]
        out = out + v * f / (np.asarray(right_exp) + 1.0)
    return out


def evaluate_function(F, t: np.ndarray) -> np.ndarray:
    """Evaluate a matrix-valued function on a 1-D array of abscissae.

    ``F`` is any callable mapping ``t`` of shape ``(K,)`` to an array of
    shape ``(K, r, c)``.
    """
    try:
        vals = F(t)
    except MoFracError as exc:
        if isinstance(exc, FunctionEvalError):
            raise
        raise FunctionEvalError(f"function evaluation failed: {exc}") from exc
    vals = np.asarray(vals, dtype=complex)
    if vals.ndim != 3 or vals.shape[0] != len(t):
        raise FunctionEvalError(f"function returned shape {vals.shape} for {len(t)} abscissae")
    if not np.all(np.isfinite(vals)):
        k = int(np.argmax(~np.all(np.isfinite(vals.reshape(len(t), -1)), axis=1)))
        raise FunctionEvalError(f"function is not finite at t={t[k]!r}")
    return vals


def kernel_eigensystem(A) -> EigenSystem:
    """Eigendecomposition of a convolution order, checking Re(lambda) > 0."""
    eig = A if isinstance(A, EigenSystem) else eig_decompose(A)
    if np.any(eig.values.real <= 0):
        bad = eig.values[np.argmax(eig.values.real <= 0)]
        raise EigenvalueOutOfDomain(
            f"kernel order has eigenvalue {complex(bad)}; Re(lambda) > 0 is required for convergence"
        )
    return eig


def singular_convolution_many(A, F, xs, spec: QuadSpec = QuadSpec()):
    """``int_0^x (x - t)**(A - I) F(t) dt`` for every ``x`` in ``xs``.

    Integration is channel-wise in the eigenbasis of ``A``: channel ``i``
    carries the scalar kernel ``(x - t)**(lambda_i - 1)``.  Returns
    ``(values, errs, evaluations)`` with ``values`` of shape
    ``(len(xs), n, c)`` and per-abscissa error estimates.
    """
    eig = kernel_eigensystem(A)
    xs = _limits(xs)
    if getattr(F, "is_zero", False):
        if F.shape[0] != eig.n:
            raise_dim(eig.n, F.shape)
        return np.zeros((len(xs), eig.n, F.shape[1]), dtype=complex), np.zeros(len(xs)), 0

    def values(fl, fr):
        t = (xs[:, None] * fl[None, :]).reshape(-1)
        vals = evaluate_function(F, t)
        return vals.reshape((len(xs), len(fl)) + vals.shape[1:])

    return _convolve(eig, values, xs, spec)


def param_convolution_many(A, G, xs, spec: QuadSpec = QuadSpec()):
    """``int_0^x (x - t)**(A - I) G(t; x) dt`` for an integrand that depends on ``x``.

    ``G(xs, fl, fr)`` receives the outer abscissae and the node fractions
    ``t/x`` and ``1 - t/x`` and returns shape ``(len(xs), len(fl), n, c)``.
    """
    eig = kernel_eigensystem(A)
    xs = _limits(xs)

    def values(fl, fr):
        vals = np.asarray(G(xs, fl, fr), dtype=complex)
        if vals.ndim != 4 or vals.shape[:2] != (len(xs), len(fl)):
            raise FunctionEvalError(f"integrand returned shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise FunctionEvalError("integrand is not finite")
        return vals

    return _convolve(eig, values, xs, spec)


def _limits(xs) -> np.ndarray:
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    if np.any(~(xs > 0)):
        raise ValueError("integration limits must be positive")
    return xs


def _convolve(eig: EigenSystem, values, xs, spec):
    n = eig.n
    X = len(xs)
    omega = eig.values - 1.0
    lnx = np.log(xs)
    checked = []

    def integrand(fl, fr):
        vals = values(fl, fr)
        if not checked:
            if vals.shape[2] != n:
                raise_dim(n, vals.shape[2:])
            checked.append(True)
        Y = eig.to_eigenbasis(vals)
        # (x*fr)**omega * x, the Jacobian folded in
        logs = lnx[:, None] + np.log(fr)[None, :]
        kern = np.exp(logs[:, :, None] * omega[None, None, :]) * xs[:, None, None]
        return np.moveaxis(kern[..., None] * Y, 1, 0)

    right = np.broadcast_to(omega[:, None], (n, 1))
    val, err, evals, _ = de_integrate(integrand, spec, right_exp=right)
    out = eig.from_eigenbasis(val)
    scale = max_norm(eig.vectors) * max_norm(eig.vectors_inv) * n
    errs = np.max(err.reshape(X, -1), axis=1) * scale
    return out, errs, evals * X


def raise_dim(n, shape):
    raise DimensionMismatch(
        f"function has shape {tuple(shape)}; its row count must equal the order dimension {n}"
    )


def singular_convolution(A, F, x: float, spec: QuadSpec = QuadSpec()) -> QuadResult:
    vals, errs, evals = singular_convolution_many(A, F, [x], spec)
    return QuadResult(vals[0], float(errs[0]), evals)


def gamma_tail_quadrature(lam: complex, upper_cut: float, spec: QuadSpec = QuadSpec()):
    """``int_0^cut t**(lam - 1) exp(-t) dt`` with an error estimate.

    Returns ``(value, err_estimate)``.
    """
    lam = complex(lam)
    if not lam.real > 0:
        raise EigenvalueOutOfDomain(f"Re(lambda) > 0 required, got {lam!r}")
    if not upper_cut > 0:
        raise ValueError("upper_cut must be positive")
    L = float(upper_cut)
    lnL = math.log(L)

    def integrand(fl, fr):
        t = L * fl
        return L * np.exp((lam - 1.0) * (lnL + np.log(fl)) - t)

    val, err, _, _ = de_integrate(integrand, spec, left_exp=lam - 1.0)
    return complex(val), float(err)
