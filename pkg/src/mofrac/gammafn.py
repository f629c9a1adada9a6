"""Matrix gamma and beta functions.

The primary path applies the scalar gamma function to the eigenvalues of a
diagonalizable argument.  The defining integrals are kept as independent
quadrature oracles (``*_integral_oracle``) for testing.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import special

from .errors import DimensionMismatch, EigenvalueOutOfDomain, PoleAtEigenvalue, ToleranceUnmet
from .matcore import (
    EigenSystem,
    as_matrix,
    eig_decompose,
    max_norm,
    require_commuting,
    simultaneous_eig,
)
from .quad import QuadSpec, de_integrate, gamma_tail_quadrature

POLE_TOL = 1e-10


def _eig(A) -> EigenSystem:
    return A if isinstance(A, EigenSystem) else eig_decompose(A)


def near_pole(z) -> np.ndarray:
    """Mask of values within POLE_TOL of {0, -1, -2, ...}."""
    z = np.asarray(z, dtype=complex)
    k = np.round(z.real)
    return (k <= 0) & (np.abs(z - k) <= POLE_TOL)


def scalar_gamma(z):
    z = np.asarray(z, dtype=complex)
    poles = near_pole(z)
    if np.any(poles):
        raise PoleAtEigenvalue(z.reshape(-1)[np.argmax(poles.reshape(-1))])
    return special.gamma(z)


def scalar_rgamma(z):
    """Reciprocal gamma, exactly zero on the pole set."""
    z = np.asarray(z, dtype=complex)
    out = special.rgamma(z)
    return np.where(near_pole(z), 0.0, out)


def mat_gamma(A) -> np.ndarray:
    eig = _eig(A)
    return eig.apply(scalar_gamma(eig.values))


def mat_gamma_inv(A) -> np.ndarray:
    eig = _eig(A)
    return eig.apply(scalar_rgamma(eig.values))


def _require_positive(eig: EigenSystem, name: str):
    if np.any(eig.values.real <= 0):
        bad = eig.values[np.argmax(eig.values.real <= 0)]
        raise EigenvalueOutOfDomain(f"{name} has eigenvalue {complex(bad)}; Re(lambda) > 0 required")


def _truncation_bound(lam: complex, cut: float) -> float:
    # |Gamma(lam, cut)| <= cut^(Re lam - 1) e^-cut / (1 - |lam - 1|/cut) for cut > |lam - 1|
    r = abs(lam - 1) / cut
    if r >= 0.5:
        return math.inf
    return math.exp((lam.real - 1) * math.log(cut) - cut) / (1 - r)


def mat_gamma_integral_oracle(A, upper_cut: float = 40.0, tol: float = 1e-8) -> np.ndarray:
    """``int_0^cut t^(A-I) e^-t dt`` evaluated channel-wise by quadrature.

    Raises :class:`ToleranceUnmet` if the estimated quadrature plus
    truncation error exceeds ``tol`` (relative to ``max(1, |result|)``).
    """
    if upper_cut < 30:
        raise ValueError("upper_cut must be at least 30")
    eig = _eig(A)
    _require_positive(eig, "gamma argument")
    spec = QuadSpec(rel_tol=min(1e-10, tol / 10), abs_tol=1e-300)
    vals = []
    err = 0.0
    for lam in eig.values:
        v, e = gamma_tail_quadrature(lam, upper_cut, spec)
        vals.append(v)
        err = max(err, e + _truncation_bound(complex(lam), float(upper_cut)))
    out = eig.apply(np.array(vals))
    err *= max_norm(eig.vectors) * max_norm(eig.vectors_inv) * eig.n
    if not err <= tol * max(1.0, max_norm(out)):
        raise ToleranceUnmet(f"gamma integral error estimate {err:.3g} exceeds tolerance {tol:.3g}", err)
    return out


def _beta_operands(M, N):
    M = as_matrix(M, square=True)
    N = as_matrix(N, square=True)
    if M.shape != N.shape:
        raise DimensionMismatch(f"beta arguments differ in size: {M.shape} vs {N.shape}")
    require_commuting([M, N], ["M", "N"])
    return M, N


def mat_beta(M, N) -> np.ndarray:
    """``B(M, N) = Gamma(M) Gamma(N) Gamma^{-1}(M + N)`` for commuting arguments."""
    M, N = _beta_operands(M, N)
    eM, eN = eig_decompose(M), eig_decompose(N)
    _require_positive(eM, "M")
    _require_positive(eN, "N")
    return mat_gamma(eM) @ mat_gamma(eN) @ mat_gamma_inv(M + N)


def mat_beta_integral_oracle(M, N, tol: float = 1e-8) -> np.ndarray:
    """``int_0^1 (1-y)^(M-I) y^(N-I) dy`` channel-wise in a common eigenbasis."""
    M, N = _beta_operands(M, N)
    eig, (mu, nu) = simultaneous_eig([M, N])
    if np.any(mu.real <= 0) or np.any(nu.real <= 0):
        raise EigenvalueOutOfDomain("beta arguments need eigenvalues with positive real part")
    spec = QuadSpec(rel_tol=min(1e-10, tol / 10), abs_tol=1e-300)

    def integrand(fl, fr):
        lfl = np.log(fl)[:, None]
        lfr = np.log(fr)[:, None]
        return np.exp((mu[None, :] - 1) * lfr + (nu[None, :] - 1) * lfl)

    val, err, _, _ = de_integrate(integrand, spec, left_exp=nu - 1, right_exp=mu - 1)
    out = eig.apply(val)
    e = float(np.max(err)) * max_norm(eig.vectors) * max_norm(eig.vectors_inv) * eig.n
    if not e <= tol * max(1.0, max_norm(out)):
        raise ToleranceUnmet(f"beta integral error estimate {e:.3g} exceeds tolerance {tol:.3g}", e)
    return out
