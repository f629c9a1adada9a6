"""Dense complex matrices, eigendecomposition and holomorphic matrix functions.

Matrices are plain ``numpy`` arrays of dtype ``complex128``.  A function of a
diagonalizable matrix is defined through its eigendecomposition,
``f(A) = V diag(f(lambda_i)) V^{-1}``, which is how every matrix power,
matrix gamma and matrix exponential-of-a-kernel in the package is built.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    InputError,
    NonDiagonalizable,
    NonPositiveBase,
    NonSquare,
    NotCommuting,
    PoleAtEigenvalue,
)

COND_CEILING = 1e8
DEFAULT_EIG_TOL = 1e-9
SORT_TIE = 1e-12


def max_norm(A) -> float:
    """Entrywise maximum norm (the norm used by every tolerance check)."""
    A = np.asarray(A)
    if A.size == 0:
        return 0.0
    return float(np.max(np.abs(A)))


def as_matrix(A, *, square: bool = False) -> np.ndarray:
    M = np.array(A, dtype=complex)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.ndim != 2 or M.shape[0] == 0 or M.shape[1] == 0:
        raise DimensionMismatch(f"expected a non-empty 2-D matrix, got shape {M.shape}")
    if square and M.shape[0] != M.shape[1]:
        raise NonSquare(f"expected a square matrix, got {M.shape[0]}x{M.shape[1]}")
    return M


@dataclass(frozen=True)
class EigenSystem:
    vectors: np.ndarray
    values: np.ndarray
    vectors_inv: np.ndarray
    cond_estimate: float

    @property
    def n(self) -> int:
        return len(self.values)

    def apply(self, fvals) -> np.ndarray:
        """Rebuild ``V diag(fvals) V^{-1}``.

        ``fvals`` may carry leading batch axes: shape ``(..., n)`` gives
        ``(..., n, n)``.
        """
        fvals = np.asarray(fvals, dtype=complex)
        return self.vectors @ (fvals[..., :, None] * self.vectors_inv)

    def to_eigenbasis(self, F) -> np.ndarray:
        """``V^{-1} F`` for ``F`` of shape ``(..., n, c)``."""
        return self.vectors_inv @ F

    def from_eigenbasis(self, Y) -> np.ndarray:
        return self.vectors @ Y

    def reconstruct(self) -> np.ndarray:
        return self.apply(self.values)


def eig_decompose(A, tol: float = DEFAULT_EIG_TOL, cond_ceiling: float = COND_CEILING) -> EigenSystem:
    """Eigendecomposition of a diagonalizable square matrix.

    Eigenvalues come back sorted by real part, then imaginary part.  The
    decomposition is rejected with :class:`NonDiagonalizable` when the
    eigenvector matrix is too ill-conditioned or ``V diag(l) V^{-1}`` fails
    to reproduce ``A`` to ``tol`` (relative, max-norm).
    """
    A = as_matrix(A, square=True)
    if not np.all(np.isfinite(A)):
        raise InputError("matrix has non-finite entries")
    n = A.shape[0]
    scale = max_norm(A)
    if scale == 0.0:
        eye = np.eye(n, dtype=complex)
        return EigenSystem(eye, np.zeros(n, dtype=complex), eye.copy(), 1.0)
    # already-diagonal input: exact decomposition, keeps repeated eigenvalues clean
    if max_norm(A - np.diag(np.diag(A))) == 0.0:
        vals = np.diag(A).copy()
        order = np.lexsort((vals.imag, vals.real))
        P = np.eye(n, dtype=complex)[:, order]
        return EigenSystem(P, vals[order], P.T.copy(), 1.0)

    vals, V = np.linalg.eig(A)
    # real parts equal up to rounding count as ties
    key = np.round(vals.real / (scale * SORT_TIE), 0)
    order = np.lexsort((vals.imag, key))
    vals = vals[order]
    V = V[:, order]
    cond = float(np.linalg.cond(V))
    if not math.isfinite(cond) or cond > cond_ceiling:
        raise NonDiagonalizable(
            f"eigenvector matrix condition number {cond:.3g} exceeds ceiling {cond_ceiling:.3g}"
        )
    Vinv = np.linalg.inv(V)
    eig = EigenSystem(V, vals, Vinv, cond)
    resid = max_norm(eig.reconstruct() - A)
    if resid > tol * scale:
        raise NonDiagonalizable(f"reconstruction residual {resid:.3g} exceeds {tol:.3g}*||A||")
    return eig


def _ensure_eig(A, eig: EigenSystem | None) -> EigenSystem:
    return eig if eig is not None else eig_decompose(A)


def holomorphic_apply(f: Callable, A, eig: EigenSystem | None = None) -> np.ndarray:
    """``f(A)`` for diagonalizable ``A`` via its eigendecomposition.

    ``f`` is applied to the array of eigenvalues.  A non-finite value at
    some eigenvalue raises :class:`PoleAtEigenvalue` naming that eigenvalue.
    """
    eig = _ensure_eig(A, eig)
    with np.errstate(all="ignore"):
        fv = np.asarray(f(eig.values.copy()), dtype=complex)
    if fv.shape != eig.values.shape:
        fv = np.broadcast_to(fv, eig.values.shape)
    bad = ~np.isfinite(fv)
    if np.any(bad):
        raise PoleAtEigenvalue(eig.values[np.argmax(bad)])
    return eig.apply(fv)


def scalar_pow_matrix(s: float, A, eig: EigenSystem | None = None) -> np.ndarray:
    """``s**A = exp(A ln s)`` for a strictly positive real base."""
    s_c = complex(s)
    if s_c.imag != 0.0 or not s_c.real > 0.0 or not math.isfinite(s_c.real):
        raise NonPositiveBase(f"base must be a positive real number, got {s!r}")
    ln_s = math.log(s_c.real)
    return holomorphic_apply(lambda lam: np.exp(lam * ln_s), A, eig)


def pow_series(eig: EigenSystem, s) -> np.ndarray:
    """``s_k**A`` for a 1-D array of positive reals, shape ``(len(s), n, n)``."""
    s = np.asarray(s, dtype=float)
    return eig.apply(np.exp(np.log(s)[:, None] * eig.values[None, :]))


def commute_check(A, B, rel_tol: float = 1e-10) -> bool:
    A = as_matrix(A, square=True)
    B = as_matrix(B, square=True)
    if A.shape != B.shape:
        raise DimensionMismatch(f"cannot compare {A.shape} with {B.shape}")
    comm = A @ B - B @ A
    c = max_norm(comm)
    if c == 0.0:
        return True
    return c <= rel_tol * max_norm(A) * max_norm(B)


def require_commuting(mats: Sequence, names: Sequence[str] | None = None, rel_tol: float = 1e-10) -> None:
    names = list(names) if names is not None else [f"#{i}" for i in range(len(mats))]
    for i in range(len(mats)):
        for j in range(i + 1, len(mats)):
            if not commute_check(mats[i], mats[j], rel_tol):
                raise NotCommuting(f"matrices {names[i]} and {names[j]} do not commute")


# fixed irrational-ish weights for the generic combination
_COMBO_WEIGHTS = (1.0, 0.7548776662466927, 0.5698402909980532, 0.4301597090019468)


def simultaneous_eig(mats: Sequence, tol: float = 1e-8):
    """Common eigenbasis of pairwise-commuting diagonalizable matrices.

    Returns ``(eig, diagonals)`` where ``eig`` decomposes a generic linear
    combination and ``diagonals[k]`` holds the eigenvalues of ``mats[k]``
    in that basis.
    """
    mats = [as_matrix(m, square=True) for m in mats]
    n = mats[0].shape[0]
    for m in mats:
        if m.shape != (n, n):
            raise DimensionMismatch("matrices differ in size")
    combo = sum(_COMBO_WEIGHTS[k % len(_COMBO_WEIGHTS)] * (1 + 0.1 * (k // 4)) * m for k, m in enumerate(mats))
    eig = eig_decompose(combo)
    diagonals = []
    for m in mats:
        D = eig.vectors_inv @ m @ eig.vectors
        off = D - np.diag(np.diag(D))
        if max_norm(off) > tol * max(max_norm(m), 1.0) * eig.cond_estimate:
            raise NotCommuting("matrices are not simultaneously diagonalizable")
        diagonals.append(np.diag(D).copy())
    return eig, diagonals


def matrix_from_json(obj) -> np.ndarray:
    """Parse ``{"n_rows", "n_cols", "data": [[re, im], ...]}`` (row-major)."""
    if not isinstance(obj, dict):
        raise InputError("matrix must be a JSON object")
    try:
        r = obj["n_rows"]
        c = obj["n_cols"]
        data = obj["data"]
    except KeyError as exc:
        raise InputError(f"matrix object is missing key {exc.args[0]!r}") from None
    if not (isinstance(r, int) and isinstance(c, int)) or isinstance(r, bool) or isinstance(c, bool):
        raise InputError("n_rows and n_cols must be integers")
    if r <= 0 or c <= 0:
        raise InputError("n_rows and n_cols must be positive")
    if not isinstance(data, list) or len(data) != r * c:
        got = len(data) if isinstance(data, list) else type(data).__name__
        raise InputError(f"data must hold n_rows*n_cols = {r * c} entries, got {got}")
    out = np.empty(r * c, dtype=complex)
    for k, pair in enumerate(data):
        if (
            not isinstance(pair, list)
            or len(pair) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in pair)
        ):
            raise InputError(f"data[{k}] must be a [re, im] pair of numbers")
        out[k] = complex(pair[0], pair[1])
    return out.reshape(r, c)


def matrix_to_json(A) -> dict:
    A = as_matrix(A)
    return {
        "n_rows": int(A.shape[0]),
        "n_cols": int(A.shape[1]),
        "data": [[float(z.real), float(z.imag)] for z in A.reshape(-1)],
    }
