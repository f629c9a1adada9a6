"""Matrix-order Riemann-Liouville integral and derivative.

``J^M F(x) = Gamma^{-1}(M) int_0^x (x - t)^(M - I) F(t) dt`` for Re(lambda_M) > 0,
``D^M F(x) = Gamma^{-1}(I - M) d/dx int_0^x (x - t)^(-M) F(t) dt`` for
0 < Re(lambda_M) < 1.

``F`` is any callable that maps a 1-D array of abscissae to an array of shape
``(K, n, c)``: a :class:`~mofrac.exprfn.MatrixFunction`, a
:class:`~mofrac.interp.ChebyshevSample` or a plain function.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EigenvalueOutOfDomain, StencilOutOfDomain
from .gammafn import mat_gamma_inv
from .interp import ChebyshevSample
from .matcore import EigenSystem, as_matrix, eig_decompose, max_norm, require_commuting
from .quad import QuadResult, QuadSpec, evaluate_function, singular_convolution_many

COMMUTE_TOL = 1e-10

# central stencils on offsets -2..2, in units of 1/h
_D2 = np.array([0.0, -0.5, 0.0, 0.5, 0.0])
_D4 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_OFFSETS = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])


@dataclass(frozen=True)
class OperatorConfig:
    quad: QuadSpec = field(default_factory=QuadSpec)
    fd_step_scale: float = 1e-3
    fd_order: int = 4
    cheb_nodes: int = 64

    def __post_init__(self):
        if not 0 < self.fd_step_scale <= 0.1:
            raise ValueError("fd_step_scale must lie in (0, 0.1]")
        if self.fd_order not in (2, 4):
            raise ValueError("fd_order must be 2 or 4")
        if self.cheb_nodes < 4:
            raise ValueError("cheb_nodes must be at least 4")

    def step(self, x):
        return np.maximum(1e-4, self.fd_step_scale * np.asarray(x, dtype=float))


DEFAULT_CONFIG = OperatorConfig()


def _order_eig(M) -> EigenSystem:
    return M if isinstance(M, EigenSystem) else eig_decompose(M)


def integral_eig(M) -> EigenSystem:
    eig = _order_eig(M)
    if np.any(eig.values.real <= 0):
        bad = eig.values[np.argmax(eig.values.real <= 0)]
        raise EigenvalueOutOfDomain(f"integral order has eigenvalue {complex(bad)}; Re(lambda) > 0 required")
    return eig


def derivative_eig(M) -> EigenSystem:
    eig = _order_eig(M)
    bad = (eig.values.real <= 0) | (eig.values.real >= 1)
    if np.any(bad):
        lam = eig.values[np.argmax(bad)]
        raise EigenvalueOutOfDomain(
            f"derivative order has eigenvalue {complex(lam)}; 0 < Re(lambda) < 1 required"
        )
    return eig


def _gamma_scale(G, n):
    return max_norm(G) * n


def j_m_many(M, F, xs, cfg: OperatorConfig = DEFAULT_CONFIG):
    """Matrix-order integral at several abscissae: ``(values, errs, evaluations)``."""
    eig = integral_eig(M)
    conv, errs, evals = singular_convolution_many(eig, F, xs, cfg.quad)
    G = mat_gamma_inv(eig)
    return G @ conv, errs * _gamma_scale(G, eig.n), evals


def j_m(M, F, x: float, cfg: OperatorConfig = DEFAULT_CONFIG) -> QuadResult:
    vals, errs, evals = j_m_many(M, F, [x], cfg)
    return QuadResult(vals[0], float(errs[0]), evals)


def d_m_many(M, F, xs, cfg: OperatorConfig = DEFAULT_CONFIG, *, step=None):
    """Matrix-order derivative at several abscissae: ``(values, errs, evaluations)``.

    The outer ``d/dx`` is a central finite difference of the convolution
    integral; all stencil points are integrated together at one common
    refinement level so the quadrature error is smooth across the stencil.
    ``step`` overrides the stencil step per abscissa.
    """
    eig = derivative_eig(M)
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    h = cfg.step(xs) if step is None else np.broadcast_to(np.asarray(step, dtype=float), xs.shape)
    if np.any(xs - 2 * h <= 0):
        k = int(np.argmax(xs - 2 * h <= 0))
        raise StencilOutOfDomain(f"x={float(xs[k])} is too close to 0 for a stencil of step {float(h[k])}")
    comp = EigenSystem(eig.vectors, 1.0 - eig.values, eig.vectors_inv, eig.cond_estimate)
    pts = (xs[:, None] + _OFFSETS[None, :] * h[:, None]).reshape(-1)
    conv, qerr, evals = singular_convolution_many(comp, F, pts, cfg.quad)
    conv = conv.reshape((len(xs), len(_OFFSETS)) + conv.shape[1:])
    qerr = qerr.reshape(len(xs), len(_OFFSETS))
    d2 = np.einsum("s,xsrc->xrc", _D2, conv) / h[:, None, None]
    d4 = np.einsum("s,xsrc->xrc", _D4, conv) / h[:, None, None]
    gap = np.max(np.abs(d4 - d2).reshape(len(xs), -1), axis=1)
    if cfg.fd_order == 4:
        deriv, coef = d4, np.abs(_D4).sum()
        fd_err = gap * (h / xs) ** 2
    else:
        deriv, coef = d2, np.abs(_D2).sum()
        fd_err = gap
    G = mat_gamma_inv(comp)
    errs = (np.max(qerr, axis=1) * coef / h + fd_err) * _gamma_scale(G, eig.n)
    return G @ deriv, errs, evals


def d_m(M, F, x: float, cfg: OperatorConfig = DEFAULT_CONFIG) -> QuadResult:
    vals, errs, evals = d_m_many(M, F, [x], cfg)
    return QuadResult(vals[0], float(errs[0]), evals)


# --------------------------------------------------------------------------- composition


def sample_extent(xs, cfg: OperatorConfig) -> float:
    """Right end of the sampling interval covering every derivative stencil at ``xs``."""
    xmax = float(np.max(xs))
    return xmax + 2.0 * float(cfg.step(xmax)) * 1.01


def sampled_integral(N, F, length: float, cfg: OperatorConfig = DEFAULT_CONFIG, power=None):
    """``J^N F`` sampled on Chebyshev nodes over ``(0, length]`` as a callable.

    The leading power ``u**N`` (plus ``power`` if given) is factored out
    before interpolation.
    """
    N = as_matrix(N, square=True)
    P = N if power is None else N + as_matrix(power, square=True)
    return ChebyshevSample.sample(lambda u: j_m_many(N, F, u, cfg)[0], length, cfg.cheb_nodes, power=P)


def _report(xs, lhs, rhs, errs):
    diff = np.abs(lhs - rhs).reshape(len(xs), -1)
    res = np.max(diff, axis=1)
    return {
        "xs": [float(x) for x in xs],
        "residuals": [float(r) for r in res],
        "max_residual": float(np.max(res)),
        "error_budget": float(np.max(errs)),
    }


def _values(F, xs):
    return evaluate_function(F, np.asarray(xs, dtype=float))


def verify_semigroup(M, N, F, xs, cfg: OperatorConfig = DEFAULT_CONFIG) -> dict:
    """Residual of ``J^M J^N F = J^(M+N) F`` on ``xs``."""
    M = as_matrix(M, square=True)
    N = as_matrix(N, square=True)
    require_commuting([M, N], ["M", "N"], COMMUTE_TOL)
    integral_eig(M)
    integral_eig(N)
    xs = np.asarray(xs, dtype=float)
    inner = sampled_integral(N, F, float(np.max(xs)), cfg)
    lhs, e1, _ = j_m_many(M, inner, xs, cfg)
    rhs, e2, _ = j_m_many(M + N, F, xs, cfg)
    return _report(xs, lhs, rhs, e1 + e2)


def verify_inverse(M, F, xs, cfg: OperatorConfig = DEFAULT_CONFIG) -> dict:
    """Residual of ``D^M J^M F = F`` on ``xs``."""
    M = as_matrix(M, square=True)
    derivative_eig(M)
    xs = np.asarray(xs, dtype=float)
    inner = sampled_integral(M, F, sample_extent(xs, cfg), cfg)
    lhs, e1, _ = d_m_many(M, inner, xs, cfg)
    return _report(xs, lhs, _values(F, xs), e1)


def verify_mixed(M, N, F, xs, cfg: OperatorConfig = DEFAULT_CONFIG) -> dict:
    """Residual of ``D^M J^N F = J^(N-M) F`` on ``xs`` (``F`` itself when ``N = M``)."""
    M = as_matrix(M, square=True)
    N = as_matrix(N, square=True)
    require_commuting([M, N], ["M", "N"], COMMUTE_TOL)
    derivative_eig(M)
    integral_eig(N)
    diff = N - M
    equal = max_norm(diff) <= 1e-14 * max(max_norm(N), 1.0)
    if not equal:
        integral_eig(diff)
    xs = np.asarray(xs, dtype=float)
    inner = sampled_integral(N, F, sample_extent(xs, cfg), cfg)
    lhs, e1, _ = d_m_many(M, inner, xs, cfg)
    if equal:
        rhs, e2 = _values(F, xs), np.zeros(len(xs))
    else:
        rhs, e2, _ = j_m_many(diff, F, xs, cfg)
    return _report(xs, lhs, rhs, e1 + e2)


def composition_defect(M, N, F, xs, cfg: OperatorConfig = DEFAULT_CONFIG) -> dict:
    """``|D^M D^N F - D^(M+N) F|`` on ``xs``; not zero in general."""
    M = as_matrix(M, square=True)
    N = as_matrix(N, square=True)
    require_commuting([M, N], ["M", "N"], COMMUTE_TOL)
    derivative_eig(M)
    derivative_eig(N)
    derivative_eig(M + N)
    xs = np.asarray(xs, dtype=float)
    # the inner derivative is needed down to the first Chebyshev node, so the
    # stencil shrinks with u there
    inner = ChebyshevSample.sample(
        lambda u: d_m_many(N, F, u, cfg, step=np.minimum(cfg.step(u), u / 4))[0],
        sample_extent(xs, cfg),
        cfg.cheb_nodes,
    )
    lhs, e1, _ = d_m_many(M, inner, xs, cfg)
    rhs, e2, _ = d_m_many(M + N, F, xs, cfg)
    return _report(xs, lhs, rhs, e1 + e2)
