"""Chebyshev sampling of matrix-valued functions for nested operators.

Results of fractional integrals behave like ``u**P * smooth(u)`` near the
origin, with ``P`` the accumulated integration order.  Interpolating the raw
values would converge only algebraically, so the sampler strips the known
leading power first: it interpolates ``h(u) = u**(-P) g(u)`` barycentrically
on first-kind Chebyshev nodes and multiplies ``u**P`` back on evaluation.
"""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .matcore import EigenSystem, eig_decompose, max_norm, pow_series


def chebyshev_nodes(n: int, length: float) -> np.ndarray:
    j = np.arange(n)
    x = np.cos((2 * j + 1) * math.pi / (2 * n))[::-1]
    return 0.5 * length * (1.0 + x)


def _bary_weights(n: int) -> np.ndarray:
    j = np.arange(n)
    return ((-1.0) ** j * np.sin((2 * j + 1) * math.pi / (2 * n)))[::-1]


class ChebyshevSample:
    """Callable interpolant ``t -> t**P h(t)`` on ``(0, length]``."""

    def __init__(self, nodes: np.ndarray, h_values: np.ndarray, power: EigenSystem | None):
        self.nodes = nodes
        self.h_values = h_values
        self.power = power
        self.weights = _bary_weights(len(nodes))
        self.shape = h_values.shape[1:]
        self.is_zero = bool(max_norm(h_values) == 0.0)

    @classmethod
    def sample(cls, fn: Callable[[np.ndarray], np.ndarray], length: float, n: int = 64, power=None):
        """Sample ``fn`` (vectorized, returns ``(K, r, c)``) on ``n`` nodes over ``(0, length]``.

        ``power`` is the leading-order matrix ``P`` (or ``None`` for no factoring).
        """
        nodes = chebyshev_nodes(n, length)
        g = np.asarray(fn(nodes), dtype=complex)
        peig = None
        if power is not None:
            peig = power if isinstance(power, EigenSystem) else eig_decompose(power)
            if max_norm(peig.values) == 0.0:
                peig = None
        h = _strip(peig, nodes, g)
        return cls(nodes, h, peig)

    def interpolate_h(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float).reshape(-1)
        d = t[:, None] - self.nodes[None, :]
        exact = d == 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            c = self.weights[None, :] / d
        hit = np.any(exact, axis=1)
        c[hit] = exact[hit].astype(float)
        c /= np.sum(c, axis=1, keepdims=True)
        return np.einsum("kj,jrc->krc", c, self.h_values)

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float).reshape(-1)
        h = self.interpolate_h(t)
        if self.power is None:
            return h
        out = np.zeros_like(h)
        pos = t > 0
        if np.any(pos):
            out[pos] = pow_series(self.power, t[pos]) @ h[pos]
        return out


def _strip(peig, nodes, g):
    if peig is None:
        return g
    inv = peig.apply(np.exp(-np.log(nodes)[:, None] * peig.values[None, :]))
    return inv @ g
