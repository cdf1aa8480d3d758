"""Zero-mean periodic sequences and the bilinear averaging functional.

``lambda_T(a, b) = (1 / 2T) * int_0^T A(t) B(t) dt`` where ``A`` and ``B``
are the primitives of ``a`` and ``b`` vanishing at 0. Two families are
provided: trigonometric ``phi_i`` and smooth bump-based ``psi_j``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numba
import numpy as np

__all__ = [
    "PeriodicFn",
    "phi",
    "psi",
    "lambda_T",
    "mean_value",
    "pairing",
    "lo",
    "psi_base",
    "psi_base_scalar",
    "psi_kappa",
    "QUAD_MIN_PANELS",
]

QUAD_MIN_PANELS = 256
_GL_ORDER = 8
_GL_X, _GL_W = np.polynomial.legendre.leggauss(_GL_ORDER)


@dataclass(frozen=True, eq=False)
class PeriodicFn:
    """A ``T``-periodic scalar function of time.

    Parameters
    ----------
    period : float
    fn : callable
        Vectorized evaluation.
    kind : {"trig", "bump", "custom"}
    index : int, optional
        Sequence index for ``trig`` and ``bump`` kinds.
    primitive : callable, optional
        Exact primitive vanishing at 0, used by quadrature when present.
    breakpoints : tuple of float
        Points in ``[0, T]`` where the function is not analytic; quadrature
        panels are aligned with them.
    """

    period: float
    fn: Callable
    kind: str = "custom"
    index: Optional[int] = None
    primitive: Optional[Callable] = None
    breakpoints: tuple = ()

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError("period must be positive")
        if self.kind not in ("trig", "bump", "custom"):
            raise ValueError(f"unknown kind {self.kind!r}")

    def __call__(self, t):
        return self.fn(np.asarray(t, dtype=float))

    def __add__(self, other: "PeriodicFn") -> "PeriodicFn":
        _check_period(self, other)
        prim = None
        if self.primitive is not None and other.primitive is not None:
            prim = lambda t: self.primitive(t) + other.primitive(t)
        return PeriodicFn(self.period, lambda t: self.fn(t) + other.fn(t), "custom", None, prim,
                          tuple(sorted(set(self.breakpoints) | set(other.breakpoints))))

    def scale(self, c: float) -> "PeriodicFn":
        prim = (lambda t: c * self.primitive(t)) if self.primitive is not None else None
        return PeriodicFn(self.period, lambda t: c * self.fn(t), "custom", None, prim, self.breakpoints)

    def __repr__(self):
        tag = f"{self.kind}{'' if self.index is None else self.index}"
        return f"PeriodicFn({tag}, T={self.period:g})"

    @classmethod
    def zero(cls, T: float = 1.0) -> "PeriodicFn":
        return cls(T, lambda t: np.zeros_like(np.asarray(t, dtype=float)), "custom", None,
                   lambda t: np.zeros_like(np.asarray(t, dtype=float)))


def _check_period(a: PeriodicFn, b: PeriodicFn):
    if abs(a.period - b.period) > 1e-15 * max(a.period, b.period):
        raise ValueError(f"mismatched periods {a.period} and {b.period}")


def phi(i: int, T: float = 1.0) -> PeriodicFn:
    """``phi_i(t) = (4 pi i / T) cos(2 pi i t / T)``."""
    if i < 1:
        raise ValueError("index must be >= 1")
    w = 2.0 * np.pi * i / T
    return PeriodicFn(T, lambda t: 2.0 * w * np.cos(w * t), "trig", i, lambda t: 2.0 * np.sin(w * t))


# -- bump sequence ----------------------------------------------------------
def _bump_half(s, half):
    # exp(-1/(s (half - s))) on (0, half), zero elsewhere
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = (s > 0.0) & (s < half)
    si = s[inside]
    out[inside] = np.exp(-1.0 / (si * (half - si)))
    return out


def psi_base(t, T: float = 1.0, kappa: float = 1.0):
    """Unnormalized-by-default base profile, odd-periodic with period ``T``.

    Positive bump on ``(0, T/2)``, its negative shifted copy on
    ``(T/2, T)``, scaled by ``kappa``.
    """
    t = np.asarray(t, dtype=float)
    s = np.mod(t, T)
    half = 0.5 * T
    return kappa * (_bump_half(s, half) - _bump_half(s - half, half))


@numba.njit(cache=True)
def psi_base_scalar(t, T, kappa):
    """Scalar compiled version of :func:`psi_base`."""
    s = t - T * np.floor(t / T)
    half = 0.5 * T
    if 0.0 < s < half:
        return kappa * np.exp(-1.0 / (s * (half - s)))
    s -= half
    if 0.0 < s < half:
        return -kappa * np.exp(-1.0 / (s * (half - s)))
    return 0.0


@lru_cache(maxsize=None)
def psi_kappa(T: float = 1.0) -> float:
    """Normalization making the base profile unit under ``lambda_T``."""
    raw = PeriodicFn(T, lambda t: psi_base(t, T), "bump", 1, None, (0.0, 0.5 * T, T))
    return float(1.0 / np.sqrt(lambda_T(raw, raw)))


def psi(j: int, T: float = 1.0) -> PeriodicFn:
    """Bump sequence ``psi_j(t) = 2^(j-1) psi_1(2^(j-1) t)``.

    ``psi_1`` is positive on ``(0, T/2)``, flat to all orders at ``0`` and
    ``T/2``, symmetric about ``T/4`` and odd-periodic under a half-period
    shift; it is normalized so ``lambda_T(psi_1, psi_1) = 1``.
    """
    if j < 1:
        raise ValueError("index must be >= 1")
    kappa = psi_kappa(float(T))
    s = 2.0 ** (j - 1)
    bps = tuple(float(x) for x in np.linspace(0.0, T, 2 * int(s) + 1))
    return PeriodicFn(T, lambda t: s * psi_base(s * np.asarray(t, dtype=float), T, kappa), "bump", j, None, bps)


# -- quadrature -------------------------------------------------------------
def _panel_edges(T: float, n: int, breakpoints) -> np.ndarray:
    edges = np.linspace(0.0, T, n + 1)
    if breakpoints:
        edges = np.unique(np.concatenate([edges, [b for b in breakpoints if 0.0 <= b <= T]]))
    return edges


def _nodes(edges):
    a, b = edges[:-1], edges[1:]
    mid, rad = 0.5 * (a + b), 0.5 * (b - a)
    x = mid[:, None] + rad[:, None] * _GL_X[None, :]
    w = rad[:, None] * _GL_W[None, :]
    return x, w


def _primitive_at_nodes(f: PeriodicFn, edges, x):
    """Primitive of ``f`` (vanishing at 0) at the quadrature nodes ``x``."""
    if f.primitive is not None:
        return f.primitive(x)
    a = edges[:-1]
    _, w = _nodes(edges)
    panel_int = np.sum(f(_nodes(edges)[0]) * w, axis=1)
    start = np.concatenate([[0.0], np.cumsum(panel_int)[:-1]])
    # partial panel integrals from a to each node
    rad = 0.5 * (x - a[:, None])
    mid = 0.5 * (x + a[:, None])
    sub = mid[:, :, None] + rad[:, :, None] * _GL_X[None, None, :]
    part = np.sum(f(sub) * _GL_W[None, None, :], axis=2) * rad
    return start[:, None] + part


def _lambda_fixed(a: PeriodicFn, b: PeriodicFn, n: int) -> float:
    T = a.period
    edges = _panel_edges(T, n, tuple(a.breakpoints) + tuple(b.breakpoints))
    x, w = _nodes(edges)
    A = _primitive_at_nodes(a, edges, x)
    B = A if b is a else _primitive_at_nodes(b, edges, x)
    return float(np.sum(A * B * w) / (2.0 * T))


def lambda_T(a: PeriodicFn, b: PeriodicFn, *, tol: float = 1e-10, max_panels: int = 1 << 14) -> float:
    """Averaging functional ``(1/2T) int_0^T A B`` with ``A' = a``, ``B' = b``.

    Composite Gauss-Legendre with panel doubling from 256 panels until two
    successive estimates differ by less than ``tol``.
    """
    _check_period(a, b)
    n = QUAD_MIN_PANELS
    prev = _lambda_fixed(a, b, n)
    while n < max_panels:
        n *= 2
        cur = _lambda_fixed(a, b, n)
        if abs(cur - prev) < tol:
            return cur
        prev = cur
    return prev


def mean_value(f: PeriodicFn, n: int = QUAD_MIN_PANELS) -> float:
    """``(1/T) int_0^T f`` by composite Gauss-Legendre."""
    edges = _panel_edges(f.period, n, f.breakpoints)
    x, w = _nodes(edges)
    return float(np.sum(f(x) * w) / f.period)


# -- index maps -------------------------------------------------------------
def pairing(a: int, b: int) -> int:
    """Cantor pairing shifted to 1-based arguments and values."""
    if a < 1 or b < 1:
        raise ValueError("pairing arguments must be >= 1")
    x, y = a - 1, b - 1
    return (x + y) * (x + y + 1) // 2 + y + 1


def lo(a: int, b: int, k: int) -> int:
    """Index of the oscillation shared by members ``a < b`` of a ``k``-family."""
    if not 1 <= a < b <= k:
        raise ValueError(f"lo needs 1 <= a < b <= k, got a={a}, b={b}, k={k}")
    return sum(k - j for j in range(1, a)) + (b - a)
