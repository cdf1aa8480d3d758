"""Time signals built as polynomials in a few primitive atoms.

Control laws are finite sums of monomials ``c * prod(atom_i(t) ** p_i)``.
Atoms are time-scaled oscillations (``phi`` or ``psi`` sequence members)
and cubic splines. Keeping this structure explicit lets the same law be
evaluated with numpy, compiled to flat arrays for the accelerated
integrator, and serialized for experiment records.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Tuple

import numpy as np

from .sequences import psi_base, psi_kappa

__all__ = ["Trig", "Bump", "Spline", "Signal", "CompiledSignals", "compile_signals"]

KIND_TRIG, KIND_BUMP, KIND_SPLINE = 1, 2, 3
_uid = itertools.count()


class _Atom:
    nonnegative = False

    def key(self) -> tuple:
        raise NotImplementedError

    def __lt__(self, other):
        return self.key() < other.key()


@dataclass(frozen=True)
class Trig(_Atom):
    """``(1/eps) * phi_index(t / eps)``."""

    index: int
    eps: float
    period: float = 1.0

    def key(self):
        return (KIND_TRIG, self.index, self.eps, self.period, 0)

    def __call__(self, t):
        w = 2.0 * np.pi * self.index / self.period
        return (2.0 * w / self.eps) * np.cos(w * np.asarray(t, dtype=float) / self.eps)

    def record(self):
        return {"atom": "phi", "index": self.index, "eps": self.eps, "period": self.period}


@dataclass(frozen=True)
class Bump(_Atom):
    """``(1/eps) * psi_index(t / eps)``, optionally restricted to one sign.

    ``part = +1`` keeps ``max(psi, 0)``, ``part = -1`` keeps ``max(-psi, 0)``
    and ``part = 0`` keeps the signed value.
    """

    index: int
    eps: float
    period: float = 1.0
    part: int = 0

    @property
    def nonnegative(self):
        return self.part != 0

    def key(self):
        return (KIND_BUMP, self.index, self.eps, self.period, self.part)

    def __call__(self, t):
        s = 2.0 ** (self.index - 1)
        kappa = psi_kappa(float(self.period))
        v = (s / self.eps) * psi_base(s * np.asarray(t, dtype=float) / self.eps, self.period, kappa)
        if self.part:
            v = np.maximum(self.part * v, 0.0)
        return v

    def record(self):
        return {"atom": "psi", "index": self.index, "eps": self.eps, "period": self.period, "part": self.part}


class Spline(_Atom):
    """Piecewise cubic on breakpoints ``x`` with coefficient rows ``c``.

    Matches the ``scipy.interpolate.PPoly`` layout: on ``[x_i, x_{i+1}]``
    the value is ``sum_m c[m, i] (t - x_i) ** (3 - m)``. Outside the
    breakpoints the end value is held constant.
    """

    __slots__ = ("x", "c", "nonnegative", "label", "uid")

    def __init__(self, x, c, nonnegative: bool = False, label: str = ""):
        self.x = np.asarray(x, dtype=float)
        self.c = np.asarray(c, dtype=float)
        if self.c.shape != (4, self.x.size - 1):
            raise ValueError("spline coefficients must have shape (4, len(x) - 1)")
        self.nonnegative = nonnegative
        self.label = label
        self.uid = next(_uid)

    @classmethod
    def from_ppoly(cls, pp, nonnegative: bool = False, label: str = "") -> "Spline":
        return cls(pp.x, pp.c, nonnegative, label)

    def key(self):
        return (KIND_SPLINE, 0, 0.0, 0.0, self.uid)

    def __call__(self, t):
        t = np.clip(np.asarray(t, dtype=float), self.x[0], self.x[-1])
        i = np.clip(np.searchsorted(self.x, t, side="right") - 1, 0, self.x.size - 2)
        dx = t - self.x[i]
        c = self.c
        v = ((c[0, i] * dx + c[1, i]) * dx + c[2, i]) * dx + c[3, i]
        if self.nonnegative:
            v = np.maximum(v, 0.0)
        return v

    def record(self):
        return {"atom": "spline", "label": self.label, "breaks": self.x.tolist(), "coefficients": self.c.tolist(),
                "nonnegative": self.nonnegative}

    def __repr__(self):
        return f"Spline({self.label or self.uid}, {self.x.size} breaks)"


Monomial = Tuple[Tuple[_Atom, float], ...]


def _mono_key(m: Monomial):
    return tuple((a.key(), p) for a, p in m)


def _mono_mul(m1: Monomial, m2: Monomial) -> Monomial:
    powers: Dict[_Atom, float] = {}
    order = []
    for a, p in itertools.chain(m1, m2):
        if a not in powers:
            powers[a] = 0.0
            order.append(a)
        powers[a] += p
    return tuple(sorted(((a, powers[a]) for a in order if powers[a] != 0.0), key=lambda ap: ap[0].key()))


def _atom_power(v, p):
    if p == 1.0:
        return v
    if float(p).is_integer():
        return v ** int(p)
    return np.where(v > 0.0, np.abs(v) ** p, 0.0)


class Signal:
    """Finite sum of monomials in atoms, with real coefficients.

    Immutable; arithmetic returns new signals.
    """

    __slots__ = ("_terms",)

    def __init__(self, terms: Dict[Monomial, float] | None = None):
        clean = {}
        for m, c in (terms or {}).items():
            if c != 0.0:
                clean[m] = clean.get(m, 0.0) + float(c)
        object.__setattr__(self, "_terms", {m: c for m, c in clean.items() if c != 0.0})

    def __setattr__(self, key, value):
        raise AttributeError("Signal is immutable")

    # -- constructors ----------------------------------------------------
    @classmethod
    def const(cls, c: float) -> "Signal":
        return cls({(): float(c)})

    @classmethod
    def of(cls, atom: _Atom, coef: float = 1.0) -> "Signal":
        return cls({((atom, 1.0),): coef})

    @classmethod
    def zero(cls) -> "Signal":
        return cls()

    # -- inspection -------------------------------------------------------
    @property
    def terms(self):
        return sorted(self._terms.items(), key=lambda mc: _mono_key(mc[0]))

    def __len__(self):
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def is_constant(self) -> bool:
        return all(m == () for m in self._terms)

    def constant_value(self) -> float:
        if not self.is_constant():
            raise ValueError("signal is not constant")
        return self._terms.get((), 0.0)

    def atoms(self) -> list:
        seen = {}
        for m in self._terms:
            for a, _ in m:
                seen[a.key()] = a
        return [seen[k] for k in sorted(seen)]

    def eps_min(self) -> float:
        vals = [a.eps for a in self.atoms() if isinstance(a, (Trig, Bump))]
        return min(vals) if vals else math.inf

    # -- arithmetic -------------------------------------------------------
    def __add__(self, other):
        if not isinstance(other, Signal):
            other = Signal.const(other)
        out = dict(self._terms)
        for m, c in other._terms.items():
            out[m] = out.get(m, 0.0) + c
        return Signal(out)

    __radd__ = __add__

    def __neg__(self):
        return Signal({m: -c for m, c in self._terms.items()})

    def __sub__(self, other):
        return self + (-other if isinstance(other, Signal) else -float(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Signal):
            c = float(other)
            return Signal({m: c * v for m, v in self._terms.items()})
        out: Dict[Monomial, float] = {}
        for (m1, c1), (m2, c2) in itertools.product(self.terms, other.terms):
            m = _mono_mul(m1, m2)
            out[m] = out.get(m, 0.0) + c1 * c2
        return Signal(out)

    __rmul__ = __mul__

    def sqrt(self) -> "Signal":
        """Square root of a single nonnegative monomial over nonnegative atoms."""
        if self.is_zero():
            return Signal()
        if len(self._terms) != 1:
            raise ValueError("square roots are only defined for single monomials")
        (m, c), = self._terms.items()
        if c < 0:
            raise ValueError("square root of a negative coefficient")
        for a, p in m:
            if not a.nonnegative and (p / 2) % 2 != 0:
                raise ValueError(f"square root needs a nonnegative atom, got {a!r}")
        return Signal({tuple((a, p / 2.0) for a, p in m): math.sqrt(c)})

    def prune(self, tol: float) -> "Signal":
        return Signal({m: c for m, c in self._terms.items() if abs(c) > tol})

    # -- evaluation -------------------------------------------------------
    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        cache = {}
        total = np.zeros_like(t)
        for m, c in self.terms:
            val = np.full_like(t, c)
            for a, p in m:
                key = a.key()
                if key not in cache:
                    cache[key] = a(t)
                val = val * _atom_power(cache[key], p)
            total = total + val
        return total

    def record(self) -> list:
        out = []
        for m, c in self.terms:
            out.append({"coef": c, "factors": [dict(a.record(), power=p) for a, p in m]})
        return out

    def __repr__(self):
        if self.is_zero():
            return "Signal(0)"
        parts = []
        for m, c in self.terms:
            f = "*".join(f"{_short(a)}^{p:g}" if p != 1 else _short(a) for a, p in m)
            parts.append(f"{c:.6g}" + (f"*{f}" if f else ""))
        return "Signal(" + " + ".join(parts) + ")"


def _short(a):
    if isinstance(a, Trig):
        return f"phi{a.index}[{a.eps:.3g}]"
    if isinstance(a, Bump):
        sign = {0: "", 1: "+", -1: "-"}[a.part]
        return f"psi{a.index}{sign}[{a.eps:.3g}]"
    return repr(a)


@dataclass(frozen=True)
class CompiledSignals:
    """Flat-array form of a list of signals (one per channel)."""

    kind: np.ndarray
    index: np.ndarray
    part: np.ndarray
    eps: np.ndarray
    period: np.ndarray
    kappa: np.ndarray
    sp_start: np.ndarray
    sp_breaks: np.ndarray
    sp_coefs: np.ndarray
    sp_nonneg: np.ndarray
    coef: np.ndarray
    channel: np.ndarray
    fstart: np.ndarray
    fatom: np.ndarray
    fpow: np.ndarray
    n_channels: int

    def as_tuple(self):
        return (self.kind, self.index, self.part, self.eps, self.period, self.kappa, self.sp_start,
                self.sp_breaks, self.sp_coefs, self.sp_nonneg, self.coef, self.channel, self.fstart,
                self.fatom, self.fpow)


def compile_signals(signals: Iterable[Signal]) -> CompiledSignals:
    signals = list(signals)
    atoms = {}
    for s in signals:
        for a in s.atoms():
            atoms[a.key()] = a
    keys = sorted(atoms)
    pos = {k: i for i, k in enumerate(keys)}
    na = len(keys)
    kind = np.zeros(na, np.int64)
    index = np.zeros(na, np.int64)
    part = np.zeros(na, np.int64)
    eps = np.ones(na)
    period = np.ones(na)
    kappa = np.ones(na)
    sp_start = np.zeros(na + 1, np.int64)
    sp_nonneg = np.zeros(na, np.int64)
    breaks, coefs = [], []
    total = 0
    for i, k in enumerate(keys):
        a = atoms[k]
        if isinstance(a, Trig):
            kind[i], index[i], eps[i], period[i] = KIND_TRIG, a.index, a.eps, a.period
        elif isinstance(a, Bump):
            kind[i], index[i], eps[i], period[i], part[i] = KIND_BUMP, a.index, a.eps, a.period, a.part
            kappa[i] = psi_kappa(float(a.period))
        else:
            kind[i] = KIND_SPLINE
            sp_nonneg[i] = int(a.nonnegative)
            breaks.append(a.x)
            coefs.append(a.c)
        if kind[i] == KIND_SPLINE:
            total += a.x.size
        sp_start[i + 1] = total
    sp_breaks = np.concatenate(breaks) if breaks else np.zeros(0)
    # pad each coefficient block with one dummy column so offsets match breaks
    sp_coefs = (np.concatenate([np.hstack([c, np.zeros((4, 1))]) for c in coefs], axis=1)
                if coefs else np.zeros((4, 0)))
    coef, channel, fstart, fatom, fpow = [], [], [0], [], []
    for ch, s in enumerate(signals):
        for m, c in s.terms:
            coef.append(c)
            channel.append(ch)
            for a, p in m:
                fatom.append(pos[a.key()])
                fpow.append(p)
            fstart.append(len(fatom))
    return CompiledSignals(kind, index, part, eps, period, kappa, sp_start, sp_breaks, sp_coefs, sp_nonneg,
                           np.asarray(coef, float), np.asarray(channel, np.int64), np.asarray(fstart, np.int64),
                           np.asarray(fatom, np.int64), np.asarray(fpow, float), len(signals))
