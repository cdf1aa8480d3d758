"""Tracking-law synthesis by iterated averaging.

A reference curve is first expressed as a combination of generator fields
(a *parameterization*). Each generator that is a symmetric product is then
realized by oscillating its two factors at a fast time scale, which moves
the parameterization one level down. Repeating this down to the control
fields yields an open-loop law with nested oscillations.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import nnls

from .cones import BracketTree, Combination, HConeElement, LinealPair, MEMBER_TOL, generate_Z
from .dynamics import format_float
from .geometry import ConfigurationError
from .models import Faccs
from .sequences import lo, pairing
from .signals import Bump, Signal, Spline, Trig

__all__ = [
    "ReferenceCurve",
    "Parameterization",
    "ControlLaw",
    "EpsSchedule",
    "SynthesisError",
    "UnfittableReference",
    "ConicInfeasible",
    "eta_schedule",
    "parameterize_reference",
    "synth_single_level",
    "recursion_Z",
    "recursion_H",
    "averaged_counterpart",
    "oscillatory_law",
    "sigma_along",
    "REGIMES",
    "GRID_POINTS",
]

GRID_POINTS = 201
FIT_TOL = 1e-6
CONST_TOL = 1e-9
ZERO_REL = 1e-12
CONSISTENCY_TOL = 1e-4


class SynthesisError(ValueError):
    """A structural or hypothesis failure during synthesis."""


class UnfittableReference(SynthesisError):
    """The required forcing leaves the span of the generator family."""


class ConicInfeasible(SynthesisError):
    """The required forcing is not a nonnegative combination of the generators."""


# ---------------------------------------------------------------------------
# reference curves
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class ReferenceCurve:
    """Phase curve ``t -> (q(t), v(t))`` with its time derivative.

    Parameters
    ----------
    state, rate : callable
        Vectorized maps from a time array of shape ``(N,)`` to ``(N, dim)``.
    horizon : (float, float)
    base_dim : int
    name : str
    """

    state: Callable
    rate: Callable
    horizon: tuple
    base_dim: int
    name: str = "reference"

    def __post_init__(self):
        t0, t1 = self.horizon
        if not t1 > t0:
            raise ValueError("reference horizon must be increasing")

    def grid(self, n: int = GRID_POINTS) -> np.ndarray:
        return np.linspace(self.horizon[0], self.horizon[1], n)

    def initial_state(self) -> np.ndarray:
        return self.state(np.array([self.horizon[0]]))[0]

    def consistency(self, n: int = 101, h: float = 1e-5) -> float:
        """Relative deviation between ``rate`` and central differences of ``state``."""
        t0, t1 = self.horizon
        t = np.linspace(t0 + h, t1 - h, n)
        fd = (self.state(t + h) - self.state(t - h)) / (2 * h)
        r = self.rate(t)
        return float(np.max(np.abs(fd - r)) / max(1.0, np.max(np.abs(r))))

    def kinematic_defect(self, system: Faccs, n: int = 101) -> float:
        """Mismatch between the base rate and the kinematics implied by the drift."""
        t = self.grid(n)
        X, Xd = self.state(t), self.rate(t)
        m = self.base_dim
        worst = 0.0
        for x, xd in zip(X, Xd):
            worst = max(worst, float(np.max(np.abs(xd[:m] - system.drift(x)[:m]))))
        return worst

    def required_forcing(self, system: Faccs, t) -> np.ndarray:
        """Fiber input ``R(t)`` that makes the curve a solution, shape ``(N, n)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        X, Xd = self.state(t), self.rate(t)
        m = self.base_dim
        out = np.empty((t.size, X.shape[1] - m))
        for i, (ti, x, xd) in enumerate(zip(t, X, Xd)):
            r = xd[m:] - system.drift(x)[m:]
            if system.force is not None:
                r = r - system.force(ti, x)
            out[i] = r
        return out

    # -- builders -----------------------------------------------------------
    @classmethod
    def polynomial(cls, coefficients, horizon=(0.0, 1.0), base_dim: int = 0, name: str = "polynomial"):
        """Phase curve whose coordinates are polynomials.

        ``coefficients[i]`` lists the coefficients of coordinate ``i`` in
        increasing powers of ``t``.
        """
        polys = [np.polynomial.Polynomial(np.asarray(c, dtype=float)) for c in coefficients]
        ders = [p.deriv() for p in polys]
        state = lambda t: np.stack([p(np.asarray(t, dtype=float)) for p in polys], axis=1)
        rate = lambda t: np.stack([d(np.asarray(t, dtype=float)) for d in ders], axis=1)
        return cls(state, rate, tuple(map(float, horizon)), base_dim, name)

    @classmethod
    def rest(cls, system: Faccs, horizon=(0.0, 1.0)):
        """Zero-velocity curve at the origin (identity attitude when present)."""
        x0 = np.zeros(system.phase_chart.dim)
        rot = system.layout.get("rotation")
        if rot is not None:
            x0[rot] = np.eye(3).ravel()
        state = lambda t: np.tile(x0, (np.size(t), 1))
        rate = lambda t: np.zeros((np.size(t), x0.size))
        return cls(state, rate, tuple(map(float, horizon)), system.base_dim, "rest")

    @classmethod
    def submarine_diagonal(cls, system: Faccs, horizon=(0.0, 1.0)):
        """Straight diving motion ``r(t) = -t (1, 1, 1)`` with identity attitude."""
        if system.base_dim != 12:
            raise ConfigurationError("submarine_diagonal needs the 18-coordinate vehicle layout")
        p = system.params
        if system.layout.get("inputs") == "velocity":
            fib = np.array([0.0, 0.0, 0.0, -1.0, -1.0, -1.0])
        else:
            fib = np.array([0.0, 0.0, 0.0, -p.M1, -p.M2, -p.M3])
        A = np.eye(3).ravel()

        def state(t):
            t = np.atleast_1d(np.asarray(t, dtype=float))
            X = np.zeros((t.size, 18))
            X[:, 0:3] = -t[:, None]
            X[:, 3:12] = A
            X[:, 12:18] = fib
            return X

        def rate(t):
            t = np.atleast_1d(np.asarray(t, dtype=float))
            X = np.zeros((t.size, 18))
            X[:, 0:3] = -1.0
            return X

        return cls(state, rate, tuple(map(float, horizon)), 12, "submarine_diagonal")

    @classmethod
    def hovercraft_sideways(cls, system: Faccs, accel: float = 0.5, horizon=(0.0, 1.0)):
        """Uniformly accelerated translation along the body ``v1`` axis."""
        if system.base_dim != 3:
            raise ConfigurationError("hovercraft_sideways needs the planar vehicle layout")

        def state(t):
            t = np.atleast_1d(np.asarray(t, dtype=float))
            X = np.zeros((t.size, 6))
            X[:, 1] = 0.5 * accel * t ** 2
            X[:, 4] = accel * t
            return X

        def rate(t):
            t = np.atleast_1d(np.asarray(t, dtype=float))
            X = np.zeros((t.size, 6))
            X[:, 1] = accel * t
            X[:, 4] = accel
            return X

        return cls(state, rate, tuple(map(float, horizon)), 3, "hovercraft_sideways")


# ---------------------------------------------------------------------------
# schedules
# ---------------------------------------------------------------------------
REGIMES = {
    "H3": 3.0,
    "H_sharp": 2.5 + (math.sqrt(5.0) / 2.0 - 1.0),
    "Z4": 4.0,
    "Z_sharp": 3.0 + (math.sqrt(3.0) - 1.0),
    "const2": 2.5,
}


@dataclass(frozen=True)
class EpsSchedule:
    """Time scales ``eps_1 > eps_2 > ... > eps_l`` with ``eps_i = eps_{i-1} ** p_i``."""

    master: float
    levels: int
    exponents: tuple
    values: tuple
    regime: str = "custom"

    def __post_init__(self):
        if len(self.values) != self.levels or len(self.exponents) != max(self.levels - 1, 0):
            raise ValueError("schedule lengths do not match the number of levels")
        if any(b >= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("schedule must be strictly decreasing")

    def __getitem__(self, i: int) -> float:
        """``eps_i`` with 1-based ``i``."""
        return self.values[i - 1]


def eta_schedule(epsilon: float, l: int, regime: str = "Z4") -> EpsSchedule:
    """Power-law schedule ``eps_i = eps_{i-1} ** p`` for a named regime.

    Parameters
    ----------
    epsilon : float
        Master scale in ``(0, 1)``.
    l : int
        Number of levels (at least 1).
    regime : {"H3", "H_sharp", "Z4", "Z_sharp", "const2"}
        ``const2`` applies only to two levels.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    if l < 1:
        raise ValueError("at least one level is required")
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}; choose from {sorted(REGIMES)}")
    if regime == "const2" and l != 2:
        raise ValueError("the const2 regime is defined for exactly two levels")
    p = REGIMES[regime]
    vals = [float(epsilon)]
    for _ in range(l - 1):
        vals.append(vals[-1] ** p)
    return EpsSchedule(float(epsilon), l, (p,) * (l - 1), tuple(vals), regime)


# ---------------------------------------------------------------------------
# parameterizations
# ---------------------------------------------------------------------------
def _to_signal(t: np.ndarray, y: np.ndarray, nonnegative: bool, label: str) -> Signal:
    """Constant when flat to ``CONST_TOL``, exact zero when negligible, spline otherwise."""
    scale = max(1.0, float(np.max(np.abs(y))))
    if np.max(np.abs(y)) < ZERO_REL * scale:
        return Signal.zero()
    mean = float(np.mean(y))
    if np.max(np.abs(y - mean)) <= CONST_TOL * max(1.0, abs(mean)):
        return Signal.const(max(mean, 0.0) if nonnegative else mean)
    cs = CubicSpline(t, y)
    return Signal.of(Spline.from_ppoly(cs, nonnegative=nonnegative, label=label))


def _generator_values(gens, X, m) -> np.ndarray:
    """Array ``(N, n, len(gens))`` of generator fiber values along states ``X``."""
    return np.stack([np.stack([g.field(x[:m]) for g in gens], axis=1) for x in X])


@dataclass(frozen=True, eq=False)
class Parameterization:
    """Coefficients ``lambda_a(t)`` expressing the required forcing.

    Attributes
    ----------
    generators : tuple
        BracketTree (Z mode) or cone elements (H mode).
    coefficients : tuple of Signal
    mode : {"Z", "H"}
    gamma : ReferenceCurve
    grid : ndarray
    samples : ndarray
        Raw fitted coefficients, shape ``(len(grid), len(generators))``.
    residual : float
        Largest fit residual on the grid.
    """

    generators: tuple
    coefficients: tuple
    mode: str
    gamma: ReferenceCurve
    grid: np.ndarray
    samples: np.ndarray
    residual: float
    family: tuple = ()

    @property
    def level(self) -> int:
        lv = [g.level for g, c in zip(self.generators, self.coefficients) if not c.is_zero()]
        return max(lv) if lv else 0

    def field_at(self, system: Faccs, t) -> np.ndarray:
        """``sum_a lambda_a(t) Z_a(gamma(t))`` with shape ``(N, n)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        X = self.gamma.state(t)
        V = _generator_values(self.generators, X, self.gamma.base_dim)
        lam = np.stack([c(t) for c in self.coefficients], axis=1)
        return np.einsum("tna,ta->tn", V, lam)

    def reconstruction_residual(self, system: Faccs, n: Optional[int] = None) -> float:
        n = n or 2 * self.grid.size - 1
        t = self.gamma.grid(n)
        R = self.gamma.required_forcing(system, t)
        return float(np.max(np.abs(R - self.field_at(system, t))))

    def describe(self) -> list:
        return [{"generator": g.label, "coefficient": repr(c)} for g, c in zip(self.generators, self.coefficients)]


def parameterize_reference(system: Faccs, gamma: ReferenceCurve, family: Sequence, mode: str = "Z",
                           grid: Optional[np.ndarray] = None, fit_tol: float = FIT_TOL) -> Parameterization:
    """Fit the required forcing of ``gamma`` against a generator family.

    Parameters
    ----------
    family : sequence
        BracketTree (Z mode) or cone elements with a ``field`` (H mode).
    mode : {"Z", "H"}
        Least squares with minimal norm, or nonnegative least squares.
    grid : array_like, optional
        Fitting times; 201 uniform samples by default.

    Raises
    ------
    UnfittableReference
        Z-mode residual above ``fit_tol * |R|_inf`` (names the worst time).
    ConicInfeasible
        H-mode residual above the same bound.
    """
    if mode not in ("Z", "H"):
        raise ValueError(f"unknown mode {mode!r}")
    family = tuple(family)
    if not family:
        raise ValueError("empty generator family")
    if gamma.kinematic_defect(system) > CONSISTENCY_TOL:
        raise SynthesisError("reference base rate disagrees with the system kinematics")
    t = gamma.grid() if grid is None else np.asarray(grid, dtype=float)
    X = gamma.state(t)
    R = gamma.required_forcing(system, t)
    V = _generator_values(family, X, gamma.base_dim)
    tol = fit_tol * max(float(np.max(np.abs(R))), np.finfo(float).tiny)
    lam = np.zeros((t.size, len(family)))
    res = np.zeros(t.size)
    for i in range(t.size):
        if mode == "Z":
            lam[i] = np.linalg.pinv(V[i], rcond=1e-10) @ R[i]
        else:
            lam[i], _ = nnls(V[i], R[i], maxiter=50 * len(family))
        res[i] = np.max(np.abs(R[i] - V[i] @ lam[i])) if R.shape[1] else 0.0
    worst = int(np.argmax(res))
    if res[worst] > tol:
        msg = (f"required forcing not reproduced at t = {t[worst]:.6g}: residual {res[worst]:.3e} "
               f"> {tol:.3e}; R = {np.array2string(R[worst], precision=6)}")
        if mode == "Z":
            raise UnfittableReference(msg + "; extend the family to a higher level")
        raise ConicInfeasible(msg + "; no nonnegative combination exists, augment the conic generators")
    coefs = tuple(_to_signal(t, lam[:, a], mode == "H", f"lambda[{g.label}]") for a, g in enumerate(family))
    return Parameterization(family, coefs, mode, gamma, t, lam, float(res.max()), family)


# ---------------------------------------------------------------------------
# control laws
# ---------------------------------------------------------------------------
class ControlLaw:
    """Open-loop input ``u(t)`` with one :class:`Signal` per channel.

    Parameters
    ----------
    channels : sequence of Signal
    horizon : (float, float)
    period : float
        Period ``T`` of the oscillation sequences.
    schedule : EpsSchedule, optional
    structure : dict, optional
        Record of how the law was built.
    """

    def __init__(self, channels: Sequence[Signal], horizon, period: float = 1.0,
                 schedule: Optional[EpsSchedule] = None, structure: Optional[dict] = None):
        self.channels = tuple(channels)
        self.horizon = tuple(map(float, horizon))
        self.period = float(period)
        self.schedule = schedule
        self.structure = structure or {}

    @property
    def k(self) -> int:
        return len(self.channels)

    @property
    def eps_min(self) -> float:
        return min((c.eps_min() for c in self.channels), default=math.inf)

    def __call__(self, t):
        if np.ndim(t) == 0:
            tt = np.array([float(t)])
            return np.array([c(tt)[0] for c in self.channels])
        return self.sample(t)

    def sample(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if not self.channels:
            return np.zeros((t.size, 0))
        return np.stack([c(t) for c in self.channels], axis=1)

    def to_csv(self, path=None, rate: float = 1000.0) -> str:
        """Sampled law ``t, u1..uk`` at ``rate`` samples per unit time."""
        t0, t1 = self.horizon
        n = max(2, int(round((t1 - t0) * rate)) + 1)
        t = np.linspace(t0, t1, n)
        U = self.sample(t)
        lines = [",".join(["t"] + [f"u{i + 1}" for i in range(self.k)])]
        for ti, row in zip(t, U):
            lines.append(",".join([format_float(ti)] + [format_float(v) for v in row]))
        text = "\r\n".join(lines) + "\r\n"
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def record(self) -> dict:
        out = {"horizon": list(self.horizon), "period": self.period,
               "channels": [c.record() for c in self.channels], "structure": self.structure}
        if self.schedule is not None:
            out["schedule"] = {"regime": self.schedule.regime, "values": list(self.schedule.values),
                               "exponents": list(self.schedule.exponents)}
        return out

    def __repr__(self):
        return f"ControlLaw(k={self.k}, horizon={self.horizon}, eps_min={self.eps_min:.3g})"


# ---------------------------------------------------------------------------
# single averaging step
# ---------------------------------------------------------------------------
def sigma_along(system: Faccs, gamma: ReferenceCurve, family: Sequence, b: int,
                grid: Optional[np.ndarray] = None, member_tol: float = MEMBER_TOL) -> list:
    """Coefficients ``sigma_ba(t)`` with ``<F_b : F_b> = sum_a sigma_ba F_a`` along ``gamma``.

    ``b`` is 0-based. Returns one Signal per family member.

    Raises
    ------
    SynthesisError
        When the diagonal product leaves the span of the family.
    """
    family = list(family)
    t = gamma.grid() if grid is None else grid
    X = gamma.state(t)
    m = gamma.base_dim
    fb = family[b].field
    diag = system.symmetric_product(fb, fb)
    D = np.stack([diag(x[:m]) for x in X])
    if np.max(np.abs(D)) < 1e-12:
        return [Signal.zero() for _ in family]
    V = _generator_values(family, X, m)
    S = np.zeros((t.size, len(family)))
    for i in range(t.size):
        S[i] = np.linalg.pinv(V[i], rcond=1e-10) @ D[i]
        r = np.max(np.abs(D[i] - V[i] @ S[i])) / max(1.0, np.max(np.abs(D[i])))
        if r > member_tol:
            raise SynthesisError(
                f"<{family[b].label}:{family[b].label}> is not in the span of the family at t = {t[i]:.6g} "
                f"(residual {r:.3e}); the diagonal-membership hypothesis fails")
    return [_to_signal(t, S[:, a], False, f"sigma[{family[b].label},{family[a].label}]")
            for a in range(len(family))]


def _averaging_step(direct: list, pairs: dict, sigma: Callable, eps: float, period: float) -> list:
    """One averaging step on a family of size ``k``.

    Parameters
    ----------
    direct : list of Signal
        ``lambda_a``.
    pairs : dict
        ``(b, c) -> lambda_bc`` with 0-based ``b < c``.
    sigma : callable
        ``b -> list of Signal`` (lazy, only called when needed).

    Returns
    -------
    list of Signal
        ``u_slow,a + (1/eps) u_osc,a(t/eps, t)`` for each member.
    """
    k = len(direct)
    out = [Signal() + d for d in direct]
    # slow correction: sum_b (b - 1 + sum_{c>b} lambda_bc^2 / 4) sigma_ba
    for b in range(k):
        weight = Signal.const(float(b))  # (b+1) - 1 with 1-based b
        for c in range(b + 1, k):
            lam = pairs.get((b, c))
            if lam is not None and not lam.is_zero():
                weight = weight + lam * lam * 0.25
        if weight.is_zero():
            continue
        sig = sigma(b)
        for a in range(k):
            if not sig[a].is_zero():
                out[a] = out[a] + weight * sig[a]
    # oscillations
    for a in range(k):
        for c in range(a):
            out[a] = out[a] + Signal.of(Trig(lo(c + 1, a + 1, k), eps, period))
        for c in range(a + 1, k):
            lam = pairs.get((a, c))
            if lam is not None and not lam.is_zero():
                out[a] = out[a] + lam * Signal.of(Trig(lo(a + 1, c + 1, k), eps, period)) * (-0.5)
    return out


def _decompose(param_terms, family: list, system, gamma, level_sigma):
    """Split generator coefficients into direct and pair parts on ``family``."""
    index = {id(t): i for i, t in enumerate(family)}
    direct = [Signal() for _ in family]
    pairs = {}
    for tree, lam in param_terms:
        if lam.is_zero():
            continue
        if id(tree) in index:
            direct[index[id(tree)]] = direct[index[id(tree)]] + lam
            continue
        if tree.is_leaf or id(tree.left) not in index or id(tree.right) not in index:
            raise SynthesisError(f"{tree.label} is neither a family member nor a product of two members")
        b, c = sorted((index[id(tree.left)], index[id(tree.right)]))
        if b == c:
            # diagonal products are rewritten through their span coefficients
            sig = level_sigma(b)
            for a in range(len(family)):
                if not sig[a].is_zero():
                    direct[a] = direct[a] + lam * sig[a]
            continue
        pairs[(b, c)] = pairs.get((b, c), Signal()) + lam
    return direct, pairs


def _sigma_cache(system, gamma, family):
    cache = {}

    def get(b):
        if b not in cache:
            cache[b] = sigma_along(system, gamma, family, b)
        return cache[b]

    return get


def synth_single_level(system: Faccs, param: Parameterization, epsilon: float, sigma=None,
                       period: float = 1.0) -> ControlLaw:
    """Law for a parameterization on the control fields and their pairwise products.

    Parameters
    ----------
    param : Parameterization
        Generators must be control fields or products of two of them.
    epsilon : float
    sigma : callable, optional
        ``b -> list of Signal``; computed along the reference by default.
    """
    known = {t.generator: t for t in (param.family or param.generators) if t.is_leaf}
    leaves = [known.get(a) or BracketTree.leaf(system, a) for a in range(1, system.k + 1)]
    family = leaves
    sig = sigma or _sigma_cache(system, param.gamma, family)
    terms = [(_rebind(t, leaves), c) for t, c in zip(param.generators, param.coefficients)]
    direct, pairs = _decompose(terms, family, system, param.gamma, sig)
    channels = _averaging_step(direct, pairs, sig, epsilon, period)
    structure = {"kind": "single_level", "eps": epsilon,
                 "family": [t.label for t in family],
                 "pairs": [[family[b].label, family[c].label] for b, c in sorted(pairs)]}
    return ControlLaw(channels, param.gamma.horizon, period, None, structure)


def _rebind(tree: BracketTree, leaves: list) -> BracketTree:
    """Map leaves of ``tree`` onto the canonical leaf objects (identity lookup)."""
    if tree.is_leaf:
        return leaves[tree.generator - 1]
    if tree.left.is_leaf and tree.right.is_leaf:
        return BracketTree(None, leaves[tree.left.generator - 1], leaves[tree.right.generator - 1],
                           tree.level, tree.field, tree.label)
    return tree


def _involved(terms, family_prev):
    """Members of the lower family that carry a direct coefficient or are a factor."""
    ids = set()
    for tree, lam in terms:
        if lam.is_zero():
            continue
        ids.add(id(tree))
        if not tree.is_leaf:
            ids.add(id(tree.left))
            ids.add(id(tree.right))
    return [t for t in family_prev if id(t) in ids]


def recursion_Z(system: Faccs, param: Parameterization, schedule: Optional[EpsSchedule],
                family: str = "involved", period: float = 1.0) -> ControlLaw:
    """Nested-oscillation law from a parameterization on ``Z_l``.

    Steps run from level ``l`` down to 1. The step leaving level ``i`` uses
    the lower family (by default only the members of level below ``i``
    that carry coefficients, or all of them with ``family="full"``) as the
    input fields and the time scale ``eps_{l-i+1}``; the coefficients it produces
    feed the next step.

    Parameters
    ----------
    param : Parameterization
        Z mode, generators taken from :func:`cones.generate_Z` output.
    schedule : EpsSchedule
        At least ``l`` levels; may be None when ``l = 0``.
    family : {"involved", "full"}
        Averaging over unused members adds unit oscillations on them,
        which only feed tracking error.
    """
    if param.mode != "Z":
        raise ValueError("recursion_Z needs a Z-mode parameterization")
    if family not in ("full", "involved"):
        raise ValueError(f"unknown family option {family!r}")
    l = param.level
    terms = [(g, c) for g, c in zip(param.generators, param.coefficients)]
    steps = []
    if l > 0 and (schedule is None or schedule.levels < l):
        raise ValueError(f"the parameterization needs a schedule with at least {l} levels")
    pool = list(param.family or param.generators)
    for i in range(l, 0, -1):
        eps = schedule[l - i + 1]
        lower = [t for t in pool if t.level <= i - 1]
        if family == "involved":
            lower = _involved(terms, lower)
        for tree, lam in terms:
            if not lam.is_zero() and tree.level > i:
                raise SynthesisError(f"{tree.label} has level {tree.level} above the current step {i}")
        sig = _sigma_cache(system, param.gamma, lower)
        direct, pairs = _decompose(terms, lower, system, param.gamma, sig)
        coefs = _averaging_step(direct, pairs, sig, eps, period)
        steps.append({"level": i, "eps": eps, "family": [t.label for t in lower],
                      "pairs": [[lower[b].label, lower[c].label] for b, c in sorted(pairs)],
                      "terms": [len(c) for c in coefs]})
        terms = list(zip(lower, coefs))
    leaves = {t.generator: c for t, c in terms if t.is_leaf}
    for t, c in terms:
        if not t.is_leaf and not c.is_zero():
            raise SynthesisError(f"coefficient left on non-input field {t.label}")
    channels = [Signal() + leaves.get(a, Signal()) for a in range(1, system.k + 1)]
    structure = {"kind": "recursion_Z", "levels": l, "family": family, "steps": steps}
    return ControlLaw(channels, param.gamma.horizon, period, schedule, structure)


def _split_monomials(sig: Signal) -> list:
    return [Signal({m: c}) for m, c in sig.terms]


def recursion_H(system: Faccs, param: Parameterization, schedule: Optional[EpsSchedule],
                period: float = 1.0, sequence: str = "psi") -> ControlLaw:
    """Nested-oscillation law from a conic parameterization on ``H_l``.

    Each dissipation term ``-alpha <G:G>`` of a generator with coefficient
    ``lambda`` becomes the oscillation ``sqrt(lambda alpha) s_j(t/eps)/eps``
    on ``G``; its positive and negative parts are carried by ``G`` and
    ``-G`` so every coefficient stays nonnegative. Indices are
    ``j = pairing(level, counter)``.

    Parameters
    ----------
    sequence : {"psi", "phi"}
        Oscillation profile. ``psi`` keeps iterated square roots smooth.
    """
    if param.mode != "H":
        raise ValueError("recursion_H needs an H-mode parameterization")
    if sequence not in ("psi", "phi"):
        raise ValueError(f"unknown sequence {sequence!r}")
    terms = []
    for g, c in zip(param.generators, param.coefficients):
        for mono in _split_monomials(c):
            (m, v), = mono.terms
            if v < 0:
                raise SynthesisError(f"negative coefficient on conic generator {g.label}")
            terms.append((g, mono))
    l = max((g.level for g, _ in terms), default=0)
    if l > 0 and (schedule is None or schedule.levels < l):
        raise ValueError(f"the parameterization needs a schedule with at least {l} levels")
    steps = []
    for i in range(l, 0, -1):
        eps = schedule[l - i + 1]
        nxt = []
        counter = 0
        log = []
        for g, lam in terms:
            if g.level < i:
                nxt.append((g, lam))
                continue
            for c, e in g.F:
                nxt.append((e, lam * c))
            for alpha, G in g.terms:
                counter += 1
                j = pairing(i, counter)
                amp = (lam * alpha).sqrt()
                plus = G.plus
                minus = G.minus
                if sequence == "psi":
                    nxt.append((plus, amp * Signal.of(Bump(j, eps, period, +1))))
                    nxt.append((minus, amp * Signal.of(Bump(j, eps, period, -1))))
                else:
                    nxt.append((plus, amp * Signal.of(Trig(j, eps, period))))
                log.append({"generator": g.label, "index": j, "amplitude": repr(amp)})
        steps.append({"level": i, "eps": eps, "oscillations": log})
        terms = [(g, part) for g, lam in nxt for part in _split_monomials(lam)]
    channels = [Signal() for _ in range(system.k)]
    for g, lam in terms:
        if not isinstance(g, Combination):
            raise SynthesisError(f"level-0 term {g!r} is not a combination of input fields")
        w = g.weights()
        for a in range(system.k):
            if w[a] != 0.0:
                channels[a] = channels[a] + lam * float(w[a])
    structure = {"kind": "recursion_H", "levels": l, "sequence": sequence, "steps": steps}
    return ControlLaw(channels, param.gamma.horizon, period, schedule, structure)


# ---------------------------------------------------------------------------
# averaging checks
# ---------------------------------------------------------------------------
def _as_callable(w):
    if isinstance(w, Signal):
        return lambda t: float(w(np.array([t]))[0])
    if callable(w):
        return w
    return lambda t, c=float(w): c


def averaged_counterpart(system: Faccs, amplitudes: Sequence, indices: Sequence[int]) -> Faccs:
    """System driven by the averaged force of oscillatory inputs, without inputs.

    The input ``u_a = w_a(t) s_{n_a}(t/eps)/eps`` is replaced by the force
    ``-sum_{a,b} [n_a = n_b] w_a(t) w_b(t) <Y_a : Y_b>``.

    Parameters
    ----------
    amplitudes : sequence
        ``w_a`` as numbers, Signals or callables of ``t``; one per input.
    indices : sequence of int
        Sequence index ``n_a`` per input.
    """
    if len(amplitudes) != system.k or len(indices) != system.k:
        raise ValueError("one amplitude and one index per input are required")
    ws = [_as_callable(w) for w in amplitudes]
    m = system.base_dim
    prods = []
    for a, b in itertools.product(range(system.k), repeat=2):
        if indices[a] == indices[b]:
            prods.append((a, b, system.symmetric_product(system.base_controls[a], system.base_controls[b])))

    def force(t, x):
        q = np.asarray(x)[:m]
        out = np.zeros(system.fiber_dim)
        wv = [w(t) for w in ws]
        for a, b, P in prods:
            c = wv[a] * wv[b]
            if c != 0.0:
                out -= c * P(q)
        return out

    return system.with_force(force, name=f"{system.name}-averaged", keep_controls=False)


def oscillatory_law(system: Faccs, amplitudes: Sequence, indices: Sequence[int], epsilon: float,
                    horizon=(0.0, 1.0), slow: Optional[Sequence] = None, period: float = 1.0) -> ControlLaw:
    """``u_a = slow_a + w_a (1/eps) phi_{n_a}(t/eps)`` with constant or Signal ``w_a``."""
    chans = []
    for a in range(system.k):
        w = amplitudes[a]
        w = w if isinstance(w, Signal) else Signal.const(float(w))
        s = Signal()
        if slow is not None:
            sa = slow[a]
            s = sa if isinstance(sa, Signal) else Signal.const(float(sa))
        if w.is_zero():
            chans.append(s)
        else:
            chans.append(s + w * Signal.of(Trig(int(indices[a]), epsilon, period)))
    structure = {"kind": "oscillatory", "eps": epsilon, "indices": list(map(int, indices))}
    return ControlLaw(chans, horizon, period, None, structure)
