"""Iterated symmetric-product families and trackability certificates.

Two hierarchies are built from the control fields ``Y_1..Y_k``:

* ``Z_l``: close the family under pairwise symmetric products ``l`` times.
* ``H_l``: subtract convex hulls of diagonal products ``<G:G>`` of fields
  in the lineality space of the previous level.

All checks are pointwise at sampled states, so a "satisfied" verdict means
"satisfied at the sampled states" and nothing more.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import nnls

from .geometry import VectorField
from .models import Faccs, sample_states

__all__ = [
    "BracketTree",
    "Combination",
    "LinealPair",
    "HConeElement",
    "Verdict",
    "TrackabilityReport",
    "MembershipResult",
    "generate_Z",
    "generate_H",
    "span_rank",
    "membership_residual",
    "certify",
    "default_states",
    "SIGMA_TOL",
    "MEMBER_TOL",
    "DEDUPE_TOL",
    "MAX_LEVEL",
]

log = logging.getLogger(__name__)

SIGMA_TOL = 1e-8
MEMBER_TOL = 1e-6
DEDUPE_TOL = 1e-9
PARALLEL_TOL = 1e-9
MAX_LEVEL = 4
CONE_TOL = 1e-7


def default_states(system: Faccs, n: int = 20, seed: int = 0, box: float = 2.0) -> np.ndarray:
    """Sample phase states uniformly in the default box (projected)."""
    return sample_states(system, n, np.random.default_rng(seed), box)


def _field_of(x) -> VectorField:
    return x.field if hasattr(x, "field") else x


def _base_point(x, chart_dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[:chart_dim]


def _values(fields, states) -> np.ndarray:
    """Array ``(n_states, n, n_fields)`` of fiber values at base points."""
    fields = [_field_of(f) for f in fields]
    m = fields[0].chart.dim
    return np.stack([np.stack([f(_base_point(s, m)) for f in fields], axis=1) for s in states])


# ---------------------------------------------------------------------------
# bracket trees
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class BracketTree:
    """A control field or a symmetric product of two trees.

    Attributes
    ----------
    generator : int or None
        1-based control index for leaves.
    left, right : BracketTree or None
        Operands of the product node.
    level : int
        0 for leaves, ``max(level(left), level(right)) + 1`` otherwise.
    field : VectorField
        Cached field of the node.
    """

    generator: Optional[int]
    left: Optional["BracketTree"]
    right: Optional["BracketTree"]
    level: int
    field: VectorField
    label: str

    @classmethod
    def leaf(cls, system: Faccs, a: int) -> "BracketTree":
        Y = system.base_controls[a - 1]
        return cls(a, None, None, 0, Y, f"Y{a}")

    @classmethod
    def sym(cls, system: Faccs, u: "BracketTree", v: "BracketTree") -> "BracketTree":
        fld = system.symmetric_product(u.field, v.field)
        return cls(None, u, v, max(u.level, v.level) + 1, fld, f"<{u.label}:{v.label}>")

    @property
    def is_leaf(self) -> bool:
        return self.generator is not None

    def recompute(self, system: Faccs) -> VectorField:
        """Field rebuilt from the leaves, bypassing cached nodes."""
        if self.is_leaf:
            return system.base_controls[self.generator - 1]
        return system.symmetric_product(self.left.recompute(system), self.right.recompute(system))

    def __repr__(self):
        return f"BracketTree({self.label}, level={self.level})"


def _parallel_everywhere(v: np.ndarray, e: np.ndarray, tol: float) -> bool:
    """``v`` and ``e`` (shape (states, n)) are pointwise parallel."""
    for a, b in zip(v, e):
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        if na < DEDUPE_TOL and nb < DEDUPE_TOL:
            continue
        if na < DEDUPE_TOL or nb < DEDUPE_TOL:
            return False
        if abs(abs(a @ b) / (na * nb) - 1.0) > tol:
            return False
    return True


def generate_Z(system: Faccs, l: int, dedupe_tol: float = DEDUPE_TOL, states=None,
               pruned: Optional[list] = None) -> list:
    """Family ``Z_l`` as bracket trees, in deterministic generation order.

    Level ``i`` appends, for pairs ``(a, b)`` with ``a <= b`` over ``Z_{i-1}``
    and at least one operand of level ``i - 1``, the product tree unless it is
    numerically zero or pointwise parallel to an existing member.

    Parameters
    ----------
    pruned : list, optional
        Receives one dict per pruning decision.
    """
    if l < 0:
        raise ValueError("level must be >= 0")
    if states is None:
        states = default_states(system)
    family = [BracketTree.leaf(system, a) for a in range(1, system.k + 1)]
    vals = [_values([t], states)[:, :, 0] for t in family]
    for i in range(1, l + 1):
        prev = list(family)
        for a, b in itertools.combinations_with_replacement(range(len(prev)), 2):
            u, v = prev[a], prev[b]
            if max(u.level, v.level) != i - 1:
                continue
            tree = BracketTree.sym(system, u, v)
            val = _values([tree], states)[:, :, 0]
            sup = float(np.max(np.abs(val)))
            if sup < dedupe_tol:
                _log_prune(pruned, tree, "zero", f"sup {sup:.3e} < {dedupe_tol:g}")
                continue
            twin = next((f for f, fv in zip(family, vals) if _parallel_everywhere(val, fv, PARALLEL_TOL)), None)
            if twin is not None:
                _log_prune(pruned, tree, "parallel", f"pointwise parallel to {twin.label}")
                continue
            family.append(tree)
            vals.append(val)
    return family


def _log_prune(sink, tree, reason, detail):
    log.info("pruned %s (%s): %s", tree.label, reason, detail)
    if sink is not None:
        sink.append({"tree": tree, "label": tree.label, "reason": reason, "detail": detail})


def span_rank(family, state, sigma_tol: float = SIGMA_TOL) -> int:
    """Numerical rank of the family's fiber values at one state."""
    family = list(family)
    if not family:
        raise ValueError("family must be nonempty")
    V = _values(family, [state])[0]
    s = np.linalg.svd(V, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > sigma_tol * s[0]))


@dataclass(frozen=True)
class MembershipResult:
    """Outcome of a pointwise least-squares membership test.

    ``residual`` is the largest ``|target - fit|_inf / max(1, |target|_inf)``
    over the states; ``coefficients[s]`` are the fitted coefficients at
    state ``s``; ``rank_deficient`` lists state indices where the family
    lost rank and the pseudoinverse was used.
    """

    residual: float
    coefficients: np.ndarray
    per_state: np.ndarray
    rank_deficient: tuple

    def __iter__(self):
        yield self.residual
        yield self.coefficients


def membership_residual(target, family, states, min_states: int = 20,
                        sigma_tol: float = SIGMA_TOL) -> MembershipResult:
    """Fit ``target`` against ``family`` at each state by least squares."""
    states = list(states)
    if len(states) < min_states:
        raise ValueError(f"need at least {min_states} states, got {len(states)}")
    family = list(family)
    T = _values([target], states)[:, :, 0]
    V = _values(family, states)
    coefs, per_state, deficient = [], [], []
    for s in range(len(states)):
        sv = np.linalg.svd(V[s], compute_uv=False)
        rank = int(np.sum(sv > sigma_tol * sv[0])) if sv.size and sv[0] > 0 else 0
        if rank < min(V[s].shape):
            deficient.append(s)
        c = np.linalg.pinv(V[s], rcond=sigma_tol) @ T[s]
        coefs.append(c)
        r = np.max(np.abs(T[s] - V[s] @ c)) / max(1.0, np.max(np.abs(T[s])))
        per_state.append(r)
    per_state = np.array(per_state)
    return MembershipResult(float(per_state.max()), np.array(coefs), per_state, tuple(deficient))


# ---------------------------------------------------------------------------
# H-cone elements
# ---------------------------------------------------------------------------
class Combination:
    """Linear combination ``sum_j w_j(q) X_j`` of fields.

    Coefficients may be constants or callables ``q -> float``; derivatives
    of callable coefficients enter through the field's finite-difference
    oracle.
    """

    level = 0

    def __init__(self, fields: Sequence, coefficients: Sequence, label: str = ""):
        self.fields = tuple(_field_of(f) for f in fields)
        self.coefficients = tuple(coefficients)
        if len(self.fields) != len(self.coefficients):
            raise ValueError("one coefficient per field is required")
        self.label = label or "+".join(
            f"{c:g}*{f.name}" if not callable(c) else f"w*{f.name}" for c, f in zip(self.coefficients, self.fields))
        self.constant = all(not callable(c) for c in self.coefficients)
        f0 = self.fields[0]

        def fn(q):
            acc = np.zeros(f0.dim)
            for c, f in zip(self.coefficients, self.fields):
                w = c(q) if callable(c) else c
                if w != 0.0:
                    acc = acc + w * f(q)
            return acc

        jac = None
        if self.constant and all(f.has_closed_jacobian for f in self.fields):
            jac = lambda q: sum(c * f.jacobian(q) for c, f in zip(self.coefficients, self.fields))
        self.field = VectorField(f0.chart, fn, jac, dim=f0.dim, name=self.label)

    def negate(self) -> "Combination":
        coefs = [(lambda q, c=c: -c(q)) if callable(c) else -c for c in self.coefficients]
        return Combination(self.fields, coefs, label=f"-({self.label})")

    def weights(self) -> np.ndarray:
        if not self.constant:
            raise ValueError("weights are only defined for constant coefficients")
        return np.array(self.coefficients, dtype=float)

    @property
    def plus(self):
        return self

    @property
    def minus(self):
        return self.negate()

    def __repr__(self):
        return f"Combination({self.label})"


@dataclass(frozen=True, eq=False)
class LinealPair:
    """A field ``G`` in the lineality space: ``plus`` represents ``G`` and
    ``minus`` represents ``-G``, both as lower-level cone elements."""

    plus: object
    minus: object

    @property
    def field(self):
        return self.plus.field

    @property
    def level(self):
        return max(self.plus.level, self.minus.level)


class HConeElement:
    """Element ``sum_c c F_c - sum_b alpha_b <G_b : G_b>`` of ``H_i``.

    Parameters
    ----------
    system : Faccs
    F : sequence of (float, element)
        Nonnegative combination of lower-level elements.
    terms : sequence of (float, G)
        ``alpha_b >= 0`` with ``G_b`` a :class:`Combination` (level 0) or a
        :class:`LinealPair`.
    level : int
    """

    def __init__(self, system: Faccs, F: Sequence = (), terms: Sequence = (), level: int = 1, label: str = ""):
        self.F = tuple((float(c), e) for c, e in F)
        self.terms = tuple((float(a), g) for a, g in terms)
        if any(c < 0 for c, _ in self.F) or any(a < 0 for a, _ in self.terms):
            raise ValueError("cone element weights must be nonnegative")
        self.level = int(level)
        for _, e in self.F:
            if e.level >= self.level:
                raise ValueError("F parts must come from a lower level")
        for _, g in self.terms:
            if g.level >= self.level:
                raise ValueError("dissipation generators must come from a lower level")
        self.label = label or self._auto_label()
        parts = [(c, e.field) for c, e in self.F]
        prods = [(a, system.symmetric_product(g.field, g.field)) for a, g in self.terms]
        chart = (parts or prods)[0][1].chart
        dim = (parts or prods)[0][1].dim

        def fn(q):
            acc = np.zeros(dim)
            for c, f in parts:
                acc = acc + c * f(q)
            for a, p in prods:
                acc = acc - a * p(q)
            return acc

        self.field = VectorField(chart, fn, dim=dim, name=self.label)

    def _auto_label(self):
        bits = [f"{c:g}*{e.label}" for c, e in self.F]
        bits += [f"-{a:g}*<{g.plus.label if isinstance(g, LinealPair) else g.label}:.>" for a, g in self.terms]
        return " ".join(bits) or "0"

    def __repr__(self):
        return f"HConeElement(level={self.level}, {self.label})"


def _weight_design(r: int) -> list:
    """Deterministic weight vectors used to sample ``<G_w : G_w>``."""
    out = []
    for j in range(r):
        e = np.zeros(r)
        e[j] = 1.0
        out.append(e)
    for j, k in itertools.combinations(range(r), 2):
        for a, b in ((1.0, 1.0), (1.0, -1.0), (1.0, 2.0), (1.0, -2.0), (2.0, 1.0), (2.0, -1.0)):
            w = np.zeros(r)
            w[j], w[k] = a, b
            out.append(w)
    return out


def generate_H(system: Faccs, level: int = 1, states=None, dedupe_tol: float = DEDUPE_TOL) -> list:
    """Level-1 generators of the ``H`` cone built from the control fields.

    Returns ``+-Y_j`` (as level-0 combinations) followed by the conic
    elements ``-<G_w : G_w>`` for ``G_w = sum_j w_j Y_j`` over a fixed weight
    design, skipping numerically zero or duplicate products.
    """
    if level != 1:
        raise NotImplementedError("automatic generation covers level 1; deeper elements are user-assembled")
    if states is None:
        states = default_states(system)
    Ys = system.base_controls
    k = len(Ys)
    out = []
    for j in range(k):
        e = np.zeros(k)
        e[j] = 1.0
        out.append(Combination(Ys, list(e), label=f"Y{j + 1}"))
        out.append(Combination(Ys, list(-e), label=f"-Y{j + 1}"))
    seen = []
    for w in _weight_design(k):
        G = Combination(Ys, list(w), label="(" + "+".join(f"{x:g}Y{j + 1}" for j, x in enumerate(w) if x) + ")")
        el = HConeElement(system, (), [(1.0, G)], level=1, label=f"-<{G.label}:{G.label}>")
        val = _values([el], states)[:, :, 0]
        if np.max(np.abs(val)) < dedupe_tol:
            continue
        if any(np.max(np.abs(val - s)) < dedupe_tol * max(1.0, np.max(np.abs(s))) for s in seen):
            continue
        seen.append(val)
        out.append(el)
    return out


# ---------------------------------------------------------------------------
# certification
# ---------------------------------------------------------------------------
@dataclass
class Verdict:
    status: str  # satisfied | violated | undecided
    level: Optional[int] = None
    detail: str = ""

    def __str__(self):
        at = f" at l={self.level}" if self.level is not None else ""
        return f"{self.status}{at}: {self.detail}" if self.detail else f"{self.status}{at}"


VERDICT_NAMES = ("sym1", "corollary_H", "corollary_Z")


@dataclass
class TrackabilityReport:
    """Ranks, membership residuals and verdicts from :func:`certify`.

    ``verdicts`` is keyed by ``sym1`` (the single-level symmetric
    product test), ``corollary_H`` and ``corollary_Z``.
    """

    system: str
    n_states: int
    fiber_dim: int
    ranks: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def certified(self) -> bool:
        return any(v.status == "satisfied" for v in self.verdicts.values())

    def exit_code(self) -> int:
        if self.certified:
            return 0
        if any(v.status == "undecided" for v in self.verdicts.values()):
            return 3
        return 2

    def summary(self) -> str:
        wins = [f"{k} at l={v.level}" for k, v in self.verdicts.items() if v.status == "satisfied"]
        if wins:
            return "certified: " + ", ".join(wins)
        if self.exit_code() == 3:
            return "undecided"
        return "violated"

    def to_text(self) -> str:
        lines = [f"trackability report for {self.system}",
                 f"sampled states: {self.n_states} (checks hold at these states only)",
                 f"fiber dimension: {self.fiber_dim}", ""]
        lines.append("ranks (min/max over states):")
        for key, rs in self.ranks.items():
            lines.append(f"  {key}: {min(rs)}/{max(rs)}")
        lines.append("membership residuals:")
        for key, r in self.residuals.items():
            lines.append(f"  {key}: {r:.3e}")
        lines.append("verdicts:")
        for key in VERDICT_NAMES:
            if key in self.verdicts:
                lines.append(f"  {key}: {self.verdicts[key]}")
        for n in self.notes:
            lines.append(f"note: {n}")
        lines.append(self.summary())
        return "\n".join(lines) + "\n"

    def to_kv(self) -> str:
        out = [f"system={self.system}", f"n_states={self.n_states}", f"fiber_dim={self.fiber_dim}"]
        for key, rs in self.ranks.items():
            out.append(f"rank.{key}.min={min(rs)}")
            out.append(f"rank.{key}.max={max(rs)}")
        for key, r in self.residuals.items():
            out.append(f"residual.{key}={r:.17g}")
        for key in VERDICT_NAMES:
            if key in self.verdicts:
                v = self.verdicts[key]
                out.append(f"verdict.{key}={v.status}")
                out.append(f"verdict.{key}.level={'' if v.level is None else v.level}")
        out.append(f"exit_code={self.exit_code()}")
        return "\n".join(out) + "\n"


def _ranks(fields, states, n, sigma_tol):
    V = _values(fields, states)
    out = []
    for M in V:
        s = np.linalg.svd(M, compute_uv=False)
        out.append(int(np.sum(s > sigma_tol * s[0])) if s.size and s[0] > 0 else 0)
    return out


def _first_order_check(system, states, n, report, sigma_tol, member_tol):
    Ys = [BracketTree.leaf(system, a) for a in range(1, system.k + 1)]
    r0 = _ranks(Ys, states, n, sigma_tol)
    report.ranks["Y"] = r0
    regular = len(set(r0)) == 1
    worst = 0.0
    for a, Y in enumerate(Ys, 1):
        diag = BracketTree.sym(system, Y, Y)
        res = membership_residual(diag, Ys, states, min_states=1, sigma_tol=sigma_tol).residual
        report.residuals[f"<Y{a}:Y{a}> in span Y"] = res
        worst = max(worst, res)
    sym1 = list(Ys) + [BracketTree.sym(system, u, v) for u, v in itertools.combinations(Ys, 2)]
    r1 = _ranks(sym1, states, n, sigma_tol)
    report.ranks["Sym1"] = r1
    full0 = [r == n for r in r0]
    full1 = [r == n for r in r1]
    if all(full0):
        return Verdict("satisfied", 0, "the control fields span the fiber")
    if worst > member_tol:
        return Verdict("violated", None, f"diagonal product outside span of the inputs (residual {worst:.3e})")
    if not regular:
        return Verdict("violated", None, "input distribution rank varies across states")
    if all(full1):
        return Verdict("satisfied", 1, "Sym1 spans the fiber")
    if any(full1):
        return Verdict("undecided", None, f"Sym1 full rank at {sum(full1)}/{len(full1)} states")
    return Verdict("violated", None, f"Sym1 rank {max(r1)} < {n}")


def _corollary_Z(system, states, n, max_level, report, sigma_tol, member_tol):
    family = generate_Z(system, max_level, states=states)
    best_partial = None
    diag_ok_below = True  # all <Z:Z> in span Z_i for i < current l
    for l in range(0, max_level + 1):
        Zl = [t for t in family if t.level <= l]
        rl = _ranks(Zl, states, n, sigma_tol)
        report.ranks[f"Z{l}"] = rl
        if l > 0:
            Zi = [t for t in family if t.level <= l - 1]
            worst = 0.0
            for t in Zi:
                diag = BracketTree.sym(system, t, t)
                worst = max(worst, membership_residual(diag, Zi, states, min_states=1, sigma_tol=sigma_tol).residual)
            report.residuals[f"<Z:Z> in span Z{l - 1}"] = worst
            if worst > member_tol:
                diag_ok_below = False
        if not diag_ok_below:
            break
        full = [r == n for r in rl]
        if all(full):
            tail = f"; <Z:Z> in span Z_i for i < {l}" if l else ""
            return Verdict("satisfied", l, f"span Z{l} is the fiber{tail}")
        if any(full) and best_partial is None:
            best_partial = (l, sum(full))
    if best_partial is not None and diag_ok_below:
        return Verdict("undecided", best_partial[0], f"full rank at {best_partial[1]}/{len(states)} states")
    if not diag_ok_below:
        return Verdict("violated", None, "a diagonal product leaves the span of its level")
    return Verdict("violated", None, f"rank deficient up to l={max_level}")


def _cone_contains(gen: np.ndarray, target: np.ndarray, tol: float) -> bool:
    if gen.shape[1] == 0:
        return np.max(np.abs(target)) <= tol
    _, r = nnls(gen, target, maxiter=50 * gen.shape[1])
    return r <= tol * max(1.0, np.linalg.norm(target))


def _cone_full(lineal: np.ndarray, conic: np.ndarray, n: int, tol: float) -> bool:
    gen = np.hstack([lineal, -lineal, conic])
    scale = max(1.0, np.max(np.abs(gen)) if gen.size else 1.0)
    for j in range(n):
        for s in (1.0, -1.0):
            e = np.zeros(n)
            e[j] = s * scale
            if not _cone_contains(gen, e, tol):
                return False
    return True


def _dedupe_fields(fields, states, n, sigma_tol):
    """Keep fields that raise the pointwise rank somewhere."""
    kept, kept_vals = [], []
    for f in fields:
        val = _values([f], states)[:, :, 0]
        if np.max(np.abs(val)) < DEDUPE_TOL:
            continue
        if kept_vals:
            V = np.stack(kept_vals + [val], axis=2)
            Vk = np.stack(kept_vals, axis=2)
            grows = False
            for s in range(len(states)):
                if np.linalg.matrix_rank(V[s], tol=sigma_tol * max(1.0, np.abs(V[s]).max())) > \
                        np.linalg.matrix_rank(Vk[s], tol=sigma_tol * max(1.0, np.abs(Vk[s]).max())):
                    grows = True
                    break
            if not grows:
                continue
        kept.append(f)
        kept_vals.append(val)
    return kept


def _corollary_H(system, states, n, max_level, report, sigma_tol):
    lineal = list(system.base_controls)
    conic = []  # conic generator fields from earlier levels
    best_partial = None
    for l in range(1, max_level + 1):
        r = len(lineal)
        prods = {}
        for a, b in itertools.combinations_with_replacement(range(r), 2):
            prods[(a, b)] = system.symmetric_product(lineal[a], lineal[b])
        P = {key: _values([f], states)[:, :, 0] for key, f in prods.items()}
        design = _weight_design(r)
        new_vals = []
        for w in design:
            acc = np.zeros((len(states), n))
            for (a, b), v in P.items():
                c = w[a] * w[b] * (1.0 if a == b else 2.0)
                if c:
                    acc += c * v
            new_vals.append(-acc)
        L = _values(lineal, states)
        C_prev = _values(conic, states) if conic else np.zeros((len(states), n, 0))
        C_new = np.stack(new_vals, axis=2)
        full = []
        for s in range(len(states)):
            full.append(_cone_full(L[s], np.concatenate([C_prev[s], C_new[s]], axis=1), n, CONE_TOL))
        report.ranks[f"H{l} full"] = [int(f) for f in full]
        if all(full):
            return Verdict("satisfied", l, f"H{l} is the whole tangent space at every sampled state")
        if any(full) and best_partial is None:
            best_partial = (l, sum(full))
        # fields whose negatives also lie in the cone join the lineality space
        new_fields = []
        for w, val in zip(design, new_vals):
            two_sided = True
            for s in range(len(states)):
                gen = np.hstack([L[s], -L[s], C_prev[s], C_new[s]])
                if not _cone_contains(gen, -val[s], CONE_TOL):
                    two_sided = False
                    break
            fld = _quadratic_field(prods, w, n)
            (new_fields if two_sided else conic).append(fld)
        lineal = _dedupe_fields(lineal + new_fields, states, n, sigma_tol)
        conic = _dedupe_fields(conic, states, n, sigma_tol) if conic else conic
    if best_partial is not None:
        return Verdict("undecided", best_partial[0], f"cone full at {best_partial[1]}/{len(states)} states")
    return Verdict("violated", None, f"cone not full up to l={max_level}")


def _quadratic_field(prods, w, n) -> VectorField:
    items = [((a, b), f) for (a, b), f in prods.items() if w[a] * w[b] != 0.0]
    f0 = next(iter(prods.values()))

    def fn(q):
        acc = np.zeros(n)
        for (a, b), f in items:
            acc = acc - w[a] * w[b] * (1.0 if a == b else 2.0) * f(q)
        return acc

    return VectorField(f0.chart, fn, dim=n, name="-<Gw:Gw>")


def certify(system: Faccs, max_level: int = 3, states=None, *, n_states: int = 20, seed: int = 0,
            sigma_tol: float = SIGMA_TOL, member_tol: float = MEMBER_TOL) -> TrackabilityReport:
    """Evaluate the three trackability certificates at sampled states.

    Parameters
    ----------
    system : Faccs
    max_level : int
        Highest level examined (at most 4).
    states : array_like, optional
        Phase states; ``n_states`` samples from the default box otherwise.

    Returns
    -------
    TrackabilityReport
    """
    if max_level > MAX_LEVEL:
        raise ValueError(f"max_level is capped at {MAX_LEVEL}")
    if states is None:
        states = default_states(system, n_states, seed)
    states = list(states)
    n = system.fiber_dim
    report = TrackabilityReport(system.name, len(states), n)
    report.verdicts["sym1"] = _first_order_check(system, states, n, report, sigma_tol, member_tol)
    report.verdicts["corollary_Z"] = _corollary_Z(system, states, n, max_level, report, sigma_tol, member_tol)
    report.verdicts["corollary_H"] = _corollary_H(system, states, n, max_level, report, sigma_tol)
    if report.verdicts["sym1"].status == "satisfied" and report.verdicts["sym1"].level == 0:
        report.notes.append("inputs span the fiber; higher-level checks are trivially satisfied")
    return report
