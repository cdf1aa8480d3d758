"""Differential-geometric kernel.

Vector fields carry a first-derivative oracle (closed form or central
finite differences). On top of that live Lie brackets, covariant
derivatives, symmetric products, the geodesic spray and vertical lifts.

Connections are described in a moving frame: a base chart with ``m``
coordinates, a fiber of dimension ``n`` and a frame map ``F(q)`` (``m x n``)
such that a fiber vector ``w`` corresponds to the tangent vector ``F(q) w``.
For coordinate connections ``F`` is the identity.  Vector fields used with a
connection return their components in that frame, so

    nabla_X Y (q) = DY(q) F(q) X(q) + Gamma(q)(X(q), Y(q)).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "ConfigurationError",
    "UndefinedResidual",
    "Chart",
    "VectorField",
    "Connection",
    "TangentPoint",
    "lie_bracket",
    "covariant_derivative",
    "symmetric_product",
    "geodesic_spray",
    "vertical_lift",
    "verify_triple_bracket",
    "finite_difference_jacobian",
    "DEFAULT_H",
]

DEFAULT_H = 1e-5


class ConfigurationError(ValueError):
    """Raised when objects that must share a chart or shape do not."""


class UndefinedResidual(ValueError):
    """Raised when a residual has no independent second computation path."""


@dataclass(frozen=True)
class Chart:
    """A single global coordinate chart.

    Parameters
    ----------
    dim : int
        Number of coordinates.
    coordinate_names : tuple of str
        One distinct label per coordinate.
    note : str, optional
        Free-form description of embedded structure.
    """

    dim: int
    coordinate_names: tuple = ()
    note: str = ""

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ConfigurationError(f"chart dimension must be a positive integer, got {self.dim}")
        names = tuple(self.coordinate_names) or tuple(f"q{i + 1}" for i in range(self.dim))
        if len(names) != self.dim:
            raise ConfigurationError(f"expected {self.dim} coordinate names, got {len(names)}")
        if len(set(names)) != len(names):
            raise ConfigurationError("coordinate names must be distinct")
        object.__setattr__(self, "coordinate_names", names)

    @classmethod
    def euclidean(cls, dim: int, prefix: str = "q") -> "Chart":
        return cls(dim, tuple(f"{prefix}{i + 1}" for i in range(dim)))

    def product(self, other: "Chart", note: str = "") -> "Chart":
        """Chart on the product of two coordinate spaces."""
        return Chart(self.dim + other.dim, self.coordinate_names + other.coordinate_names, note)


def finite_difference_jacobian(fn: Callable, q: np.ndarray, h: float = DEFAULT_H) -> np.ndarray:
    """Central-difference jacobian, one coordinate at a time."""
    q = np.asarray(q, dtype=float)
    cols = []
    for i in range(q.size):
        e = np.zeros_like(q)
        e[i] = h
        cols.append((np.asarray(fn(q + e)) - np.asarray(fn(q - e))) / (2.0 * h))
    return np.stack(cols, axis=-1)


class VectorField:
    """A smooth map from chart points to component vectors.

    Parameters
    ----------
    chart : Chart
        Domain chart.
    fn : callable
        ``fn(q) -> ndarray`` of length ``dim``.
    jacobian : callable, optional
        Closed-form derivative ``q -> (dim, chart.dim)`` array. When omitted,
        central finite differences with step ``h`` are used.
    dim : int, optional
        Number of output components; defaults to ``chart.dim``. Fields
        expressed in a connection frame have ``dim`` equal to the fiber
        dimension.
    h : float
        Finite-difference step.
    name : str
        Label used in reports.
    """

    __slots__ = ("_chart", "_fn", "_jac", "_dim", "_h", "_name")

    def __init__(self, chart: Chart, fn: Callable, jacobian: Optional[Callable] = None, *,
                 dim: Optional[int] = None, h: float = DEFAULT_H, name: str = ""):
        if not isinstance(chart, Chart):
            raise ConfigurationError("chart must be a Chart")
        if h <= 0:
            raise ConfigurationError("finite-difference step must be positive")
        self._chart = chart
        self._fn = fn
        self._jac = jacobian
        self._dim = chart.dim if dim is None else int(dim)
        self._h = float(h)
        self._name = name

    def __setattr__(self, key, value):
        if hasattr(self, "_name"):
            raise AttributeError("VectorField is immutable")
        object.__setattr__(self, key, value)

    chart = property(lambda self: self._chart)
    dim = property(lambda self: self._dim)
    h = property(lambda self: self._h)
    name = property(lambda self: self._name)

    @property
    def has_closed_jacobian(self) -> bool:
        return self._jac is not None

    def __call__(self, q) -> np.ndarray:
        return np.asarray(self._fn(np.asarray(q, dtype=float)), dtype=float)

    def __repr__(self):
        return f"VectorField({self._name or 'unnamed'}, chart dim={self._chart.dim}, dim={self._dim})"

    def jacobian(self, q) -> np.ndarray:
        """Derivative matrix of shape ``(dim, chart.dim)``."""
        q = np.asarray(q, dtype=float)
        if self._jac is not None:
            return np.asarray(self._jac(q), dtype=float)
        return finite_difference_jacobian(self, q, self._h)

    def fd_jacobian(self, q) -> np.ndarray:
        """Finite-difference jacobian regardless of any closed form."""
        return finite_difference_jacobian(self, np.asarray(q, dtype=float), self._h)

    def jvp(self, q, v) -> np.ndarray:
        """Directional derivative ``DY(q) v``.

        Uses the closed-form jacobian when present, otherwise a central
        difference along the unit-max direction ``v / max|v|`` with step
        ``h``, rescaled by ``max|v|`` (safe for subnormal ``v``).
        """
        q = np.asarray(q, dtype=float)
        v = np.asarray(v, dtype=float)
        if self._jac is not None:
            return self.jacobian(q) @ v
        scale = np.max(np.abs(v)) if v.size else 0.0
        if scale == 0.0:
            return np.zeros(self._dim)
        u, h = v / scale, self._h
        return scale * ((self(q + h * u) - self(q - h * u)) / (2.0 * h))

    def with_fd(self) -> "VectorField":
        """Copy that ignores the closed-form jacobian."""
        return VectorField(self._chart, self._fn, None, dim=self._dim, h=self._h, name=self._name)

    # light algebra used when combining generators
    def __add__(self, other: "VectorField") -> "VectorField":
        _same_chart(self, other)
        if self._dim != other.dim:
            raise ConfigurationError("component count mismatch")
        jac = None
        if self.has_closed_jacobian and other.has_closed_jacobian:
            jac = lambda q: self.jacobian(q) + other.jacobian(q)
        return VectorField(self._chart, lambda q: self(q) + other(q), jac, dim=self._dim, h=self._h,
                           name=f"{self._name}+{other.name}")

    def scale(self, c: float) -> "VectorField":
        jac = (lambda q: c * self.jacobian(q)) if self.has_closed_jacobian else None
        return VectorField(self._chart, lambda q: c * self(q), jac, dim=self._dim, h=self._h,
                           name=f"{c:g}*{self._name}")

    def __neg__(self) -> "VectorField":
        return self.scale(-1.0)

    def __sub__(self, other: "VectorField") -> "VectorField":
        return self + (-other)

    @classmethod
    def constant(cls, chart: Chart, value, name: str = "") -> "VectorField":
        value = np.asarray(value, dtype=float).copy()
        value.setflags(write=False)
        zero = np.zeros((value.size, chart.dim))
        return cls(chart, lambda q: value.copy(), lambda q: zero.copy(), dim=value.size, name=name)

    @classmethod
    def zero(cls, chart: Chart, dim: Optional[int] = None) -> "VectorField":
        return cls.constant(chart, np.zeros(chart.dim if dim is None else dim), name="0")


def _same_chart(*fields):
    c0 = fields[0].chart
    for f in fields[1:]:
        if f.chart != c0:
            raise ConfigurationError(f"chart mismatch: {c0} vs {f.chart}")


@dataclass(frozen=True)
class TangentPoint:
    """A base point together with a velocity in fiber components."""

    base: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "base", np.asarray(self.base, dtype=float))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float))
        if self.base.ndim != 1 or self.velocity.ndim != 1:
            raise ConfigurationError("tangent point parts must be vectors")

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.base, self.velocity])


class Connection:
    """Affine connection given by Christoffel symbols in a frame.

    Parameters
    ----------
    chart : Chart
        Base chart with ``m`` coordinates.
    christoffel : callable
        ``q -> (n, n, n)`` array ``G[i, j, r]`` so that
        ``Gamma(X, Y)_i = sum_jr G[i, j, r] X_j Y_r``.
    fiber_dim : int, optional
        Fiber dimension ``n``; defaults to ``chart.dim``.
    frame : callable, optional
        ``q -> (m, n)`` frame map; identity by default.
    torsion_free : bool
        Whether ``G`` is declared symmetric in its last two indices.
    """

    def __init__(self, chart: Chart, christoffel: Callable, *, fiber_dim: Optional[int] = None,
                 frame: Optional[Callable] = None, torsion_free: bool = True, name: str = ""):
        self.chart = chart
        self.fiber_dim = chart.dim if fiber_dim is None else int(fiber_dim)
        if frame is None and self.fiber_dim != chart.dim:
            raise ConfigurationError("a frame map is required when fiber and chart dimensions differ")
        self._christoffel = christoffel
        self._frame = frame
        self.torsion_free = torsion_free
        self.name = name

    def christoffel(self, q) -> np.ndarray:
        g = np.asarray(self._christoffel(np.asarray(q, dtype=float)), dtype=float)
        n = self.fiber_dim
        if g.shape != (n, n, n):
            raise ConfigurationError(f"christoffel symbols must have shape {(n, n, n)}, got {g.shape}")
        return g

    def frame(self, q) -> np.ndarray:
        if self._frame is None:
            return np.eye(self.chart.dim)
        return np.asarray(self._frame(np.asarray(q, dtype=float)), dtype=float)

    def gamma(self, q, x, y) -> np.ndarray:
        """Bilinear term ``Gamma(q)(x, y)``."""
        return np.einsum("ijr,j,r->i", self.christoffel(q), x, y)

    def torsion_defect(self, states: Sequence) -> float:
        """Largest asymmetry ``|G[i,j,r] - G[i,r,j]|`` over the given points."""
        worst = 0.0
        for q in states:
            g = self.christoffel(q)
            worst = max(worst, float(np.max(np.abs(g - g.transpose(0, 2, 1)))))
        return worst

    @classmethod
    def flat(cls, chart: Chart) -> "Connection":
        n = chart.dim
        return cls(chart, lambda q: np.zeros((n, n, n)), name="flat")


def lie_bracket(X: VectorField, Y: VectorField) -> VectorField:
    """Lie bracket ``[X, Y](q) = DY(q) X(q) - DX(q) Y(q)``."""
    _same_chart(X, Y)
    if X.dim != X.chart.dim or Y.dim != Y.chart.dim:
        raise ConfigurationError("Lie brackets need coordinate-component fields")

    def fn(q):
        return Y.jvp(q, X(q)) - X.jvp(q, Y(q))

    return VectorField(X.chart, fn, dim=X.dim, h=max(X.h, Y.h), name=f"[{X.name},{Y.name}]")


def _check_conn_fields(conn: Connection, *fields: VectorField):
    for f in fields:
        if f.chart != conn.chart:
            raise ConfigurationError(f"field {f.name!r} lives on a different chart than the connection")
        if f.dim != conn.fiber_dim:
            raise ConfigurationError(f"field {f.name!r} has {f.dim} components, connection fiber has {conn.fiber_dim}")


def covariant_derivative(conn: Connection, X: VectorField, Y: VectorField) -> VectorField:
    """Covariant derivative of ``Y`` along ``X``."""
    _check_conn_fields(conn, X, Y)

    def fn(q):
        x = X(q)
        return Y.jvp(q, conn.frame(q) @ x) + conn.gamma(q, x, Y(q))

    return VectorField(conn.chart, fn, dim=conn.fiber_dim, h=max(X.h, Y.h), name=f"D_{X.name}{Y.name}")


def symmetric_product(conn: Connection, X: VectorField, Y: VectorField) -> VectorField:
    """Symmetric product ``<X:Y> = nabla_X Y + nabla_Y X``."""
    a = covariant_derivative(conn, X, Y)
    b = covariant_derivative(conn, Y, X)
    return VectorField(conn.chart, lambda q: a(q) + b(q), dim=conn.fiber_dim, h=max(X.h, Y.h),
                       name=f"<{X.name}:{Y.name}>")


def geodesic_spray(conn: Connection) -> VectorField:
    """Spray on the phase chart ``(q, v)``: ``qdot = F(q) v``, ``vdot = -Gamma(v, v)``."""
    m, n = conn.chart.dim, conn.fiber_dim
    phase = conn.chart.product(Chart.euclidean(n, "v"))

    def fn(x):
        q, v = x[:m], x[m:]
        return np.concatenate([conn.frame(q) @ v, -conn.gamma(q, v, v)])

    return VectorField(phase, fn, name="spray")


def vertical_lift(Y: VectorField, phase_chart: Optional[Chart] = None) -> VectorField:
    """Lift a frame-component field to the phase chart: base part zero."""
    m, n = Y.chart.dim, Y.dim
    if phase_chart is None:
        phase_chart = Y.chart.product(Chart.euclidean(n, "v"))
    if phase_chart.dim != m + n:
        raise ConfigurationError("phase chart must have base plus fiber coordinates")

    def fn(x):
        return np.concatenate([np.zeros(m), Y(x[:m])])

    def jac(x):
        J = np.zeros((m + n, m + n))
        J[m:, :m] = Y.jacobian(x[:m])
        return J

    return VectorField(phase_chart, fn, jac, h=Y.h, name=f"{Y.name}^V")


def verify_triple_bracket(system, a: int, b: int, point: TangentPoint) -> float:
    """Compare ``[Y_a^V, [Z, Y_b^V]]`` against the lifted symmetric product.

    Indices ``a`` and ``b`` are 1-based control indices. The left side uses
    only the phase drift and the lifted controls; the right side uses only
    the connection.

    Returns
    -------
    float
        Sup-norm of the difference at ``point``.
    """
    if system.connection is None:
        raise UndefinedResidual("identity used as definition, residual undefined")
    Ya = system.controls[a - 1]
    Yb = system.controls[b - 1]
    x = point.stacked()
    if x.size != system.phase_chart.dim:
        raise ConfigurationError("tangent point does not match the phase chart")
    lhs = lie_bracket(Ya, lie_bracket(system.drift, Yb))(x)
    q = point.base
    rhs = symmetric_product(system.connection, system.base_controls[a - 1], system.base_controls[b - 1])(q)
    m = system.base_dim
    return float(max(np.max(np.abs(lhs[:m])), np.max(np.abs(lhs[m:] - rhs))))
