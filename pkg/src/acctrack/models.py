"""Control systems: the generic container and the two Kirchhoff vehicles.

Both vehicles are written in first-order form on ``(base, fiber)``
coordinates with fiber components in body velocities (hovercraft) or body
momenta (submarine). Each also carries an explicit connection in that body
frame, derived independently from the kinetic energy, so symmetric products
can be cross-checked against the phase drift.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numba
import numpy as np

from .geometry import (
    Chart,
    ConfigurationError,
    Connection,
    VectorField,
    geodesic_spray,
    lie_bracket,
    symmetric_product as _conn_symmetric_product,
    vertical_lift,
)

__all__ = [
    "Faccs",
    "FastKernel",
    "HovercraftParams",
    "SubmarineParams",
    "hovercraft",
    "submarine",
    "flat_system",
    "orthogonality_drift",
    "sample_states",
    "nearest_rotation",
    "VERTICALITY_TOL",
]

VERTICALITY_TOL = 1e-6

# drift selectors understood by the compiled integrator
DRIFT_CODES = {"hovercraft": 0, "submarine": 1, "submarine_velocity": 2, "flat": 3}


@dataclass(frozen=True)
class FastKernel:
    """Compiled phase drift ``fn(x, params, out)`` for the accelerated integrator.

    ``code`` selects the drift inside the integrator kernel (see
    :data:`DRIFT_CODES`); ``fn`` stays available for direct calls.
    """

    fn: Callable
    params: np.ndarray
    code: int = -1


@dataclass(frozen=True, eq=False)
class Faccs:
    """Forced mechanical control system in first-order form.

    The phase state is ``x = (q, v)`` with ``q`` in the base chart and ``v``
    the fiber components. The dynamics are

        xdot = drift(x) + (0, force(t, x)) + sum_a u_a (0, Y_a(q)).

    Parameters
    ----------
    name : str
        Label.
    drift : VectorField
        Autonomous phase drift (spray plus any time-independent force).
    base_controls : tuple of VectorField
        Control fields ``Y_a`` on the base chart, in fiber components.
    connection : Connection, optional
        When present, symmetric products use it directly.
    force : callable, optional
        Time-dependent fiber force ``force(t, x)``.
    control_bound : tuple of arrays, optional
        Box ``(lower, upper)`` on the inputs.
    kernel : FastKernel, optional
        Compiled version of ``drift`` (only valid when ``force`` is None).
    projector : callable, optional
        Maps a raw phase point onto the model's constraint set (e.g. nearest
        rotation). Used for sampling and optional per-step projection.
    layout : dict
        Named slices of the phase state (e.g. ``"rotation"``).
    """

    name: str
    drift: VectorField
    base_controls: tuple
    connection: Optional[Connection] = None
    force: Optional[Callable] = None
    control_bound: Optional[tuple] = None
    kernel: Optional[FastKernel] = None
    projector: Optional[Callable] = None
    layout: dict = field(default_factory=dict)
    params: object = None

    def __post_init__(self):
        controls = tuple(self.base_controls)
        object.__setattr__(self, "base_controls", controls)
        if not controls:
            # derived systems (averaged counterparts) may carry no inputs
            pass
        base = controls[0].chart if controls else None
        if base is not None:
            for Y in controls:
                if Y.chart != base:
                    raise ConfigurationError("control fields must share the base chart")
            if base.dim + controls[0].dim != self.drift.chart.dim:
                raise ConfigurationError("phase chart must have base plus fiber coordinates")
        if self.connection is not None and base is not None and self.connection.chart != base:
            raise ConfigurationError("connection and control fields must share the base chart")
        lifts = tuple(vertical_lift(Y, self.drift.chart) for Y in controls)
        object.__setattr__(self, "_lifts", lifts)

    # -- shape information --------------------------------------------------
    @property
    def phase_chart(self) -> Chart:
        return self.drift.chart

    @property
    def base_chart(self) -> Chart:
        if self.base_controls:
            return self.base_controls[0].chart
        if self.connection is not None:
            return self.connection.chart
        return Chart.euclidean(self.base_dim)

    @property
    def base_dim(self) -> int:
        if self.base_controls:
            return self.base_controls[0].chart.dim
        return int(self.layout["base_dim"])

    @property
    def fiber_dim(self) -> int:
        return self.phase_chart.dim - self.base_dim

    @property
    def k(self) -> int:
        return len(self.base_controls)

    @property
    def controls(self) -> tuple:
        """Vertical lifts of the control fields on the phase chart."""
        return self._lifts

    def base(self, x) -> np.ndarray:
        return np.asarray(x)[..., : self.base_dim]

    def fiber(self, x) -> np.ndarray:
        return np.asarray(x)[..., self.base_dim:]

    def control_matrix(self, q) -> np.ndarray:
        """Fiber-block matrix with columns ``Y_a(q)``."""
        return np.stack([Y(q) for Y in self.base_controls], axis=1)

    def vector_field(self, t: float, x, u=None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        rate = self.drift(x).copy()
        m = self.base_dim
        if self.force is not None:
            rate[m:] += self.force(t, x)
        if u is not None and self.k:
            rate[m:] += self.control_matrix(x[:m]) @ np.asarray(u, dtype=float)
        return rate

    def with_force(self, force: Callable, name: Optional[str] = None, keep_controls: bool = True) -> "Faccs":
        """Copy with an additional time-dependent fiber force."""
        old = self.force
        if old is None:
            total = force
        else:
            total = lambda t, x: old(t, x) + force(t, x)
        layout = dict(self.layout)
        layout.setdefault("base_dim", self.base_dim)
        return Faccs(
            name=name or self.name,
            drift=self.drift,
            base_controls=self.base_controls if keep_controls else (),
            connection=self.connection,
            force=total,
            control_bound=self.control_bound if keep_controls else None,
            kernel=None,
            projector=self.projector,
            layout=layout,
            params=self.params,
        )

    # -- symmetric products -------------------------------------------------
    def symmetric_product(self, X: VectorField, Y: VectorField) -> VectorField:
        """Symmetric product of two base fields given in fiber components.

        Uses the connection when available. Otherwise the product is read
        off the fiber part of ``[X^V, [Z, Y^V]]`` at zero velocity, averaged
        over both argument orders; the base part must vanish.
        """
        if self.connection is not None:
            return _conn_symmetric_product(self.connection, X, Y)
        return self.symmetric_product_from_drift(X, Y)

    def symmetric_product_from_drift(self, X: VectorField, Y: VectorField) -> VectorField:
        m, n = self.base_dim, self.fiber_dim
        phase = self.phase_chart
        XV, YV = vertical_lift(X, phase), vertical_lift(Y, phase)
        b1 = lie_bracket(XV, lie_bracket(self.drift, YV))
        b2 = lie_bracket(YV, lie_bracket(self.drift, XV))

        def fn(q):
            x = np.concatenate([np.asarray(q, dtype=float), np.zeros(n)])
            w1, w2 = b1(x), b2(x)
            base_part = max(np.max(np.abs(w1[:m])), np.max(np.abs(w2[:m])))
            if base_part > VERTICALITY_TOL:
                raise ConfigurationError(
                    f"nested bracket is not vertical (base part {base_part:.3e}); "
                    "the drift is not of mechanical type")
            return 0.5 * (w1[m:] + w2[m:])

        return VectorField(X.chart, fn, dim=n, h=max(X.h, Y.h), name=f"<{X.name}:{Y.name}>")

    @classmethod
    def from_connection(cls, conn: Connection, controls: Sequence[VectorField], *, force=None,
                        name: str = "system", kernel: Optional[FastKernel] = None) -> "Faccs":
        return cls(name=name, drift=geodesic_spray(conn), base_controls=tuple(controls),
                   connection=conn, force=force, kernel=kernel)


def nearest_rotation(M: np.ndarray) -> np.ndarray:
    """Closest rotation matrix in Frobenius norm (polar factor with det +1)."""
    U, _, Vt = np.linalg.svd(M)
    D = np.eye(3)
    D[2, 2] = np.sign(np.linalg.det(U @ Vt)) or 1.0
    return U @ D @ Vt


def sample_states(system: Faccs, n: int, rng: np.random.Generator, box: float = 2.0) -> np.ndarray:
    """Uniform phase samples in ``[-box, box]``, projected by the model."""
    X = rng.uniform(-box, box, size=(n, system.phase_chart.dim))
    if system.projector is not None:
        X = np.array([system.projector(x) for x in X])
    return X


def _coordinate_controls(chart: Chart, n: int, indices, names) -> tuple:
    out = []
    for i, nm in zip(indices, names):
        e = np.zeros(n)
        e[i] = 1.0
        out.append(VectorField.constant(chart, e, name=nm))
    return tuple(out)


# ---------------------------------------------------------------------------
# hovercraft
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class HovercraftParams:
    """Added-inertia entries of the planar vehicle."""

    a: float = 2.0
    c: float = 0.5
    e: float = 1.0

    def __post_init__(self):
        if min(self.a, self.c, self.e) <= 0:
            raise ConfigurationError("hovercraft inertia entries must be positive")
        if abs(self.a * self.e - self.c ** 2) < 1e-12:
            raise ConfigurationError("hovercraft inertia matrix is singular (a*e = c^2)")

    def inertia(self) -> np.ndarray:
        a, c, e = self.a, self.c, self.e
        return np.array([[a, 0.0, c], [0.0, e, 0.0], [c, 0.0, e]])


@numba.njit(cache=True)
def hovercraft_rhs(x, p, out):
    # p = (a, c, e, Minv row-major)
    a, c, e = p[0], p[1], p[2]
    th, om, v1, v2 = x[0], x[3], x[4], x[5]
    ct, st = np.cos(th), np.sin(th)
    out[0] = om
    out[1] = ct * v1 - st * v2
    out[2] = st * v1 + ct * v2
    P1 = e * v1
    P2 = c * om + e * v2
    # (P . v_perp, om * P_perp) with w_perp = (-w2, w1)
    g0 = -P1 * v2 + P2 * v1
    g1 = -om * P2
    g2 = om * P1
    for i in range(3):
        out[3 + i] = p[3 + 3 * i] * g0 + p[4 + 3 * i] * g1 + p[5 + 3 * i] * g2


def hovercraft(params: HovercraftParams = HovercraftParams(), jacobian: str = "closed") -> Faccs:
    """Elliptic vehicle on a fluid surface.

    State ``(theta, x1, x2, omega, v1, v2)``; the two inputs act on
    ``omega`` and ``v2``.

    Parameters
    ----------
    params : HovercraftParams
    jacobian : {"closed", "fd"}
        Derivative oracle used by the phase drift.
    """
    M = params.inertia()
    Minv = np.linalg.inv(M)
    a, c, e = params.a, params.c, params.e
    p = np.concatenate([[a, c, e], Minv.ravel()])
    base = Chart(3, ("theta", "x1", "x2"))
    phase = Chart(6, ("theta", "x1", "x2", "omega", "v1", "v2"))

    def drift_fn(x):
        out = np.empty(6)
        hovercraft_rhs(x, p, out)
        return out

    def drift_jac(x):
        th, om, v1, v2 = x[0], x[3], x[4], x[5]
        ct, st = np.cos(th), np.sin(th)
        J = np.zeros((6, 6))
        J[0, 3] = 1.0
        J[1, 0] = -st * v1 - ct * v2
        J[2, 0] = ct * v1 - st * v2
        J[1, 4], J[1, 5] = ct, -st
        J[2, 4], J[2, 5] = st, ct
        # the fiber rhs expands to (c om v1, -c om^2 - e om v2, e om v1)
        dg = np.array([[c * v1, c * om, 0.0],
                       [-2.0 * c * om - e * v2, 0.0, -e * om],
                       [e * v1, e * om, 0.0]])
        J[3:, 3:] = Minv @ dg
        return J

    drift = VectorField(phase, drift_fn, drift_jac if jacobian == "closed" else None, name="Z")

    # Connection in the body frame: Gamma(x, y) = -Minv H(x, y), H the
    # symmetric bilinear form of the expanded fiber rhs.
    H = np.zeros((3, 3, 3))
    H[0, 0, 1] = H[0, 1, 0] = c / 2.0
    H[1, 0, 0] = -c
    H[1, 0, 2] = H[1, 2, 0] = -e / 2.0
    H[2, 0, 1] = H[2, 1, 0] = e / 2.0
    G = -np.einsum("il,ljr->ijr", Minv, H)

    def frame(q):
        ct, st = np.cos(q[0]), np.sin(q[0])
        return np.array([[1.0, 0.0, 0.0], [0.0, ct, -st], [0.0, st, ct]])

    conn = Connection(base, lambda q: G, fiber_dim=3, frame=frame, name="hovercraft body frame")
    controls = _coordinate_controls(base, 3, (0, 2), ("Y1", "Y2"))
    return Faccs(
        name="hovercraft",
        drift=drift,
        base_controls=controls,
        connection=conn,
        kernel=FastKernel(hovercraft_rhs, p, DRIFT_CODES['hovercraft']),
        layout={"base_dim": 3, "angle": 0},
        params=params,
    )


# ---------------------------------------------------------------------------
# submarine
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class SubmarineParams:
    """Inertia of the neutrally buoyant ellipsoid (body frame)."""

    J1: float = 1.0
    J3: float = 3.0
    M1: float = 1.0
    M2: float = 2.0
    M3: float = 3.0

    def __post_init__(self):
        if min(self.J1, self.J3, self.M1, self.M2, self.M3) <= 0:
            raise ConfigurationError("submarine inertias must be positive")
        if self.M1 == self.M2:
            raise ConfigurationError("submarine needs M1 != M2 for the third-level product to be nonzero")

    @property
    def J(self) -> np.ndarray:
        return np.array([self.J1, self.J1, self.J3])

    @property
    def M(self) -> np.ndarray:
        return np.array([self.M1, self.M2, self.M3])


@numba.njit(cache=True)
def submarine_rhs(x, p, out):
    # p = (J1, J3, M1, M2, M3); x = (r, A row-major, Pi, P)
    w0 = x[12] / p[0]
    w1 = x[13] / p[0]
    w2 = x[14] / p[1]
    u0 = x[15] / p[2]
    u1 = x[16] / p[3]
    u2 = x[17] / p[4]
    for i in range(3):
        a0 = x[3 + 3 * i]
        a1 = x[4 + 3 * i]
        a2 = x[5 + 3 * i]
        out[i] = a0 * u0 + a1 * u1 + a2 * u2
        # row i of A S(w), S(w) = [[0,-w2,w1],[w2,0,-w0],[-w1,w0,0]]
        out[3 + 3 * i] = a1 * w2 - a2 * w1
        out[4 + 3 * i] = -a0 * w2 + a2 * w0
        out[5 + 3 * i] = a0 * w1 - a1 * w0
    Pi0, Pi1, Pi2 = x[12], x[13], x[14]
    P0, P1, P2 = x[15], x[16], x[17]
    out[12] = Pi1 * w2 - Pi2 * w1 + P1 * u2 - P2 * u1
    out[13] = Pi2 * w0 - Pi0 * w2 + P2 * u0 - P0 * u2
    out[14] = Pi0 * w1 - Pi1 * w0 + P0 * u1 - P1 * u0
    out[15] = P1 * w2 - P2 * w1
    out[16] = P2 * w0 - P0 * w2
    out[17] = P0 * w1 - P1 * w0


def _skew(w) -> np.ndarray:
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


_LEVI_CIVITA = np.zeros((3, 3, 3))
for _i, _j, _k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    _LEVI_CIVITA[_i, _j, _k] = 1.0
    _LEVI_CIVITA[_i, _k, _j] = -1.0


@numba.njit(cache=True)
def submarine_velocity_rhs(x, p, out):
    # same vehicle with fiber (w, v) and unit-acceleration inputs
    y = x.copy()
    y[12] *= p[0]
    y[13] *= p[0]
    y[14] *= p[1]
    y[15] *= p[2]
    y[16] *= p[3]
    y[17] *= p[4]
    submarine_rhs(y, p, out)
    out[12] /= p[0]
    out[13] /= p[0]
    out[14] /= p[1]
    out[15] /= p[2]
    out[16] /= p[3]
    out[17] /= p[4]


def submarine(params: SubmarineParams = SubmarineParams(), jacobian: str = "closed",
              inputs: str = "momentum") -> Faccs:
    """Ellipsoidal vehicle in an ideal fluid.

    Parameters
    ----------
    params : SubmarineParams
    jacobian : {"closed", "fd"}
        Derivative oracle of the phase drift.
    inputs : {"momentum", "velocity"}
        ``"momentum"``: state ``(r, A, Pi, P)``, inputs are forces on
        ``Pi1``, ``Pi2`` and ``P3``. ``"velocity"``: state ``(r, A, w, v)``,
        inputs are unit accelerations of ``w1``, ``w2`` and ``v3``, i.e. the
        momentum inputs rescaled by ``J1``, ``J1`` and ``M3``.

    Notes
    -----
    ``A`` is stored row-major, giving 18 coordinates in total.
    """
    if inputs not in ("momentum", "velocity"):
        raise ConfigurationError(f"unknown input convention {inputs!r}")
    J, Mv = params.J, params.M
    p = np.array([params.J1, params.J3, params.M1, params.M2, params.M3])
    names = ("r1", "r2", "r3") + tuple(f"A{i + 1}{j + 1}" for i in range(3) for j in range(3))
    base = Chart(12, names, note="coordinates A11..A33 form a 3x3 rotation matrix (row-major)")
    phase = Chart(18, names + ("Pi1", "Pi2", "Pi3", "P1", "P2", "P3"), note=base.note)
    E = [_skew(np.eye(3)[l]) for l in range(3)]

    def drift_fn(x):
        out = np.empty(18)
        submarine_rhs(x, p, out)
        return out

    def drift_jac(x):
        A = x[3:12].reshape(3, 3)
        Pi, P = x[12:15], x[15:18]
        w, v = Pi / J, P / Mv
        S = _skew(w)
        Jm = np.zeros((18, 18))
        for i in range(3):
            Jm[i, 3 + 3 * i: 6 + 3 * i] = v
        Jm[0:3, 15:18] = A / Mv
        for i in range(3):
            for j in range(3):
                row = 3 + 3 * i + j
                for kk in range(3):
                    Jm[row, 3 + 3 * i + kk] = S[kk, j]
                for l in range(3):
                    Jm[row, 12 + l] = (A @ E[l])[i, j] / J[l]
        Jm[12:15, 12:15] = -S + _skew(Pi) / J
        Jm[12:15, 15:18] = -_skew(v) + _skew(P) / Mv
        Jm[15:18, 12:15] = _skew(P) / J
        Jm[15:18, 15:18] = -S
        return Jm

    drift = VectorField(phase, drift_fn, drift_jac if jacobian == "closed" else None, name="Z")

    # Kinetic-energy connection in momentum coordinates. The momentum rhs
    # f(p) = (Pi x w + P x v, P x w) is quadratic; Gamma = -sym(f).
    inv = np.concatenate([1.0 / J, 1.0 / Mv])
    B = np.zeros((6, 6, 6))
    eps = _LEVI_CIVITA
    # (a x b)_i = eps[i, j, k] a_j b_k
    B[0:3, 0:3, 0:3] += eps * inv[None, None, 0:3]           # Pi x w
    B[0:3, 3:6, 3:6] += eps * inv[None, None, 3:6]           # P x v
    B[3:6, 3:6, 0:3] += eps * inv[None, None, 0:3]           # P x w
    G = -0.5 * (B + B.transpose(0, 2, 1))

    def frame(q):
        A = q[3:12].reshape(3, 3)
        F = np.zeros((12, 6))
        F[0:3, 3:6] = A / Mv
        for l in range(3):
            F[3:12, l] = (A @ E[l]).ravel() / J[l]
        return F

    def project(x):
        y = np.array(x, dtype=float)
        y[3:12] = nearest_rotation(y[3:12].reshape(3, 3)).ravel()
        return y

    layout = {"base_dim": 12, "rotation": slice(3, 12), "inputs": inputs}
    controls = _coordinate_controls(base, 6, (0, 1, 5), ("Y1", "Y2", "Y3"))
    if inputs == "momentum":
        conn = Connection(base, lambda q: G, fiber_dim=6, frame=frame, name="submarine momentum frame")
        return Faccs(name="submarine", drift=drift, base_controls=controls, connection=conn,
                     kernel=FastKernel(submarine_rhs, p, DRIFT_CODES['submarine']), projector=project, layout=layout, params=params)

    # velocity fiber: x_vel = T x_mom with T = diag(I, 1/J, 1/M)
    m = np.concatenate([J, Mv])
    T = np.concatenate([np.ones(12), 1.0 / m])
    Gv = G * (1.0 / m)[:, None, None] * m[None, :, None] * m[None, None, :]
    vphase = Chart(18, names + ("w1", "w2", "w3", "v1", "v2", "v3"), note=base.note)

    def vdrift_fn(x):
        out = np.empty(18)
        submarine_velocity_rhs(x, p, out)
        return out

    def vdrift_jac(x):
        return T[:, None] * drift_jac(x / T) / T[None, :]

    vdrift = VectorField(vphase, vdrift_fn, vdrift_jac if jacobian == "closed" else None, name="Z")
    conn = Connection(base, lambda q: Gv, fiber_dim=6, frame=lambda q: frame(q) * m[None, :],
                      name="submarine velocity frame")
    return Faccs(name="submarine-velocity-inputs", drift=vdrift, base_controls=controls, connection=conn,
                 kernel=FastKernel(submarine_velocity_rhs, p, DRIFT_CODES['submarine_velocity']), projector=project, layout=layout, params=params)


# ---------------------------------------------------------------------------
# flat systems
# ---------------------------------------------------------------------------
@numba.njit(cache=True)
def flat_rhs(x, p, out):
    n = x.size // 2
    for i in range(n):
        out[i] = x[n + i]
        out[n + i] = 0.0


def flat_system(n: int, actuated: Sequence[int] | None = None) -> Faccs:
    """Euclidean space with the flat connection and coordinate inputs.

    Parameters
    ----------
    n : int
        Configuration dimension.
    actuated : sequence of int, optional
        0-based coordinates carrying an input; all of them by default.
    """
    actuated = list(range(n)) if actuated is None else list(actuated)
    if not actuated:
        raise ConfigurationError("at least one input is required")
    chart = Chart.euclidean(n)
    conn = Connection.flat(chart)
    controls = _coordinate_controls(chart, n, actuated, [f"Y{i + 1}" for i in range(len(actuated))])
    sys = Faccs.from_connection(conn, controls, name=f"flat{n}",
                                kernel=FastKernel(flat_rhs, np.zeros(1), DRIFT_CODES['flat']))
    return sys


def orthogonality_drift(traj, rotation: slice | None = None) -> float:
    """Largest ``|A^T A - I|`` entry along a trajectory with a rotation block."""
    states = np.asarray(traj.states if hasattr(traj, "states") else traj)
    if rotation is None:
        if states.shape[-1] != 18:
            raise ConfigurationError("expected the 18-coordinate vehicle layout")
        rotation = slice(3, 12)
    block = states[:, rotation]
    if block.shape[1] != 9:
        raise ConfigurationError("rotation block must have 9 entries")
    A = block.reshape(-1, 3, 3)
    defect = np.einsum("tki,tkj->tij", A, A) - np.eye(3)
    return float(np.max(np.abs(defect)))
