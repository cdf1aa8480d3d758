"""Adaptive integration of closed-loop trajectories and tracking metrics.

The integrator is the Dormand-Prince 5(4) pair with PI step-size control
and cubic Hermite dense output. Systems with a compiled drift and constant
control fields run through a numba kernel; everything else uses the same
algorithm in numpy.
"""
from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels as K
from .signals import compile_signals

__all__ = [
    "IntegrationError",
    "IntegratorConfig",
    "Trajectory",
    "integrate",
    "tracking_error",
    "convergence_study",
    "empirical_orders",
    "format_float",
]


class IntegrationError(RuntimeError):
    """Raised when the integrator cannot continue."""


def format_float(x: float) -> str:
    """Round-trippable 17-significant-digit text."""
    return format(float(x), ".17g")


@dataclass(frozen=True)
class IntegratorConfig:
    """Settings for :func:`integrate`.

    Parameters
    ----------
    rel_tol, abs_tol : float
        Local error tolerances (mixed RMS norm).
    max_step : float
        Step cap. With an oscillatory law attached the effective cap is
        ``min(max_step, eps_min * T / 20)``.
    first_step : float
        Initial trial step.
    n_out : int
        Number of uniform dense-output samples.
    method : {"auto", "compiled", "python"}
    project : bool
        Project the state onto the model's constraint set after each
        accepted step (python path only).
    max_steps : int
        Abort after this many attempted steps.
    """

    rel_tol: float = 1e-7
    abs_tol: float = 1e-7
    max_step: float = math.inf
    first_step: float = 1e-6
    n_out: int = 2001
    method: str = "auto"
    project: bool = False
    max_steps: int = 50_000_000
    steps_per_period: float = 20.0

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.method not in ("auto", "compiled", "python"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.n_out < 2:
            raise ValueError("need at least two output samples")

    def effective_max_step(self, law=None) -> float:
        cap = self.max_step
        if law is not None:
            eps = law.eps_min
            if math.isfinite(eps):
                cap = min(cap, eps * law.period / self.steps_per_period)
        return cap


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Dense-output samples of a closed-loop run."""

    times: np.ndarray
    states: np.ndarray
    stats: dict = field(default_factory=dict)
    names: tuple = ()
    controls: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.times.ndim != 1 or np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        if self.states.shape[0] != self.times.size:
            raise ValueError("one state per time sample is required")

    def to_csv(self, path=None) -> str:
        """RFC-4180 table ``t, states..., u...`` with 17 significant digits."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        header = ["t"] + list(self.names or [f"x{i + 1}" for i in range(self.states.shape[1])])
        if self.controls is not None:
            header += [f"u{i + 1}" for i in range(self.controls.shape[1])]
        w.writerow(header)
        for i, t in enumerate(self.times):
            row = [format_float(t)] + [format_float(v) for v in self.states[i]]
            if self.controls is not None:
                row += [format_float(v) for v in self.controls[i]]
            w.writerow(row)
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _constant_fields(system, q0) -> Optional[np.ndarray]:
    """Full-state control matrix when every control field is constant."""
    if system.k == 0:
        return np.zeros((system.phase_chart.dim, 0))
    for Y in system.base_controls:
        if not Y.has_closed_jacobian or np.any(Y.jacobian(q0) != 0.0):
            return None
    B = np.zeros((system.phase_chart.dim, system.k))
    B[system.base_dim:, :] = system.control_matrix(q0)
    return B


def _dopri_python(rhs: Callable, y0, t0, t1, rtol, atol, hmax, h0, tgrid, max_steps, projector=None):
    y = np.array(y0, dtype=float)
    t = float(t0)
    n = y.size
    out = np.full((tgrid.size, n), np.nan)
    k1 = rhs(t, y)
    h = min(hmax, h0)
    gi = 0
    while gi < tgrid.size and tgrid[gi] <= t:
        out[gi] = y
        gi += 1
    nacc = nrej = 0
    hmin = math.inf
    errold = 1e-4
    last_rejected = False
    status = K.STATUS_OK
    while t < t1:
        if nacc + nrej >= max_steps:
            status = K.STATUS_MAXSTEPS
            break
        if h < K.H_UNDERFLOW and t + h < t1:
            status = K.STATUS_UNDERFLOW
            break
        if t + h > t1:
            h = t1 - t
        k2 = rhs(t + K.C2 * h, y + h * K.A21 * k1)
        k3 = rhs(t + K.C3 * h, y + h * (K.A31 * k1 + K.A32 * k2))
        k4 = rhs(t + K.C4 * h, y + h * (K.A41 * k1 + K.A42 * k2 + K.A43 * k3))
        k5 = rhs(t + K.C5 * h, y + h * (K.A51 * k1 + K.A52 * k2 + K.A53 * k3 + K.A54 * k4))
        k6 = rhs(t + h, y + h * (K.A61 * k1 + K.A62 * k2 + K.A63 * k3 + K.A64 * k4 + K.A65 * k5))
        ynew = y + h * (K.B1 * k1 + K.B3 * k3 + K.B4 * k4 + K.B5 * k5 + K.B6 * k6)
        if not np.all(np.isfinite(ynew)):
            status = K.STATUS_NAN
            break
        k7 = rhs(t + h, ynew)
        e = h * (K.E1 * k1 + K.E3 * k3 + K.E4 * k4 + K.E5 * k5 + K.E6 * k6 + K.E7 * k7)
        sc = atol + rtol * np.maximum(np.abs(y), np.abs(ynew))
        err = math.sqrt(float(np.mean((e / sc) ** 2)))
        if err <= 1.0:
            tn = t + h
            j = gi
            while j < tgrid.size and tgrid[j] <= tn:
                j += 1
            if j > gi:
                th = ((tgrid[gi:j] - t) / h)[:, None]
                out[gi:j] = ((2 * th ** 3 - 3 * th ** 2 + 1) * y + (th ** 3 - 2 * th ** 2 + th) * h * k1
                             + (-2 * th ** 3 + 3 * th ** 2) * ynew + (th ** 3 - th ** 2) * h * k7)
                gi = j
            hmin = min(hmin, h)
            t = tn
            if projector is not None:
                ynew = projector(ynew)
                k7 = rhs(t, ynew)
            y, k1 = ynew, k7
            nacc += 1
            fac = K.SAFETY * err ** (-K.ALPHA) * errold ** K.BETA if err > 0 else K.FAC_MAX
            fac = min(K.FAC_MAX, max(K.FAC_MIN, fac))
            if last_rejected:
                fac = min(fac, 1.0)
            errold = max(err, 1e-4)
            h = min(h * fac, hmax)
            last_rejected = False
        else:
            nrej += 1
            h *= max(K.FAC_MIN, K.SAFETY * err ** (-0.2))
            last_rejected = True
    return out, np.array([nacc, nrej, hmin, status, t])


def integrate(system, law=None, init=None, config: IntegratorConfig = IntegratorConfig(), *,
              horizon: Optional[tuple] = None) -> Trajectory:
    """Integrate ``system`` under an open-loop ``law`` from ``init``.

    Parameters
    ----------
    system : Faccs
    law : ControlLaw, optional
        Open-loop inputs; ``None`` means zero input.
    init : array_like
        Initial phase point.
    config : IntegratorConfig
    horizon : (t0, t1), optional
        Required when ``law`` is ``None``; otherwise must match the law.

    Returns
    -------
    Trajectory
        ``config.n_out`` uniform samples on the horizon.

    Raises
    ------
    IntegrationError
        On step-size underflow, non-finite states or step budget exhaustion.
    """
    y0 = np.asarray(init, dtype=float)
    dim = system.phase_chart.dim
    if y0.shape != (dim,):
        raise ValueError(f"initial state must have {dim} entries, got shape {y0.shape}")
    if law is not None:
        if law.k != system.k:
            raise ValueError(f"law has {law.k} channels, system has {system.k} inputs")
        if horizon is not None and not np.allclose(horizon, law.horizon, rtol=0, atol=1e-12):
            raise ValueError("horizon does not match the control law")
        horizon = law.horizon
    if horizon is None:
        raise ValueError("a horizon is required without a control law")
    t0, t1 = map(float, horizon)
    tgrid = np.linspace(t0, t1, config.n_out)
    hmax = config.effective_max_step(law)
    h0 = min(config.first_step, hmax)

    B = _constant_fields(system, y0[: system.base_dim])
    use_compiled = (system.kernel is not None and system.kernel.code >= 0 and system.force is None and not config.project and B is not None)
    if config.method == "compiled" and not use_compiled:
        raise ValueError("compiled integration needs a compiled drift, constant inputs and no extra force")
    if config.method == "python":
        use_compiled = False

    started = time.perf_counter()
    if use_compiled:
        signals = law.channels if law is not None else []
        if law is None:
            B = np.zeros((dim, 0))
        compiled = compile_signals(signals)
        out, st = K.dopri_fixed_fields(system.kernel.code, system.kernel.params, np.ascontiguousarray(B),
                                       compiled.as_tuple(), y0, t0, t1, config.rel_tol, config.abs_tol,
                                       hmax, h0, tgrid, config.max_steps)
    else:
        if law is None:
            rhs = lambda t, y: system.vector_field(t, y)
        else:
            rhs = lambda t, y: system.vector_field(t, y, law(t))
        projector = system.projector if config.project else None
        out, st = _dopri_python(rhs, y0, t0, t1, config.rel_tol, config.abs_tol, hmax, h0, tgrid,
                                config.max_steps, projector)
    elapsed = time.perf_counter() - started
    status = int(st[3])
    if status != K.STATUS_OK:
        reason = {K.STATUS_UNDERFLOW: "step size fell below 1e-12",
                  K.STATUS_NAN: "state became non-finite",
                  K.STATUS_MAXSTEPS: "step budget exhausted"}[status]
        raise IntegrationError(f"integration aborted at t = {st[4]:.9g}: {reason} "
                               f"(accepted {int(st[0])}, rejected {int(st[1])})")
    controls = law.sample(tgrid) if law is not None else None
    stats = {"accepted": int(st[0]), "rejected": int(st[1]), "min_step": float(st[2]),
             "max_step": float(hmax), "path": "compiled" if use_compiled else "python",
             "runtime": elapsed}
    return Trajectory(tgrid, out, stats, system.phase_chart.coordinate_names, controls)


def tracking_error(traj: Trajectory, gamma, metric: Optional[Sequence[int]] = None) -> float:
    """Sup over the output grid of the Euclidean distance on selected components.

    Parameters
    ----------
    traj : Trajectory
    gamma : ReferenceCurve
        Anything with ``horizon`` and a vectorized ``state(t)``.
    metric : sequence of int, optional
        Phase-state indices to compare; all base coordinates by default.
    """
    g0, g1 = gamma.horizon
    if abs(traj.times[0] - g0) > 1e-12 or abs(traj.times[-1] - g1) > 1e-12:
        raise ValueError(f"horizon mismatch: trajectory [{traj.times[0]}, {traj.times[-1]}] "
                         f"vs reference [{g0}, {g1}]")
    ref = gamma.state(traj.times)
    idx = np.asarray(metric if metric is not None else range(gamma.base_dim), dtype=int)
    diff = traj.states[:, idx] - ref[:, idx]
    return float(np.max(np.linalg.norm(diff, axis=1)))


def empirical_orders(eps: Sequence[float], errors: Sequence[float]) -> list:
    """``log(e_i / e_{i+1}) / log(eps_i / eps_{i+1})`` for consecutive rows."""
    out = [None]
    for i in range(1, len(eps)):
        e0, e1 = errors[i - 1], errors[i]
        if e0 > 0 and e1 > 0:
            out.append(math.log(e0 / e1) / math.log(eps[i - 1] / eps[i]))
        else:
            out.append(None)
    return out


def convergence_study(system, gamma, synthesize: Callable, eps_list: Sequence[float],
                      config: IntegratorConfig = IntegratorConfig(), metric=None, jobs: int = 1,
                      init=None) -> list:
    """Error table over decreasing ``eps`` values.

    Parameters
    ----------
    synthesize : callable
        ``eps -> ControlLaw``.
    jobs : int
        Worker threads; results are independent of this value.

    Returns
    -------
    list of dict
        Rows with ``eps``, ``error``, ``runtime`` and ``order``.
    """
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    x0 = gamma.state(np.array([gamma.horizon[0]]))[0] if init is None else np.asarray(init, float)

    def run(eps):
        started = time.perf_counter()
        law = synthesize(eps)
        traj = integrate(system, law, x0, config)
        return tracking_error(traj, gamma, metric), time.perf_counter() - started, traj.stats

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, eps_list))
    else:
        results = [run(e) for e in eps_list]
    errors = [r[0] for r in results]
    orders = empirical_orders(eps_list, errors)
    return [{"eps": e, "error": r[0], "runtime": r[1], "order": o, "steps": r[2]["accepted"]}
            for e, r, o in zip(eps_list, results, orders)]
