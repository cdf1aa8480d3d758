import math

import numpy as np
import pytest

from acctrack.cones import generate_H
from acctrack.dynamics import (IntegrationError, IntegratorConfig, Trajectory, convergence_study, empirical_orders,
                               integrate, tracking_error)
from acctrack.geometry import Chart, VectorField
from acctrack.models import Faccs, flat_system, hovercraft, submarine
from acctrack.signals import Signal
from acctrack.synthesis import (ControlLaw, ReferenceCurve, averaged_counterpart, eta_schedule, oscillatory_law,
                                parameterize_reference, recursion_H)

TIGHT = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-10)


def _sub_rest(P=(0.0, 0.0, 0.0), Pi=(0.0, 0.0, 0.0)):
    x = np.zeros(18)
    x[3:12] = np.eye(3).ravel()
    x[12:15] = Pi
    x[15:18] = P
    return x


@pytest.mark.parametrize("method", ["compiled", "python"])
def test_equilibrium_is_constant(method):
    sub = submarine()
    x0 = _sub_rest()
    traj = integrate(sub, ControlLaw([Signal()] * 3, (0.0, 1.0)), x0, IntegratorConfig(method=method))
    assert np.allclose(traj.states, x0, atol=1e-15)


@pytest.mark.parametrize("method", ["compiled", "python"])
def test_flat_straight_line(method):
    sys = flat_system(3)
    x0 = np.array([0.1, -0.2, 0.3, 1.0, 2.0, -0.5])
    traj = integrate(sys, None, x0, IntegratorConfig(method=method), horizon=(0.0, 2.0))
    expect = x0[:3] + traj.times[:, None] * x0[3:]
    assert np.max(np.abs(traj.states[:, :3] - expect)) < 1e-13
    assert traj.stats["path"] == method


def test_compiled_matches_python():
    sub = submarine(inputs="velocity")
    law = oscillatory_law(sub, [0.3, 1.0, 1.0], [2, 1, 1], 0.1, slow=[0.1, 0.0, -0.2])
    x0 = _sub_rest(P=(0.2, -0.1, 0.3), Pi=(0.1, 0.0, -0.2))
    cfg = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-10)
    a = integrate(sub, law, x0, IntegratorConfig(**{**cfg.__dict__, "method": "compiled"}))
    b = integrate(sub, law, x0, IntegratorConfig(**{**cfg.__dict__, "method": "python"}))
    assert np.max(np.abs(a.states - b.states)) < 1e-7


def test_uncontrolled_submarine_self_convergence():
    sub = submarine()
    x0 = _sub_rest(Pi=(0.0, 0.0, 0.5))
    ref = integrate(sub, None, x0, IntegratorConfig(rel_tol=1e-12, abs_tol=1e-12), horizon=(0.0, 5.0))
    run = integrate(sub, None, x0, TIGHT, horizon=(0.0, 5.0))
    n_ref = np.linalg.norm(ref.states[:, 12:15], axis=1)
    n_run = np.linalg.norm(run.states[:, 12:15], axis=1)
    assert np.max(np.abs(n_ref - n_run)) < 1e-7


@pytest.mark.parametrize("tol", [1e-6, 1e-8])
def test_halving_tolerance(tol):
    sub = submarine()
    x0 = _sub_rest(P=(0.4, -0.3, 0.2), Pi=(0.3, 0.1, -0.2))
    a = integrate(sub, None, x0, IntegratorConfig(rel_tol=tol, abs_tol=tol), horizon=(0.0, 3.0))
    b = integrate(sub, None, x0, IntegratorConfig(rel_tol=tol / 2, abs_tol=tol / 2), horizon=(0.0, 3.0))
    assert np.linalg.norm(a.states[-1] - b.states[-1]) < 10 * tol * np.linalg.norm(b.states[-1])


def test_step_cap_from_law():
    sub = submarine()
    law = oscillatory_law(sub, [0.0, 1.0, 1.0], [2, 1, 1], 0.04)
    cfg = IntegratorConfig()
    assert cfg.effective_max_step(law) == pytest.approx(0.04 / 20)
    traj = integrate(sub, law, _sub_rest(), cfg)
    assert traj.stats["max_step"] <= 0.04 / 20


def test_step_cap_refinement_hovercraft():
    hov = hovercraft()
    g = ReferenceCurve.hovercraft_sideways(hov)
    p = parameterize_reference(hov, g, generate_H(hov), "H")
    law = recursion_H(hov, p, eta_schedule(0.05, 1, "H3"), sequence="phi")
    base = IntegratorConfig(rel_tol=1e-9, abs_tol=1e-9)
    cap = base.effective_max_step(law)
    e1 = tracking_error(integrate(hov, law, g.initial_state(), base), g)
    e2 = tracking_error(integrate(hov, law, g.initial_state(), IntegratorConfig(rel_tol=1e-9, abs_tol=1e-9,
                                                                                 max_step=cap / 2)), g)
    assert abs(e2 - e1) < 0.05 * e1


def test_blow_up_aborts():
    chart = Chart.euclidean(1)
    drift = VectorField(Chart.euclidean(2), lambda x: np.array([x[1], x[1] ** 2]), dim=2)
    Y = VectorField.constant(chart, [1.0])
    sys = Faccs("blowup", drift, (Y,))
    with pytest.raises(IntegrationError, match="aborted"):
        integrate(sys, None, np.array([0.0, 1.0]), IntegratorConfig(method="python"), horizon=(0.0, 2.0))


def test_input_validation():
    sub = submarine()
    with pytest.raises(ValueError):
        integrate(sub, None, np.zeros(5), horizon=(0, 1))
    with pytest.raises(ValueError):
        integrate(sub, None, _sub_rest())
    with pytest.raises(ValueError):
        integrate(sub, ControlLaw([Signal()] * 2, (0, 1)), _sub_rest())
    with pytest.raises(ValueError):
        IntegratorConfig(rel_tol=0.0)


def test_tracking_error_trivial():
    g = ReferenceCurve.polynomial([[0, 1], [1], [0], [0]], base_dim=2)
    t = np.linspace(0, 1, 11)
    X = g.state(t)
    assert tracking_error(Trajectory(t, X), g) == 0.0
    Y = X.copy()
    Y[:, 1] += 0.25
    assert tracking_error(Trajectory(t, Y), g) == pytest.approx(0.25)
    assert tracking_error(Trajectory(t, Y), g, metric=[0]) == 0.0
    with pytest.raises(ValueError, match="horizon"):
        tracking_error(Trajectory(t * 2, X), g)


def test_trajectory_csv(tmp_path):
    tr = Trajectory(np.array([0.0, 0.5]), np.array([[1 / 3, 2.0], [0.1, -1e-20]]), names=("a", "b"))
    text = tr.to_csv(tmp_path / "x.csv")
    assert text.splitlines()[0] == "t,a,b"
    assert float(text.splitlines()[1].split(",")[1]) == 1 / 3
    assert text.endswith("\r\n")


def test_empirical_orders():
    o = empirical_orders([0.1, 0.05, 0.025], [1.0, 0.5, 0.25])
    assert o[0] is None and o[1] == pytest.approx(1.0) and o[2] == pytest.approx(1.0)
    assert empirical_orders([0.1, 0.05], [1.0, 0.0])[1] is None


def test_convergence_study_admissible_reference():
    sub = submarine()
    g = ReferenceCurve.rest(sub)
    rows = convergence_study(sub, g, lambda eps: ControlLaw([Signal()] * 3, g.horizon), [0.1, 0.05])
    assert [r["eps"] for r in rows] == [0.1, 0.05]
    assert all(r["error"] < 1e-9 for r in rows)
    with pytest.raises(ValueError):
        convergence_study(sub, g, None, [0.05, 0.1])


def _prop_gap(sub, eps):
    x0 = _sub_rest(P=(0.1, -0.2, 0.1))
    law = oscillatory_law(sub, [0.0, 1.0, 1.0], [2, 1, 1], eps)
    avg = averaged_counterpart(sub, [0.0, 1.0, 1.0], [2, 1, 1])
    cfg = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-10)
    a = integrate(sub, law, x0, cfg)
    b = integrate(avg, None, x0, cfg, horizon=(0.0, 1.0))
    return float(np.max(np.abs(a.states[:, :12] - b.states[:, :12])))


def test_averaging_order_one():
    sub = submarine(inputs="velocity")
    e = [_prop_gap(sub, eps) for eps in (0.04, 0.02, 0.01)]
    for e0, e1 in zip(e, e[1:]):
        assert 0.3 <= e1 / e0 <= 0.7


def test_sweep_jobs_do_not_change_results():
    hov = hovercraft()
    g = ReferenceCurve.hovercraft_sideways(hov)
    p = parameterize_reference(hov, g, generate_H(hov), "H")
    synth = lambda eps: recursion_H(hov, p, eta_schedule(eps, 1, "H3"), sequence="phi")
    cfg = IntegratorConfig(rel_tol=1e-8, abs_tol=1e-8)
    r1 = convergence_study(hov, g, synth, [0.1, 0.05], cfg, jobs=1)
    r2 = convergence_study(hov, g, synth, [0.1, 0.05], cfg, jobs=2)
    assert [r["error"] for r in r1] == [r["error"] for r in r2]
    assert r1[1]["order"] == pytest.approx(1.0, abs=0.2)
    assert math.isfinite(r1[0]["runtime"])
