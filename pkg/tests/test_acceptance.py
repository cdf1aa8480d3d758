"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line (also collected
in the terminal summary) before asserting with the pinned tolerances.
"""
import itertools
import math
import time

import numpy as np
import pytest

from acctrack.cli import _synthesizer, build_reference, build_system, load_config, main
from acctrack.cones import certify
from acctrack.dynamics import IntegratorConfig, integrate, tracking_error
from acctrack.geometry import TangentPoint, verify_triple_bracket
from acctrack.models import HovercraftParams, SubmarineParams, hovercraft, sample_states, submarine
from acctrack.sequences import lambda_T, mean_value, phi, psi
from acctrack.synthesis import REGIMES, averaged_counterpart, eta_schedule, oscillatory_law

FD_TOL, CLOSED_TOL = 1e-4, 1e-6
PRODUCT_TOL = 1e-6
RESIDUAL_TOL = 1e-8
PHI_TOL, PSI_TOL, MEAN_TOL = 1e-9, 1e-6, 1e-8
RATIO_BAND = (0.3, 0.7)
ERROR_BAND = (0.08, 0.40)


def test_criterion_1_triple_bracket(verdict):
    started = time.perf_counter()
    worst = {"fd": 0.0, "closed": 0.0}
    rng = np.random.default_rng(2024)
    for make in (hovercraft, submarine):
        for jac in ("fd", "closed"):
            sys = make(jacobian=jac)
            m = sys.base_dim
            states = sample_states(sys, 100, rng)
            for a, b in itertools.combinations_with_replacement(range(1, sys.k + 1), 2):
                for x in states:
                    r = verify_triple_bracket(sys, a, b, TangentPoint(x[:m], x[m:]))
                    worst[jac] = max(worst[jac], r)
    elapsed = time.perf_counter() - started
    ok = worst["fd"] < FD_TOL and worst["closed"] < CLOSED_TOL and elapsed < 10.0
    verdict(1, ok, f"fd {worst['fd']:.2e} closed {worst['closed']:.2e} in {elapsed:.1f}s")
    assert ok


def test_criterion_2_product_values(verdict):
    hov = hovercraft(HovercraftParams(a=2.0, c=0.5, e=1.0))
    sub = submarine(SubmarineParams(J1=1.0, J3=3.0, M1=1.0, M2=2.0, M3=3.0), inputs="velocity")
    rng = np.random.default_rng(7)
    dev = 0.0
    for x in sample_states(hov, 10, rng):
        Y = hov.base_controls
        dev = max(dev, np.max(np.abs(hov.symmetric_product(Y[0], Y[0])(x[:3]) - [0, 1, 0])))
    # fiber order (Pi1, Pi2, Pi3, P1, P2, P3)
    expect = {(1, 2): [0, 0, 0, 3.0, 0, 0], (0, 2): [0, 0, 0, 0, -1.5, 0], (0, 1): [0] * 6}
    Y = sub.base_controls
    for x in sample_states(sub, 10, rng):
        q = x[:12]
        for (a, b), v in expect.items():
            dev = max(dev, np.max(np.abs(sub.symmetric_product(Y[a], Y[b])(q) - v)))
        triple = sub.symmetric_product(sub.symmetric_product(Y[1], Y[2]), sub.symmetric_product(Y[0], Y[2]))
        dev = max(dev, np.max(np.abs(triple(q) - [0, 0, -1.5, 0, 0, 0])))
    ok = dev < PRODUCT_TOL
    verdict(2, ok, f"max componentwise deviation {dev:.2e}")
    assert ok


def test_criterion_3_certification(verdict):
    sub = certify(submarine(inputs="velocity"), max_level=3)
    hov = certify(hovercraft(), max_level=3)
    zz = max(v for k, v in sub.residuals.items() if k.startswith("<Z:Z>"))
    checks = [
        sub.verdicts["sym1"].status == "violated",
        max(sub.ranks["Sym1"]) == 5,
        sub.verdicts["corollary_Z"].status == "satisfied",
        sub.verdicts["corollary_Z"].level == 2,
        zz < RESIDUAL_TOL,
        hov.verdicts["sym1"].status == "violated",
        hov.verdicts["corollary_H"].status == "satisfied",
        hov.verdicts["corollary_H"].level == 1,
    ]
    ok = all(checks)
    verdict(3, ok, f"submarine {sub.summary()} (<Z:Z> residual {zz:.1e}); hovercraft {hov.summary()}")
    assert ok


def test_criterion_4_orthonormality(verdict):
    started = time.perf_counter()
    phi_dev = max(abs(lambda_T(phi(i), phi(j)) - (i == j)) for i in range(1, 9) for j in range(1, 9))
    psi_dev = max(abs(lambda_T(psi(i), psi(j)) - (i == j)) for i in range(1, 5) for j in range(1, 5))
    means = max([abs(mean_value(phi(i))) for i in range(1, 9)] + [abs(mean_value(psi(j))) for j in range(1, 5)])
    elapsed = time.perf_counter() - started
    ok = phi_dev < PHI_TOL and psi_dev < PSI_TOL and means < MEAN_TOL and elapsed < 5.0
    verdict(4, ok, f"phi {phi_dev:.1e}, psi {psi_dev:.3f}, means {means:.1e}, {elapsed:.1f}s")
    assert ok


def _averaging_gap(sys, eps):
    x0 = np.zeros(18)
    x0[3:12] = np.eye(3).ravel()
    x0[15:18] = (0.1, -0.2, 0.1)
    amps, idx = [0.0, 1.0, 1.0], [2, 1, 1]
    cfg = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-10)
    osc = integrate(sys, oscillatory_law(sys, amps, idx, eps), x0, cfg)
    avg = integrate(averaged_counterpart(sys, amps, idx), None, x0, cfg, horizon=(0.0, 1.0))
    return float(np.max(np.abs(osc.states[:, :12] - avg.states[:, :12])))


def test_criterion_5_averaging_order(verdict):
    sys = submarine(inputs="velocity")
    e1, e2 = _averaging_gap(sys, 0.04), _averaging_gap(sys, 0.02)
    ratio = e2 / e1
    ok = RATIO_BAND[0] <= ratio <= RATIO_BAND[1]
    verdict(5, ok, f"e(0.04) {e1:.4f}, e(0.02) {e2:.4f}, ratio {ratio:.4f}")
    assert ok


def _experiment_error(cfg, eps):
    system = build_system(cfg)
    gamma = build_reference(cfg, system)
    _, synth = _synthesizer(cfg, system, gamma)
    law = synth(eps)
    traj = integrate(system, law, gamma.initial_state(), IntegratorConfig(rel_tol=1e-7, abs_tol=1e-7))
    return tracking_error(traj, gamma, cfg["metric"]), law


def test_criterion_6_submarine_experiment(verdict):
    started = time.perf_counter()
    cfg = load_config("submarine_experiment")
    system = build_system(cfg)
    x0 = build_reference(cfg, system).initial_state()
    p = system.params
    momentum = np.array([p.M1, p.M2, p.M3]) * x0[15:18]
    setup = (np.allclose(momentum, [-1, -2, -3]) and np.allclose(x0[12:15], 0) and x0[11] == 1.0
             and cfg["metric"] == [0, 1, 2, 11])
    e1, law1 = _experiment_error(cfg, 1 / 39)
    e2, law2 = _experiment_error(cfg, 1 / 79)
    sched_ok = (law1.schedule.values[1] == pytest.approx((1 / 39) ** 2.5, rel=1e-12)
                and law2.schedule.values[1] == pytest.approx((1 / 79) ** 2.5, rel=1e-12))
    elapsed = time.perf_counter() - started
    ok = setup and sched_ok and ERROR_BAND[0] <= e1 <= ERROR_BAND[1] and e2 < e1 and elapsed < 300
    verdict(6, ok, f"error(1/39) {e1:.4f}, error(1/79) {e2:.4f}, {elapsed:.0f}s")
    assert ok


def test_criterion_7_schedules(verdict):
    want = {"H3": 3.0, "H_sharp": 2.5 + (math.sqrt(5) / 2 - 1), "Z4": 4.0, "Z_sharp": 3.0 + (math.sqrt(3) - 1),
            "const2": 2.5}
    exact = all(REGIMES[k] == v and eta_schedule(0.5, 2, k).exponents == (v,) for k, v in want.items())
    rejects = True
    for l in (1, 3, 4):
        try:
            eta_schedule(0.1, l, "const2")
            rejects = False
        except ValueError:
            pass
    ok = exact and rejects
    verdict(7, ok, "exponents exact, const2 rejects l != 2" if ok else f"exact={exact} rejects={rejects}")
    assert ok


def test_criterion_8_determinism(verdict, tmp_path):
    outs = []
    for run in ("a", "b"):
        d = tmp_path / run
        assert main(["simulate", "--config", "submarine_experiment", "--out", str(d), "--seed", "11"]) == 0
        outs.append(d)
    names = sorted(p.name for p in outs[0].glob("*.csv"))
    same = names == sorted(p.name for p in outs[1].glob("*.csv")) and len(names) == 3 and all(
        (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in names)
    verdict(8, same, f"{len(names)} CSV files compared byte for byte")
    assert same
