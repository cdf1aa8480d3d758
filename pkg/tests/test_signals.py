import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.interpolate import CubicSpline

from acctrack._kernels import eval_law
from acctrack.sequences import phi, psi
from acctrack.signals import Bump, Signal, Spline, Trig, compile_signals

T = np.linspace(0.0, 1.0, 257)


def _compiled(signals, t):
    cs = compile_signals(signals)
    vals, u = np.zeros(max(cs.kind.size, 1)), np.zeros(cs.n_channels)
    out = []
    for ti in t:
        eval_law(ti, *cs.as_tuple(), vals, u)
        out.append(u.copy())
    return np.array(out)


@pytest.mark.parametrize("eps", [1.0, 0.1])
def test_atoms_are_time_scaled_sequences(eps):
    assert np.allclose(Trig(2, eps)(T), phi(2)(T / eps) / eps)
    assert np.allclose(Bump(2, eps)(T), psi(2)(T / eps) / eps)
    b = Bump(1, eps)(T)
    assert np.allclose(Bump(1, eps, part=1)(T) - Bump(1, eps, part=-1)(T), b)


def test_algebra():
    a, b = Signal.of(Trig(1, 0.1)), Signal.of(Trig(2, 0.1))
    s = a * 2.0
    assert np.allclose((s + b - a)(T), a(T) + b(T))
    assert np.allclose((a * b)(T), a(T) * b(T))
    assert (a - a).is_zero()
    assert (Signal.const(3.0) * Signal.const(2.0)).constant_value() == 6.0
    assert (a * a).eps_min() == 0.1


def test_sqrt_of_nonnegative_monomial():
    p = Signal.of(Bump(1, 0.2, part=1), 4.0)
    r = p.sqrt()
    assert np.allclose(r(T), 2.0 * np.sqrt(Bump(1, 0.2, part=1)(T)))
    with pytest.raises(ValueError):
        Signal.of(Trig(1, 0.2)).sqrt()
    with pytest.raises(ValueError):
        Signal.const(-1.0).sqrt()
    sq = Signal.of(Trig(1, 0.2)) * Signal.of(Trig(1, 0.2))
    with pytest.raises(ValueError):
        sq.sqrt()
    assert np.allclose((sq * sq).sqrt()(T), Trig(1, 0.2)(T) ** 2)


def test_signal_is_immutable():
    s = Signal.const(1.0)
    with pytest.raises(AttributeError):
        s.foo = 2


def test_spline_matches_scipy_and_clamps():
    x = np.linspace(0, 1, 9)
    cs = CubicSpline(x, np.sin(3 * x))
    sp = Spline.from_ppoly(cs)
    assert np.allclose(sp(T), cs(T))
    assert np.allclose(sp([-1.0, 2.0]), [cs(0.0), cs(1.0)])


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3), st.sampled_from([0.05, 0.3, 1.0]))
def test_compiled_matches_python(c, eps):
    x = np.linspace(0, 1, 6)
    sp = Spline(x, CubicSpline(x, np.cos(x)).c)
    sig = [Signal.of(Trig(1, eps), c[0]) * Signal.of(sp) + Signal.const(c[1]),
           Signal.of(Bump(2, eps, part=-1), abs(c[2])).sqrt() + Signal.of(Bump(1, eps)),
           Signal.zero()]
    got = _compiled(sig, T[::8])
    want = np.stack([s(T[::8]) for s in sig], axis=1)
    assert np.allclose(got, want, atol=1e-9 * (1 + np.abs(want).max()))


def test_record_roundtrip_fields():
    rec = (Signal.of(Trig(1, 0.5), 2.0) * Signal.of(Bump(1, 0.5, part=1))).record()
    assert rec[0]["coef"] == 2.0
    assert {f["atom"] for f in rec[0]["factors"]} == {"phi", "psi"}
