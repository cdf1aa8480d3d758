import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from acctrack.geometry import (Chart, Connection, ConfigurationError, TangentPoint, UndefinedResidual, VectorField,
                               covariant_derivative, finite_difference_jacobian, geodesic_spray, lie_bracket,
                               symmetric_product, verify_triple_bracket, vertical_lift)
from acctrack.models import flat_system, hovercraft, sample_states, submarine

R2 = Chart.euclidean(2)
coords = st.floats(-2, 2, allow_nan=False)


def field(fn, jac=None, chart=R2, **kw):
    return VectorField(chart, fn, jac, **kw)


def test_chart_validation():
    with pytest.raises(ConfigurationError):
        Chart(0, ())
    with pytest.raises(ConfigurationError):
        Chart(2, ("a", "a"))
    with pytest.raises(ConfigurationError):
        Chart(2, ("a",))
    assert Chart.euclidean(3).coordinate_names == ("q1", "q2", "q3")


def test_flat_constant_field_has_zero_derivative():
    conn = Connection.flat(R2)
    X = field(lambda q: np.array([q[1], 3.0]))
    Y = VectorField.constant(R2, [1.0, -2.0])
    assert np.allclose(covariant_derivative(conn, X, Y)(np.array([0.3, -1.2])), 0.0)


def test_directional_derivative_of_linear_field():
    conn = Connection.flat(R2)
    X = VectorField.constant(R2, [1.0, 0.0])
    Y = field(lambda q: np.array([q[0], 0.0]))
    for q in np.random.default_rng(1).uniform(-2, 2, (5, 2)):
        assert np.allclose(covariant_derivative(conn, X, Y)(q), [1.0, 0.0], atol=1e-9)


@given(coords, coords)
def test_swap_field_self_derivative(a, b):
    # X = Y = (q2, q1): nabla_X Y = (q1, q2)
    conn = Connection.flat(R2)
    X = field(lambda q: np.array([q[1], q[0]]))
    assert np.allclose(covariant_derivative(conn, X, X)(np.array([a, b])), [a, b], atol=1e-8)


def test_chart_mismatch_is_rejected():
    conn = Connection.flat(R2)
    X = VectorField.constant(Chart.euclidean(3), [1.0, 0.0, 0.0])
    Y = VectorField.constant(R2, [1.0, 0.0])
    with pytest.raises(ConfigurationError):
        covariant_derivative(conn, X, Y)
    with pytest.raises(ConfigurationError):
        lie_bracket(X, Y)


def _rotation_connection():
    # a non-flat connection with q-dependent symbols on R^2
    def G(q):
        g = np.zeros((2, 2, 2))
        g[0, 0, 1] = g[0, 1, 0] = q[1]
        g[1, 0, 0] = -q[0]
        g[1, 1, 1] = 0.5
        return g
    return Connection(R2, G)


def test_symmetric_product_is_symmetric():
    conn = _rotation_connection()
    X = field(lambda q: np.array([np.sin(q[0]), q[1] ** 2]))
    Y = field(lambda q: np.array([q[0] * q[1], 1.0]))
    for q in np.random.default_rng(2).uniform(-2, 2, (10, 2)):
        assert np.array_equal(symmetric_product(conn, X, Y)(q), symmetric_product(conn, Y, X)(q))


def test_constant_field_self_product_flat():
    X = VectorField.constant(R2, [2.0, -1.0])
    assert np.allclose(symmetric_product(Connection.flat(R2), X, X)(np.zeros(2)), 0.0)


def test_leibniz_identity():
    conn = _rotation_connection()
    X = field(lambda q: np.array([np.cos(q[1]), q[0]]))
    Y = field(lambda q: np.array([1.0 + q[0] ** 2, q[1]]))
    f = lambda q: np.exp(0.3 * q[0]) * (1 + q[1] ** 2)
    fY = field(lambda q: f(q) * Y(q))
    lhs = symmetric_product(conn, X, fY)
    base = symmetric_product(conn, X, Y)
    for q in np.random.default_rng(3).uniform(-2, 2, (50, 2)):
        grad = finite_difference_jacobian(lambda p: np.array([f(p)]), q)[0]
        rhs = f(q) * base(q) + (grad @ X(q)) * Y(q)
        assert np.max(np.abs(lhs(q) - rhs)) < 1e-5


def test_lie_bracket_basic():
    X = VectorField.constant(R2, [1.0, 0.0])
    Y = field(lambda q: np.array([0.0, q[0]]))
    q = np.array([0.7, -0.4])
    assert np.allclose(lie_bracket(X, Y)(q), [0.0, 1.0], atol=1e-8)
    assert np.allclose(lie_bracket(Y, Y)(q), 0.0)
    assert np.allclose(lie_bracket(X, VectorField.constant(R2, [3.0, 1.0]))(q), 0.0)


def test_lie_bracket_antisymmetry_and_jacobi():
    X = field(lambda q: np.array([q[1], -np.sin(q[0])]))
    Y = field(lambda q: np.array([q[0] * q[1], q[0] ** 2]))
    W = field(lambda q: np.array([np.cos(q[1]), q[0]]))
    jac = (lie_bracket(X, lie_bracket(Y, W)) + lie_bracket(Y, lie_bracket(W, X))
           + lie_bracket(W, lie_bracket(X, Y)))
    for q in np.random.default_rng(4).uniform(-2, 2, (20, 2)):
        assert np.max(np.abs(lie_bracket(X, Y)(q) + lie_bracket(Y, X)(q))) < 1e-4
        assert np.max(np.abs(jac(q))) < 1e-4


def test_spray_flat_and_homogeneous():
    spray = geodesic_spray(Connection.flat(R2))
    x = np.array([0.1, 0.2, 1.5, -0.5])
    assert np.allclose(spray(x), [1.5, -0.5, 0.0, 0.0])
    curved = geodesic_spray(_rotation_connection())
    q, v = np.array([0.4, -1.1]), np.array([0.3, 0.8])
    f1 = curved(np.concatenate([q, v]))[2:]
    f2 = curved(np.concatenate([q, 2 * v]))[2:]
    assert np.allclose(f2, 4 * f1)


def test_spray_reproduces_vehicle_momentum_equation():
    sub = submarine()
    spray = geodesic_spray(sub.connection)
    rng = np.random.default_rng(5)
    for x in sample_states(sub, 10, rng):
        Pi, P = x[12:15], x[15:18]
        w, v = Pi / np.array([1.0, 1.0, 3.0]), P / np.array([1.0, 2.0, 3.0])
        out = spray(x)
        assert np.allclose(out[12:15], np.cross(Pi, w) + np.cross(P, v), atol=1e-12)
        assert np.allclose(out, sub.drift(x), atol=1e-12)


def test_vertical_lift():
    Y = field(lambda q: np.array([q[0], 1.0]))
    YV = vertical_lift(Y)
    x = np.array([0.5, 1.0, 3.0, 4.0])
    assert np.allclose(YV(x), [0.0, 0.0, 0.5, 1.0])
    assert np.allclose(vertical_lift(VectorField.zero(R2))(x), 0.0)
    sub = submarine()
    Y1V = sub.controls[0](sample_states(sub, 1, np.random.default_rng(0))[0])
    assert np.flatnonzero(Y1V).tolist() == [12]


@pytest.mark.parametrize("make", [hovercraft, submarine])
def test_closed_vs_fd_jacobian(make):
    sys = make()
    drift = sys.drift
    h = drift.h
    for x in sample_states(sys, 5, np.random.default_rng(6)):
        assert np.max(np.abs(drift.jacobian(x) - drift.fd_jacobian(x))) < 10 * h ** 2 * max(1, np.abs(x).max() ** 2)


def test_triple_bracket_flat_is_exact():
    sys = flat_system(2)
    pt = TangentPoint(np.array([0.1, 0.2]), np.array([0.3, -0.4]))
    assert verify_triple_bracket(sys, 1, 2, pt) == 0.0


@pytest.mark.parametrize("make,tol", [(lambda: hovercraft(jacobian="closed"), 1e-6),
                                      (lambda: hovercraft(jacobian="fd"), 1e-4)])
def test_triple_bracket_hovercraft(make, tol):
    sys = make()
    x = sample_states(sys, 1, np.random.default_rng(7))[0]
    assert verify_triple_bracket(sys, 1, 1, TangentPoint(x[:3], x[3:])) < tol


def test_triple_bracket_without_connection():
    sys = hovercraft()
    from dataclasses import replace
    bare = replace(sys, connection=None)
    with pytest.raises(UndefinedResidual, match="identity used as definition"):
        verify_triple_bracket(bare, 1, 1, TangentPoint(np.zeros(3), np.zeros(3)))


def test_vector_field_is_immutable():
    X = VectorField.constant(R2, [1.0, 0.0])
    with pytest.raises(AttributeError):
        X.foo = 1


@settings(max_examples=25)
@given(st.lists(coords, min_size=2, max_size=2), st.floats(0.1, 3.0))
def test_jvp_matches_jacobian(q, s):
    X = field(lambda p: np.array([np.sin(p[0]) * p[1], p[0] ** 3]))
    q = np.array(q)
    v = np.array([s, -1.0])
    assert np.allclose(X.jvp(q, v), X.fd_jacobian(q) @ v, atol=1e-5)
