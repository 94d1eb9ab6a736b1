import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from fluctgeom.charts import (
    ControlParams, CoordinateChange, DensityFamily, Point, Support, TensorValue, identity_change,
    linear_change, numeric_jacobian, pushforward_family, transform_density, transform_tensor,
)
from fluctgeom.errors import BoundaryError, ChartMismatchError, DimensionError, DomainError, SingularityError
from fluctgeom.workbench.catalog import builtin_family

radius = st.floats(0.05, 8.0)
angle = st.floats(-3.1, 3.1)


def polar_example():
    """x_check = x cos y, y_check = x sin y, without an analytic Jacobian."""
    def fwd(p):
        p = np.asarray(p, dtype=float)
        return np.stack([p[..., 0] * np.cos(p[..., 1]), p[..., 0] * np.sin(p[..., 1])], -1)

    def inv(q):
        q = np.asarray(q, dtype=float)
        return np.stack([np.hypot(q[..., 0], q[..., 1]), np.arctan2(q[..., 1], q[..., 0])], -1)

    return CoordinateChange("xy", "check", fwd, inv)


def exp_family(theta):
    """rho(x, y) = x exp(-x^2 / 2 theta^2) / (2 pi theta^2) on x > 0, |y| < pi."""
    def log_density(p, t):
        return np.log(p[..., 0]) - p[..., 0] ** 2 / (2 * theta ** 2) - np.log(2 * np.pi * theta ** 2)

    return DensityFamily(2, log_density, Support.box([0, -np.pi], [np.inf, np.pi]), "xy", "exp")


def test_point_rejects_mixed_charts():
    with pytest.raises(ChartMismatchError):
        Point([1, 2], "polar") - Point([1, 2], "cartesian")
    assert np.allclose(Point([1, 2], "a") - Point([0.5, 1], "a"), [0.5, 1])


def test_point_and_params_validation():
    with pytest.raises(DomainError):
        Point([np.nan, 1.0])
    with pytest.raises(DimensionError):
        Point(np.zeros((2, 2)))
    with pytest.raises(DomainError):
        ControlParams([1.0], k=0.0)
    with pytest.raises(DomainError):
        ControlParams([np.inf])


def test_numeric_jacobian_determinant_is_x():
    ch = polar_example()
    for x, y in [(0.7, 0.3), (2.0, -1.2), (5.0, 2.9)]:
        J = numeric_jacobian(ch, [x, y])
        assert np.linalg.det(J) == pytest.approx(x, rel=1e-6)
        exact = np.array([[np.cos(y), -x * np.sin(y)], [np.sin(y), x * np.cos(y)]])
        assert np.max(np.abs(J - exact)) <= 1e-6


def test_numeric_jacobian_trivial_cases():
    assert np.allclose(numeric_jacobian(identity_change(3), [0.1, -2, 5]), np.eye(3), atol=1e-9)
    A = np.array([[2.0, 1.0], [-0.5, 3.0]])
    assert np.allclose(numeric_jacobian(linear_change(A, "a", "b"), [4.0, -7.0]), A, atol=1e-8)


def test_numeric_jacobian_clamps_at_boundary():
    ch = CoordinateChange("s", "t", lambda x: np.asarray(x) ** 2, lambda x: np.sqrt(x))
    sup = Support.box([0.0], [1.0])
    J = numeric_jacobian(ch, [5e-7], sup)  # centred stencil would leave the support
    assert J[0, 0] == pytest.approx(1e-6, abs=1e-9)
    with pytest.raises(BoundaryError):
        numeric_jacobian(ch, [5e-7], Support.box([0.0], [1.5e-6]))


def test_density_change_maps_exp_family_to_two_gaussians():
    theta = 1.3
    fam, ch = exp_family(theta), polar_example()
    for xc in [(0.4, 0.2), (-1.0, 2.0), (1.5, -0.7)]:
        expected = np.exp(-(xc[0] ** 2 + xc[1] ** 2) / (2 * theta ** 2)) / (2 * np.pi * theta ** 2)
        assert transform_density(fam, ch, Point(xc, "check"), None) == pytest.approx(expected, rel=1e-8)


def test_identity_change_keeps_density(axial2):
    fam = axial2.family
    ch = identity_change(2, "cartesian")
    x = np.array([0.3, -1.1])
    assert transform_density(fam, ch, x, axial2.theta) == pytest.approx(float(fam.density(x, axial2.theta)))


def test_axial_polar_density_pushes_to_cartesian(axial2):
    polar = axial2.charts["polar"].family
    cart = axial2.family
    ch = axial2.change("polar", "cartesian")
    for xc in [(0.5, 0.5), (-2.0, 1.0), (0.1, -3.0)]:
        assert transform_density(polar, ch, xc, axial2.theta) == pytest.approx(
            float(cart.density(np.array(xc), axial2.theta)), rel=1e-10)


def test_transform_density_errors():
    fam, ch = exp_family(1.0), polar_example()
    fam_small = DensityFamily(2, fam.log_density, Support.box([0, -np.pi], [1.0, np.pi]), "xy")
    with pytest.raises(DomainError):
        transform_density(fam_small, ch, (3.0, 0.0), None)
    sing = CoordinateChange("xy", "check", lambda p: np.asarray(p) * 0 + 1, lambda q: np.asarray(q),
                            lambda p: np.zeros((2, 2)))
    with pytest.raises(SingularityError):
        transform_density(fam, sing, (1.0, 0.0), None)


def test_metric_transport_polar_to_cartesian(axial2):
    th = axial2.theta
    gp, gc = axial2.charts["polar"].metric, axial2.metric
    ch = axial2.change("polar", "cartesian")
    for p in [(0.5, 0.3), (2.0, -2.0), (4.0, 1.0)]:
        T = TensorValue(gp.g(np.array(p), th), covariant=2, chart="polar", symmetries=((0, 1),))
        out = transform_tensor(T, ch, p)
        assert out.chart == "cartesian"
        xc = ch.forward(np.array(p))
        assert np.allclose(out.components, gc.g(xc, th), atol=1e-12)


def test_identity_transport_and_scalar_invariance():
    T = TensorValue(np.arange(9.0).reshape(3, 3), covariant=1, contravariant=1)
    assert np.array_equal(transform_tensor(T, identity_change(3), [1, 2, 3]).components, T.components)
    ch = polar_example()
    s = TensorValue(np.array(2.5), chart="xy")
    assert transform_tensor(s, ch, [1.2, 0.4]).components == 2.5


def test_weight_minus_one_scalar_reproduces_density_rule():
    fam, ch = exp_family(0.8), polar_example()
    x = np.array([1.1, 0.6])
    dens = TensorValue(np.array(float(fam.density(x, None))), weight=-1, chart="xy")
    moved = float(transform_tensor(dens, ch, x).components)
    assert moved == pytest.approx(transform_density(fam, ch, ch.forward(x), None), rel=1e-12)


def test_tensor_value_validation():
    with pytest.raises(DimensionError):
        TensorValue(np.zeros((2, 3)), covariant=2)
    with pytest.raises(DimensionError):
        TensorValue(np.zeros(2), covariant=2)
    T = TensorValue(np.array([[1.0, 2.0], [0.0, 1.0]]), covariant=2, symmetries=((0, 1),))
    assert np.array_equal(T.components, T.components.T)


@given(radius, angle)
def test_round_trip_on_every_axial_chart(r, phi):
    spec = builtin_family("axial-2d", 10.0)
    p = np.array([r, phi])
    c = spec.change("polar", "cartesian")
    assert np.allclose(c.inverse(c.forward(p)), p, atol=1e-10, rtol=0)
    t = spec.change("t", "polar")
    tp = np.array([10.0 * r / np.hypot(10.0, r), phi])
    assert np.allclose(t.inverse(t.forward(tp)), tp, atol=1e-10, rtol=0)
    xc = c.forward(p)
    tc = spec.change("cartesian", "t")
    assert np.allclose(tc.inverse(tc.forward(xc)), xc, atol=1e-10, rtol=0)


@given(radius, angle)
def test_jacobian_determinants_are_reciprocal(r, phi):
    spec = builtin_family("axial-2d", 3.0)
    c = spec.change("polar", "cartesian")
    p = np.array([r, phi])
    fwd = np.linalg.det(numeric_jacobian(c, p))
    back = np.linalg.det(numeric_jacobian(c.inverted(), c.forward(p)))
    assert fwd * back == pytest.approx(1.0, abs=1e-6)


def test_probability_invariance_over_a_box():
    spec = builtin_family("axial-2d", 2.0)
    th = spec.theta
    tfam, pfam = spec.charts["t"].family, spec.charts["polar"].family
    t0, t1, f0, f1 = 0.3, 1.4, -1.0, 0.8
    ch = spec.change("t", "polar")
    r0, r1 = ch.forward(np.array([t0, 0.0]))[0], ch.forward(np.array([t1, 0.0]))[0]

    def mass(fam, a, b):
        return integrate.dblquad(lambda y, x: float(fam.density(np.array([x, y]), th)), a, b, f0, f1,
                                 epsabs=1e-12, epsrel=1e-10)[0]

    assert mass(tfam, t0, t1) == pytest.approx(mass(pfam, r0, r1), rel=1e-6)


def test_pushforward_family_matches_target_density():
    fam, ch = exp_family(1.0), polar_example()
    out = pushforward_family(fam, ch, Support.whole(2))
    q = np.array([0.3, -0.9])
    assert float(out.density(q, None)) == pytest.approx(np.exp(-0.5 * q @ q) / (2 * np.pi), rel=1e-8)
