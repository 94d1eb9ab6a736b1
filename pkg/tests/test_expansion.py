import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fluctgeom.errors import DimensionError
from fluctgeom.expansion import (
    COMPONENTS, anisotropic_functions, asymptotic_ratio, expansion_terms, fan_projected_metric,
    log_ratio_quadratic_coefficient, orthonormal_components, spherical_curvature_scalar_at, spherical_frame,
    spherical_function, spherical_function_expansion,
)
from fluctgeom.geodesics import unit_sphere_directions
from fluctgeom.geometry import curvature_at
from fluctgeom.workbench.catalog import builtin_family


def kulkarni_nomizu(A, B):
    """Algebraic curvature tensor built from two symmetric matrices (has every Riemann symmetry)."""
    return (np.einsum("ik,jl->ijkl", A, B) + np.einsum("ik,jl->ijkl", B, A)
            - np.einsum("il,jk->ijkl", A, B) - np.einsum("il,jk->ijkl", B, A))


def random_sym(rng, n):
    M = rng.normal(size=(n, n))
    return M + M.T


def random_spd(rng, n):
    M = rng.normal(size=(n, n))
    return M @ M.T + n * np.eye(n)


def ricci_oracle(R, gbar, e):
    """Oracle: with an orthonormal frame the contraction reduces to 4 Ric(e, e)."""
    ric = np.einsum("jl,ijkl->ik", np.linalg.inv(gbar), R)
    return 4.0 * e @ ric @ e


@given(st.floats(-np.pi, np.pi), st.floats(0.2, 5.0), st.floats(-0.9, 0.9))
def test_two_dimensional_F_is_twice_scalar(q, scale, off):
    gbar = np.array([[scale, off], [off, 1.0 + off * off / scale + 0.1]])
    spec = builtin_family("axial-2d", 3.0)
    r = 0.7
    curv = curvature_at(spec.metric, [r, 0.0], spec.theta)
    frame = spherical_frame(spec.metric.g(np.array([r, 0.0]), spec.theta), [q])
    assert spherical_function(curv, frame) == pytest.approx(2 * curv.scalar, rel=1e-10)
    # an arbitrary 2-D tensor against an arbitrary positive metric
    Rt = np.zeros((2, 2, 2, 2))
    Rt[0, 1, 0, 1] = Rt[1, 0, 1, 0] = 1.3
    Rt[0, 1, 1, 0] = Rt[1, 0, 0, 1] = -1.3
    frame = spherical_frame(gbar, [q])
    scalar = 2 * 1.3 / np.linalg.det(gbar)
    assert spherical_function(Rt, frame) == pytest.approx(2 * scalar, rel=1e-10)


def test_single_component_n3():
    R = np.zeros((3, 3, 3, 3))
    v = 0.8
    for (i, j, k, l), s in [((0, 1, 0, 1), 1), ((1, 0, 1, 0), 1), ((0, 1, 1, 0), -1), ((1, 0, 0, 1), -1)]:
        R[i, j, k, l] = s * v
    for q in [(0.0, 0.0), (0.4, 1.1), (-1.2, 2.9), (np.pi / 2 - 1e-3, 0.3)]:
        frame = spherical_frame(np.eye(3), q)
        assert spherical_function(R, frame) == pytest.approx(4 * v * np.cos(q[0]) ** 2, abs=1e-12)


def test_expansion_terms_match_contraction(rng):
    for _ in range(5):
        R = kulkarni_nomizu(random_sym(rng, 3), random_sym(rng, 3))
        gbar = random_spd(rng, 3)
        Rh = orthonormal_components(R, gbar)
        for q in rng.uniform([-1.5, -np.pi], [1.5, np.pi], size=(6, 2)):
            direct = spherical_function(R, spherical_frame(gbar, q))
            assert spherical_function_expansion(Rh, q) == pytest.approx(direct, rel=1e-10, abs=1e-10)
            e = spherical_frame(gbar, q).e.array
            assert direct == pytest.approx(ricci_oracle(R, gbar, e), rel=1e-10, abs=1e-10)


def test_expansion_terms_one_by_one(rng):
    """Each independent component on its own reproduces its term of the expansion."""
    symmetric_images = lambda i, j, k, l: [(i, j, k, l), (j, i, l, k), (k, l, i, j), (l, k, j, i),  # noqa: E731
                                           (j, i, k, l), (i, j, l, k), (l, k, i, j), (k, l, j, i)]
    signs = [1, 1, 1, 1, -1, -1, -1, -1]
    q = np.array([0.37, -2.1])
    G = anisotropic_functions(q)
    for name, idx in COMPONENTS.items():
        R = np.zeros((3, 3, 3, 3))
        for img, s in zip(symmetric_images(*idx), signs):
            R[img] = s
        weight = 4.0 if name in ("1212", "2323", "3131") else 8.0
        direct = spherical_function(R, spherical_frame(np.eye(3), q))
        assert direct == pytest.approx(weight * G[name], abs=1e-12), name
        terms = expansion_terms(R, q)
        assert terms[name] == pytest.approx(direct, abs=1e-12)


def test_sphere_average_is_four_thirds_scalar(rng):
    R = kulkarni_nomizu(random_sym(rng, 3), random_sym(rng, 3))
    gbar = np.eye(3)
    scalar = np.einsum("ik,jl,ijkl->", gbar, gbar, R)
    nodes, w = np.polynomial.legendre.leggauss(24)
    q1, w1 = 0.5 * np.pi * nodes, 0.5 * np.pi * w
    q2 = -np.pi + 2 * np.pi * np.arange(48) / 48
    total = 0.0
    for a, wa in zip(q1, w1):
        for b in q2:
            total += wa * np.cos(a) * (2 * np.pi / 48) * spherical_function(R, spherical_frame(gbar, (a, b)))
    assert total / (4 * np.pi) == pytest.approx(4 * scalar / 3, rel=1e-10)


def test_flat_family_has_zero_F_and_unit_ratio():
    g = builtin_family("gaussian-nd", sigma=[[1.5, 0.2], [0.2, 0.8]])
    for ell in (0.0, 0.5, 2.0):
        res = asymptotic_ratio(g.family, g.metric, g.mode, ell, [0.7], g.theta)
        assert res.F == pytest.approx(0.0, abs=1e-9)
        assert res.measured == pytest.approx(1.0, rel=1e-6)
        assert res.predicted == pytest.approx(1.0, rel=1e-8)


def test_ratio_at_zero_is_inverse_partition():
    spec = builtin_family("axial-2d", 2.0)
    res = asymptotic_ratio(spec.family, spec.metric, spec.mode, 0.0, [0.3], spec.theta, Z=spec.Z)
    assert res.predicted == pytest.approx(1 / spec.Z, rel=1e-12)
    assert res.measured == pytest.approx(1 / spec.Z, rel=1e-10)
    small = asymptotic_ratio(spec.family, spec.metric, spec.mode, 1e-3, [0.3], spec.theta, Z=spec.Z)
    assert small.measured == pytest.approx(1 / spec.Z, rel=1e-5)


def test_log_ratio_quadratic_coefficient():
    spec = builtin_family("axial-2d", 4.0)
    F = 2 * curvature_at(spec.metric, spec.mode, spec.theta).scalar
    c2 = log_ratio_quadratic_coefficient(spec.family, spec.metric, spec.mode, [1.1], spec.theta)
    assert abs(c2 + F / 24) <= 0.1 * F / 24


def test_spherical_curvature_scalar_two_dimensions():
    theta = 2.0
    spec = builtin_family("axial-2d", theta)
    for ell in (0.3, 1.0, 2.5):
        Pi = spherical_curvature_scalar_at(spec.metric, spec.mode, ell, [0.9], spec.theta)
        assert Pi == pytest.approx(12 * theta ** 2 / (theta ** 2 + ell ** 2) ** 2, rel=1e-6)
    F = spherical_function(curvature_at(spec.metric, spec.mode, spec.theta),
                           spherical_frame(spec.metric.g(spec.mode, spec.theta), [0.9]))
    Pi0 = spherical_curvature_scalar_at(spec.metric, spec.mode, 1e-3, [0.9], spec.theta)
    assert abs(Pi0 - F) <= 1e-3 * abs(F)


def test_frame_properties(rng):
    for _ in range(5):
        gbar = random_spd(rng, 3)
        frame = spherical_frame(gbar, rng.uniform([-1.4, -3], [1.4, 3]))
        assert np.all(np.linalg.eigvalsh(frame.kappa) > 0)
        assert np.allclose(frame.S, -np.swapaxes(frame.S, 1, 2))
        assert frame.e.array @ gbar @ frame.e.array == pytest.approx(1.0)
    with pytest.raises(DimensionError):
        spherical_frame(np.eye(4), [0.1, 0.2, 0.3])


def test_kappa_matches_fan_metric_at_small_ell():
    spec = builtin_family("xy-coupled")
    q = [0.6]
    ell = 1e-2
    gab = fan_projected_metric(spec.metric, spec.mode, [ell], q, spec.theta)[0]
    kappa = spherical_frame(spec.metric.g(spec.mode, spec.theta), q).kappa
    assert np.max(np.abs(gab / ell ** 2 - kappa)) <= 1e-4 * np.max(np.abs(kappa))


def test_unit_sphere_tangents_are_derivatives():
    q = np.array([0.3, 1.2])
    _, xi = unit_sphere_directions(3, q)
    h = 1e-6
    for a in range(2):
        dq = np.zeros(2)
        dq[a] = h
        fd = (unit_sphere_directions(3, q + dq)[0] - unit_sphere_directions(3, q - dq)[0]) / (2 * h)
        assert np.allclose(fd, xi[a], atol=1e-9)
