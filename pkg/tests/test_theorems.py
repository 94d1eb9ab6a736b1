import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special, stats

from fluctgeom.charts import DensityFamily, Support
from fluctgeom.errors import EvaluationError, SamplerError, SuiteFailure, UnsupportedFamilyError
from fluctgeom.geometry import MetricField, constant_metric
from fluctgeom.theorems import (
    QuantileTable, box_muller, box_muller_sample, cauchy_to_gauss, covariant_divergence, covariant_divergence_batch,
    fluctuation_suite, gauss_to_cauchy, gauss_to_cauchy_log_jacobian, inverse_transform_sample, make_rng,
    mc_expectation, moment_theory, recurrence_ratios, sample_family,
)
from fluctgeom.workbench.catalog import builtin_family


def cauchy_family(nu=0.0, gamma=1.0):
    def log_density(x, t):
        return -np.log(np.pi * gamma) - np.log1p(((x[..., 0] - nu) / gamma) ** 2)

    return DensityFamily(1, log_density, Support.whole(1), name="cauchy", center=(nu,), scale=gamma)


def test_box_muller_endpoints():
    assert box_muller(1.0, 0.37, 1.5, 2.0) == pytest.approx(1.5)
    assert box_muller(np.exp(-2.0), 0.0, 1.5, 2.0) == pytest.approx(1.5 + 2 * 2.0)
    assert box_muller(np.exp(-2.0), 0.5, 0.0, 1.0) == pytest.approx(-2.0)


def test_box_muller_sample_moments():
    batch = box_muller_sample(3.0, 0.5, 200_000, seed=7)
    x = batch.coords[:, 0]
    assert abs(x.mean() - 3.0) < 5 * 0.5 / np.sqrt(x.size)
    assert x.var(ddof=1) == pytest.approx(0.25, rel=0.02)
    assert stats.kstest((x - 3.0) / 0.5, "norm").pvalue > 1e-3
    with pytest.raises(SamplerError):
        box_muller_sample(0.0, 0.0, 10, 1)


def test_quantile_table_median_and_uniform_identity():
    table = QuantileTable(cauchy_family(0.5, 2.0), None)
    assert table.quantile(np.array([0.5]))[0] == pytest.approx(0.5, abs=1e-10)
    u = np.array([0.01, 0.2, 0.7, 0.95])
    assert np.allclose(table.quantile(u), 0.5 + 2.0 * np.tan(np.pi * (u - 0.5)), rtol=1e-10, atol=1e-10)
    assert np.allclose(table.cdf_at(table.quantile(u)), u, atol=1e-12)
    with pytest.raises(SamplerError):
        table.quantile(np.array([0.0]))


def test_quantile_tails():
    table = QuantileTable(cauchy_family(), None)
    u = np.array([1e-10, 1e-6, 1 - 1e-6, 1 - 1e-9])
    exact = np.tan(np.pi * (u - 0.5))
    assert np.allclose(table.quantile(u), exact, rtol=1e-6)


def test_inverse_transform_ks():
    batch = inverse_transform_sample(cauchy_family(1.0, 0.5), None, 20_000, seed=3)
    assert stats.kstest(batch.coords[:, 0], "cauchy", args=(1.0, 0.5)).pvalue > 1e-3


def test_gauss_to_cauchy_fixed_points():
    mu, sigma, nu, gamma = 0.3, 1.7, -2.0, 0.6
    assert gauss_to_cauchy(mu, mu, sigma, nu, gamma) == pytest.approx(nu)
    x = mu + np.sqrt(2) * sigma * special.erfinv(0.5)
    assert gauss_to_cauchy(x, mu, sigma, nu, gamma) == pytest.approx(nu + gamma, rel=1e-12)
    z = np.random.default_rng(0).normal(size=50_000)
    y = gauss_to_cauchy(mu + sigma * z, mu, sigma, nu, gamma)
    assert stats.kstest(y, "cauchy", args=(nu, gamma)).pvalue > 1e-3


@given(st.floats(-35.0, 35.0))
def test_gauss_cauchy_round_trip_and_jacobian(x):
    mu, sigma, nu, gamma = 0.2, 1.3, 1.0, 2.0
    y = gauss_to_cauchy(x, mu, sigma, nu, gamma)
    if np.isfinite(y) and abs(x - mu) < 10:
        assert cauchy_to_gauss(y, mu, sigma, nu, gamma) == pytest.approx(x, rel=1e-9, abs=1e-9)
    # density identity: gaussian(x) = cauchy(y) |dy/dx|
    lj = gauss_to_cauchy_log_jacobian(x, mu, sigma, nu, gamma)
    if np.isfinite(y):
        lhs = stats.norm.logpdf(x, mu, sigma)
        rhs = stats.cauchy.logpdf(y, nu, gamma) + lj
        assert lhs == pytest.approx(rhs, rel=1e-8, abs=1e-8)


def test_sample_family_gaussian_covariance():
    precision = np.array([[2.0, 0.6], [0.6, 0.5]])
    spec = builtin_family("gaussian-nd", sigma=precision, mean=[1.0, -1.0])
    batch = sample_family(spec, count=100_000, seed=11)
    assert np.allclose(np.cov(batch.coords.T), np.linalg.inv(precision), atol=0.03)
    assert np.allclose(batch.coords.mean(0), [1.0, -1.0], atol=0.02)


def test_sample_family_axial_angles_and_radii():
    spec = builtin_family("axial-2d", 2.0)
    batch = sample_family(spec, count=20_000, seed=5)
    phi = np.arctan2(batch.coords[:, 1], batch.coords[:, 0])
    counts, _ = np.histogram(phi, bins=16, range=(-np.pi, np.pi))
    assert stats.chisquare(counts).pvalue > 1e-3
    r = np.hypot(*batch.coords.T)
    table = QuantileTable(
        DensityFamily(1, lambda x, t: np.log(x[..., 0]) - 0.5 * x[..., 0] ** 2 - 0.5 * np.log(4 + x[..., 0] ** 2),
                      Support.box([0.0], [np.inf]), center=(1.0,), scale=1.0), None)
    assert stats.kstest(r, lambda v: table.cdf_at(np.asarray(v, dtype=float))).pvalue > 1e-3


def test_sampling_is_deterministic():
    spec = builtin_family("cauchy-1d", (0.0, 1.0))
    a = sample_family(spec, count=1000, seed=42).coords
    b = sample_family(spec, count=1000, seed=42).coords
    c = sample_family(spec, count=1000, seed=43).coords
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    assert np.array_equal(make_rng(9, 2).random(5), make_rng(9, 2).random(5))
    assert not np.array_equal(make_rng(9, 1).random(5), make_rng(9, 2).random(5))


def test_unsupported_sampler():
    spec = builtin_family("gaussian-nd", n=1)
    spec.sampler = None
    with pytest.raises(UnsupportedFamilyError):
        sample_family(spec, count=10)


def test_mc_expectation_basics():
    spec = builtin_family("gaussian-nd", n=2)
    batch = sample_family(spec, count=40_000, seed=1)
    mean, se = mc_expectation(batch, lambda x: 3.0)
    assert mean == 3.0 and se == 0.0
    mean, se = mc_expectation(batch, lambda x: np.sum(x ** 2, -1))
    assert abs(mean - 2.0) < 4 * se
    half = type(batch)(batch.coords[:10_000], batch.seed)
    _, se_half = mc_expectation(half, lambda x: np.sum(x ** 2, -1))
    assert se_half / se == pytest.approx(2.0, rel=0.1)
    with pytest.raises(EvaluationError) as err:
        mc_expectation(batch, lambda x: np.where(np.arange(x.shape[0]) == 17, np.nan, 1.0))
    assert err.value.index == 17


def test_covariant_divergence_flat_cartesian():
    g = constant_metric(np.diag([2.0, 0.5, 1.0]))
    x = np.array([0.3, -1.0, 2.0])
    assert covariant_divergence(g, lambda p: p, x, None) == pytest.approx(3.0, abs=1e-8)
    assert covariant_divergence(g, lambda p: np.ones_like(p), x, None) == pytest.approx(0.0, abs=1e-8)


def test_covariant_divergence_uses_connection():
    polar = MetricField(2, lambda x, t: np.stack([np.stack([np.ones_like(x[..., 0]), np.zeros_like(x[..., 0])], -1),
                                                  np.stack([np.zeros_like(x[..., 0]), x[..., 0] ** 2], -1)], -2),
                        support=Support.box([0.0, -np.inf], [np.inf, np.inf]))
    radial = lambda p: np.stack([p[..., 0], np.zeros_like(p[..., 0])], -1)  # noqa: E731
    pts = np.array([[0.5, 0.1], [2.0, 1.0], [3.3, -2.0]])
    assert np.allclose(covariant_divergence_batch(polar, radial, pts, None), 2.0, atol=1e-8)


def test_divergence_of_eta_on_gaussian():
    spec = builtin_family("gaussian-nd", sigma=[[1.5, 0.4], [0.4, 0.7]])

    def eta_up(x):  # eta^i = g^ij d_j S with S = -l^2 / 2
        return -(x - spec.mode)

    x = np.array([0.4, -0.2])
    assert covariant_divergence(spec.metric, eta_up, x, spec.theta) == pytest.approx(-2.0, abs=1e-8)


def test_moment_theory_values():
    assert moment_theory(1, 3, 1.0) == pytest.approx(3.0)
    assert moment_theory(2, 2, 1.0) == pytest.approx(8.0)
    assert moment_theory(2, 1, 0.5) == pytest.approx(0.75)


def test_fluctuation_suite_gaussian_and_recurrence():
    spec = builtin_family("gaussian-nd", n=2)
    reports = fluctuation_suite(spec, N=50_000, seed=2)
    by = {r.name: r for r in reports}
    assert by["<eta^2> = n k"].theoretical == 2.0
    assert by["<dS> = -n k / 2"].theoretical == -1.0
    assert all(abs(r.z_score) < 4 for r in reports)
    for s, ratio, theory, se in recurrence_ratios(reports, 2, 1.0):
        assert abs(ratio - theory) < 5 * se


def test_fluctuation_suite_seeds_bit_for_bit():
    spec = builtin_family("axial-2d", 30.0)
    a = fluctuation_suite(spec, N=4000, seed=8, s_max=2, raise_on_failure=False)
    b = fluctuation_suite(spec, N=4000, seed=8, s_max=2, raise_on_failure=False)
    assert [(r.estimate, r.std_error) for r in a] == [(r.estimate, r.std_error) for r in b]


def test_fluctuation_suite_failure_is_reported():
    spec = builtin_family("gaussian-nd", n=2)
    with pytest.raises(SuiteFailure) as err:
        fluctuation_suite(spec, N=20_000, seed=1, ell_fn=lambda x: 2 * np.linalg.norm(x, axis=-1))
    assert any(r.name.startswith("<l^2>") and abs(r.z_score) > 4 for r in err.value.reports)
