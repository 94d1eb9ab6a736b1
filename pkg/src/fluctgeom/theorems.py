"""Sampling pipelines and Monte Carlo checks of the invariant fluctuation theorems.

Random numbers come from numpy's Philox4x64-10 counter-based generator
(round multipliers 0xD2E7470EE14C6C93 and 0xCA5A826395121157, key
increments 0x9E3779B97F4A7C15 and 0xBB67AE8584CAA73B). The seed is the
Philox key; independent streams are obtained with ``Philox.jumped(i)``,
so a stream depends only on (seed, stream index).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy import optimize
from scipy.special import erf, erfc, gammaln, log_ndtr

from .charts import ControlParams, DensityFamily, Point, Support, as_params
from .errors import (
    DimensionError, EvaluationError, NumericalConsistencyError, SamplerError, SuiteFailure, UnsupportedFamilyError,
)
from .geodesics import entropy_gradient_batch, information_potential_batch
from .geometry import MetricField, _inverse, christoffel_from, fd_gradient

SQRT2 = float(np.sqrt(2.0))


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Philox generator keyed by ``seed``; ``stream`` selects a jumped substream."""
    bitgen = np.random.Philox(key=int(seed) & (2 ** 64 - 1))
    if stream:
        bitgen = bitgen.jumped(int(stream))
    return np.random.Generator(bitgen)


def uniform_open_closed(rng: np.random.Generator, size) -> np.ndarray:
    """Uniform variates on (0, 1]."""
    return 1.0 - rng.random(size)


@dataclass
class SampleBatch:
    coords: np.ndarray  # (N, n)
    seed: int
    family_id: str = ""
    theta: ControlParams = field(default_factory=ControlParams)
    chart: str = "default"

    @property
    def size(self) -> int:
        return self.coords.shape[0]

    @property
    def points(self) -> List[Point]:
        return [Point(c, self.chart) for c in self.coords]


@dataclass(frozen=True)
class TheoremReport:
    name: str
    estimate: float
    std_error: float
    theoretical: float
    z_score: float
    n: int

    @classmethod
    def make(cls, name, estimate, std_error, theoretical, n):
        if not std_error > 0:
            raise EvaluationError(f"{name}: standard error must be positive")
        return cls(name, float(estimate), float(std_error), float(theoretical),
                   float((estimate - theoretical) / std_error), int(n))


# ---------------------------------------------------------------------------
# samplers


def box_muller(zeta1, zeta2, mu=0.0, sigma=1.0):
    """x = mu + sigma sqrt(-2 log zeta1) cos(2 pi zeta2), zeta in (0, 1]."""
    zeta1 = np.asarray(zeta1, dtype=float)
    zeta2 = np.asarray(zeta2, dtype=float)
    return mu + sigma * np.sqrt(-2.0 * np.log(zeta1)) * np.cos(2 * np.pi * zeta2)


def standard_normals(rng: np.random.Generator, size) -> np.ndarray:
    shape = (size,) if np.isscalar(size) else tuple(size)
    count = int(np.prod(shape))
    z1 = uniform_open_closed(rng, count)
    z2 = uniform_open_closed(rng, count)
    return box_muller(z1, z2).reshape(shape)


def box_muller_sample(mu: float, sigma: float, count: int, seed: int) -> SampleBatch:
    if not sigma > 0:
        raise SamplerError("sigma must be positive")
    rng = make_rng(seed)
    x = mu + sigma * standard_normals(rng, count)
    return SampleBatch(x[:, None], seed, "gaussian-1d", ControlParams([mu, sigma]))


class QuantileTable:
    """Quadrature CDF of a 1-D density with Newton inversion.

    The support is mapped onto a bounded variable (tan map on infinite
    ends) and the CDF is tabulated by panel-wise Gauss-Legendre
    quadrature; inversion brackets in the table and runs safeguarded Newton
    with the same quadrature on the partial panel.
    """

    def __init__(self, family: DensityFamily, theta, nodes: int = 4096, order: int = 20):
        if family.dim != 1:
            raise DimensionError("inverse-transform sampling needs a one-dimensional family")
        self.family = family
        self.theta = as_params(theta)
        lo, hi = family.support.lower[0], family.support.upper[0]
        c, s = float(family.start_point()[0]), float(family.scale)
        if np.isfinite(lo) and np.isfinite(hi):
            edges = np.linspace(lo, hi, nodes + 1)
        else:
            a = -np.pi / 2 if not np.isfinite(lo) else np.arctan((lo - c) / s)
            b = np.pi / 2 if not np.isfinite(hi) else np.arctan((hi - c) / s)
            tau = np.linspace(a, b, nodes + 1)[1:-1]
            inner = c + s * np.tan(tau)
            edges = np.concatenate([[lo], inner, [hi]])
        self.edges = edges
        self.gl_x, self.gl_w = np.polynomial.legendre.leggauss(order)
        # infinite end panels: integrate their mass with the tan map
        mass = np.empty(edges.size - 1)
        mass[1:-1] = self._panel(edges[1:-2], edges[2:-1])
        mass[0] = self._tail(edges[1], -1) if not np.isfinite(edges[0]) else self._panel(edges[:1], edges[1:2])[0]
        mass[-1] = self._tail(edges[-2], 1) if not np.isfinite(edges[-1]) else self._panel(edges[-2:-1], edges[-1:])[0]
        cdf = np.concatenate([[0.0], np.cumsum(mass)])
        self.total = float(cdf[-1])
        if not (np.isfinite(self.total) and self.total > 0):
            raise SamplerError("density does not integrate to a positive finite mass")
        self.cdf = cdf / self.total

    def _rho(self, x):
        return self.family.density(np.asarray(x)[..., None], self.theta)

    def _panel(self, a, b):
        a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        half, mid = 0.5 * (b - a), 0.5 * (a + b)
        pts = mid[..., None] + half[..., None] * self.gl_x
        return half * (self._rho(pts) @ self.gl_w)

    def _tail(self, x0, direction, sub: int = 16):
        """Mass from x0 to +-inf via x = x0 + direction * w tan(tau), tau in (0, pi/2).

        The width w grows with the distance from the center so that the
        integrand stays resolved for heavy tails.
        """
        center = float(self.family.start_point()[0])
        w = max(float(self.family.scale), abs(float(x0) - center))
        e = np.linspace(0.0, np.pi / 2, sub + 1)
        h, m = 0.5 * np.diff(e), 0.5 * (e[1:] + e[:-1])
        tau = m[:, None] + h[:, None] * self.gl_x
        with np.errstate(over="ignore", invalid="ignore"):
            vals = w * self._rho(x0 + direction * w * np.tan(tau)) / np.cos(tau) ** 2
        vals = np.where(np.isfinite(vals), vals, 0.0)
        return float(np.sum(h * (vals @ self.gl_w)))

    def cdf_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        i = np.clip(np.searchsorted(self.edges, x) - 1, 0, self.edges.size - 2)
        left = self.edges[i]
        out = self.cdf[i].copy()
        inner = np.isfinite(left)
        out[inner] += self._panel(left[inner], x[inner]) / self.total
        tail = ~inner
        if np.any(tail):
            out[tail] = [self._tail(xx, -1) / self.total for xx in x[tail]]
        return out

    def _tail_quantile(self, u: float) -> float:
        """Invert the CDF inside an infinite end panel by bracketing on the tail mass."""
        lower = u < 0.5
        x0 = self.edges[1] if lower else self.edges[-2]
        side = -1.0 if lower else 1.0
        target = u if lower else 1.0 - u

        def excess(x):
            return self._tail(x, side) / self.total - target

        step = max(float(self.family.scale), 1.0)
        near, far = x0, x0 + side * step
        for _ in range(200):
            if excess(far) < 0:
                break
            near, far = far, x0 + side * (far - x0) * 2.0
        else:
            raise SamplerError("could not bracket a tail quantile")
        a, b = sorted((near, far))
        return float(optimize.brentq(excess, a, b, xtol=1e-13, rtol=4 * np.finfo(float).eps))

    def quantile(self, u, tol: float = 1e-13, max_iter: int = 60) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if np.any((u <= 0) | (u >= 1)):
            raise SamplerError("quantile levels must lie in (0, 1)")
        i = np.clip(np.searchsorted(self.cdf, u) - 1, 0, self.edges.size - 2)
        origin, top = self.edges[i], self.edges[i + 1]
        end = ~(np.isfinite(origin) & np.isfinite(top))
        if np.any(end):
            out = np.empty_like(u)
            out[end] = [self._tail_quantile(v) for v in u[end]]
            if np.any(~end):
                out[~end] = self.quantile(u[~end], tol, max_iter)
            return out
        base = self.cdf[i]
        lo, hi = origin.copy(), top.copy()
        x = lo + (hi - lo) * np.clip((u - base) / np.maximum(self.cdf[i + 1] - base, 1e-300), 0, 1)
        for _ in range(max_iter):
            r = base + self._panel(origin, x) / self.total - u
            done = np.abs(r) <= tol * np.minimum(u, 1 - u)
            if np.all(done):
                return x
            lo = np.where(r < 0, x, lo)
            hi = np.where(r > 0, x, hi)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = x - r * self.total / self._rho(x)
            newton_ok = (step > lo) & (step < hi) & np.isfinite(step)
            x = np.where(done, x, np.where(newton_ok, step, 0.5 * (lo + hi)))
            if np.all(hi - lo <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(x))):
                return x
        raise SamplerError("CDF inversion did not converge")


def inverse_transform_sample(family: DensityFamily, theta, count: int, seed: int,
                             table: Optional[QuantileTable] = None) -> SampleBatch:
    table = table or QuantileTable(family, theta)
    u = uniform_open_closed(make_rng(seed), count)
    u = np.where(u >= 1.0, np.nextafter(1.0, 0.0), u)
    x = table.quantile(u)
    return SampleBatch(x[:, None], seed, family.name, as_params(theta), family.chart)


def gauss_to_cauchy(x, mu: float, sigma: float, nu: float, gamma: float):
    """x_check = nu + gamma tan(pi/2 erf((x - mu) / (sqrt 2 sigma))), evaluated tail-safely."""
    s = (np.asarray(x, dtype=float) - mu) / (SQRT2 * sigma)
    a = np.abs(s)
    # tan(pi/2 - pi/2 erfc|s|) = 1 / tan(pi/2 erfc|s|)
    with np.errstate(divide="ignore"):
        far = 1.0 / np.tan(0.5 * np.pi * erfc(a))
    near = np.tan(0.5 * np.pi * erf(a))
    val = np.where(a > 0.5, far, near)
    return nu + gamma * np.sign(s) * val


def cauchy_to_gauss(x_check, mu: float, sigma: float, nu: float, gamma: float):
    from scipy.special import erfcinv, erfinv

    d = (np.asarray(x_check, dtype=float) - nu) / gamma
    a = np.abs(d)
    # erf(s) = 2/pi arctan|d|; use erfc for the far tail
    tail = 2.0 / np.pi * np.arctan2(1.0, a)  # 1 - 2/pi arctan|d|
    s = np.where(a > 1.0, erfcinv(tail), erfinv(2.0 / np.pi * np.arctan(a)))
    return mu + SQRT2 * sigma * np.sign(d) * s


def gauss_to_cauchy_log_jacobian(x, mu: float, sigma: float, nu: float, gamma: float):
    """log |d x_check / d x| in closed form, stable in both tails.

    d x_check / d x = gamma sqrt(pi) exp(-s^2) / (sqrt 2 sigma cos^2(pi/2 erf s)), with
    s = (x - mu) / (sqrt 2 sigma) and cos(pi/2 erf|s|) = sin(pi/2 erfc|s|).
    """
    s = (np.asarray(x, dtype=float) - mu) / (SQRT2 * sigma)
    a = np.abs(s)
    log_y = np.log(np.pi / 2) + np.log(2.0) + log_ndtr(-SQRT2 * a)  # log(pi/2 erfc a)
    y = np.exp(log_y)
    log_cos = log_y + np.log(np.sinc(y / np.pi))
    log_cos = np.where(a > 0.5, log_cos, np.log(np.cos(0.5 * np.pi * erf(a))))
    return np.log(gamma * np.sqrt(np.pi) / (SQRT2 * sigma)) - s * s - 2 * log_cos


def _radial_family(theta: float) -> DensityFamily:
    th2 = theta ** 2

    def log_density(r, t):
        rr = r[..., 0]
        return np.log(rr) - 0.5 * rr ** 2 - 0.5 * np.log(th2 + rr ** 2)

    return DensityFamily(1, log_density, Support.box([0.0], [np.inf]), "radial", "axial-2d-radial",
                         center=(1.0,), scale=1.0)


def sample_family(spec, theta=None, count: int = 1000, seed: int = 0) -> SampleBatch:
    """Draw ``count`` points of a built-in family in its default chart."""
    if spec.sampler is None:
        raise UnsupportedFamilyError(f"family {spec.id!r} declares no sampling recipe")
    recipe, params = spec.sampler
    theta = spec.theta if theta is None else as_params(theta)
    if recipe == "gaussian":
        rng = make_rng(seed)
        n = spec.dim
        z = standard_normals(rng, (count, n))
        chol = np.linalg.cholesky(np.atleast_2d(params["cov"]))
        x = params["mean"] + z @ chol.T
    elif recipe == "axial-radial":
        table = QuantileTable(_radial_family(params["theta"]), theta)
        r = inverse_transform_sample(table.family, theta, count, seed, table).coords[:, 0]
        phi = 2 * np.pi * make_rng(seed, 1).random(count)
        x = np.stack([r * np.cos(phi), r * np.sin(phi)], axis=1)
    elif recipe == "cauchy":
        z = standard_normals(make_rng(seed), count)
        x = gauss_to_cauchy(z, 0.0, 1.0, params["nu"], params["gamma"])[:, None]
    elif recipe == "inverse-transform":
        x = inverse_transform_sample(spec.family, theta, count, seed).coords
    else:
        raise UnsupportedFamilyError(f"unknown sampling recipe {recipe!r}")
    if not np.all(spec.family.support.contains(x)):
        raise SamplerError("sampler produced points outside the support")
    return SampleBatch(np.asarray(x, dtype=float), seed, spec.id, theta, spec.default_chart)


# ---------------------------------------------------------------------------
# expectations


def _values(batch_or_coords, f) -> np.ndarray:
    coords = batch_or_coords.coords if isinstance(batch_or_coords, SampleBatch) else np.asarray(batch_or_coords)
    vals = np.asarray(f(coords), dtype=float)
    if vals.shape == ():
        vals = np.full(coords.shape[0], float(vals))
    bad = ~np.isfinite(vals)
    if np.any(bad):
        idx = int(np.argmax(bad))
        raise EvaluationError(f"non-finite value at sample {idx}", index=idx)
    return vals


def mean_and_error(vals: np.ndarray):
    n = vals.size
    mean = float(np.sum(vals) / n)
    sd = float(np.sqrt(np.sum((vals - mean) ** 2) / (n - 1))) if n > 1 else 0.0
    return mean, sd / np.sqrt(n)


def mc_expectation(batch: SampleBatch, f: Callable):
    """Sample mean of f over the batch and the standard error s / sqrt(N)."""
    return mean_and_error(_values(batch, f))


def obm_standard_error(vals: np.ndarray, batch: Optional[int] = None) -> float:
    """Overlapping-batch-means standard error of the mean."""
    n = vals.size
    b = batch or max(2, int(np.sqrt(n)))
    csum = np.concatenate([[0.0], np.cumsum(vals)])
    means = (csum[b:] - csum[:-b]) / b
    mean = float(np.mean(vals))
    var = n * b / ((n - b) * (n - b + 1)) * float(np.sum((means - mean) ** 2))
    return float(np.sqrt(var / n))


# ---------------------------------------------------------------------------
# covariant divergence


def covariant_divergence_batch(g: MetricField, w: Callable, x, theta, tol: float = 1e-5,
                               check: bool = True) -> np.ndarray:
    """D_i w^i = d_i w^i + Gamma^i_ik w^k, cross-checked against |g|^(-1/2) d_i (|g|^(1/2) w^i)."""
    x = np.asarray(x, dtype=float)
    theta = as_params(theta)
    wx = np.asarray(w(x), dtype=float)
    dw = fd_gradient(w, x, 1e-4, 4, g.support)  # [..., i, j] = d_j w^i
    gm, dg = g.g(x, theta), g.dg(x, theta)
    gamma = christoffel_from(gm, dg, _inverse(gm))
    first = np.einsum("...ii->...", dw) + np.einsum("...iik,...k->...", gamma, wx)
    if check:
        def densitized(p):
            _, logdet = np.linalg.slogdet(g.g(p, theta))
            return np.exp(0.5 * logdet)[..., None] * np.asarray(w(p), dtype=float)

        _, logdet = np.linalg.slogdet(gm)
        second = np.einsum("...ii->...", fd_gradient(densitized, x, 1e-4, 4, g.support)) * np.exp(-0.5 * logdet)
        gap = np.abs(first - second)
        scale = np.maximum(1.0, np.abs(first))
        if np.any(gap > tol * scale):
            raise NumericalConsistencyError(f"divergence routes disagree by {float(np.max(gap / scale)):.3e}")
    return first


def covariant_divergence(g: MetricField, w: Callable, x, theta) -> float:
    x = x.array if isinstance(x, Point) else np.asarray(x, dtype=float)
    return float(covariant_divergence_batch(g, w, x[None, :], theta)[0])


# ---------------------------------------------------------------------------
# the suite


def moment_theory(s: int, n: int, k: float) -> float:
    """<(eta^2)^s> = (2k)^s Gamma(s + n/2) / Gamma(n/2)."""
    return float((2 * k) ** s * np.exp(gammaln(s + n / 2) - gammaln(n / 2)))


def fluctuation_suite(spec, theta=None, k: float = 1.0, N: int = 100_000, seed: int = 0, s_max: int = 4,
                      w: Optional[Callable] = None, batch: Optional[SampleBatch] = None,
                      ell_fn: Optional[Callable] = None, fail_z: float = 4.0,
                      raise_on_failure: bool = True) -> List[TheoremReport]:
    """Monte Carlo estimates of the invariant fluctuation theorems.

    eta_i = k d_i S_unit, so eta^2 = g_k^ij eta_i eta_j = k psi^2 for the
    metric g_k = k g; likewise l_k^2 = k l^2 and delta S = k (S_unit - S_unit(x_bar)).
    ``ell_fn`` gives the separation distance in the default chart (the
    family's closed form when omitted).
    """
    theta = spec.theta if theta is None else as_params(theta)
    family, g = spec.family, spec.metric
    n = spec.dim
    batch = batch or sample_family(spec, theta, N, seed)
    x = batch.coords
    N = batch.size
    psi, psi2 = entropy_gradient_batch(family, g, x, theta)
    eta2 = k * psi2
    ell_fn = ell_fn or spec.chart.ell
    if ell_fn is None:
        raise UnsupportedFamilyError("fluctuation suite needs a separation-distance evaluator")
    ell2 = k * np.asarray(ell_fn(x), dtype=float) ** 2
    x_bar = spec.mode
    S_bar = float(information_potential_batch(family, g, x_bar, theta))
    dS = k * (information_potential_batch(family, g, x, theta) - S_bar)

    reports = []

    def add(name, vals, theory, inflate=False):
        vals = _values(x, lambda _: vals)
        mean, se = mean_and_error(vals)
        if inflate:
            se = max(se, obm_standard_error(vals))
        reports.append(TheoremReport.make(name, mean, se, theory, N))

    add("<eta^2> = n k", eta2, n * k)
    add("<l^2> = n k", ell2, n * k)
    add("<dS> = -n k / 2", dS, -n * k / 2)
    for s in range(1, s_max + 1):
        add(f"<(eta^2)^{s}>", eta2 ** s, moment_theory(s, n, k), inflate=s >= 3)
    if w is None:
        w = _constant_field(n)
    div = covariant_divergence_batch(g, w, x, theta)
    eta = -k * psi  # eta_i = k d_i S
    add("<k D_i w^i + eta_i w^i> = 0", k * div + np.einsum("bi,bi->b", eta, np.asarray(w(x))), 0.0)
    bad = [r for r in reports if abs(r.z_score) > fail_z]
    if bad and raise_on_failure:
        raise SuiteFailure("fluctuation theorem(s) failed: " + ", ".join(r.name for r in bad), reports)
    return reports


def _constant_field(n: int):
    direction = np.ones(n) / np.sqrt(n)

    def w(x):
        return np.broadcast_to(direction, np.shape(x)).copy()

    return w


def recurrence_ratios(reports: Sequence[TheoremReport], n: int, k: float):
    """(s, estimated ratio, theoretical 2k(s-1+n/2), combined SE) for consecutive moments."""
    moments = {int(r.name[len("<(eta^2)^"):-1]): r for r in reports if r.name.startswith("<(eta^2)^")}
    out = []
    for s in sorted(moments):
        if s - 1 not in moments:
            continue
        a, b = moments[s], moments[s - 1]
        ratio = a.estimate / b.estimate
        se = abs(ratio) * np.hypot(a.std_error / a.estimate, b.std_error / b.estimate)
        out.append((s, ratio, 2 * k * (s - 1 + n / 2), se))
    return out
