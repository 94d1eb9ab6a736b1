"""Built-in distribution families with analytic metrics, charts and closed forms."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np
from scipy.special import erfcx, ndtri

from ..charts import (
    ControlParams, CoordinateChange, DensityFamily, Support, as_params, linear_change,
)
from ..errors import ConfigError, UnsupportedFamilyError
from ..geometry import MetricField, constant_metric, metric_residual

FAMILY_IDS = ("gaussian-nd", "axial-2d", "cauchy-1d", "xy-coupled")


@dataclass
class ChartModel:
    """One coordinate representation: density, metric, closed-form distance and mode."""

    family: DensityFamily
    metric: MetricField
    ell: Optional[Callable] = None  # closed-form separation distance from the mode
    mode: Optional[np.ndarray] = None  # None when the mode is not an interior point of the chart


@dataclass
class GateResult:
    kind: str
    max_residual: float
    tolerance: float
    probes: int

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_residual) and self.max_residual <= self.tolerance)


@dataclass
class FamilySpec:
    id: str
    dim: int
    theta: ControlParams
    charts: Dict[str, ChartModel]
    default_chart: str
    changes: Dict[tuple, CoordinateChange] = field(default_factory=dict)
    sampler: Optional[tuple] = None  # (recipe tag, parameters)
    Z: Optional[float] = None
    R: Optional[Callable] = None  # scalar curvature in the default chart
    gate_kind: str = "metric-residual"
    probes: Optional[np.ndarray] = None  # gate probe grid in the default chart
    params: dict = field(default_factory=dict)

    @property
    def chart(self) -> ChartModel:
        return self.charts[self.default_chart]

    @property
    def family(self) -> DensityFamily:
        return self.chart.family

    @property
    def metric(self) -> MetricField:
        return self.chart.metric

    @property
    def mode(self) -> np.ndarray:
        return self.chart.mode

    def change(self, source: str, target: str) -> CoordinateChange:
        try:
            return self.changes[(source, target)]
        except KeyError:
            raise UnsupportedFamilyError(f"{self.id} has no change {source} -> {target}") from None


# ---------------------------------------------------------------------------
# gaussian families


def _gaussian_chart(mean: np.ndarray, sigma: np.ndarray, chart: str, name: str) -> ChartModel:
    n = mean.size
    _, logdet = np.linalg.slogdet(sigma)
    norm = 0.5 * logdet - 0.5 * n * np.log(2 * np.pi)

    def log_density(x, theta):
        d = x - mean
        return norm - 0.5 * np.einsum("...i,ij,...j->...", d, sigma, d)

    def grad(x, theta):
        return -(x - mean) @ sigma.T

    def hess(x, theta):
        return np.broadcast_to(-sigma, np.shape(x)[:-1] + (n, n)).copy()

    def ell(x):
        d = np.asarray(x, dtype=float) - mean
        return np.sqrt(np.einsum("...i,ij,...j->...", d, sigma, d))

    fam = DensityFamily(n, log_density, Support.whole(n), chart, name, grad, hess, tuple(mean),
                        float(np.sqrt(np.max(np.diag(np.linalg.inv(sigma))))))
    return ChartModel(fam, constant_metric(sigma, chart), ell, mean.copy())


def _probe_grid(center: np.ndarray, scale: np.ndarray, count: int = 4) -> np.ndarray:
    axes = [np.linspace(c - 1.5 * s, c + 1.5 * s, count) for c, s in zip(center, scale)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def gaussian_nd(n: int = 2, sigma=None, mean=None) -> FamilySpec:
    """Gaussian family with precision matrix sigma (the metric) and mean mu."""
    sigma = np.eye(n) if sigma is None else np.array(sigma, dtype=float)
    n = sigma.shape[0]
    mean = np.zeros(n) if mean is None else np.array(mean, dtype=float)
    if not np.allclose(sigma, sigma.T) or np.any(np.linalg.eigvalsh(sigma) <= 0):
        raise ConfigError("sigma must be symmetric positive definite")
    cov = np.linalg.inv(sigma)
    spec = FamilySpec(
        "gaussian-nd", n, ControlParams(), {"cartesian": _gaussian_chart(mean, sigma, "cartesian", "gaussian-nd")},
        "cartesian", sampler=("gaussian", {"mean": mean, "cov": cov}), Z=1.0, R=lambda x: np.zeros(np.shape(x)[:-1]),
        probes=_probe_grid(mean, np.sqrt(np.diag(cov)), 4 if n <= 2 else 3),
        params={"sigma": sigma, "mean": mean},
    )
    return spec


def xy_coupled() -> FamilySpec:
    """Correlated 2-D gaussian rho = A exp(-(x^2 + xy + y^2)) and its decoupling rotation."""
    sigma = np.array([[2.0, 1.0], [1.0, 2.0]])
    spec = gaussian_nd(2, sigma)
    spec.id = "xy-coupled"
    rot = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0)
    change = linear_change(rot, "cartesian", "rotated")
    spec.changes[("cartesian", "rotated")] = change
    spec.changes[("rotated", "cartesian")] = change.inverted()
    sigma_rot = rot @ sigma @ rot.T  # rot is orthogonal and symmetric
    spec.charts["rotated"] = _gaussian_chart(np.zeros(2), sigma_rot, "rotated", "xy-coupled")
    spec.params["rotation"] = rot
    spec.params["rotated_variances"] = 1.0 / np.diag(sigma_rot)
    return spec


# ---------------------------------------------------------------------------
# axially symmetric worked example


def axial_Z(theta: float) -> float:
    """Z(theta) = sqrt(pi) exp(theta^2/2) (theta/sqrt 2) erfc(theta/sqrt 2)."""
    s = theta / np.sqrt(2.0)
    return float(np.sqrt(np.pi) * s * erfcx(s))


def axial_R(r, theta: float):
    return 6 * theta ** 2 / (theta ** 2 + np.asarray(r, dtype=float) ** 2) ** 2


def _axial_cartesian(theta: float, logZ: float) -> ChartModel:
    th2 = theta ** 2
    eye = np.eye(2)

    def log_density(x, t):
        r2 = np.sum(x * x, axis=-1)
        return np.log(theta) - np.log(2 * np.pi) - logZ - 0.5 * r2 - 0.5 * np.log(th2 + r2)

    def grad(x, t):
        D = th2 + np.sum(x * x, axis=-1)[..., None]
        return -x - x / D

    def hess(x, t):
        D = (th2 + np.sum(x * x, axis=-1))[..., None, None]
        return -eye * (1 + 1 / D) + 2 * np.einsum("...i,...j->...ij", x, x) / D ** 2

    def parts(x):
        r2 = np.sum(x * x, axis=-1)[..., None, None]
        A = r2 * eye - np.einsum("...i,...j->...ij", x, x)
        # dA[i,j,k] = 2 x_k d_ij - d_ik x_j - x_i d_jk
        dA = (2 * np.einsum("...k,ij->...ijk", x, eye) - np.einsum("ik,...j->...ijk", eye, x)
              - np.einsum("...i,jk->...ijk", x, eye))
        return A, dA, th2 + r2

    def fn(x, t):
        A, _, D = parts(np.asarray(x, dtype=float))
        return eye - A / D

    def d1(x, t):
        x = np.asarray(x, dtype=float)
        A, dA, D = parts(x)
        D3 = D[..., None]
        return -dA / D3 + 2 * np.einsum("...ij,...k->...ijk", A, x) / D3 ** 2

    def d2(x, t):
        x = np.asarray(x, dtype=float)
        A, dA, D = parts(x)
        D4 = D[..., None, None]
        ddA = (2 * np.einsum("kl,ij->ijkl", eye, eye) - np.einsum("ik,jl->ijkl", eye, eye)
               - np.einsum("il,jk->ijkl", eye, eye))
        return (-ddA / D4
                + 2 * np.einsum("...ijk,...l->...ijkl", dA, x) / D4 ** 2
                + 2 * np.einsum("...ijl,...k->...ijkl", dA, x) / D4 ** 2
                + 2 * np.einsum("...ij,kl->...ijkl", A, eye) / D4 ** 2
                - 8 * np.einsum("...ij,...k,...l->...ijkl", A, x, x) / D4 ** 3)

    support = Support.whole(2)
    fam = DensityFamily(2, log_density, support, "cartesian", "axial-2d", grad, hess, (0.0, 0.0), 1.0)
    metric = MetricField(2, fn, d1, d2, "analytic", "cartesian", support, "axial-2d")
    return ChartModel(fam, metric, lambda x: np.linalg.norm(np.asarray(x, dtype=float), axis=-1), np.zeros(2))


def _axial_polar(theta: float, logZ: float) -> ChartModel:
    th2 = theta ** 2

    def log_density(x, t):
        r = x[..., 0]
        return np.log(theta * r) - np.log(2 * np.pi) - logZ - 0.5 * r ** 2 - 0.5 * np.log(th2 + r ** 2)

    def grad(x, t):
        r = x[..., 0]
        out = np.zeros(np.shape(x))
        out[..., 0] = 1 / r - r - r / (th2 + r ** 2)
        return out

    def hess(x, t):
        r = x[..., 0]
        D = th2 + r ** 2
        out = np.zeros(np.shape(x) + (2,))
        out[..., 0, 0] = -1 / r ** 2 - 1 - 1 / D + 2 * r ** 2 / D ** 2
        return out

    def fn(x, t):
        r = np.asarray(x, dtype=float)[..., 0]
        out = np.zeros(np.shape(x) + (2,))
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = th2 * r ** 2 / (th2 + r ** 2)
        return out

    def d1(x, t):
        r = np.asarray(x, dtype=float)[..., 0]
        D = th2 + r ** 2
        out = np.zeros(np.shape(x) + (2, 2))
        out[..., 1, 1, 0] = 2 * th2 ** 2 * r / D ** 2
        return out

    def d2(x, t):
        r = np.asarray(x, dtype=float)[..., 0]
        D = th2 + r ** 2
        out = np.zeros(np.shape(x) + (2, 2, 2))
        out[..., 1, 1, 0, 0] = 2 * th2 ** 2 / D ** 2 - 8 * th2 ** 2 * r ** 2 / D ** 3
        return out

    support = Support.box([0.0, -np.pi], [np.inf, np.pi])
    fam = DensityFamily(2, log_density, support, "polar", "axial-2d", grad, hess, (1.0, 0.0), 1.0)
    metric = MetricField(2, fn, d1, d2, "analytic", "polar", support, "axial-2d")
    return ChartModel(fam, metric, lambda x: np.asarray(x, dtype=float)[..., 0], None)


def t_to_r(t, theta: float):
    """Radius of the surface-of-revolution chart: r = theta t / sqrt(theta^2 - t^2)."""
    t = np.asarray(t, dtype=float)
    return theta * t / np.sqrt(theta ** 2 - t ** 2)


def r_to_t(r, theta: float):
    r = np.asarray(r, dtype=float)
    return theta * r / np.sqrt(theta ** 2 + r ** 2)


def _axial_t(theta: float, logZ: float, polar: ChartModel) -> ChartModel:
    th2 = theta ** 2

    def rmap(t):
        w = th2 - t ** 2
        return theta * t / np.sqrt(w), theta ** 3 / w ** 1.5, 3 * theta ** 3 * t / w ** 2.5

    def a_r(r):
        D = th2 + r ** 2
        return 1 / r - r - r / D, -1 / r ** 2 - 1 - 1 / D + 2 * r ** 2 / D ** 2

    def log_density(x, t_):
        t = x[..., 0]
        r, dr, _ = rmap(t)
        rp = np.stack([r, x[..., 1]], axis=-1)
        return polar.family.log_density(rp, t_) + np.log(dr)

    def grad(x, t_):
        t = x[..., 0]
        r, dr, _ = rmap(t)
        a, _ = a_r(r)
        out = np.zeros(np.shape(x))
        out[..., 0] = a * dr + 3 * t / (th2 - t ** 2)
        return out

    def hess(x, t_):
        t = x[..., 0]
        r, dr, ddr = rmap(t)
        a, da = a_r(r)
        w = th2 - t ** 2
        out = np.zeros(np.shape(x) + (2,))
        out[..., 0, 0] = da * dr ** 2 + a * ddr + 3 / w + 6 * t ** 2 / w ** 2
        return out

    def fn(x, t_):
        t = np.asarray(x, dtype=float)[..., 0]
        out = np.zeros(np.shape(x) + (2,))
        out[..., 0, 0] = theta ** 6 / (th2 - t ** 2) ** 3
        out[..., 1, 1] = t ** 2
        return out

    def d1(x, t_):
        t = np.asarray(x, dtype=float)[..., 0]
        out = np.zeros(np.shape(x) + (2, 2))
        out[..., 0, 0, 0] = 6 * t * theta ** 6 / (th2 - t ** 2) ** 4
        out[..., 1, 1, 0] = 2 * t
        return out

    def d2(x, t_):
        t = np.asarray(x, dtype=float)[..., 0]
        w = th2 - t ** 2
        out = np.zeros(np.shape(x) + (2, 2, 2))
        out[..., 0, 0, 0, 0] = 6 * theta ** 6 / w ** 4 + 48 * t ** 2 * theta ** 6 / w ** 5
        out[..., 1, 1, 0, 0] = 2.0
        return out

    support = Support.box([0.0, -np.pi], [theta, np.pi])
    fam = DensityFamily(2, log_density, support, "t", "axial-2d", grad, hess, (0.5 * theta, 0.0), 1.0)
    metric = MetricField(2, fn, d1, d2, "analytic", "t", support, "axial-2d")
    return ChartModel(fam, metric, lambda x: t_to_r(np.asarray(x, dtype=float)[..., 0], theta), None)


def _polar_changes(theta: float) -> Dict[tuple, CoordinateChange]:
    def p2c(x):
        x = np.asarray(x, dtype=float)
        return np.stack([x[..., 0] * np.cos(x[..., 1]), x[..., 0] * np.sin(x[..., 1])], axis=-1)

    def c2p(x):
        x = np.asarray(x, dtype=float)
        return np.stack([np.hypot(x[..., 0], x[..., 1]), np.arctan2(x[..., 1], x[..., 0])], axis=-1)

    def p2c_jac(x):
        x = np.asarray(x, dtype=float)
        r, phi = x[..., 0], x[..., 1]
        c, s = np.cos(phi), np.sin(phi)
        return np.stack([np.stack([c, -r * s], -1), np.stack([s, r * c], -1)], -2)

    def t2p(x):
        x = np.asarray(x, dtype=float)
        return np.stack([t_to_r(x[..., 0], theta), x[..., 1]], axis=-1)

    def p2t(x):
        x = np.asarray(x, dtype=float)
        return np.stack([r_to_t(x[..., 0], theta), x[..., 1]], axis=-1)

    def t2p_jac(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(np.shape(x) + (2,))
        out[..., 0, 0] = theta ** 3 / (theta ** 2 - x[..., 0] ** 2) ** 1.5
        out[..., 1, 1] = 1.0
        return out

    polar_to_cart = CoordinateChange("polar", "cartesian", p2c, c2p, p2c_jac)
    t_to_polar = CoordinateChange("t", "polar", t2p, p2t, t2p_jac)

    def t2c(x):
        return p2c(t2p(x))

    def c2t(x):
        return p2t(c2p(x))

    def t2c_jac(x):
        return np.einsum("...ij,...jk->...ik", p2c_jac(t2p(x)), t2p_jac(x))

    t_to_cart = CoordinateChange("t", "cartesian", t2c, c2t, t2c_jac)
    return {
        ("polar", "cartesian"): polar_to_cart, ("cartesian", "polar"): polar_to_cart.inverted(),
        ("t", "polar"): t_to_polar, ("polar", "t"): t_to_polar.inverted(),
        ("t", "cartesian"): t_to_cart, ("cartesian", "t"): t_to_cart.inverted(),
    }


def axial_2d(theta: float = 1.0) -> FamilySpec:
    """Axially symmetric family with curvature R = 6 theta^2 / (theta^2 + r^2)^2."""
    theta = float(theta)
    if not theta > 0:
        raise ConfigError("axial-2d needs theta > 0")
    Z = axial_Z(theta)
    logZ = float(np.log(Z))
    cart = _axial_cartesian(theta, logZ)
    polar = _axial_polar(theta, logZ)
    charts = {"cartesian": cart, "polar": polar, "t": _axial_t(theta, logZ, polar)}
    radii = np.array([0.3, 0.8, 1.5, 2.5])
    angles = np.linspace(0, 2 * np.pi, 5)[:-1] + 0.3
    probes = np.array([[r * np.cos(a), r * np.sin(a)] for r in radii for a in angles])
    return FamilySpec(
        "axial-2d", 2, ControlParams([theta]), charts, "cartesian", _polar_changes(theta),
        sampler=("axial-radial", {"theta": theta}), Z=Z,
        R=lambda x: axial_R(np.linalg.norm(np.asarray(x, dtype=float), axis=-1), theta),
        gate_kind="ugr-residual", probes=probes, params={"theta": theta},
    )


# ---------------------------------------------------------------------------
# Cauchy family as the diffeomorphic image of a gaussian


def cauchy_u(x, nu: float, gamma: float):
    """Standard-normal quantile of the Cauchy CDF, accurate in both tails."""
    d = np.asarray(x, dtype=float) - nu
    tail = np.arctan2(gamma, np.abs(d)) / np.pi  # min(F, 1 - F)
    u = -ndtri(tail)
    return np.where(d < 0, -u, u)


def cauchy_1d(nu: float = 0.0, gamma: float = 1.0) -> FamilySpec:
    """Cauchy family with metric pulled back from the unit gaussian metric."""
    nu, gamma = float(nu), float(gamma)
    if not gamma > 0:
        raise ConfigError("cauchy-1d needs gamma > 0")
    half_log_2pi = 0.5 * np.log(2 * np.pi)

    def pieces(x):
        d = x[..., 0] - nu
        q = gamma ** 2 + d ** 2
        L = np.log(gamma / np.pi) - np.log(q)
        L1 = -2 * d / q
        L2 = -2 / q + 4 * d ** 2 / q ** 2
        u = cauchy_u(x[..., 0], nu, gamma)
        h = np.exp(L + 0.5 * u ** 2 + half_log_2pi)
        return L, L1, L2, u, h

    def log_density(x, t):
        return pieces(np.asarray(x, dtype=float))[0]

    def grad(x, t):
        return pieces(np.asarray(x, dtype=float))[1][..., None]

    def hess(x, t):
        return pieces(np.asarray(x, dtype=float))[2][..., None, None]

    def fn(x, t):
        h = pieces(np.asarray(x, dtype=float))[4]
        return (h ** 2)[..., None, None]

    def d1(x, t):
        _, L1, _, u, h = pieces(np.asarray(x, dtype=float))
        g = h ** 2
        return (g * (2 * L1 + 2 * u * h))[..., None, None, None]

    def d2(x, t):
        _, L1, L2, u, h = pieces(np.asarray(x, dtype=float))
        g = h ** 2
        dh = h * (L1 + u * h)
        dg = g * (2 * L1 + 2 * u * h)
        return (dg * (2 * L1 + 2 * u * h) + g * (2 * L2 + 2 * h ** 2 + 2 * u * dh))[..., None, None, None, None]

    support = Support.whole(1)
    fam = DensityFamily(1, log_density, support, "cartesian", "cauchy-1d", grad, hess, (nu,), gamma)
    metric = MetricField(1, fn, d1, d2, "transported", "cartesian", support, "cauchy-1d")
    chart = ChartModel(fam, metric, lambda x: np.abs(cauchy_u(np.asarray(x, dtype=float)[..., 0], nu, gamma)),
                       np.array([nu]))
    probes = nu + gamma * np.tan(np.linspace(-0.45, 0.45, 13) * np.pi)[:, None]
    return FamilySpec(
        "cauchy-1d", 1, ControlParams([nu, gamma]), {"cartesian": chart}, "cartesian",
        sampler=("cauchy", {"nu": nu, "gamma": gamma}), Z=1.0, R=lambda x: np.zeros(np.shape(x)[:-1]),
        probes=probes, params={"nu": nu, "gamma": gamma},
    )


# ---------------------------------------------------------------------------


def builtin_family(family_id: str, theta=None, **options) -> FamilySpec:
    """Fully wired built-in family.

    ``theta`` is the control parameter of axial-2d, ``(nu, gamma)`` for
    cauchy-1d and unused by the gaussian families (their precision matrix
    and mean come from ``sigma`` and ``mean`` options).
    """
    values = () if theta is None else as_params(theta).values
    if family_id == "gaussian-nd":
        sigma = options.get("sigma")
        n = int(options.get("n", 2 if sigma is None else np.shape(sigma)[0]))
        return gaussian_nd(n, sigma, options.get("mean"))
    if family_id == "axial-2d":
        return axial_2d(values[0] if values else options.get("theta", 1.0))
    if family_id == "cauchy-1d":
        nu, gamma = values if len(values) == 2 else (options.get("nu", 0.0), options.get("gamma", 1.0))
        return cauchy_1d(nu, gamma)
    if family_id == "xy-coupled":
        return xy_coupled()
    raise ConfigError(f"unknown family id {family_id!r}; expected one of {', '.join(FAMILY_IDS)}")


def family_gate(spec: FamilySpec, tolerance: float = 1e-5) -> GateResult:
    """Certify the family's metric on its probe grid.

    ``metric-residual`` evaluates the defining covariant equation;
    ``ugr-residual`` checks rho = Z^-1 exp(-l^2/2) sqrt(|g| / 2 pi)^n
    (relative), used where the declared metric is not a solution of the
    defining equation but does carry the gaussian representation.
    """
    chart = spec.chart
    probes = spec.probes if spec.probes is not None else chart.family.start_point()[None, :]
    theta = spec.theta
    if spec.gate_kind == "metric-residual":
        worst = 0.0
        for x in probes:
            r = metric_residual(chart.family, chart.metric, x, theta)
            worst = max(worst, float(np.max(np.abs(r))))
        return GateResult("metric-residual", worst, tolerance, len(probes))
    if spec.gate_kind == "ugr-residual":
        n = spec.dim
        rho = chart.family.density(probes, theta)
        _, logdet = np.linalg.slogdet(chart.metric.g(probes, theta))
        ugr = np.exp(-0.5 * chart.ell(probes) ** 2 + 0.5 * logdet - 0.5 * n * np.log(2 * np.pi)) / spec.Z
        return GateResult("ugr-residual", float(np.max(np.abs(ugr / rho - 1))), tolerance, len(probes))
    raise ConfigError(f"unknown gate kind {spec.gate_kind!r}")
