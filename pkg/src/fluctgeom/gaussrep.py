"""Invariant probabilistic objects: weight, information potential, mode,
gaussian partition function and the two entropies."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import integrate

from .charts import DensityFamily, Point, _coords, as_params
from .errors import GeometryError, IntegrationError, OptimizationError
from .geodesics import (
    entropy_gradient_batch, geodesic_fan, information_potential_batch, shoot_geodesic,
)
from .geometry import CurvatureValue, MetricField, fd_gradient

LOG_2PI = float(np.log(2 * np.pi))


@dataclass(frozen=True)
class ModeResult:
    x_bar: Point
    S_at_mode: float
    gradient_norm: float
    iterations: int


@dataclass(frozen=True)
class PartitionResult:
    Z: float
    P: float
    error: float
    method: str


@dataclass(frozen=True)
class CurvatureRadius:
    ell_c: float
    gaussian_ok: bool
    marginal: bool  # 1 <= ell_c <= 10
    curvature_sign: int


def _k(theta, k) -> float:
    if k is not None:
        return float(k)
    return as_params(theta).k


def probability_weight(family: DensityFamily, g: MetricField, x, theta) -> float:
    """omega = rho (2 pi)^(n/2) |g|^(-1/2)."""
    x = _coords(x, g.chart)
    return float(np.exp(information_potential_batch(family, g, x, theta)))


def information_potential(family: DensityFamily, g: MetricField, x, theta, k: Optional[float] = None,
                          with_flag: bool = False):
    """S = k log omega, evaluated in log space.

    A vanishing density gives the sentinel -inf; with ``with_flag`` the
    result is ``(S, underflowed)``.
    """
    x = _coords(x, g.chart)
    with np.errstate(divide="ignore"):
        s = float(information_potential_batch(family, g, x, theta))
    s = _k(theta, k) * s
    underflow = s == -np.inf
    return (s, underflow) if with_flag else s


def _potential_grad(family, g, x, theta):
    psi, _ = entropy_gradient_batch(family, g, x, theta)
    return -psi


def _default_starts(family: DensityFamily) -> list:
    c = family.start_point()
    starts = [c]
    for i in range(family.dim):
        for sgn in (1.0, -1.0):
            p = c.copy()
            p[i] += 0.5 * sgn * family.scale
            if bool(family.support.contains(p)):
                starts.append(p)
    return starts


def _newton(family, g, theta, x0, tol, max_iter):
    x = np.array(x0, dtype=float)
    S = lambda p: float(information_potential_batch(family, g, p, theta))  # noqa: E731
    grad = _potential_grad(family, g, x, theta)
    for it in range(1, max_iter + 1):
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= tol:
            return x, gnorm, it - 1
        H = fd_gradient(lambda p: _potential_grad(family, g, p, theta), x, 1e-5, 4, family.support)
        H = 0.5 * (H + H.T)
        lam_max = float(np.max(np.linalg.eigvalsh(H)))
        if lam_max >= 0:
            H = H - (lam_max + 1.0) * np.eye(x.size)
        step = -np.linalg.solve(H, grad)
        s0, t = S(x), 1.0
        while t > 1e-12:
            trial = x + t * step
            if bool(family.support.contains(trial)) and S(trial) >= s0 + 1e-4 * t * float(grad @ step):
                break
            t *= 0.5
        else:
            trial = x + t * step
        x = trial
        grad = _potential_grad(family, g, x, theta)
        if not np.all(np.isfinite(grad)):
            break
    gnorm = float(np.linalg.norm(grad))
    if gnorm <= tol:
        return x, gnorm, max_iter
    raise OptimizationError(f"Newton search from {x0} stalled with gradient norm {gnorm:.3e}")


def find_mode(family: DensityFamily, g: MetricField, theta, starts: Optional[Sequence] = None,
              tol: float = 1e-8, max_iter: int = 100) -> ModeResult:
    """Maximizer of the information potential by multi-start Newton with line search."""
    theta = as_params(theta)
    starts = _default_starts(family) if starts is None else [_coords(s, g.chart) for s in starts]
    found = []
    for s in starts:
        if not bool(family.support.contains(s)):
            continue
        try:
            found.append(_newton(family, g, theta, s, tol, max_iter))
        except (OptimizationError, GeometryError, np.linalg.LinAlgError):
            continue
    if not found:
        raise OptimizationError("mode search diverged from every start")
    best = found[0]
    if len(found) > 1:
        # a gradient below tol pins the maximizer only to about tol / |lambda_min(H)|
        H = fd_gradient(lambda p: _potential_grad(family, g, p, theta), best[0], 1e-5, 4, family.support)
        lam = float(np.min(np.abs(np.linalg.eigvalsh(0.5 * (H + H.T)))))
        bound = 1e-8 * max(1.0, float(np.max(np.abs(best[0])))) + 4.0 * tol / max(lam, 1e-300)
        for x, _, _ in found[1:]:
            if np.max(np.abs(x - best[0])) > bound:
                raise OptimizationError(f"multi-start disagreement: {best[0]} vs {x}")
    x, gnorm, its = best
    S = float(information_potential_batch(family, g, x, theta))
    return ModeResult(Point(x, g.chart), S, gnorm, int(sum(f[2] for f in found)))


# ---------------------------------------------------------------------------
# gaussian partition function


def ell_max(n: int) -> float:
    return max(12.0, 6.0 * np.sqrt(n))


def _panel_rule(a: float, b: float, panels: int, order: int):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    x = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    w = (half[:, None] * weights[None, :]).ravel()
    return x, w


def _radial_areas(g: MetricField, x_bar, radii, theta, directions=None):
    """Sigma_g at many radii from one fan; also the smallest truncation radius."""
    n = g.dim
    if n == 1:
        areas = np.zeros_like(radii)
        exit_ell = np.inf
        for sign in (1.0, -1.0):
            e = np.array([sign / np.sqrt(float(g.g(x_bar, theta)[0, 0]))])
            path = shoot_geodesic(g, x_bar, e, float(np.max(radii)), theta, nodes=2)
            reach = path.length if path.truncated else np.inf
            areas += (radii <= reach)
            exit_ell = min(exit_ell, reach)
        return areas, exit_ell
    fan = geodesic_fan(g, x_bar, radii, theta, directions=directions)
    det = np.linalg.det(fan.projected_metric(g, theta))
    alive = radii[:, None] <= fan.exit_ell[None, :]
    areas = (np.sqrt(np.maximum(det, 0.0)) * alive) @ fan.weights / (2 * np.pi) ** ((n - 1) / 2)
    return areas, float(np.min(fan.exit_ell))


def gaussian_partition(family: DensityFamily, g: MetricField, x_bar, theta, method: str = "radial",
                       closed_form: Optional[float] = None, panels: Optional[int] = None,
                       directions=None) -> PartitionResult:
    """Z = (2 pi)^(-1/2) integral_0^inf exp(-l^2/2) Sigma_g(l) dl and P = -k log Z."""
    theta = as_params(theta)
    k = theta.k
    if method == "analytic":
        if closed_form is None:
            raise IntegrationError("family declares no closed-form partition function")
        Z = float(closed_form)
        return PartitionResult(Z, -k * np.log(Z), 0.0, "analytic")
    if method not in ("radial", "radial-quadrature"):
        raise ValueError(f"unknown partition method {method!r}")
    n = g.dim
    if n not in (1, 2, 3):
        raise IntegrationError("radial quadrature is available for n <= 3")
    xb = _coords(x_bar, g.chart)
    top = ell_max(n)
    panels = int(np.ceil(top)) if panels is None else panels
    r_hi, w_hi = _panel_rule(0.0, top, panels, 12)
    r_lo, w_lo = _panel_rule(0.0, top, panels, 8)
    radii = np.concatenate([r_hi, r_lo])
    areas, exit_ell = _radial_areas(g, xb, radii, theta, directions)
    if not np.all(np.isfinite(areas)):
        raise IntegrationError("non-finite sphere areas")
    kernel = np.exp(-0.5 * radii ** 2) / np.sqrt(2 * np.pi)
    z_hi = float(np.sum(w_hi * kernel[:r_hi.size] * areas[:r_hi.size]))
    z_lo = float(np.sum(w_lo * kernel[r_hi.size:] * areas[r_hi.size:]))
    # bound on the neglected tail, assuming Sigma grows no faster than the flat area
    cut = min(top, exit_ell)
    sigma_cut = max(float(areas[np.argmin(np.abs(radii - cut))]), 1.0)
    tail = sigma_cut * (1 + cut) ** (n - 1) * np.exp(-0.5 * cut ** 2) / max(cut, 1.0)
    error = abs(z_hi - z_lo) + tail
    if not z_hi > 0:
        raise IntegrationError("non-positive partition estimate", estimate=z_hi)
    if error > 1e-6 * z_hi:
        raise IntegrationError(f"partition quadrature error {error:.3e} too large (tail {tail:.3e})",
                               estimate=z_hi)
    return PartitionResult(z_hi, -k * np.log(z_hi), error, "radial-quadrature")


# ---------------------------------------------------------------------------


def curvature_radius(curv) -> CurvatureRadius:
    """l_c = R^(-1/2); infinite for R <= 0 with the sign recorded."""
    R = float(curv.scalar if isinstance(curv, CurvatureValue) else curv)
    sign = int(np.sign(R))
    if R <= 0:
        return CurvatureRadius(np.inf, True, False, sign)
    ell_c = R ** -0.5
    return CurvatureRadius(ell_c, ell_c > 10.0, 1.0 <= ell_c <= 10.0, sign)


def _axis_map(lo: float, hi: float, center: float, scale: float):
    """Map s in a finite interval onto (lo, hi) with derivative, for quadrature on infinite axes."""
    if np.isfinite(lo) and np.isfinite(hi):
        return (lo, hi), (lambda s: s), (lambda s: 1.0)
    if not np.isfinite(lo) and not np.isfinite(hi):
        return (-np.pi / 2, np.pi / 2), (lambda s: center + scale * np.tan(s)), (lambda s: scale / np.cos(s) ** 2)
    if np.isfinite(lo):
        return (0.0, np.pi / 2), (lambda s: lo + scale * np.tan(s)), (lambda s: scale / np.cos(s) ** 2)
    return (0.0, np.pi / 2), (lambda s: hi - scale * np.tan(s)), (lambda s: scale / np.cos(s) ** 2)


def entropies(family: DensityFamily, g: MetricField, theta, chart: Optional[str] = None,
              epsabs: float = 1e-11, epsrel: float = 1e-10):
    """(differential, invariant) entropies by adaptive quadrature (n <= 2).

    differential = -integral rho log rho dx (chart dependent);
    invariant = -integral omega log omega dmu = -integral rho log omega dx.
    """
    theta = as_params(theta)
    n = family.dim
    if n > 2:
        raise IntegrationError("entropy quadrature is available for n <= 2")
    if chart is not None and chart != family.chart:
        raise GeometryError(f"family is in chart {family.chart!r}, not {chart!r}")
    center = family.start_point()
    maps = [_axis_map(family.support.lower[i], family.support.upper[i], center[i], family.scale)
            for i in range(n)]
    if n == 2:
        return _entropies_2d(family, g, theta, maps, center)

    def integrands(s):
        x = np.array([maps[0][1](s)])
        jac = float(maps[0][2](s))
        if not np.all(np.isfinite(x)) or not bool(family.support.contains(x)):
            return 0.0, 0.0
        log_rho = float(family.log_rho(x, theta))
        if log_rho < -745:
            return 0.0, 0.0
        rho = np.exp(log_rho)
        log_omega = float(information_potential_batch(family, g, x, theta))
        return -rho * log_rho * jac, -rho * log_omega * jac

    out = []
    for which in (0, 1):
        val, err = integrate.quad(lambda s: integrands(s)[which], *maps[0][0], limit=400,
                                  epsabs=epsabs, epsrel=epsrel)
        _accept(val, err)
        out.append(float(val))
    return out[0], out[1]


def _accept(val: float, err: float) -> None:
    if not np.isfinite(val) or err > 1e-6 * max(1.0, abs(val)):
        raise IntegrationError(f"entropy integral did not converge (error {err:.3e})", estimate=val)


def _graded_rule(a: float, b: float, panels: int, order: int, levels: int = 8):
    """Composite Gauss-Legendre nodes on [a, b], panels halving towards both ends."""
    nodes, w = np.polynomial.legendre.leggauss(order)
    L = b - a
    ends = 2.0 ** -np.arange(levels, 1, -1)
    edges = np.unique(np.concatenate([
        [a], a + L * ends, np.linspace(a + L * 2.0 ** -levels, b - L * 2.0 ** -levels, panels + 1),
        b - L * ends[::-1], [b]]))
    mid, half = 0.5 * (edges[1:] + edges[:-1]), 0.5 * np.diff(edges)
    return (mid[:, None] + half[:, None] * nodes).ravel(), (half[:, None] * w).ravel()


def _entropies_2d(family, g, theta, maps, center):
    """Tensor-product rule on the mapped square; two resolutions give the error estimate."""
    results = []
    for panels, order in ((16, 10), (32, 16)):
        (s0, w0), (s1, w1) = [_graded_rule(*m[0], panels, order) for m in maps]
        S0, S1 = np.meshgrid(s0, s1, indexing="ij")
        with np.errstate(over="ignore", invalid="ignore"):
            X = np.stack([maps[0][1](S0), maps[1][1](S1)], -1)
            W = np.outer(w0 * maps[0][2](s0), w1 * maps[1][2](s1))
        ok = np.all(np.isfinite(X), -1) & family.support.contains(X)
        Xs = np.where(ok[..., None], X, center)
        log_rho = family.log_rho(Xs, theta)
        ok &= log_rho > -745
        log_rho = np.where(ok, log_rho, 0.0)
        rho = np.where(ok, np.exp(log_rho), 0.0)
        log_omega = np.where(ok, information_potential_batch(family, g, Xs, theta), 0.0)
        results.append((-float(np.sum(W * rho * log_rho)), -float(np.sum(W * rho * log_omega))))
    (d_lo, i_lo), (d_hi, i_hi) = results
    _accept(d_hi, abs(d_hi - d_lo))
    _accept(i_hi, abs(i_hi - i_lo))
    return d_hi, i_hi
