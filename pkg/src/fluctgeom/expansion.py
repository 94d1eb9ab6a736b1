"""Second-order expansion of the density around the mode: spherical frames,
the spherical function F(q), the asymptotic density ratio and the
spherical curvature scalar Pi."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .charts import DensityFamily, _coords, as_params
from .errors import DimensionError, GeometryError
from .geodesics import DirectionVector, geodesic_fan, orthonormalizer, unit_sphere_directions
from .geometry import CurvatureValue, MetricField, curvature_batch

# independent components of a 3-D curvature tensor, as index tuples (0-based)
COMPONENTS = {
    "1212": (0, 1, 0, 1), "2323": (1, 2, 1, 2), "3131": (2, 0, 2, 0),
    "1223": (0, 1, 1, 2), "3112": (2, 0, 0, 1), "2331": (1, 2, 2, 0),
}
DIAGONAL = ("1212", "2323", "3131")
MIXED = ("1223", "3112", "2331")


@dataclass(frozen=True)
class SphericalFrame:
    q: np.ndarray
    e: DirectionVector
    xi: np.ndarray  # (n-1, n), xi[a] = d e / d q^a
    kappa: np.ndarray  # (n-1, n-1)
    S: np.ndarray  # (n-1, n, n), S[a, i, j] = e^i xi_a^j - e^j xi_a^i


def spherical_frame(gbar: np.ndarray, q) -> SphericalFrame:
    """Frame at the mode for directions e = L e_hat(q), with L^T gbar L = I."""
    gbar = np.asarray(gbar, dtype=float)
    n = gbar.shape[0]
    if n not in (2, 3):
        raise DimensionError("spherical frames exist for n = 2 and n = 3")
    q = np.atleast_1d(np.asarray(q, dtype=float))
    L = orthonormalizer(gbar)
    e_hat, xi_hat = unit_sphere_directions(n, q)
    e = L @ e_hat
    xi = xi_hat @ L.T
    kappa = xi @ gbar @ xi.T
    if np.any(np.linalg.eigvalsh(kappa) <= 0):
        raise GeometryError(f"degenerate spherical frame at q = {q}")
    S = e[None, :, None] * xi[:, None, :] - e[None, None, :] * xi[:, :, None]
    return SphericalFrame(q, DirectionVector(tuple(e)), xi, kappa, S)


def _riemann(curv) -> np.ndarray:
    return np.asarray(curv.riemann if isinstance(curv, CurvatureValue) else curv, dtype=float)


def spherical_function(curv, frame: SphericalFrame) -> float:
    """F(q) = R_ijkl kappa^ab S^ij_a S^kl_b at the mode."""
    R = _riemann(curv)
    if R.shape[0] not in (2, 3) or R.shape[0] != frame.e.array.size:
        raise DimensionError("spherical function needs n in {2, 3} matching the frame")
    kinv = np.linalg.inv(frame.kappa)
    return float(np.einsum("ijkl,ab,aij,bkl->", R, kinv, frame.S, frame.S))


def anisotropic_functions(q) -> dict:
    """G^ijkl(q) for n = 3 in the (cos q1 cos q2, cos q1 sin q2, sin q1) parameterization."""
    q = np.asarray(q, dtype=float)
    c1, s1, c2, s2 = np.cos(q[..., 0]), np.sin(q[..., 0]), np.cos(q[..., 1]), np.sin(q[..., 1])
    return {
        "1212": c1 ** 2,
        "2323": s2 ** 2 + s1 ** 2 * c2 ** 2,
        "3131": c2 ** 2 + s1 ** 2 * s2 ** 2,
        "1223": -s1 * c1 * c2,
        "3112": -s1 * c1 * s2,
        "2331": -s2 * c2 + s1 ** 2 * c2 * s2,
    }


def orthonormal_components(riemann: np.ndarray, gbar: np.ndarray) -> np.ndarray:
    """Curvature components in a gbar-orthonormal basis (the frame basis L)."""
    L = orthonormalizer(np.asarray(gbar, dtype=float))
    return np.einsum("ijkl,ia,jb,kc,ld->abcd", riemann, L, L, L, L)


def expansion_terms(riemann_hat: np.ndarray, q) -> dict:
    """Per-component contributions to F(q) for n = 3 (orthonormal components).

    F = 4 [sum_diag R_A G^A + 2 sum_mixed R_A G^A]; each mixed component
    appears twice in the full contraction (as R_AB and R_BA).
    """
    G = anisotropic_functions(q)
    out = {}
    for name, idx in COMPONENTS.items():
        weight = 4.0 if name in DIAGONAL else 8.0
        out[name] = weight * riemann_hat[idx] * G[name]
    return out


def spherical_function_expansion(riemann_hat: np.ndarray, q) -> float:
    return float(sum(expansion_terms(riemann_hat, q).values()))


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AsymptoticRatio:
    ell: float
    predicted: float
    measured: float
    F: float
    truncated: bool


def _mode_frame_quantities(g: MetricField, x_bar, theta):
    xb = _coords(x_bar, g.chart)
    gbar = g.g(xb, theta)
    riem, _, scalar = curvature_batch(g, xb, theta)
    return xb, gbar, riem, float(scalar)


def measured_ratios(family: DensityFamily, g: MetricField, x_bar, ells, q, theta):
    """Exact density ratio dp/dp_G along the geodesic with direction q.

    ratio(l) = rho |det[upsilon, J]| / (exp(-l^2/2) l^(n-1) (2 pi)^(-n/2) sqrt(det kappa)),
    which tends to 1/Z as l -> 0.
    """
    theta = as_params(theta)
    n = g.dim
    xb = _coords(x_bar, g.chart)
    frame = spherical_frame(g.g(xb, theta), q)
    ells = np.atleast_1d(np.asarray(ells, dtype=float))
    fan = geodesic_fan(g, xb, ells, theta, q=np.atleast_2d(q))
    x = fan.x[:, 0]
    cols = np.concatenate([fan.v[:, 0][:, None, :], fan.J[:, 0]], axis=1)  # (len, n, n)
    vol = np.abs(np.linalg.det(cols))
    log_rho = family.log_rho(x, theta)
    log_num = log_rho + np.log(vol)
    log_den = (-0.5 * ells ** 2 + (n - 1) * np.log(ells) - 0.5 * n * np.log(2 * np.pi)
               + 0.5 * np.log(np.linalg.det(frame.kappa)))
    ratio = np.exp(log_num - log_den)
    truncated = ells > fan.exit_ell[0]
    ratio[truncated] = np.nan
    return ratio, bool(fan.truncated[0])


def asymptotic_ratio(family: DensityFamily, g: MetricField, x_bar, ell: float, q, theta,
                     Z: Optional[float] = None) -> AsymptoticRatio:
    """Predicted Z^-1 (1 - l^2 F(q) / 24) next to the measured ratio at (l, q)."""
    theta = as_params(theta)
    xb, gbar, riem, _ = _mode_frame_quantities(g, x_bar, theta)
    frame = spherical_frame(gbar, q)
    F = spherical_function(riem, frame)
    if Z is None:
        from .gaussrep import gaussian_partition  # local import keeps the module graph acyclic

        Z = gaussian_partition(family, g, xb, theta).Z
    predicted = (1.0 - ell ** 2 * F / 24.0) / Z
    if ell == 0:
        # the limit of the measured ratio is the probability weight at the mode
        from .geodesics import information_potential_batch

        measured = float(np.exp(information_potential_batch(family, g, xb, theta)))
        return AsymptoticRatio(0.0, predicted, measured, F, False)
    measured, truncated = measured_ratios(family, g, xb, [ell], q, theta)
    return AsymptoticRatio(float(ell), predicted, float(measured[0]), F, truncated)


def log_ratio_quadratic_coefficient(family, g, x_bar, q, theta, ells=None) -> float:
    """Fit log(measured ratio) = c0 + c2 l^2 + c4 l^4 and return c2."""
    ells = np.linspace(0.05, 0.4, 15) if ells is None else np.asarray(ells, dtype=float)
    ratio, truncated = measured_ratios(family, g, x_bar, ells, q, theta)
    if truncated:
        raise GeometryError("geodesic left the support during the fit")
    A = np.stack([np.ones_like(ells), ells ** 2, ells ** 4], axis=1)
    coef, *_ = np.linalg.lstsq(A, np.log(ratio), rcond=None)
    return float(coef[1])


# ---------------------------------------------------------------------------


def spherical_curvature_scalar(riemann, upsilon, tau, g_point: np.ndarray) -> float:
    """Pi = g^ab R_ijkl X^ij_a X^kl_b with X^ij_a = upsilon^i tau_a^j - upsilon^j tau_a^i.

    ``tau`` holds the sphere tangents (rows) at the point, ``g_point`` the
    metric there; g_ab = g(tau_a, tau_b) is the projected metric.
    """
    R = _riemann(riemann)
    upsilon = np.asarray(upsilon, dtype=float)
    tau = np.atleast_2d(np.asarray(tau, dtype=float))
    gab = tau @ g_point @ tau.T
    if np.linalg.det(gab) <= 0:
        raise GeometryError("degenerate projected metric")
    X = upsilon[None, :, None] * tau[:, None, :] - upsilon[None, None, :] * tau[:, :, None]
    return float(np.einsum("ijkl,ab,aij,bkl->", R, np.linalg.inv(gab), X, X))


def spherical_curvature_scalar_at(g: MetricField, x_bar, ell: float, q, theta) -> float:
    """Pi at the point reached from the mode along direction q after arc-length ell."""
    theta = as_params(theta)
    if g.dim not in (2, 3):
        raise DimensionError("Pi is defined here for n in {2, 3}")
    fan = geodesic_fan(g, _coords(x_bar, g.chart), [ell], theta, q=np.atleast_2d(q))
    if fan.truncated[0]:
        raise GeometryError("geodesic left the support")
    x = fan.x[0, 0]
    riem, _, _ = curvature_batch(g, x, theta)
    return spherical_curvature_scalar(riem, fan.v[0, 0], fan.J[0, 0], g.g(x, theta))


def fan_projected_metric(g: MetricField, x_bar, ells, q, theta) -> np.ndarray:
    """g_ab(l, q) = g(J_a, J_b) along one geodesic, for the frame-consistency check."""
    fan = geodesic_fan(g, _coords(x_bar, g.chart), ells, as_params(theta), q=np.atleast_2d(q))
    return fan.projected_metric(g, theta)[:, 0]
