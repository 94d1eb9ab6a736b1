"""Riemannian fluctuation theory with an explicit Boltzmann-like constant k.

Conventions: the thermo metric is g_k = k g, so the scalar curvature of g_k
is R/k. Entropic quantities carry k (S_k = k S), squared lengths scale as
l_k^2 = k l^2, and the Planck potential is P = -k log Z.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .charts import ControlParams, DensityFamily, Point, _coords, as_params
from .errors import DomainError, StationarityError
from .gaussrep import find_mode, gaussian_partition
from .geodesics import information_potential_batch
from .geometry import CurvatureValue, MetricField, fd_gradient, fd_hessian

CurvatureLike = Union[CurvatureValue, float]

# n k R above this (but below 1) is reported as marginal
MARGINAL_PRODUCT = 0.1


def _scalar(curv: CurvatureLike) -> float:
    return float(curv.scalar if isinstance(curv, CurvatureValue) else curv)


def thermo_curvature(R: float, k: float) -> float:
    """Scalar curvature of k*g given the scalar curvature R of g."""
    return float(R) / float(k)


@dataclass(frozen=True)
class ThermoState:
    x_bar: Point
    S_eq: float
    P_planck: float
    theta: ControlParams
    k: float

    @property
    def consistency_gap(self) -> float:
        """|S_eq - P|; zero when the gaussian representation is exact."""
        return abs(self.S_eq - self.P_planck)


def equilibrium_state(family: DensityFamily, g: MetricField, theta, k: Optional[float] = None,
                      Z: Optional[float] = None) -> ThermoState:
    """Equilibrium x_bar, S(x_bar) and P = -k log Z (radial quadrature unless Z is given)."""
    theta = as_params(theta)
    k = theta.k if k is None else float(k)
    mode = find_mode(family, g, theta)
    if Z is None:
        Z = gaussian_partition(family, g, mode.x_bar, theta).Z
    return ThermoState(mode.x_bar, k * mode.S_at_mode, -k * float(np.log(Z)), theta.with_k(k), k)


def closed_system_entropy_estimate(curv: CurvatureLike, k: float = 1.0) -> float:
    """S(x_bar) ~ k^2 R(x_bar) / 6, with R the curvature in thermo units."""
    return float(k) ** 2 * _scalar(curv) / 6.0


def legendre_with_correction(theta_lin, x_bar, s_open: Callable, curv: CurvatureLike, k: float = 1.0,
                             observable: Optional[Callable] = None, tol: float = 1e-6):
    """(P0, P2) with P0 = theta.X(x_bar) - s(x_bar) and P2 = P0 + k^2 R / 6.

    ``observable`` maps coordinates to the quantities conjugate to
    ``theta_lin`` (identity by default). x_bar must maximize
    -theta.X(x) + s(x); a gradient above ``tol`` raises StationarityError.
    """
    th = np.atleast_1d(np.asarray(theta_lin, dtype=float))
    xb = np.atleast_1d(_coords(x_bar)).astype(float)
    X = (lambda x: x) if observable is None else observable

    def legendre_arg(x):
        return -np.sum(th * np.asarray(X(x)), axis=-1) + np.asarray(s_open(x))

    grad = fd_gradient(legendre_arg, xb, 1e-4, 4)
    scale = max(1.0, float(np.max(np.abs(th))))
    if not np.all(np.isfinite(grad)) or np.max(np.abs(grad)) > tol * scale:
        raise StationarityError(f"x_bar fails the first-order condition (gradient {grad})")
    P0 = float(np.sum(th * np.asarray(X(xb))) - s_open(xb))
    return P0, P0 + closed_system_entropy_estimate(curv, k)


def open_system_entropy(Omega, g: MetricField, x, theta, k: float = 1.0) -> float:
    """s = k log Omega - (k/2) log |g / 2 pi k|; Omega is a value or a function of x."""
    x = _coords(x, g.chart)
    value = float(Omega(x) if callable(Omega) else Omega)
    if not value > 0:
        raise DomainError("density of states must be positive")
    n = g.dim
    sign, logdet = np.linalg.slogdet(np.asarray(g.g(x, theta), dtype=float))
    if sign <= 0:
        raise DomainError("metric is not positive definite")
    return float(k * np.log(value) - 0.5 * k * (logdet - n * np.log(2 * np.pi * k)))


@dataclass(frozen=True)
class Applicability:
    ok: bool
    product: float  # n k R(x_bar)
    marginal: bool


def gaussian_applicability(curv: CurvatureLike, n: int, k: float = 1.0) -> Applicability:
    """Gaussian approximation criterion n k R(x_bar) < 1 (strict)."""
    product = float(n) * float(k) * _scalar(curv)
    return Applicability(product < 1.0, product, MARGINAL_PRODUCT <= product < 1.0)


def ruppeiner_tensor(family: DensityFamily, g: MetricField, x_bar, theta, k: float = 1.0,
                     tol: float = 1e-5) -> np.ndarray:
    """g^R = -k d_i d_j S at the entropy maximum (the only point where it is a tensor)."""
    xb = _coords(x_bar, g.chart)
    theta = as_params(theta)

    def S(p):
        return information_potential_batch(family, g, p, theta)

    grad = fd_gradient(S, xb, 1e-4, 4, family.support)
    if np.max(np.abs(grad)) > tol:
        raise StationarityError(f"Ruppeiner tensor requested away from the maximum (gradient {grad})")
    H = fd_hessian(S, xb, support=family.support)
    return -float(k) * 0.5 * (H + H.T)


def gaussian_approx_log_density(gR: np.ndarray, x_bar, x, k: float = 1.0) -> np.ndarray:
    """log of exp(-g^R dx dx / 2k) sqrt|g^R / 2 pi k| on a batch of points."""
    gR = np.asarray(gR, dtype=float)
    dx = np.asarray(x, dtype=float) - _coords(x_bar)
    n = gR.shape[0]
    quad = np.einsum("...i,ij,...j->...", dx, gR, dx)
    _, logdet = np.linalg.slogdet(gR)
    return -0.5 * quad / k + 0.5 * (logdet - n * np.log(2 * np.pi * k))
