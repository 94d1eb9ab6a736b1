"""Geodesics from the mode: shooting, separation distance, entropy gradient
and geodesic-sphere areas.

All integrations run on batches of geodesics with one embedded
Dormand-Prince 5(4) stepper; after every accepted step the velocity is
renormalized to its initial g-norm.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import RK45
from scipy.special import gamma as gamma_fn

from .charts import DensityFamily, Point, _coords, as_params
from .errors import BoundaryError, BVPError, DimensionError, GeometryError, IntegrationError, PartialAreaError
from .geometry import (
    MetricField, _inverse, christoffel_derivative_from, christoffel_from, fd_gradient,
)

ATOL = 1e-10
RTOL = 1e-10
H_MIN = 1e-10  # step floor before a member is frozen at the support boundary

# Dormand-Prince 5(4) tableau and its quartic continuous extension, as shipped with scipy
_C = np.append(RK45.C, 1.0)
_A = [RK45.A[s, :s] for s in range(6)] + [RK45.B]
_B = np.append(RK45.B, 0.0)
_E = RK45.E
_P = RK45.P


@dataclass
class BatchResult:
    t: np.ndarray  # output times
    y: np.ndarray  # (len(t), B, d)
    exited: np.ndarray  # (B,) bool
    exit_t: np.ndarray  # (B,) last interior time (inf if never exited)
    steps: int


def integrate_batch(rhs: Callable, y0: np.ndarray, t_out: np.ndarray, project: Optional[Callable] = None,
                    inside: Optional[Callable] = None, atol: float = ATOL, rtol: float = RTOL,
                    h0: float = 1e-3, max_steps: int = 200000) -> BatchResult:
    """Adaptive DP5(4) on a batch with one shared step size.

    The final time is hit exactly; intermediate outputs in ``t_out``
    (ascending, non-negative) come from the continuous extension and are
    passed through ``project`` like accepted steps. Members for which
    ``inside`` turns false are frozen at their last interior state and
    flagged.
    """
    y = np.array(y0, dtype=float)
    t_out = np.asarray(t_out, dtype=float)
    nb = y.shape[0]
    out = np.empty((t_out.size,) + y.shape)
    active = np.ones(nb, dtype=bool)
    exit_t = np.full(nb, np.inf)
    t, h, steps, idx = 0.0, h0, 0, 0
    while idx < t_out.size and t_out[idx] <= 0.0:
        out[idx] = y
        idx += 1
    t_end = float(t_out[-1]) if t_out.size else 0.0
    while idx < t_out.size:
        if steps > max_steps:
            raise IntegrationError("geodesic integration exceeded the step budget")
        last = t + h >= t_end * (1 - 1e-14)
        if last:
            h = t_end - t
        k = np.zeros((7,) + y.shape)
        blocked = np.zeros(nb, dtype=bool)
        for s in range(7):
            ys = y + h * np.tensordot(_A[s], k[:s], axes=(0, 0)) if s else y
            k[s], bad = _stage(rhs, t + _C[s] * h, ys, active, inside)
            blocked |= bad
        if np.any(blocked):
            # a stage left the support: shrink towards the boundary, then freeze
            if h > H_MIN:
                h *= 0.25
                continue
            exit_t[blocked] = t
            active &= ~blocked
            continue
        y_new = y + h * np.tensordot(_B, k, axes=(0, 0))
        err = h * np.tensordot(_E, k, axes=(0, 0))
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        ratio = np.abs(err) / scale
        ratio[~active] = 0.0
        enorm = float(np.max(ratio)) if ratio.size else 0.0
        steps += 1
        if not np.isfinite(enorm):
            h *= 0.25
            continue
        if enorm > 1.0:
            h *= max(0.1, 0.9 * enorm ** (-0.2))
            continue
        t_new = t_end if last else t + h
        # dense output for targets inside (t, t_new)
        while idx < t_out.size and t_out[idx] < t_new:
            frac = (t_out[idx] - t) / h
            powers = np.cumprod(np.full(4, frac))
            yi = y + h * np.tensordot(_P @ powers, k, axes=(0, 0))
            yi[~active] = y[~active]
            out[idx] = project(yi) if project is not None else yi
            idx += 1
        if project is not None:
            y_new = project(y_new)
        if inside is not None:
            ok = np.asarray(inside(y_new), dtype=bool)
            newly = active & ~ok
            if np.any(newly):
                exit_t[newly] = t
                y_new[newly] = y[newly]
                active &= ok
        t, y = t_new, y_new
        while idx < t_out.size and t_out[idx] <= t:
            out[idx] = y
            idx += 1
        h = max(h * min(5.0, max(0.2, 0.9 * enorm ** (-0.2) if enorm > 0 else 5.0)), 1e-12)
    return BatchResult(t_out, out, ~active, exit_t, steps)


def _stage(rhs: Callable, t: float, ys: np.ndarray, active: np.ndarray, inside: Optional[Callable]):
    """rhs on the active members whose stage point (and its stencil) is interior."""
    ok = active.copy()
    if inside is not None:
        ok &= np.asarray(inside(ys), dtype=bool)
    out = np.zeros_like(ys)
    if np.any(ok):
        try:
            out[ok] = rhs(t, ys[ok])
        except BoundaryError:
            for i in np.flatnonzero(ok):
                try:
                    out[i] = rhs(t, ys[i:i + 1])[0]
                except BoundaryError:
                    ok[i] = False
    return out, active & ~ok


# ---------------------------------------------------------------------------
# geodesic equations


def _quadratic(gamma: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Gamma^k_ij v^i v^j on a batch."""
    n = v.shape[-1]
    vv = (v[:, :, None] * v[:, None, :]).reshape(-1, n * n, 1)
    return (gamma.reshape(gamma.shape[:-2] + (n * n,)) @ vv)[..., 0]


def _geodesic_rhs(g: MetricField, theta, n: int):
    def rhs(_t, y):
        x, v = y[:, :n], y[:, n:2 * n]
        gamma = christoffel_from(g.g(x, theta), g.dg(x, theta))
        return np.concatenate([v, -_quadratic(gamma, v)], axis=1)

    return rhs


def _jacobi_rhs(g: MetricField, theta, n: int, m: int):
    """State: x, v, J_1..J_m, J'_1..J'_m (each of length n).

    J'' = -d_m Gamma^k_ij J^m v^i v^j - 2 Gamma^k_ij v^i J'^j.
    """

    def rhs(_t, y):
        nb = y.shape[0]
        x, v = y[:, :n], y[:, n:2 * n]
        jac = y[:, 2 * n:2 * n + m * n].reshape(nb, m, n)
        djac = y[:, 2 * n + m * n:].reshape(nb, m, n)
        gm, dg = g.g(x, theta), g.dg(x, theta)
        ginv = _inverse(gm)
        gamma = christoffel_from(gm, dg, ginv)
        dgamma = christoffel_derivative_from(gm, dg, g.d2g(x, theta), ginv)
        acc = -_quadratic(gamma, v)
        vv = (v[:, :, None] * v[:, None, :]).reshape(nb, 1, n * n, 1)
        tidal = (dgamma.reshape(nb, n, n, n * n) @ vv)[..., 0]  # [b, m, k]
        gv = np.swapaxes(gamma, -1, -2) @ v[:, None, :, None]  # [b, k, j, 1]
        ddjac = -(jac @ tidal) - 2 * (djac @ np.swapaxes(gv[..., 0], -1, -2))
        return np.concatenate([v, acc, djac.reshape(nb, -1), ddjac.reshape(nb, -1)], axis=1)

    return rhs


def _speed_projector(g: MetricField, theta, n: int, speed: np.ndarray):
    def project(y):
        x, v = y[:, :n], y[:, n:2 * n]
        norm = np.sqrt(np.einsum("bij,bi,bj->b", g.g(x, theta), v, v))
        y = y.copy()
        factor = np.divide(speed, norm, out=np.zeros_like(norm), where=norm > 0)
        y[:, n:2 * n] = v * factor[:, None]
        return y

    return project


def _inside(g: MetricField, n: int):
    if g.support is None:
        return None
    return lambda y: g.support.contains(y[:, :n])


def g_norm(g: MetricField, x, v, theta) -> np.ndarray:
    return np.sqrt(np.einsum("...ij,...i,...j->...", g.g(x, theta), v, v))


# ---------------------------------------------------------------------------
# public types


@dataclass(frozen=True)
class DirectionVector:
    e: tuple

    @classmethod
    def normalized(cls, g: MetricField, x_bar, v, theta) -> "DirectionVector":
        v = np.asarray(v, dtype=float)
        return cls(tuple(v / float(g_norm(g, np.asarray(x_bar, dtype=float), v, theta))))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.e)


@dataclass
class GeodesicPath:
    basepoint: Point
    direction: DirectionVector
    s: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    length: float
    truncated: bool = False
    exit_point: Optional[np.ndarray] = None

    def nodes(self):
        for s, p, v in zip(self.s, self.points, self.velocities):
            yield float(s), Point(p, self.basepoint.chart), v


def shoot_geodesic(g: MetricField, x_bar, e, length: float, theta, nodes: int = 65) -> GeodesicPath:
    """Unit-speed geodesic from x_bar along e, sampled at ``nodes`` arc-lengths."""
    theta = as_params(theta)
    xb = _coords(x_bar, g.chart)
    chart = x_bar.chart if isinstance(x_bar, Point) else g.chart
    direction = e if isinstance(e, DirectionVector) else DirectionVector.normalized(g, xb, e, theta)
    v0 = direction.array
    if abs(float(g_norm(g, xb, v0, theta)) - 1.0) > 1e-10:
        raise GeometryError("direction is not a g-unit vector at the basepoint")
    if length < 0:
        raise ValueError("length must be non-negative")
    n = g.dim
    s = np.linspace(0.0, length, max(nodes, 2))
    res = integrate_batch(_geodesic_rhs(g, theta, n), np.concatenate([xb, v0])[None, :], s,
                          _speed_projector(g, theta, n, np.ones(1)), _inside(g, n))
    ys = res.y[:, 0, :]
    truncated = bool(res.exited[0])
    exit_point = None
    if truncated:
        # output nodes before the exit plus the frozen last interior state
        keep = s < res.exit_t[0]
        s = np.append(s[keep], res.exit_t[0])
        ys = np.vstack([ys[keep], ys[-1]])
        exit_point = ys[-1, :n]
    return GeodesicPath(Point(xb, chart), direction, s, ys[:, :n], ys[:, n:], float(s[-1]), truncated, exit_point)


def exp_map(g: MetricField, x_bar: np.ndarray, V: np.ndarray, theta) -> np.ndarray:
    """exp_{x_bar}(V) for a batch of tangent vectors V (rows)."""
    n = g.dim
    V = np.atleast_2d(np.asarray(V, dtype=float))
    xb = np.broadcast_to(np.asarray(x_bar, dtype=float), V.shape)
    speed = g_norm(g, xb, V, theta)
    res = integrate_batch(_geodesic_rhs(g, theta, n), np.concatenate([xb, V], axis=1), np.array([1.0]),
                          _speed_projector(g, theta, n, speed), _inside(g, n))
    end = res.y[-1, :, :n]
    end[res.exited] = np.nan
    return end


def log_map(g: MetricField, x_bar, targets, theta, tol: float = 1e-11, max_iter: int = 60) -> np.ndarray:
    """Initial tangent vectors V with exp(V) = target, by damped Newton shooting."""
    theta = as_params(theta)
    xb = np.asarray(x_bar, dtype=float)
    X = np.atleast_2d(np.asarray(targets, dtype=float))
    m, n = X.shape
    if g.support is not None and not np.all(g.support.contains(X)):
        raise BoundaryError("log_map targets must be interior to the support")
    # chord direction, scaled to the metric length of the straight segment
    # (exact in one dimension, an upper bound on the distance otherwise)
    V = X - xb
    nodes, weights = np.polynomial.legendre.leggauss(16)
    seg = xb + 0.5 * (nodes[:, None, None] + 1) * V[None]
    speed = g_norm(g, seg, np.broadcast_to(V, seg.shape), theta)
    length = 0.5 * weights @ speed
    base = g_norm(g, np.broadcast_to(xb, V.shape), V, theta)
    ok = np.isfinite(length) & (base > 0)
    V[ok] *= (length[ok] / base[ok])[:, None]
    residual = np.full(m, np.inf)
    scale = 1.0 + np.abs(X).max(axis=1)
    done = np.zeros(m, dtype=bool)
    zero = np.linalg.norm(V, axis=1) == 0
    done |= zero
    for _ in range(max_iter):
        todo = np.where(~done)[0]
        if todo.size == 0:
            break
        Vt = V[todo]
        hstep = 1e-6 * (1.0 + np.linalg.norm(Vt, axis=1))
        batch = [Vt] + [Vt + hstep[:, None] * np.eye(n)[i] for i in range(n)]
        ends = exp_map(g, xb, np.concatenate(batch), theta).reshape(n + 1, todo.size, n)
        F = ends[0] - X[todo]
        res_now = np.linalg.norm(F, axis=1)
        residual[todo] = res_now
        conv = res_now <= tol * scale[todo]
        done[todo[conv]] = True
        J = np.stack([(ends[i + 1] - ends[0]) / hstep[:, None] for i in range(n)], axis=2)
        active = ~conv & np.all(np.isfinite(J), axis=(1, 2))
        delta = np.zeros_like(Vt)
        for j in np.where(active)[0]:
            try:
                delta[j] = np.linalg.solve(J[j], -F[j])
            except np.linalg.LinAlgError:
                active[j] = False
        # batched backtracking: halve the step only for members that did not improve
        lam = np.ones(todo.size)
        pending = active.copy()
        for _ in range(20):
            if not np.any(pending):
                break
            idx = np.where(pending)[0]
            trial = Vt[idx] + lam[idx, None] * delta[idx]
            end = exp_map(g, xb, trial, theta)
            better = np.all(np.isfinite(end), axis=1) & (np.linalg.norm(end - X[todo[idx]], axis=1) < res_now[idx])
            V[todo[idx[better]]] = trial[better]
            pending[idx[better]] = False
            lam[idx[~better]] *= 0.5
        stuck = np.where(pending)[0]
        V[todo[stuck]] = Vt[stuck] + lam[stuck, None] * delta[stuck]
    if not np.all(done):
        bad = np.where(~done)[0]
        if n == 2:
            for idx in bad:
                V[idx], residual[idx] = _angle_bisection(g, xb, X[idx], theta)
                done[idx] = residual[idx] <= 1e-8 * scale[idx]
        if not np.all(done):
            raise BVPError(f"shooting failed; best residual {np.max(residual[~done]):.3e}",
                           residual=float(np.max(residual[~done])))
    return V


def _angle_bisection(g, xb, target, theta):
    """Fallback for n=2: scan the launch angle, then refine length and angle."""
    gbar = g.g(xb, theta)
    L = np.linalg.inv(np.linalg.cholesky(gbar)).T
    chord = np.sqrt(np.einsum("i,ij,j->", target - xb, gbar, target - xb))
    angles = np.linspace(0, 2 * np.pi, 73)[:-1]
    dirs = np.stack([np.cos(angles), np.sin(angles)], 1) @ L.T
    best = (np.inf, None)
    for length in chord * np.array([0.5, 0.75, 1.0, 1.5, 2.0, 3.0]):
        ends = exp_map(g, xb, dirs * length, theta)
        dist = np.linalg.norm(ends - target, axis=1)
        j = int(np.nanargmin(dist))
        if dist[j] < best[0]:
            best = (dist[j], (angles[j], length))
    a, length = best[1]
    step_a, step_l = angles[1] - angles[0], 0.25 * length
    for _ in range(80):
        cands = [(a + da, length + dl) for da in (-step_a, 0, step_a) for dl in (-step_l, 0, step_l)]
        vecs = np.array([[np.cos(c[0]), np.sin(c[0])] for c in cands]) @ L.T * np.array([c[1] for c in cands])[:, None]
        dist = np.linalg.norm(exp_map(g, xb, vecs, theta) - target, axis=1)
        j = int(np.nanargmin(dist))
        a, length = cands[j]
        if j == 4:
            step_a *= 0.5
            step_l *= 0.5
    vec = np.array([np.cos(a), np.sin(a)]) @ L.T * length
    return vec, float(np.linalg.norm(exp_map(g, xb, vec, theta)[0] - target))


def separation_distance(g: MetricField, x, x_bar, theta) -> float:
    """Geodesic distance between x and x_bar (0 when they coincide)."""
    xa = _coords(x, g.chart)
    xb = _coords(x_bar, g.chart)
    if isinstance(x, Point) and isinstance(x_bar, Point):
        _ = x - x_bar  # chart check
    if np.array_equal(xa, xb):
        return 0.0
    V = log_map(g, xb, xa, theta)
    return float(g_norm(g, xb, V[0], theta))


def separation_distances(g: MetricField, X, x_bar, theta) -> np.ndarray:
    xb = np.asarray(x_bar, dtype=float)
    V = log_map(g, xb, X, theta)
    return g_norm(g, np.broadcast_to(xb, V.shape), V, theta)


# ---------------------------------------------------------------------------
# information potential gradient


def information_potential_batch(family: DensityFamily, g: MetricField, x, theta) -> np.ndarray:
    """S = log rho + (n/2) log 2 pi - (1/2) log |g| on a batch (k = 1)."""
    x = np.asarray(x, dtype=float)
    n = family.dim
    sign, logdet = np.linalg.slogdet(g.g(x, theta))
    if np.any(sign <= 0):
        raise GeometryError("degenerate metric")
    return family.log_rho(x, theta) + 0.5 * n * np.log(2 * np.pi) - 0.5 * logdet


def entropy_gradient_batch(family: DensityFamily, g: MetricField, x, theta):
    """psi_i = -d_i S and psi^2 = g^ij psi_i psi_j on a batch."""
    x = np.asarray(x, dtype=float)
    grad_log, _ = (family.grad_log(x, as_params(theta)), None) if family.grad_log is not None else (
        fd_gradient(lambda p: family.log_rho(p, theta), x, 1e-4, 4, family.support), None)
    gm, dg = g.g(x, theta), g.dg(x, theta)
    ginv = _inverse(gm)
    # d_i (1/2) log|g| = (1/2) g^kl d_i g_kl
    dlogdet = 0.5 * np.einsum("...kl,...kli->...i", ginv, dg)
    psi = -(np.asarray(grad_log) - dlogdet)
    psi2 = np.einsum("...ij,...i,...j->...", ginv, psi, psi)
    return psi, psi2


def entropy_gradient(family: DensityFamily, g: MetricField, x, theta):
    x = _coords(x, g.chart)
    psi, psi2 = entropy_gradient_batch(family, g, x, theta)
    return psi, float(psi2)


# ---------------------------------------------------------------------------
# spherical directions and geodesic fans


def unit_sphere_directions(n: int, q: np.ndarray):
    """Unit vectors e(q) and tangents de/dq for the round parameterization.

    n=2: e = (cos q1, sin q1); n=3: e = (cos q1 cos q2, cos q1 sin q2, sin q1).
    Returns arrays of shape (..., n) and (..., n-1, n).
    """
    q = np.asarray(q, dtype=float)
    if n == 2:
        q1 = q[..., 0]
        e = np.stack([np.cos(q1), np.sin(q1)], -1)
        xi = np.stack([-np.sin(q1), np.cos(q1)], -1)[..., None, :]
        return e, xi
    if n == 3:
        q1, q2 = q[..., 0], q[..., 1]
        c1, s1, c2, s2 = np.cos(q1), np.sin(q1), np.cos(q2), np.sin(q2)
        e = np.stack([c1 * c2, c1 * s2, s1], -1)
        xi1 = np.stack([-s1 * c2, -s1 * s2, c1], -1)
        xi2 = np.stack([-c1 * s2, c1 * c2, np.zeros_like(c1)], -1)
        return e, np.stack([xi1, xi2], -2)
    raise DimensionError("spherical directions are built for n = 2 and n = 3")


def orthonormalizer(gbar: np.ndarray) -> np.ndarray:
    """L with L^T gbar L = I (columns are a gbar-orthonormal basis)."""
    chol = np.linalg.cholesky(gbar)
    return np.linalg.inv(chol).T


@dataclass
class DirectionGrid:
    q: np.ndarray  # (m, n-1)
    weights: np.ndarray  # (m,)


def direction_grid(n: int, directions=None) -> DirectionGrid:
    if n == 2:
        m = 256 if directions is None else int(np.atleast_1d(directions)[0])
        q1 = 2 * np.pi * np.arange(m) / m
        return DirectionGrid(q1[:, None], np.full(m, 2 * np.pi / m))
    if n == 3:
        if directions is None:
            m1, m2 = 64, 128
        else:
            d = np.atleast_1d(directions)
            m1, m2 = (int(d[0]), int(d[1])) if d.size > 1 else (int(d[0]), 2 * int(d[0]))
        nodes, w1 = np.polynomial.legendre.leggauss(m1)
        q1 = 0.5 * np.pi * nodes
        w1 = 0.5 * np.pi * w1
        q2 = -np.pi + 2 * np.pi * np.arange(m2) / m2
        Q1, Q2 = np.meshgrid(q1, q2, indexing="ij")
        W = np.outer(w1, np.full(m2, 2 * np.pi / m2))
        return DirectionGrid(np.stack([Q1.ravel(), Q2.ravel()], 1), W.ravel())
    raise DimensionError("direction grids are built for n = 2 and n = 3")


@dataclass
class Fan:
    """Geodesics with Jacobi fields J_a = dx/dq^a, sampled at arc-lengths ``ell``."""

    ell: np.ndarray
    q: np.ndarray
    weights: np.ndarray
    x: np.ndarray  # (len(ell), m, n)
    v: np.ndarray  # (len(ell), m, n)
    J: np.ndarray  # (len(ell), m, n-1, n)
    truncated: np.ndarray  # (m,)
    exit_ell: np.ndarray

    def projected_metric(self, g: MetricField, theta) -> np.ndarray:
        gm = g.g(self.x, theta)
        return np.einsum("...ij,...ai,...bj->...ab", gm, self.J, self.J)


def geodesic_fan(g: MetricField, x_bar, ell, theta, q=None, weights=None, directions=None) -> Fan:
    theta = as_params(theta)
    n = g.dim
    xb = _coords(x_bar, g.chart)
    ell = np.atleast_1d(np.asarray(ell, dtype=float))
    order = np.argsort(ell)
    if q is None:
        grid = direction_grid(n, directions)
        q, weights = grid.q, grid.weights
    q = np.atleast_2d(np.asarray(q, dtype=float))
    if weights is None:
        weights = np.ones(q.shape[0])
    m = q.shape[0]
    L = orthonormalizer(g.g(xb, theta))
    e_hat, xi_hat = unit_sphere_directions(n, q)
    e = e_hat @ L.T
    xi = np.einsum("ij,maj->mai", L, xi_hat)
    y0 = np.concatenate([np.broadcast_to(xb, (m, n)), e, np.zeros((m, (n - 1) * n)),
                         xi.reshape(m, -1)], axis=1)
    res = integrate_batch(_jacobi_rhs(g, theta, n, n - 1), y0, ell[order],
                          _speed_projector(g, theta, n, np.ones(m)), _inside(g, n))
    y = np.empty_like(res.y)
    y[order] = res.y
    x = y[..., :n]
    v = y[..., n:2 * n]
    J = y[..., 2 * n:2 * n + (n - 1) * n].reshape(y.shape[:2] + (n - 1, n))
    return Fan(ell, q, np.asarray(weights, dtype=float), x, v, J, res.exited, res.exit_t)


def flat_sphere_area(ell, n: int):
    """Sigma_flat(l) = 2^((3-n)/2) sqrt(pi) l^(n-1) / Gamma(n/2)."""
    ell = np.asarray(ell, dtype=float)
    return 2.0 ** ((3 - n) / 2) * np.sqrt(np.pi) * ell ** (n - 1) / gamma_fn(n / 2)


def sphere_areas(g: MetricField, x_bar, ell, theta, directions=None, allow_partial: bool = False) -> np.ndarray:
    """Normalized geodesic-sphere areas at several radii from one fan."""
    n = g.dim
    ell = np.atleast_1d(np.asarray(ell, dtype=float))
    if n == 1:
        return np.full(ell.shape, 2.0)
    if n not in (2, 3):
        raise DimensionError("geodesic sphere areas need n in {1, 2, 3}")
    fan = geodesic_fan(g, x_bar, ell, theta, directions=directions)
    if np.any(fan.truncated) and not allow_partial:
        raise PartialAreaError(f"{int(np.sum(fan.truncated))} fan geodesics left the support")
    det = np.linalg.det(fan.projected_metric(g, theta))
    area = np.sqrt(np.maximum(det, 0.0)) @ fan.weights
    return area / (2 * np.pi) ** ((n - 1) / 2)


def geodesic_sphere_area(g: MetricField, x_bar, ell: float, theta, directions=None) -> float:
    """Area of the geodesic sphere of radius ell, normalized by (2 pi)^((n-1)/2)."""
    if ell < 0:
        raise ValueError("radius must be non-negative")
    return float(sphere_areas(g, x_bar, [ell], theta, directions)[0])
