"""Report generators. Each returns a CsvTable with a trailing ``flag`` column
(1 marks a failed row) and records its inputs in the metadata lines."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, List, Sequence

import numpy as np
from scipy import integrate

from ..charts import ControlParams
from ..errors import FluctGeomError, GateFailure
from ..gaussrep import entropies, gaussian_partition
from ..geodesics import information_potential_batch
from ..geometry import curvature_batch
from ..theorems import fluctuation_suite, gauss_to_cauchy_log_jacobian
from .catalog import axial_Z, builtin_family, family_gate, t_to_r
from .config import RunConfig, family_from_config
from .csvio import CsvTable

REPORT_KINDS = ("curvature", "partition", "theorems", "weight-grid", "entropy")


def _metadata(cfg: RunConfig, kind: str, **extra) -> dict:
    meta = {"report": kind, "family": cfg.family, "seeds": " ".join(map(str, cfg.seeds)),
            "config_sha256": cfg.digest()}
    meta.update({k: str(v) for k, v in extra.items()})
    return meta


def _dispatch(task: Callable, items: Sequence, workers: int = 1) -> List:
    """Map ``task`` over grid rows; results come back in grid order."""
    if workers <= 1 or len(items) <= 1:
        return [task(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, items))


def gated_family(cfg: RunConfig, theta: float) -> tuple:
    spec = family_from_config(cfg, theta)
    gate = family_gate(spec, cfg.tolerance("gate"))
    if not gate.passed:
        raise GateFailure(f"{spec.id} at theta={theta}: {gate.kind} {gate.max_residual:.3e} "
                          f"exceeds {gate.tolerance:.1e}", gate)
    return spec, gate


def _gate_text(gates) -> str:
    return "; ".join(f"theta={t}: {g.kind} {g.max_residual:.3e} <= {g.tolerance:.1e}" for t, g in gates)


# ---------------------------------------------------------------------------


def _convergence_row(args):
    theta, k = args
    spec = builtin_family("axial-2d", theta)
    closed = axial_Z(theta)
    R_bar = float(curvature_batch(spec.metric, spec.mode, spec.theta)[2])
    try:
        Zq = gaussian_partition(spec.family, spec.metric, spec.mode, spec.theta).Z
        flag = 0
    except FluctGeomError:
        Zq, flag = float("nan"), 1
    P = -k * np.log(Zq)
    target = k ** 2 * (R_bar / k) / 6  # k^2 R_k / 6 with R_k = R / k
    rel_gap = abs(P - target) / target
    if not (np.isfinite(Zq) and abs(Zq / closed - 1) <= 1e-6):
        flag = 1
    return [theta, Zq, closed, P, target, rel_gap, flag]


def run_convergence_scan(cfg: RunConfig, workers: int = 1) -> CsvTable:
    """P(theta) against Rbar/6 for axial-2d over the configured grid."""
    if cfg.family != "axial-2d":
        raise ValueError("the convergence scan is defined for axial-2d")
    header = ["theta", "Z_quadrature", "Z_closed", "P", "Rbar_over_6", "rel_gap", "flag"]
    rows = _dispatch(_convergence_row, [(float(t), cfg.k) for t in cfg.theta], workers)
    return CsvTable(header, rows, _metadata(cfg, "convergence", k=cfg.k))


def surface_profile(t, theta: float):
    """z = theta f(t/theta), f(x) = int_0^x sqrt((1 - (1-s^2)^3) / (1-s^2)^3) ds."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0) or np.any(t >= theta):
        raise ValueError("profile is defined for 0 <= t < theta")

    def integrand(s):
        c = (1 - s * s) ** 3
        return np.sqrt((1 - c) / c)

    x = t / theta
    order = np.argsort(x)
    xs = np.concatenate([[0.0], x[order]])
    pieces = [integrate.quad(integrand, a, b, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
              for a, b in zip(xs[:-1], xs[1:])]
    out = np.empty_like(x)
    out[order] = theta * np.cumsum(pieces)
    return out


def emit_surface_mesh(theta: float, resolution: int = 200) -> CsvTable:
    """Profile (t, z) of the revolution surface, truncated at t = 0.999 theta."""
    if not theta > 0:
        raise ValueError("theta must be positive")
    t = np.linspace(0.0, 0.999 * theta, int(resolution))
    z = surface_profile(t, theta)
    meta = {"report": "surface", "theta": repr(float(theta)), "resolution": int(resolution),
            "tail": "t in [0.999 theta, theta) omitted; z diverges as t -> theta"}
    return CsvTable(["t", "z"], [[a, b] for a, b in zip(t, z)], meta)


# ---------------------------------------------------------------------------


def curvature_report(cfg: RunConfig) -> CsvTable:
    rows, gates, header = [], [], None
    for theta in cfg.theta:
        spec, gate = gated_family(cfg, theta)
        gates.append((theta, gate))
        probes = spec.probes if spec.probes is not None else spec.family.start_point()[None, :]
        if header is None:
            header = ["theta"] + [f"x{i + 1}" for i in range(spec.dim)] + ["R", "R_closed", "rel_err", "flag"]
        R = np.atleast_1d(curvature_batch(spec.metric, probes, spec.theta)[2])
        closed = spec.R(probes) if spec.R is not None else np.full(R.shape, np.nan)
        for x, r, c in zip(probes, R, closed):
            err = abs(r - c) / max(abs(c), 1.0) if np.isfinite(c) else np.nan
            rows.append([theta, *x, r, c, err, int(np.isfinite(err) and err > 1e-5)])
    return CsvTable(header, rows, _metadata(cfg, "curvature", gate=_gate_text(gates)))


def partition_report(cfg: RunConfig) -> CsvTable:
    rows, gates = [], []
    for theta in cfg.theta:
        spec, gate = gated_family(cfg, theta)
        gates.append((theta, gate))
        th = ControlParams(spec.theta.values, cfg.k)
        try:
            res = gaussian_partition(spec.family, spec.metric, spec.mode, th)
            Z, P, err, flag = res.Z, res.P, res.error, 0
        except FluctGeomError:
            Z, P, err, flag = np.nan, np.nan, np.nan, 1
        closed = spec.Z if spec.Z is not None else np.nan
        rel = abs(Z / closed - 1) if np.isfinite(closed) else np.nan
        if np.isfinite(rel) and rel > cfg.tolerance("quadrature_rel"):
            flag = 1
        rows.append([theta, Z, P, err, closed, rel, flag])
    return CsvTable(["theta", "Z", "P", "error_estimate", "Z_closed", "rel_err", "flag"], rows,
                    _metadata(cfg, "partition", k=cfg.k, gate=_gate_text(gates)))


def theorems_report(cfg: RunConfig) -> CsvTable:
    rows, gates = [], []
    zmax = cfg.tolerance("z_fail")
    for theta in cfg.theta:
        spec, gate = gated_family(cfg, theta)
        gates.append((theta, gate))
        for seed in cfg.seeds:
            for N in cfg.samples:
                reps = fluctuation_suite(spec, k=cfg.k, N=int(N), seed=int(seed), raise_on_failure=False)
                for r in reps:
                    rows.append([theta, seed, N, r.name, r.estimate, r.std_error, r.theoretical, r.z_score,
                                 int(abs(r.z_score) > zmax)])
    header = ["theta", "seed", "N", "identity", "estimate", "std_error", "theoretical", "z", "flag"]
    return CsvTable(header, rows, _metadata(cfg, "theorems", k=cfg.k, z_fail=zmax, gate=_gate_text(gates)))


def weight_grid_report(cfg: RunConfig, half_width: float = 4.0) -> CsvTable:
    """omega on a square grid; for axial-2d the grid is in (a, b) = t (cos phi, sin phi)."""
    m = int(cfg.resolution)
    rows, gates = [], []
    axis = np.linspace(-half_width, half_width, m)
    A, B = np.meshgrid(axis, axis, indexing="ij")
    for theta in cfg.theta:
        spec, gate = gated_family(cfg, theta)
        gates.append((theta, gate))
        if spec.dim != 2:
            raise ValueError("weight grids are produced for two-dimensional families")
        if spec.id == "axial-2d":
            t = np.hypot(A, B)
            inside = t < theta
            r = np.where(inside, t_to_r(np.where(inside, t, 0.0), theta), np.inf)
            omega = np.where(inside, np.exp(-0.5 * r ** 2) / spec.Z, 0.0)
            Zg = spec.Z
        else:
            pts = np.stack([A, B], axis=-1) + spec.mode
            omega = np.exp(information_potential_batch(spec.family, spec.metric, pts, spec.theta))
            Zg = 1.0
        gauss = np.exp(-0.5 * (A ** 2 + B ** 2)) / Zg
        for a, b, w, gw in zip(A.ravel(), B.ravel(), omega.ravel(), gauss.ravel()):
            rows.append([theta, a, b, w, gw, 0])
    return CsvTable(["theta", "a", "b", "omega", "omega_gaussian", "flag"], rows,
                    _metadata(cfg, "weight-grid", gate=_gate_text(gates)))


def entropy_report(cfg: RunConfig, sigma: float = 1.0, nu: float = 0.0, gamma: float = 1.0) -> CsvTable:
    """Invariant and differential entropies of a 1-D gaussian and its Cauchy image."""
    opts = cfg.family_options
    sigma = float(opts.get("sigma_std", sigma))
    nu, gamma = float(opts.get("nu", nu)), float(opts.get("gamma", gamma))
    gauss = builtin_family("gaussian-nd", sigma=[[1.0 / sigma ** 2]])
    cauchy = builtin_family("cauchy-1d", (nu, gamma))
    gates = [("gaussian", family_gate(gauss)), ("cauchy", family_gate(cauchy))]
    for _, g in gates:
        if not g.passed:
            raise GateFailure(f"entropy report gate failed: {g.kind} {g.max_residual:.3e}", g)
    h_g, s_g = entropies(gauss.family, gauss.metric, gauss.theta)
    h_c, s_c = entropies(cauchy.family, cauchy.metric, cauchy.theta)
    log_jac = integrate.quad(
        lambda x: np.exp(-0.5 * (x / sigma) ** 2) / (sigma * np.sqrt(2 * np.pi))
        * gauss_to_cauchy_log_jacobian(x, 0.0, sigma, nu, gamma),
        -40 * sigma, 40 * sigma, epsabs=1e-12, epsrel=1e-12, limit=400)[0]
    inv_gap = abs(s_g - s_c)
    diff_gap = abs((h_c - h_g) - log_jac)
    rows = [
        ["gaussian-1d", h_g, s_g, 0.0, 0],
        ["cauchy-1d", h_c, s_c, log_jac, int(not (inv_gap <= 1e-5 and diff_gap <= 1e-4))],
    ]
    meta = _metadata(cfg, "entropy", sigma=sigma, nu=nu, gamma=gamma, invariant_gap=f"{inv_gap:.3e}",
                     differential_gap_minus_log_jacobian=f"{diff_gap:.3e}",
                     gate=_gate_text(gates))
    return CsvTable(["family", "differential", "invariant", "mean_log_jacobian", "flag"], rows, meta)


def run_report(cfg: RunConfig, which: str) -> CsvTable:
    kinds = {"curvature": curvature_report, "partition": partition_report, "theorems": theorems_report,
             "weight-grid": weight_grid_report, "entropy": entropy_report}
    if which not in kinds:
        raise ValueError(f"unknown report {which!r}; expected one of {', '.join(REPORT_KINDS)}")
    return kinds[which](cfg)


def flagged_rows(table: CsvTable) -> int:
    if "flag" not in table.header:
        return 0
    return int(np.sum(table.column("flag") != 0))
