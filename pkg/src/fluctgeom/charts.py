"""Points, charts, coordinate changes and transport of densities and tensors.

Internally every evaluator is vectorized over leading axes: a callable that
takes coordinates of shape ``(..., n)`` and returns values with matching
leading shape. The public operations accept either a :class:`Point` or a raw
coordinate array.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    BoundaryError,
    ChartMismatchError,
    DimensionError,
    DomainError,
    SingularityError,
)

ArrayFn = Callable[..., np.ndarray]


@dataclass(frozen=True)
class Point:
    """Coordinates of an event in a named chart."""

    coords: tuple
    chart: str = "default"

    def __init__(self, coords, chart: str = "default"):
        arr = np.atleast_1d(np.asarray(coords, dtype=float))
        if arr.ndim != 1:
            raise DimensionError("Point coordinates must be a vector")
        if not np.all(np.isfinite(arr)):
            raise DomainError(f"non-finite coordinates {arr}")
        object.__setattr__(self, "coords", tuple(float(c) for c in arr))
        object.__setattr__(self, "chart", chart)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.coords)

    @property
    def dim(self) -> int:
        return len(self.coords)

    def _check(self, other: "Point"):
        if not isinstance(other, Point):
            return
        if other.chart != self.chart:
            raise ChartMismatchError(f"cannot combine chart {self.chart!r} with {other.chart!r}")

    def __sub__(self, other: "Point") -> np.ndarray:
        self._check(other)
        return self.array - np.asarray(other.array if isinstance(other, Point) else other)

    def moved(self, delta) -> "Point":
        return Point(self.array + np.asarray(delta, dtype=float), self.chart)


@dataclass(frozen=True)
class ControlParams:
    """Control parameters theta and the Boltzmann-like constant k."""

    values: tuple = ()
    k: float = 1.0

    def __init__(self, values=(), k: float = 1.0):
        arr = np.atleast_1d(np.asarray(values, dtype=float)).ravel()
        if not np.all(np.isfinite(arr)):
            raise DomainError("control parameters must be finite")
        if not (np.isfinite(k) and k > 0):
            raise DomainError("k must be positive")
        object.__setattr__(self, "values", tuple(float(v) for v in arr))
        object.__setattr__(self, "k", float(k))

    def __getitem__(self, i):
        return self.values[i]

    def __len__(self):
        return len(self.values)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.values)

    def with_k(self, k: float) -> "ControlParams":
        return ControlParams(self.values, k)


def as_params(theta) -> ControlParams:
    if isinstance(theta, ControlParams):
        return theta
    if theta is None:
        return ControlParams()
    return ControlParams(theta)


@dataclass(frozen=True)
class Support:
    """Axis-aligned open box (bounds may be infinite) plus an optional predicate."""

    lower: tuple
    upper: tuple
    predicate: Optional[ArrayFn] = None

    @classmethod
    def whole(cls, n: int) -> "Support":
        return cls((-np.inf,) * n, (np.inf,) * n)

    @classmethod
    def box(cls, lower: Sequence[float], upper: Sequence[float], predicate=None) -> "Support":
        return cls(tuple(float(v) for v in lower), tuple(float(v) for v in upper), predicate)

    @property
    def dim(self) -> int:
        return len(self.lower)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo, hi = np.array(self.lower), np.array(self.upper)
        inside = np.all((x > lo) & (x < hi) & np.isfinite(x), axis=-1)
        if self.predicate is not None:
            inside = inside & np.asarray(self.predicate(x), dtype=bool)
        return inside

    def center(self) -> np.ndarray:
        lo, hi = np.array(self.lower), np.array(self.upper)
        c = np.zeros(self.dim)
        both = np.isfinite(lo) & np.isfinite(hi)
        c[both] = 0.5 * (lo[both] + hi[both])
        only_lo = np.isfinite(lo) & ~np.isfinite(hi)
        c[only_lo] = lo[only_lo] + 1.0
        only_hi = ~np.isfinite(lo) & np.isfinite(hi)
        c[only_hi] = hi[only_hi] - 1.0
        return c


@dataclass(frozen=True)
class DensityFamily:
    """Evaluator of log rho(x|theta) on a chart.

    ``log_density(x, theta)`` is vectorized over leading axes of ``x``.
    Optional ``grad_log`` and ``hess_log`` return ``(..., n)`` and
    ``(..., n, n)`` arrays.
    """

    dim: int
    log_density: ArrayFn
    support: Support
    chart: str = "default"
    name: str = ""
    grad_log: Optional[ArrayFn] = None
    hess_log: Optional[ArrayFn] = None
    center: Optional[tuple] = None
    scale: float = 1.0

    def log_rho(self, x, theta) -> np.ndarray:
        return np.asarray(self.log_density(np.asarray(x, dtype=float), as_params(theta)), dtype=float)

    def density(self, x, theta) -> np.ndarray:
        return np.exp(self.log_rho(x, theta))

    def start_point(self) -> np.ndarray:
        if self.center is not None:
            return np.array(self.center, dtype=float)
        return self.support.center()


@dataclass(frozen=True)
class CoordinateChange:
    """Diffeomorphism x -> x_check between two named charts.

    ``jacobian(x)`` returns d x_check / d x with shape ``(..., n, n)``
    (row index = target coordinate).
    """

    source: str
    target: str
    forward: ArrayFn
    inverse: ArrayFn
    jacobian: Optional[ArrayFn] = None
    target_support: Optional[Support] = None

    def inverted(self) -> "CoordinateChange":
        inv_jac = None
        if self.jacobian is not None:
            fwd_jac, inv = self.jacobian, self.inverse
            inv_jac = lambda xc: np.linalg.inv(fwd_jac(inv(xc)))  # noqa: E731
        return CoordinateChange(self.target, self.source, self.inverse, self.forward, inv_jac)

    def jacobian_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.jacobian is not None:
            return np.asarray(self.jacobian(x), dtype=float)
        return numeric_jacobian(self, x)


def identity_change(n: int, chart: str = "default") -> CoordinateChange:
    eye = np.eye(n)
    return CoordinateChange(
        chart, chart, lambda x: np.array(x, dtype=float), lambda x: np.array(x, dtype=float),
        lambda x: np.broadcast_to(eye, np.shape(x)[:-1] + (n, n)).copy(),
    )


def linear_change(matrix, source: str, target: str, offset=None) -> CoordinateChange:
    a = np.asarray(matrix, dtype=float)
    b = np.zeros(a.shape[0]) if offset is None else np.asarray(offset, dtype=float)
    a_inv = np.linalg.inv(a)
    return CoordinateChange(
        source, target,
        lambda x: np.asarray(x) @ a.T + b,
        lambda xc: (np.asarray(xc) - b) @ a_inv.T,
        lambda x: np.broadcast_to(a, np.shape(x)[:-1] + a.shape).copy(),
    )


def _coords(x, chart: Optional[str] = None) -> np.ndarray:
    if isinstance(x, Point):
        if chart is not None and x.chart != chart:
            raise ChartMismatchError(f"point in chart {x.chart!r}, expected {chart!r}")
        return x.array
    return np.asarray(x, dtype=float)


JAC_REL_STEP = 1e-6
JAC_MIN_STEP = 1e-6


def numeric_jacobian(change: CoordinateChange, x, support: Optional[Support] = None) -> np.ndarray:
    """Central-difference Jacobian d forward / d x at a single point.

    Steps are h_i = max(1e-6, 1e-6 |x_i|). Near a support boundary the
    stencil is clamped to one side; if even that does not fit a
    ``BoundaryError`` is raised.
    """
    x = _coords(x, change.source)
    if x.ndim != 1:
        return np.stack([numeric_jacobian(change, xi, support) for xi in x.reshape(-1, x.shape[-1])]).reshape(
            x.shape + (x.shape[-1],))
    n = x.size
    f0 = np.asarray(change.forward(x), dtype=float)
    jac = np.empty((f0.size, n))
    for i in range(n):
        h = max(JAC_MIN_STEP, JAC_REL_STEP * abs(x[i]))
        e = np.zeros(n)
        e[i] = h
        up_ok = support is None or bool(support.contains(x + e))
        dn_ok = support is None or bool(support.contains(x - e))
        if up_ok and dn_ok:
            jac[:, i] = (change.forward(x + e) - change.forward(x - e)) / (2 * h)
        elif up_ok and (support is None or bool(support.contains(x + 2 * e))):
            jac[:, i] = (-3 * f0 + 4 * change.forward(x + e) - change.forward(x + 2 * e)) / (2 * h)
        elif dn_ok and (support is None or bool(support.contains(x - 2 * e))):
            jac[:, i] = (3 * f0 - 4 * change.forward(x - e) + change.forward(x - 2 * e)) / (2 * h)
        else:
            raise BoundaryError(f"no room for a difference stencil at {x} along axis {i}")
    return jac


def transform_density(family: DensityFamily, change: CoordinateChange, x_check, theta) -> float:
    """Density in the target chart: rho(x) |d x_check / d x|^-1 with x = inverse(x_check)."""
    xc = _coords(x_check, change.target)
    x = np.asarray(change.inverse(xc), dtype=float)
    if not bool(family.support.contains(x)):
        raise DomainError(f"preimage {x} outside the family support")
    det = np.linalg.det(change.jacobian_at(x))
    if not np.isfinite(det) or abs(det) < 1e-300:
        raise SingularityError(f"singular Jacobian at {x}")
    return float(family.density(x, theta) / abs(det))


def pushforward_family(family: DensityFamily, change: CoordinateChange, support: Support,
                       name: Optional[str] = None) -> DensityFamily:
    """The same distribution expressed in the target chart of ``change``."""

    def log_density(xc, theta):
        x = change.inverse(xc)
        det = np.abs(np.linalg.det(change.jacobian_at(x)))
        return family.log_rho(x, theta) - np.log(det)

    return DensityFamily(family.dim, log_density, support, change.target, name or family.name)


@dataclass(frozen=True)
class TensorValue:
    """Components of a tensor with p covariant and q contravariant slots.

    Covariant axes come first, then contravariant axes.
    """

    components: np.ndarray
    covariant: int = 0
    contravariant: int = 0
    weight: int = 0
    chart: str = "default"
    symmetries: tuple = field(default=())

    def __post_init__(self):
        comp = np.asarray(self.components, dtype=float)
        rank = self.covariant + self.contravariant
        if comp.ndim != rank:
            raise DimensionError(f"components have {comp.ndim} axes, expected {rank}")
        if rank and len(set(comp.shape)) != 1:
            raise DimensionError("all tensor axes must have the same length")
        for a, b in self.symmetries:
            comp = 0.5 * (comp + np.swapaxes(comp, a, b))
        comp.setflags(write=False)
        object.__setattr__(self, "components", comp)


def transform_tensor(t: TensorValue, change: CoordinateChange, x) -> TensorValue:
    """Transport components from the source chart at x to the target chart."""
    x = _coords(x, change.source)
    jac = change.jacobian_at(x)
    det = np.linalg.det(jac)
    if not np.isfinite(det) or abs(det) < 1e-300:
        raise SingularityError(f"singular Jacobian at {x}")
    inv = np.linalg.inv(jac)  # d x / d x_check
    comp = np.array(t.components, dtype=float)
    rank = t.covariant + t.contravariant
    for axis in range(rank):
        mat = inv.T if axis < t.covariant else jac
        comp = np.moveaxis(np.tensordot(mat, comp, axes=([1], [axis])), 0, axis)
    comp = comp * abs(det) ** t.weight
    return TensorValue(comp, t.covariant, t.contravariant, t.weight, change.target, t.symmetries)
