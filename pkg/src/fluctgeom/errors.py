"""Exception hierarchy shared by every module."""


class FluctGeomError(Exception):
    """Base class for all library errors."""


class DomainError(FluctGeomError, ValueError):
    """A point or argument lies outside the admissible domain."""


class SingularityError(FluctGeomError):
    """A Jacobian or metric is singular where it must be invertible."""


class BoundaryError(FluctGeomError):
    """A finite-difference stencil cannot be placed inside the support."""


class ChartMismatchError(FluctGeomError):
    """Points from different charts were combined."""


class DimensionError(FluctGeomError, ValueError):
    """Unsupported or inconsistent dimension."""


class GeometryError(FluctGeomError):
    """The metric is not positive definite or otherwise degenerate."""


class SolverError(FluctGeomError):
    """An iterative solver did not converge."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class BVPError(SolverError):
    """Geodesic shooting failed to hit the target point."""


class PartialAreaError(FluctGeomError):
    """A geodesic fan was truncated by the support boundary."""


class IntegrationError(FluctGeomError):
    """Quadrature failed to converge."""

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class OptimizationError(FluctGeomError):
    """Mode search failed."""


class StationarityError(FluctGeomError):
    """A claimed maximizer fails the first-order condition."""


class SamplerError(FluctGeomError):
    """Sampling or CDF inversion failed."""


class UnsupportedFamilyError(FluctGeomError):
    """The family lacks the recipe an operation needs."""


class EvaluationError(FluctGeomError):
    """A scalar field produced a non-finite value."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class NumericalConsistencyError(FluctGeomError):
    """Two independent evaluation routes disagree."""


class SuiteFailure(FluctGeomError):
    """A fluctuation theorem failed its z-score gate."""

    def __init__(self, message, reports=None):
        super().__init__(message)
        self.reports = reports or []


class ConfigError(FluctGeomError):
    """Invalid run configuration."""


class GateFailure(FluctGeomError):
    """A family's metric failed its certification gate."""

    def __init__(self, message, gate=None):
        super().__init__(message)
        self.gate = gate
