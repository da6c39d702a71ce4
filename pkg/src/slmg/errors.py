"""Exception and warning types raised across the package."""


class BemError(Exception):
    """Base class for all package errors."""


class GeometryError(BemError, ValueError):
    pass


class SelfIntersection(GeometryError):
    pass


class DegenerateEdge(GeometryError):
    pass


class TooFewVertices(GeometryError):
    pass


class TooCoarse(GeometryError):
    pass


class RadiusTooLarge(GeometryError):
    pass


class LevelMismatch(BemError, ValueError):
    pass


class DimensionMismatch(BemError, ValueError):
    pass


class DomainError(BemError, ValueError):
    """Argument outside the domain of a special function."""


class UnsupportedOrder(BemError, ValueError):
    pass


class NotCollinear(BemError, ValueError):
    pass


class NoSharedVertex(BemError, ValueError):
    pass


class AssemblyFailure(BemError, RuntimeError):
    pass


class EvaluationFailure(BemError, RuntimeError):
    pass


class SingularSystem(BemError, RuntimeError):
    pass


class CoarseSolveFailure(BemError, RuntimeError):
    pass


class Stagnation(BemError, RuntimeError):
    pass


class EigenFailure(BemError, RuntimeError):
    pass


class SourceOnBoundary(BemError, ValueError):
    pass


class SourceOutside(BemError, ValueError):
    pass


class PointTooClose(BemError, ValueError):
    pass


class PointInside(BemError, ValueError):
    pass


class DiameterWarning(UserWarning):
    """Boundary diameter >= 1: the Laplace single layer may be indefinite."""


class NoConvergence(UserWarning):
    """An iterative estimate hit its iteration cap."""


class IllConditioned(UserWarning):
    """Coarse matrix is close to singular."""
