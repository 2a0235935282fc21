"""Exception hierarchy shared by all grafflow modules."""


class GrafflowError(Exception):
    """Base class for every error raised by grafflow."""


# graph model
class GraphError(GrafflowError):
    pass


class DisconnectedGraph(GraphError):
    pass


class DimensionMismatch(GraphError):
    pass


class UnknownVertex(DimensionMismatch):
    pass


class InvalidCondition(GraphError):
    pass


class InvalidDegree(GraphError):
    pass


class InvalidParameter(GraphError):
    pass


# discretization
class MeshTooCoarse(GrafflowError):
    pass


class SingularTraceSystem(GrafflowError):
    def __init__(self, message, condition_number=float("inf")):
        super().__init__(message)
        self.condition_number = condition_number


# flow
class LinearSolveFailure(GrafflowError):
    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class DivergedFlow(GrafflowError):
    pass


class ZeroMass(GrafflowError):
    pass


# analytic states
class NonpositiveMass(GrafflowError):
    pass


class FrequencyTooSmall(GrafflowError):
    pass


class RootFindFailure(GrafflowError):
    pass


class TopologyMismatch(GrafflowError):
    pass


# harness
class SpecError(GrafflowError):
    pass
