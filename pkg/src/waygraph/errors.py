"""Exception hierarchy shared across the package."""


class WaygraphError(Exception):
    """Base class for all package-specific errors."""


class OriginBlocked(WaygraphError):
    """Raycast origin is not in free space."""


class EndpointBlocked(WaygraphError):
    """A geodesic query endpoint is not in free space."""


class NoPath(WaygraphError):
    """Two points are geodesically disconnected."""


class GenerationFailed(WaygraphError):
    """No connected layout found within the attempt budget."""


class CandidateBlocked(WaygraphError):
    """Candidate node position is not in free space."""


class RefinementDiverged(WaygraphError):
    """Graph refinement did not reach a navigable state.

    Carries the offending node and edge lists.
    """

    def __init__(self, msg, bad_nodes=(), bad_edges=()):
        super().__init__(msg)
        self.bad_nodes = list(bad_nodes)
        self.bad_edges = list(bad_edges)


class UnreachableEndpoint(WaygraphError):
    """Endpoint to fit is geodesically disconnected from the graph."""


class OutOfRange(WaygraphError):
    """Polar coordinate outside heatmap coverage."""


class EmptyPatch(WaygraphError):
    """Heatmap patch has zero total mass; nothing to sample."""


class TeleportBlocked(WaygraphError):
    """Teleport target is not in free space."""


class NoWaypoint(WaygraphError):
    """Policy was offered an empty waypoint set away from the goal."""


class InsufficientGraph(WaygraphError):
    """Graph too small to sample the requested episodes."""


class Diverged(WaygraphError):
    """Training loss became non-finite."""

    def __init__(self, msg, epoch=None):
        super().__init__(msg)
        self.epoch = epoch


class AlignmentError(WaygraphError):
    """Prediction/target lists have mismatched lengths."""


class EmptySet(WaygraphError):
    """Aggregation over an empty record list."""


class StageError(WaygraphError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage, msg):
        super().__init__(f"[{stage}] {msg}")
        self.stage = stage
