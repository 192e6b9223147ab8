"""waygraph: candidate-waypoint navigation toolkit on procedural 2D worlds."""

from .environment import Environment, GeodesicField, generate_environment
from .geometry import Pose

__version__ = "0.1.0"

__all__ = [
    "Environment",
    "GeodesicField",
    "Pose",
    "generate_environment",
    "__version__",
]
