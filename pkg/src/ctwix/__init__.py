"""Coordinate-only tracklet affinity (TWiX) and the C-TWiX cascade tracker."""

from .geometry import Box, Detection
from .model import TwixHyper, TwixWeights

__all__ = ["Box", "Detection", "TwixHyper", "TwixWeights"]
__version__ = "0.1.0"
