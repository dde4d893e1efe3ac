"""Line planning for public transport: frequencies, passenger routing, evaluation."""

__version__ = "0.1.0"

from .errors import (Infeasible, InvalidParameter, LevelMismatch, LinePlanError, MissingProbabilities,
                     NoPathError, NumericalError, ParseError, PoolMismatch, TooManyPairs,
                     UnsupportedMeasure, ValidationError)
from .network import Instance, Line, LineConcept, LinePool, Link

__all__ = [
    "Instance", "Line", "LineConcept", "LinePool", "Link",
    "LinePlanError", "ParseError", "ValidationError", "NoPathError", "InvalidParameter",
    "NumericalError", "LevelMismatch", "PoolMismatch", "UnsupportedMeasure", "TooManyPairs",
    "MissingProbabilities", "Infeasible",
]
