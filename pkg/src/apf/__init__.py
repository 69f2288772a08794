"""Arbitrary pattern formation for opaque fat robots on a grid: protocol, simulator and tools."""

from .model import (ApfError, BlockingMode, Color, Decision, Move, Robot, UnknownRobotId,
                    ValidationError, WorldConfig, parse_rad, validate_config)

__version__ = "0.1.0"

__all__ = [
    "ApfError", "BlockingMode", "Color", "Decision", "Move", "Robot", "UnknownRobotId",
    "ValidationError", "WorldConfig", "parse_rad", "validate_config", "__version__",
]
