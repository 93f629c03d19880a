"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations

from typing import Optional

import numpy as np


class RadioMapError(ValueError):
    pass


class RadioMapParseError(RadioMapError):
    def __init__(self, message: str, line_number: int):
        super().__init__(f"Radio map parse failed: line={line_number}, {message}")
        self.line_number = line_number


class EmptyRadioMapError(RadioMapError):
    pass


class RssValidationError(RadioMapError):
    pass


class DegenerateBoundsError(RadioMapError):
    pass


class EmptyFingerprintError(RadioMapError):
    pass


class UnknownMacError(RadioMapError, KeyError):
    def __str__(self) -> str:
        return ValueError.__str__(self)


class WorldSpecError(ValueError):
    pass


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, block: str):
        super().__init__(f"Gradient check failed: non-finite values in block={block}")
        self.block = block


class TrainingDivergedError(FloatingPointError):
    def __init__(self, epoch: int, last_good: Optional[np.ndarray] = None):
        super().__init__(f"Training diverged: epoch={epoch}")
        self.epoch = epoch
        self.last_good = last_good


class EventOrderError(ValueError):
    pass


class SingularInnovationError(np.linalg.LinAlgError):
    pass


class NoOverlapError(ValueError):
    pass


__all__ = [
    "DegenerateBoundsError",
    "EmptyFingerprintError",
    "EmptyRadioMapError",
    "EventOrderError",
    "NoOverlapError",
    "NonFiniteGradientError",
    "RadioMapError",
    "RadioMapParseError",
    "RssValidationError",
    "SingularInnovationError",
    "TrainingDivergedError",
    "UnknownMacError",
    "WorldSpecError",
]
