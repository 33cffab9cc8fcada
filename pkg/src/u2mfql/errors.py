"""Exception types shared across the package."""

from __future__ import annotations


class ModelError(ValueError):
    """A model component (kernel row, cost) is malformed."""


class ModelDegeneracyError(ArithmeticError):
    """A closed-form solution has a vanishing denominator."""


class ComplexEigenvalueError(ArithmeticError):
    """The mean-path system has oscillatory (complex) eigenvalues."""


class NumericalError(ArithmeticError):
    """NaN or overflow detected during learning."""

    def __init__(self, message: str, episode: int | None = None):
        super().__init__(message)
        self.episode = episode


class DivergenceError(NumericalError):
    """An iteration left the admissible range; carries the residual history."""

    def __init__(self, message: str, history=None, k: int | None = None):
        super().__init__(message, episode=k)
        self.history = history
        self.k = k


class ConfigError(ValueError):
    """Invalid configuration file or value."""


class CheckpointError(ValueError):
    """A checkpoint file is malformed, truncated or incompatible."""
