"""
Exception types raised by catlab.
"""


class CatlabError(Exception):
    """Base class for all catlab errors."""


class DimensionError(CatlabError, ValueError):
    """Array shapes do not agree with the model or task dimensions."""


class NotInvertibleError(CatlabError, ArithmeticError):
    """A matrix that must be inverted is singular or not positive definite."""


class PreconditionError(CatlabError, ValueError):
    """An operation was called outside the regime it is defined for."""


class DivergenceError(CatlabError, RuntimeError):
    """Training left the finite region."""

    def __init__(self, message: str, step: int, loss: float, lr: float):
        super().__init__(f"{message} (step={step}, loss={loss:.6g}, lr={lr:.3g})")
        self.step = step
        self.loss = loss
        self.lr = lr


class ConfigError(CatlabError, ValueError):
    """The experiment configuration is invalid."""
