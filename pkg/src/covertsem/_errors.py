from typing import Any


class CovertSemError(Exception):
    """Base class for every error raised by covertsem."""


class InvalidShape(CovertSemError, ValueError):
    pass


class DegenerateSignal(CovertSemError, ValueError):
    pass


class NumericalError(CovertSemError, ArithmeticError):
    pass


class SingularChannel(CovertSemError, ArithmeticError):
    pass


class CsiUnavailable(CovertSemError, ValueError):
    pass


class ConfigError(CovertSemError, ValueError):
    pass


class MissingLabels(CovertSemError, ValueError):
    pass


class EmptyDataset(CovertSemError, ValueError):
    pass


class QueryFailed(CovertSemError, RuntimeError):
    pass


class AttackDiverged(CovertSemError, RuntimeError):
    pass


class TrainingDiverged(CovertSemError, RuntimeError):
    """Raised when a training loss becomes non-finite.

    Args:
        message (str): Human readable description.
        epoch (int): Epoch in which the divergence was detected.
        last_good_state (dict | None): State dict of the last epoch that finished with
            a finite loss, so callers can resume or inspect it.
    """

    def __init__(
        self,
        message: str,
        *,
        epoch: int,
        last_good_state: dict[str, Any] | None = None,
    ) -> None:
        super().__init__(message)
        self.epoch = epoch
        self.last_good_state = last_good_state


class GateNotMet(CovertSemError, RuntimeError):
    """The identity model is not accurate enough for FPESR to be meaningful."""

    def __init__(self, message: str, *, accuracy: float | None = None) -> None:
        super().__init__(message)
        self.accuracy = accuracy
