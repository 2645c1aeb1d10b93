"""Exception hierarchy shared by all kronmde modules."""


class KronMdeError(Exception):
    """Base class for all errors raised by kronmde."""


class DimensionError(KronMdeError, ValueError):
    """Structurally malformed input: ragged arrays or inconsistent shapes."""


class ContractError(KronMdeError, ValueError):
    """An operation was called on input outside of its domain."""


class ModelValidationError(KronMdeError, ValueError):
    """A model violates one of its admissibility bounds."""

    def __init__(self, report):
        self.report = report
        super().__init__("model is not admissible:\n" + str(report))


class SingularityError(KronMdeError, ArithmeticError):
    """A matrix that must be inverted is numerically singular."""


class PositivityError(KronMdeError, ArithmeticError):
    """A quantity that must be positive definite is not."""


class ConvergenceError(KronMdeError, RuntimeError):
    """An iteration did not reach its tolerance.

    The last iterate is kept on ``partial`` so callers can inspect it.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
