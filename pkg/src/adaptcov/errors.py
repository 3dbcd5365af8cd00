"""Exception types shared across the package."""


class InvalidInput(ValueError):
    """Arguments with wrong shapes, signs or ranges."""


class InvalidCovariance(InvalidInput):
    """A matrix that was supposed to be a covariance is not PSD."""


class NumericalFailure(ArithmeticError):
    """A numerically singular or non-finite intermediate result."""


class Underdetermined(NumericalFailure):
    """A regression has fewer independent equations than unknowns."""

    def __init__(self, msg, rank=None, needed=None):
        super().__init__(msg)
        self.rank = rank
        self.needed = needed
