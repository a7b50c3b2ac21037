"""Exception types raised across the package."""


class PhotonBellError(Exception):
    """Base class for all package errors."""


class DomainError(PhotonBellError, ValueError):
    """An argument lies outside the domain of the function."""


class TailMassTooLarge(PhotonBellError, RuntimeError):
    """Fock-space truncation discards more probability than allowed."""

    def __init__(self, tail_mass, bound, what="truncation"):
        self.tail_mass = float(tail_mass)
        self.bound = float(bound)
        super().__init__(
            f"{what}: discarded probability {self.tail_mass:.3e} exceeds bound {self.bound:.3e}"
        )


class NoViolationAtZeroLoss(PhotonBellError):
    """Loss tolerance requested for a state that does not violate at zero loss."""


class BudgetExhausted(PhotonBellError):
    """Optimizer ran out of budget; the incumbent is attached as ``result``."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result
