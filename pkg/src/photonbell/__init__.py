"""Photon-counting Bell tests with displaced detection.

Modules
-------
fock
    Two-mode Fock-basis states and displacement matrix elements.
counting
    Photon-count statistics after displacement, with detector or source loss.
inequalities
    Zero/non-zero and even/odd CHSH functionals and the three-outcome CGLMP test.
optimize
    Hybrid global search over displacement settings, loss-tolerance bisection
    and parameter scans.
qkd
    Device-independent key-rate bounds built on the zero/non-zero test.
cli
    Command-line front end writing CSV or JSON tables.
"""

__version__ = "0.1.0"

from .exceptions import BudgetExhausted, DomainError, NoViolationAtZeroLoss, PhotonBellError, TailMassTooLarge

__all__ = [
    "__version__",
    "PhotonBellError",
    "DomainError",
    "TailMassTooLarge",
    "NoViolationAtZeroLoss",
    "BudgetExhausted",
]
