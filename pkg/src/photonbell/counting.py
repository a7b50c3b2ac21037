"""Photon-count distributions after local displacements, with loss.

Conventions
-----------
Probabilities follow ``p(i, j | a, b) = |<i|<j| D(a) D(b) |Psi>|^2``. In this
convention ``p(0, 0 | a, b)`` is the two-mode Q-function of the state at
``(-a, -b)``; for the photon-number correlated states studied here (and any
state invariant under a joint sign flip of both amplitudes) the sign is
immaterial. Q-functions and the displaced-parity Wigner function carry no
factors of pi.

Loss of transmission ``eta`` is placed either at the detectors (binomial
thinning of the count table) or in the source (Kraus channel on the state,
before displacement).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.stats import binom

from .exceptions import DomainError, TailMassTooLarge
from .fock import (
    TmsvParams,
    TwoModeDensityMatrix,
    TwoModeState,
    as_setting,
    displacement_matrix,
    suggest_cutoff,
)

__all__ = [
    "Placement",
    "LossSpec",
    "CountTable",
    "DEFAULT_MAX_TAIL",
    "joint_counts",
    "count_marginal",
    "q_value",
    "q_marginal",
    "vacuum_probabilities",
    "wigner_value",
    "parity_correlator",
    "apply_detector_loss",
    "apply_source_loss",
    "lossy_joint_counts",
    "lossy_marginal",
    "tmsv_q",
    "tmsv_q_marginal",
    "tmsv_wigner",
]

DEFAULT_MAX_TAIL = 1e-6
NEG_CLAMP = -1e-14


class Placement(str, enum.Enum):
    DETECTOR = "detector"
    SOURCE = "source"


@dataclass(frozen=True)
class LossSpec:
    """Transmission efficiency ``eta`` (loss is ``1 - eta``) and where it acts."""

    eta: float = 1.0
    placement: Placement = Placement.DETECTOR

    def __post_init__(self):
        eta = float(self.eta)
        if not 0.0 <= eta <= 1.0:
            raise DomainError(f"eta must lie in [0, 1], got {eta}")
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "placement", Placement(self.placement))

    @classmethod
    def from_loss(cls, loss: float, placement="detector") -> "LossSpec":
        return cls(1.0 - float(loss), placement)

    @property
    def loss(self) -> float:
        return 1.0 - self.eta

    @property
    def lossless(self) -> bool:
        return self.eta == 1.0


@dataclass(frozen=True, eq=False)
class CountTable:
    """Joint photon-count probabilities ``probs[i, j]`` for ``i, j <= cutoff``.

    ``tail_mass`` is the probability of outcomes outside the table and
    ``clamped_mass`` the total of tiny negative entries (round-off) that
    were set to zero.
    """

    probs: np.ndarray
    tail_mass: float = 0.0
    clamped_mass: float = 0.0

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        neg = p < 0
        clamped = self.clamped_mass
        if neg.any():
            if p.min() < NEG_CLAMP:
                raise DomainError(f"negative probability {p.min():.3e} in count table")
            clamped += float(-p[neg].sum())
            p[neg] = 0.0
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "tail_mass", max(float(self.tail_mass), 0.0))
        object.__setattr__(self, "clamped_mass", float(clamped))

    @property
    def cutoff(self) -> int:
        return self.probs.shape[0] - 1

    @property
    def total(self) -> float:
        return float(self.probs.sum() + self.tail_mass)

    def p(self, i: int, j: int) -> float:
        return float(self.probs[i, j])

    def marginal_a(self) -> np.ndarray:
        return self.probs.sum(axis=1)

    def marginal_b(self) -> np.ndarray:
        return self.probs.sum(axis=0)

    def transpose(self) -> "CountTable":
        return CountTable(self.probs.T, self.tail_mass, self.clamped_mass)

    def coarse(self, outcomes: int) -> np.ndarray:
        """Outcome table with counts ``>= outcomes - 1`` merged into the last bin.

        The merged bin of each party is filled by complement so that the
        returned table sums to one; the table's tail belongs to it.
        """
        k = outcomes - 1
        p = self.probs
        out = np.zeros((outcomes, outcomes))
        out[:k, :k] = p[:k, :k]
        out[:k, k] = p[:k, k:].sum(axis=1)
        out[k, :k] = p[k:, :k].sum(axis=0)
        out[k, k] = max(1.0 - out.sum(), 0.0)
        return out


def _validate_state(state):
    if not isinstance(state, (TwoModeState, TwoModeDensityMatrix)):
        raise DomainError(f"expected a two-mode state, got {type(state).__name__}")


def _default_cutoff(state, *settings) -> int:
    big = max((abs(complex(s)) for s in settings), default=0.0)
    return suggest_cutoff(state.cutoff, big)


def _amplitudes(state, a: complex, b: complex, cutoff: int):
    w, comps = state.pure_components()
    d = state.cutoff
    da = displacement_matrix(cutoff, a, cols=d)
    db = displacement_matrix(cutoff, b, cols=d)
    return w, da @ comps @ db.T


def joint_counts(state, a, b, cutoff: int | None = None, max_tail: float = DEFAULT_MAX_TAIL) -> CountTable:
    """Joint count table ``p(i, j | a, b)`` up to ``cutoff`` photons per party.

    Works for pure states and density matrices. The cutoff defaults to
    :func:`~photonbell.fock.suggest_cutoff` for the larger displacement.

    Raises
    ------
    TailMassTooLarge
        If more than ``max_tail`` probability falls outside the table.
    """
    _validate_state(state)
    a, b = as_setting(a), as_setting(b)
    if cutoff is None:
        cutoff = _default_cutoff(state, a, b)
    if cutoff < state.cutoff:
        raise DomainError(f"cutoff {cutoff} is below the state cutoff {state.cutoff}")
    w, amp = _amplitudes(state, a, b, cutoff)
    probs = np.einsum("k,kij->ij", w, np.abs(amp) ** 2)
    tail = 1.0 - probs.sum()
    if tail > max_tail:
        raise TailMassTooLarge(tail, max_tail, f"joint counts at cutoff {cutoff}")
    return CountTable(probs, tail)


def count_marginal(state, who: str, s, cutoff: int | None = None, max_tail: float = DEFAULT_MAX_TAIL):
    """Single-party count distribution ``p(i | s)`` of the reduced state.

    Returns ``(probs, tail_mass)``; the other party's counts are summed
    exactly rather than through a truncated joint table.
    """
    _validate_state(state)
    s = as_setting(s)
    if cutoff is None:
        cutoff = _default_cutoff(state, s)
    w, comps = state.pure_components()
    dm = displacement_matrix(cutoff, s, cols=state.cutoff)
    if who.upper() == "A":
        amp = dm @ comps
        probs = np.einsum("k,kin->i", w, np.abs(amp) ** 2)
    elif who.upper() == "B":
        amp = comps @ dm.T
        probs = np.einsum("k,kmj->j", w, np.abs(amp) ** 2)
    else:
        raise DomainError(f"party must be 'A' or 'B', got {who!r}")
    tail = 1.0 - probs.sum()
    if tail > max_tail:
        raise TailMassTooLarge(tail, max_tail, f"marginal counts at cutoff {cutoff}")
    return probs, max(tail, 0.0)


def _vacuum_row(cols: int, s: complex) -> np.ndarray:
    # <0|D(s)|m> = exp(-|s|^2/2) (-conj s)^m / sqrt(m!)
    m = np.arange(cols + 1)
    lf = np.cumsum(np.log(np.maximum(m, 1)))
    return np.exp(-0.5 * abs(s) ** 2 - 0.5 * lf) * (-np.conj(s)) ** m


def q_value(state, a, b) -> float:
    """Zero-photon probability ``p(0, 0 | a, b)``, the two-mode Q-function."""
    _validate_state(state)
    a, b = as_setting(a), as_setting(b)
    w, comps = state.pure_components()
    ra = _vacuum_row(state.cutoff, a)
    rb = _vacuum_row(state.cutoff, b)
    amp = np.einsum("m,kmn,n->k", ra, comps, rb)
    return float(np.clip(w @ np.abs(amp) ** 2, 0.0, 1.0))


def q_marginal(state, who: str, s) -> float:
    """Zero-photon probability on one arm, the Q-function of the reduced state."""
    _validate_state(state)
    s = as_setting(s)
    w, comps = state.pure_components()
    r = _vacuum_row(state.cutoff, s)
    if who.upper() == "A":
        amp = np.einsum("m,kmn->kn", r, comps)
    elif who.upper() == "B":
        amp = np.einsum("kmn,n->km", comps, r)
    else:
        raise DomainError(f"party must be 'A' or 'B', got {who!r}")
    return float(np.clip(np.einsum("k,kn->", w, np.abs(amp) ** 2), 0.0, 1.0))


def _vacuum_rows(cols: int, settings) -> np.ndarray:
    z = np.asarray(settings, dtype=complex)[:, None]
    m = np.arange(cols + 1)
    lf = np.cumsum(np.log(np.maximum(m, 1)))
    return np.exp(-0.5 * (z.real**2 + z.imag**2) - 0.5 * lf) * (-z.conj()) ** m


def _abs2(z: np.ndarray) -> np.ndarray:
    return z.real**2 + z.imag**2


def vacuum_probabilities(state, alice, bob):
    """Zero-count probabilities for many settings at once.

    Returns ``(joint, marg_a, marg_b)`` with ``joint[x, y] = p(0, 0 | alice[x],
    bob[y])``, ``marg_a[x]`` Alice's zero-count probability at ``alice[x]``
    and ``marg_b[y]`` Bob's at ``bob[y]``. Exact for finite states; this is
    the hot path of zero/non-zero optimisations.
    """
    w, comps = state.pure_components()
    d = state.cutoff
    ra = _vacuum_rows(d, alice)
    rb = _vacuum_rows(d, bob).T
    half_a = ra @ comps  # (K, x, n)
    half_b = comps @ rb  # (K, m, y)
    k = len(w)
    joint = (w @ _abs2(half_a @ rb).reshape(k, -1)).reshape(len(alice), len(bob))
    marg_a = w @ _abs2(half_a).sum(axis=2)
    marg_b = w @ _abs2(half_b).sum(axis=1)
    return np.clip(joint, 0.0, 1.0), np.clip(marg_a, 0.0, 1.0), np.clip(marg_b, 0.0, 1.0)


def parity_correlator(table: CountTable) -> float:
    """``sum_ij (-1)^(i+j) p(i, j)`` over the table."""
    sign = (-1.0) ** np.arange(table.cutoff + 1)
    return float(sign @ table.probs @ sign)


def _converged_table(build, start: int, tol: float, max_cutoff: int = 400):
    """Grow the cutoff until the parity sum stops changing by more than ``tol``."""
    cutoff = start
    table = build(cutoff)
    value = parity_correlator(table)
    while True:
        nxt = min(cutoff + max(10, cutoff // 2), max_cutoff)
        if nxt == cutoff:
            raise TailMassTooLarge(table.tail_mass, tol, "parity sum did not converge")
        table2 = build(nxt)
        value2 = parity_correlator(table2)
        if abs(value2 - value) < tol and table2.tail_mass < tol:
            return table2
        cutoff, table, value = nxt, table2, value2


def wigner_value(state, a, b, tol: float = 1e-9) -> float:
    """Displaced joint parity ``sum_ij (-1)^(i+j) p(i, j | a, b)``, in ``[-1, 1]``."""
    table = _converged_table(
        lambda n: joint_counts(state, a, b, cutoff=n, max_tail=1.0),
        _default_cutoff(state, a, b),
        tol,
    )
    return float(np.clip(parity_correlator(table), -1.0, 1.0))


@lru_cache(maxsize=256)
def _thinning_matrix(cutoff: int, eta: float) -> np.ndarray:
    # T[k, i] = C(i, k) eta^k (1-eta)^(i-k)
    n = np.arange(cutoff + 1)
    t = binom.pmf(n[:, None], n[None, :], eta)
    t = np.nan_to_num(t)
    t.setflags(write=False)
    return t


def _thin_vector(probs: np.ndarray, eta: float) -> np.ndarray:
    if eta == 1.0:
        return probs
    return _thinning_matrix(probs.size - 1, eta) @ probs


def apply_detector_loss(table: CountTable, eta: float) -> CountTable:
    """Independent binomial thinning of both parties' counts.

    ``p'(k, l) = sum_{i>=k, j>=l} C(i,k) C(j,l) eta^(k+l) (1-eta)^(i-k+j-l) p(i, j)``.
    Mass outside the table stays accounted as tail: thinning can only move
    it to lower counts, so the recorded tail is an upper bound.
    """
    eta = float(eta)
    if not 0.0 <= eta <= 1.0:
        raise DomainError(f"eta must lie in [0, 1], got {eta}")
    if eta == 1.0:
        return table
    t = _thinning_matrix(table.cutoff, eta)
    return CountTable(t @ table.probs @ t.T, table.tail_mass, table.clamped_mass)


def _kraus_loss(cutoff: int, eta: float) -> np.ndarray:
    """Single-mode loss Kraus operators ``A[k, n-k, n] = sqrt(C(n,k) eta^(n-k) (1-eta)^k)``."""
    dim = cutoff + 1
    ops = np.zeros((dim, dim, dim))
    for k in range(dim):
        n = np.arange(k, dim)
        ops[k, n - k, n] = np.sqrt(binom.pmf(k, n, 1.0 - eta))
    return ops


def apply_source_loss(state: TwoModeState, eta: float) -> TwoModeDensityMatrix:
    """Apply the same loss channel of transmission ``eta`` to both modes.

    Photon numbers can only decrease, so the output lives on the same
    truncated space and the trace is preserved.
    """
    eta = float(eta)
    if not 0.0 <= eta <= 1.0:
        raise DomainError(f"eta must lie in [0, 1], got {eta}")
    if isinstance(state, TwoModeDensityMatrix):
        ops = _kraus_loss(state.cutoff, eta)
        rho = np.einsum("kam,lbn,mnpq,kcp,ldq->abcd", ops, ops, state.rho, ops, ops, optimize=True)
        return TwoModeDensityMatrix(rho, state.trace_deficit)
    ops = _kraus_loss(state.cutoff, eta)
    # branch (k, l): A_k C A_l^T
    branches = np.einsum("kam,mn,lbn->klab", ops, state.coeffs, ops)
    rho = np.einsum("klab,klcd->abcd", branches, branches.conj())
    return TwoModeDensityMatrix(rho, state.tail_mass)


def _lossy_state(state, loss: LossSpec | None):
    if loss is None or loss.lossless or loss.placement is Placement.DETECTOR:
        return state
    return apply_source_loss(state, loss.eta)


def lossy_joint_counts(state, a, b, loss: LossSpec | None = None, cutoff=None, max_tail=DEFAULT_MAX_TAIL):
    """Joint count table with the loss applied at its placement.

    For repeated evaluations with source loss, apply
    :func:`apply_source_loss` once and pass the density matrix with
    ``loss=None``.
    """
    table = joint_counts(_lossy_state(state, loss), a, b, cutoff, max_tail)
    if loss is not None and loss.placement is Placement.DETECTOR:
        table = apply_detector_loss(table, loss.eta)
    return table


def lossy_marginal(state, who, s, loss: LossSpec | None = None, cutoff=None, max_tail=DEFAULT_MAX_TAIL):
    probs, tail = count_marginal(_lossy_state(state, loss), who, s, cutoff, max_tail)
    if loss is not None and loss.placement is Placement.DETECTOR:
        probs = _thin_vector(probs, loss.eta)
    return probs, tail


def tmsv_q(params: TmsvParams, a, b) -> float:
    """Closed-form TMSV Q-function ``exp(-|a|^2-|b|^2-2 Re(a b e^{-i phi}) tanh g) / cosh^2 g``."""
    a, b = as_setting(a), as_setting(b)
    g, phi = params.g, params.phi
    expo = -abs(a) ** 2 - abs(b) ** 2 - 2.0 * (a * b * np.exp(-1j * phi)).real * math.tanh(g)
    return math.exp(expo) / math.cosh(g) ** 2


def tmsv_q_marginal(params: TmsvParams, s) -> float:
    """Closed-form reduced Q-function ``exp(-|s|^2 (1 - tanh^2 g)) / cosh^2 g``."""
    s = as_setting(s)
    g = params.g
    return math.exp(-abs(s) ** 2 * (1.0 - math.tanh(g) ** 2)) / math.cosh(g) ** 2


def tmsv_wigner(params: TmsvParams, a, b) -> float:
    """Closed-form TMSV displaced parity ``exp(-2(|a|^2+|b|^2) cosh 2g - 4 Re(a b e^{-i phi}) sinh 2g)``."""
    a, b = as_setting(a), as_setting(b)
    g, phi = params.g, params.phi
    expo = -2.0 * (abs(a) ** 2 + abs(b) ** 2) * math.cosh(2 * g)
    expo -= 4.0 * (a * b * np.exp(-1j * phi)).real * math.sinh(2 * g)
    return math.exp(expo)
