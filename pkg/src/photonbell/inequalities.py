"""Photon-counting Bell functionals.

Three tests share one signature ``f(state, settings, loss) -> BellResult``:

* ``chsh_zero_nonzero``: CHSH with outcome +1 for zero photons, written in
  terms of zero-count (Q-function) probabilities,
  ``B_Q = 2 + 4 (Q11 + Q12 + Q21 - Q22 - Qa1 - Qb1)``.
* ``chsh_even_odd``: CHSH with outcome +1 for an even count,
  ``B_W = W11 + W12 + W21 - W22`` from displaced-parity correlators.
* ``cglmp3``: three-outcome CGLMP with outcomes 0, 1 and >=2 photons,
  ``I = G(a1,b1) - G(a2,b1) + G(a2,b2) + G(b2,a1)``, each ``G`` a finite
  combination of low-count probabilities.

The classical bound of all three is 2.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .counting import (
    DEFAULT_MAX_TAIL,
    CountTable,
    LossSpec,
    Placement,
    _thinning_matrix,
    apply_detector_loss,
    apply_source_loss,
    parity_correlator,
    vacuum_probabilities,
)
from .exceptions import DomainError, TailMassTooLarge
from .fock import TwoModeDensityMatrix, TwoModeState, as_setting, displacement_matrix, suggest_cutoff

__all__ = [
    "BellTest",
    "ChshSettings",
    "BellResult",
    "LocalStatistics",
    "local_statistics",
    "chsh_zero_nonzero",
    "chsh_even_odd",
    "cglmp3",
    "evaluate",
    "value_from_statistics",
    "zero_nonzero_fast",
    "zero_nonzero_from_vacuum",
    "cglmp_g",
    "cglmp_raw",
    "cglmp_from_tables",
    "binary_chsh",
    "lhv_bound_check",
    "CLASSICAL_BOUND",
    "TSIRELSON_BOUND",
]

CLASSICAL_BOUND = 2.0
TSIRELSON_BOUND = 2.0 * math.sqrt(2.0)


class BellTest(str, enum.Enum):
    ZERO_NONZERO = "zero_nonzero"
    EVEN_ODD = "even_odd"
    CGLMP3 = "cglmp3"


@dataclass(frozen=True)
class ChshSettings:
    """Two displacement settings per party: ``(a1, a2)`` for Alice, ``(b1, b2)`` for Bob."""

    a1: complex
    a2: complex
    b1: complex
    b2: complex

    def __post_init__(self):
        for name in ("a1", "a2", "b1", "b2"):
            object.__setattr__(self, name, as_setting(getattr(self, name)))

    @property
    def alice(self):
        return (self.a1, self.a2)

    @property
    def bob(self):
        return (self.b1, self.b2)

    def to_array(self) -> np.ndarray:
        z = np.array([self.a1, self.a2, self.b1, self.b2])
        return np.concatenate([z.real, z.imag])

    @classmethod
    def from_array(cls, x) -> "ChshSettings":
        x = np.asarray(x, dtype=float)
        z = x[:4] + 1j * x[4:8]
        return cls(*z)

    def max_abs(self) -> float:
        return max(abs(z) for z in (self.a1, self.a2, self.b1, self.b2))

    def scaled(self, factor: float) -> "ChshSettings":
        return ChshSettings(*(factor * z for z in (self.a1, self.a2, self.b1, self.b2)))

    def gauge_fixed(self) -> "ChshSettings":
        """Rotate Alice by ``exp(-i t)`` and Bob by ``exp(+i t)`` so ``a1`` is real positive.

        This is a symmetry of every photon-number correlated state
        ``sum_n c_n |n>|n>``.
        """
        if self.a1 == 0:
            return self
        u = abs(self.a1) / self.a1
        return ChshSettings(self.a1 * u, self.a2 * u, self.b1 / u, self.b2 / u)


@dataclass(frozen=True)
class BellResult:
    test: BellTest
    value: float
    settings: ChshSettings
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def violation(self) -> float:
        """Amount by which the classical bound is exceeded (``|B| - 2`` for CHSH)."""
        v = self.value if self.test is BellTest.CGLMP3 else abs(self.value)
        return v - CLASSICAL_BOUND


@dataclass(frozen=True, eq=False)
class LocalStatistics:
    """Lossy count statistics for the four setting pairs of a Bell test.

    ``joint[(x, y)]`` is the count table for ``(a_x, b_y)`` with
    ``x, y in {1, 2}``; ``marg_a[x]`` and ``marg_b[y]`` are single-party
    count distributions computed from the reduced states.
    """

    joint: dict
    marg_a: dict
    marg_b: dict
    cutoff: int
    tail_mass: float
    clamped_mass: float

    def diagnostics(self) -> dict:
        return {"cutoff": self.cutoff, "tail_mass": self.tail_mass, "clamped_mass": self.clamped_mass}


def _state_for_loss(state, loss: LossSpec | None):
    if loss is not None and loss.placement is Placement.SOURCE and not loss.lossless:
        return apply_source_loss(state, loss.eta)
    return state


def local_statistics(
    state,
    s: ChshSettings,
    loss: LossSpec | None = None,
    cutoff: int | None = None,
    max_tail: float = DEFAULT_MAX_TAIL,
    max_count: int | None = None,
) -> LocalStatistics:
    """Joint tables and marginals for all four setting pairs, with loss applied.

    Displacement matrices are computed once per setting and shared by the
    joint tables and the marginals.

    ``max_count`` restricts the tables and marginals to counts
    ``<= max_count``. Those entries are exact (the state itself is finite),
    so the tail check is skipped; the reported ``tail_mass`` is then the
    probability of higher counts. Not available with detector loss, whose
    thinning needs the full table.
    """
    if not isinstance(state, (TwoModeState, TwoModeDensityMatrix)):
        raise DomainError(f"expected a two-mode state, got {type(state).__name__}")
    state = _state_for_loss(state, loss)
    detector = loss is not None and loss.placement is Placement.DETECTOR and not loss.lossless
    if max_count is not None:
        if detector:
            raise DomainError("max_count cannot be combined with detector loss")
        cutoff, max_tail = int(max_count), 1.0
    elif cutoff is None:
        cutoff = suggest_cutoff(state.cutoff, s.max_abs())
    w, comps = state.pure_components()
    d = state.cutoff
    da = {x: displacement_matrix(cutoff, z, cols=d) for x, z in zip((1, 2), s.alice)}
    db = {y: displacement_matrix(cutoff, z, cols=d) for y, z in zip((1, 2), s.bob)}
    half = {x: da[x] @ comps for x in (1, 2)}  # (K, N, d+1)

    thin = _thinning_matrix(cutoff, loss.eta) if detector else None

    joint, tail, clamped = {}, 0.0, 0.0
    for x, y in itertools.product((1, 2), repeat=2):
        amp = half[x] @ db[y].T
        probs = np.einsum("k,kij->ij", w, (amp * amp.conj()).real)
        t = 1.0 - probs.sum()
        tab = CountTable(probs, t)
        if detector:
            tab = apply_detector_loss(tab, loss.eta)
        joint[(x, y)] = tab
        tail = max(tail, tab.tail_mass)
        clamped += tab.clamped_mass

    marg_a, marg_b = {}, {}
    for x in (1, 2):
        p = np.einsum("k,kin->i", w, np.abs(half[x]) ** 2)
        marg_a[x] = thin @ p if detector else p
    for y in (1, 2):
        amp = comps @ db[y].T
        p = np.einsum("k,kmj->j", w, np.abs(amp) ** 2)
        marg_b[y] = thin @ p if detector else p
    if tail > max_tail:
        raise TailMassTooLarge(tail, max_tail, f"Bell statistics at cutoff {cutoff}")
    return LocalStatistics(joint, marg_a, marg_b, cutoff, tail, clamped)


def _zero_nonzero_value(st: LocalStatistics) -> float:
    j = st.joint
    q = j[1, 1].p(0, 0) + j[1, 2].p(0, 0) + j[2, 1].p(0, 0) - j[2, 2].p(0, 0)
    return 2.0 + 4.0 * (q - st.marg_a[1][0] - st.marg_b[1][0])


def zero_nonzero_from_vacuum(joint, marg_a, marg_b) -> float:
    """``B_Q`` from zero-count probabilities indexed ``[setting - 1]``."""
    q = joint[0, 0] + joint[0, 1] + joint[1, 0] - joint[1, 1]
    return float(2.0 + 4.0 * (q - marg_a[0] - marg_b[0]))


def zero_nonzero_fast(state, s: ChshSettings) -> float:
    """Lossless ``B_Q`` of a finite state from vacuum overlaps only."""
    return zero_nonzero_from_vacuum(*vacuum_probabilities(state, s.alice, s.bob))


def _even_odd_value(st: LocalStatistics) -> float:
    w = {k: parity_correlator(t) for k, t in st.joint.items()}
    return w[1, 1] + w[1, 2] + w[2, 1] - w[2, 2]


def cglmp_g(table: CountTable, marg_first, marg_second) -> float:
    """``G = p(i=j) - p(i=j-1)`` (mod 3) from its finite-sum form.

    ``G = 3 [p(0,0) + p(1,0) + p(1,1)] - 2 p_first(1) - 2 p_second(0)
    - p_first(0) - p_second(1) + 1``, where ``i`` is the count of the party
    indexing the table rows. Pass the transposed table and swapped
    marginals to evaluate with the parties' roles exchanged.
    """
    p = table.probs
    return (
        3.0 * (p[0, 0] + p[1, 0] + p[1, 1])
        - 2.0 * marg_first[1]
        - 2.0 * marg_second[0]
        - marg_first[0]
        - marg_second[1]
        + 1.0
    )


def _cglmp_value(st: LocalStatistics) -> float:
    j, ma, mb = st.joint, st.marg_a, st.marg_b
    return (
        cglmp_g(j[1, 1], ma[1], mb[1])
        - cglmp_g(j[2, 1], ma[2], mb[1])
        + cglmp_g(j[2, 2], ma[2], mb[2])
        + cglmp_g(j[1, 2].transpose(), mb[2], ma[1])
    )


def cglmp_raw(outcome_table: np.ndarray) -> float:
    """``p(i = j) - p(i = j - 1 mod d)`` summed directly over a ``d x d`` outcome table."""
    t = np.asarray(outcome_table)
    d = t.shape[0]
    same = sum(t[k, k] for k in range(d))
    minus = sum(t[k, (k + 1) % d] for k in range(d))
    return float(same - minus)


def cglmp_from_tables(tables: dict) -> float:
    """CGLMP value assembled from ``d x d`` outcome tables keyed by ``(x, y)``.

    The fourth term exchanges the parties' roles, i.e. it uses the
    transposed ``(1, 2)`` table. For ``d = 2`` this is a CHSH expression
    with the minus sign on ``(2, 1)``.
    """
    return (
        cglmp_raw(tables[1, 1])
        - cglmp_raw(tables[2, 1])
        + cglmp_raw(tables[2, 2])
        + cglmp_raw(np.asarray(tables[1, 2]).T)
    )


def binary_chsh(tables: dict) -> float:
    """CHSH ``E11 + E12 + E21 - E22`` from 2x2 outcome tables keyed by ``(x, y)``.

    Outcome index 0 carries the value +1 and index 1 the value -1.
    """
    sign = np.array([1.0, -1.0])
    e = {k: float(sign @ np.asarray(t) @ sign) for k, t in tables.items()}
    return e[1, 1] + e[1, 2] + e[2, 1] - e[2, 2]


def lhv_bound_check(tables: dict | None = None) -> float:
    """Largest CHSH value reachable by a deterministic local strategy.

    Enumerates the 16 assignments of outcomes to ``(a1, a2, b1, b2)``,
    builds the corresponding deterministic 2x2 tables and evaluates them
    with :func:`binary_chsh`, the same assembly used for measured tables.
    If ``tables`` are given they are checked for shape (four 2x2 tables
    summing to one). The result is 2.
    """
    if tables is not None:
        for k in itertools.product((1, 2), repeat=2):
            t = np.asarray(tables[k])
            if t.shape != (2, 2) or abs(t.sum() - 1.0) > 1e-9:
                raise DomainError(f"table {k} is not a normalised 2x2 outcome table")
    best = -math.inf
    for out in itertools.product((0, 1), repeat=4):
        oa = {1: out[0], 2: out[1]}
        ob = {1: out[2], 2: out[3]}
        det = {}
        for x, y in itertools.product((1, 2), repeat=2):
            t = np.zeros((2, 2))
            t[oa[x], ob[y]] = 1.0
            det[x, y] = t
        best = max(best, binary_chsh(det))
    return best


def _result(test, value, s, st):
    return BellResult(BellTest(test), float(value), s, st.diagnostics())


def chsh_zero_nonzero(state, s: ChshSettings, loss: LossSpec | None = None, **kw) -> BellResult:
    """Zero/non-zero CHSH value ``B_Q`` of the state under loss."""
    st = local_statistics(state, s, loss, **kw)
    return _result(BellTest.ZERO_NONZERO, _zero_nonzero_value(st), s, st)


def _parity_statistics(state, s, loss, tol=1e-9, **kw):
    # |parity sum over the tail| <= tail mass, so a small tail bounds the error
    cutoff = kw.pop("cutoff", None)
    st = local_statistics(state, s, loss, cutoff=cutoff, max_tail=1.0, **kw)
    while st.tail_mass > 0.5 * tol:
        if st.cutoff > 400:
            raise TailMassTooLarge(st.tail_mass, 0.5 * tol, "parity sums")
        st = local_statistics(state, s, loss, cutoff=st.cutoff + max(10, st.cutoff // 2), max_tail=1.0, **kw)
    return st


def chsh_even_odd(state, s: ChshSettings, loss: LossSpec | None = None, tol: float = 1e-9, **kw) -> BellResult:
    """Even/odd CHSH value ``B_W`` from four displaced-parity correlators."""
    st = _parity_statistics(state, s, loss, tol, **kw)
    return _result(BellTest.EVEN_ODD, _even_odd_value(st), s, st)


def cglmp3(state, s: ChshSettings, loss: LossSpec | None = None, **kw) -> BellResult:
    """Three-outcome photon-counting CGLMP value ``I``."""
    st = local_statistics(state, s, loss, **kw)
    return _result(BellTest.CGLMP3, _cglmp_value(st), s, st)


_FUNCTIONALS = {
    BellTest.ZERO_NONZERO: chsh_zero_nonzero,
    BellTest.EVEN_ODD: chsh_even_odd,
    BellTest.CGLMP3: cglmp3,
}


def evaluate(test, state, s: ChshSettings, loss: LossSpec | None = None, **kw) -> BellResult:
    """Dispatch to the functional named by ``test``."""
    return _FUNCTIONALS[BellTest(test)](state, s, loss, **kw)


def value_from_statistics(test, st: LocalStatistics) -> float:
    test = BellTest(test)
    if test is BellTest.ZERO_NONZERO:
        return _zero_nonzero_value(st)
    if test is BellTest.EVEN_ODD:
        return _even_odd_value(st)
    return _cglmp_value(st)
