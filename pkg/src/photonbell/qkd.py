"""Device-independent key rates for the photon-counting CHSH protocol.

Alice has three displacement settings and Bob two. The pairs
``(a1, a2) x (b1, b2)`` run the zero/non-zero CHSH test and bound Eve's
information; the pair ``(a0, b1)`` generates key. With ``B`` the CHSH value,
the collective-attack rate is lower bounded by

    K = 1 - h((1 + sqrt(B^2/4 - 1)) / 2) - H(A0|B1),

where ``h`` is the binary entropy and the conditional entropy is taken on
the zero/non-zero binarised keying outcomes. A weaker bound replaces the
conditional entropy by ``h(Q)`` with ``Q`` the bit error rate; the gap
between the two, :func:`delta_positivity`, is non-negative for every table.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .counting import LossSpec, Placement, apply_source_loss, vacuum_probabilities
from .exceptions import DomainError
from .fock import as_setting, eps_family_state
from .inequalities import ChshSettings, zero_nonzero_from_vacuum
from .optimize import QUICK, OptimizerConfig, hybrid_maximize, make_rng, maximize_bell

__all__ = [
    "BinaryJoint",
    "KeySettings",
    "KeyRateResult",
    "KeyThreshold",
    "binary_entropy",
    "eve_entropy",
    "conditional_entropy",
    "key_rate",
    "key_rate_qber_bound",
    "delta_positivity",
    "protocol_key_rate",
    "optimize_key_rate",
    "key_rate_threshold",
    "key_rate_sweep",
]

TSIRELSON = 2.0 * math.sqrt(2.0)
_SLACK = 1e-12
DIRECTIONS = ("A_given_B", "B_given_A")


def binary_entropy(x: float) -> float:
    """Binary entropy ``-x log2 x - (1-x) log2(1-x)`` with ``h(0) = h(1) = 0``.

    Raises
    ------
    DomainError
        If ``x`` lies outside ``[0, 1]`` by more than ``1e-12``.
    """
    x = float(x)
    if not (-_SLACK <= x <= 1.0 + _SLACK):
        raise DomainError(f"binary entropy needs x in [0, 1], got {x!r}")
    x = min(max(x, 0.0), 1.0)
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def _check_chsh(chsh: float) -> float:
    chsh = float(chsh)
    if not math.isfinite(chsh) or abs(chsh) > TSIRELSON + 1e-9:
        raise DomainError(f"CHSH value {chsh!r} exceeds the Tsirelson bound")
    return chsh


def eve_entropy(chsh: float) -> float:
    """Eve's information term ``h((1 + sqrt(max(B^2/4 - 1, 0))) / 2)``.

    The radical is clamped at the classical boundary, so any ``|B| <= 2``
    gives 1.
    """
    chsh = _check_chsh(chsh)
    r = math.sqrt(min(max(chsh * chsh / 4.0 - 1.0, 0.0), 1.0))
    return binary_entropy((1.0 + r) / 2.0)


@dataclass(frozen=True)
class BinaryJoint:
    """Joint distribution ``P[i, j]`` of binarised keying outcomes.

    ``i`` is Alice's outcome and ``j`` Bob's; 0 means no photon detected.
    """

    P: np.ndarray

    def __post_init__(self):
        p = np.array(self.P, dtype=float).reshape(2, 2)
        if not np.all(np.isfinite(p)) or p.min() < -1e-12:
            raise DomainError("table entries must be finite and nonnegative")
        if abs(p.sum() - 1.0) > 1e-9:
            raise DomainError(f"table must sum to 1, got {p.sum()!r}")
        p = np.clip(p, 0.0, None)
        p.flags.writeable = False
        object.__setattr__(self, "P", p)

    @classmethod
    def from_entries(cls, p00, p01, p10, p11) -> "BinaryJoint":
        return cls(np.array([[p00, p01], [p10, p11]]))

    @property
    def qber(self) -> float:
        """Bit error rate ``P01 + P10``."""
        return float(self.P[0, 1] + self.P[1, 0])

    @property
    def delta(self) -> float:
        """``P00 P10 - P01 P11``; zero exactly when ``delta_positivity`` is zero."""
        p = self.P
        return float(p[0, 0] * p[1, 0] - p[0, 1] * p[1, 1])


def _as_joint(P) -> BinaryJoint:
    return P if isinstance(P, BinaryJoint) else BinaryJoint(np.asarray(P))


def conditional_entropy(P, direction: str = "A_given_B") -> float:
    """``H(A|B)`` (default) or ``H(B|A)`` of a binarised keying table.

    Computed as the average entropy of the conditional distributions, with
    the ``0 log 0 = 0`` convention.
    """
    p = _as_joint(P).P
    if direction == "A_given_B":
        p = p.T
    elif direction != "B_given_A":
        raise DomainError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    # rows of p are now the conditioning variable
    total = 0.0
    for row in p:
        w = row.sum()
        if w > 0:
            total += w * binary_entropy(row[0] / w)
    return float(min(max(total, 0.0), 1.0))


def key_rate(chsh: float, cond_entropy: float) -> float:
    """Lower bound ``1 - h((1 + sqrt(B^2/4 - 1))/2) - H`` on the key rate."""
    h = float(cond_entropy)
    if not (-_SLACK <= h <= 1.0 + _SLACK):
        raise DomainError(f"conditional entropy must be in [0, 1], got {h!r}")
    return 1.0 - eve_entropy(chsh) - h


def key_rate_qber_bound(chsh: float, qber: float) -> float:
    """The weaker bound ``1 - h(Q) - h((1 + sqrt(B^2/4 - 1))/2)``."""
    return 1.0 - binary_entropy(qber) - eve_entropy(chsh)


def delta_positivity(P) -> float:
    """Gap ``h(Q) - H(B|A)`` between the two rate formulas.

    Bob's outcome given Alice's is a binary channel whose two flip
    probabilities average (with weights ``P(a)``) to ``Q``; concavity of
    ``h`` makes the gap nonnegative, with equality iff both flip
    probabilities agree, i.e. ``P00 P10 = P01 P11``.
    """
    j = _as_joint(P)
    return binary_entropy(j.qber) - conditional_entropy(j, "B_given_A")


@dataclass(frozen=True)
class KeySettings:
    """Three settings for Alice and two for Bob."""

    a0: complex
    a1: complex
    a2: complex
    b1: complex
    b2: complex

    def __post_init__(self):
        for name in ("a0", "a1", "a2", "b1", "b2"):
            object.__setattr__(self, name, as_setting(getattr(self, name)))

    def chsh_block(self) -> ChshSettings:
        return ChshSettings(self.a1, self.a2, self.b1, self.b2)

    def to_array(self) -> np.ndarray:
        z = np.array([self.a0, self.a1, self.a2, self.b1, self.b2])
        return np.concatenate([z.real, z.imag])

    @classmethod
    def from_array(cls, x) -> "KeySettings":
        x = np.asarray(x, dtype=float)
        if x.shape != (10,):
            raise DomainError(f"expected 10 reals, got shape {x.shape}")
        return cls(*(x[:5] + 1j * x[5:]))

    @classmethod
    def from_chsh(cls, s: ChshSettings, a0=None) -> "KeySettings":
        """Extend CHSH settings by a keying setting (default ``a0 = a1``)."""
        return cls(s.a1 if a0 is None else a0, s.a1, s.a2, s.b1, s.b2)

    def scaled(self, factor: float) -> "KeySettings":
        return KeySettings(*(factor * z for z in (self.a0, self.a1, self.a2, self.b1, self.b2)))


@dataclass(frozen=True)
class KeyRateResult:
    """Key rate with the quantities it was computed from.

    ``rate == 1 - eve_entropy(chsh) - cond_entropy`` to rounding.
    ``other_entropy`` is the conditional entropy in the other direction and
    ``qber`` the keying pair's error rate.
    """

    rate: float
    chsh: float
    cond_entropy: float
    settings: KeySettings
    epsilon: float
    direction: str = "A_given_B"
    other_entropy: float = float("nan")
    qber: float = float("nan")
    table: BinaryJoint | None = None
    diagnostics: dict = field(default_factory=dict, compare=False)


def _lossy(state, loss: LossSpec | None):
    """Source-form state and setting scale for a loss spec.

    Detector loss commutes with displacement up to ``delta -> sqrt(eta)
    delta``, so both placements reduce to a finite lossy state.
    """
    if loss is None or loss.lossless:
        return state, 1.0
    scale = math.sqrt(loss.eta) if loss.placement is Placement.DETECTOR else 1.0
    return apply_source_loss(state, loss.eta), scale


def _binary_table(p00: float, pa: float, pb: float) -> BinaryJoint:
    """Joint zero/non-zero table from ``p(0,0)`` and the two zero marginals."""
    p01 = max(pa - p00, 0.0)
    p10 = max(pb - p00, 0.0)
    p11 = max(1.0 - p00 - p01 - p10, 0.0)
    t = np.array([[p00, p01], [p10, p11]])
    return BinaryJoint(t / t.sum())


def _evaluate_prepared(state, scale, s: KeySettings, direction: str):
    # Alice settings (a1, a2, a0), Bob (b1, b2); every quantity is a vacuum overlap
    joint, ma, mb = vacuum_probabilities(state, [scale * s.a1, scale * s.a2, scale * s.a0],
                                         [scale * s.b1, scale * s.b2])
    chsh = float(np.clip(zero_nonzero_from_vacuum(joint, ma, mb), -TSIRELSON, TSIRELSON))
    return chsh, _binary_table(joint[2, 0], ma[2], mb[0])


def protocol_key_rate(eps: float, loss: LossSpec | None, settings: KeySettings,
                      direction: str = "A_given_B") -> KeyRateResult:
    """Key rate of the ``eps``-family state under ``loss`` at fixed settings.

    The CHSH value uses the zero/non-zero test on ``(a1, a2, b1, b2)``; the
    conditional entropy uses the zero/non-zero outcomes of ``(a0, b1)``.

    Examples
    --------
    >>> r = protocol_key_rate(0.0, None, KeySettings(0, 0, 0, 0, 0))
    >>> r.rate, r.chsh
    (-0.0, 2.0)
    """
    if direction not in DIRECTIONS:
        raise DomainError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    state, scale = _lossy(eps_family_state(eps), loss)
    chsh, table = _evaluate_prepared(state, scale, settings, direction)
    return _result(chsh, table, settings, eps, direction, {})


def _result(chsh, table, settings, eps, direction, diagnostics) -> KeyRateResult:
    other = "B_given_A" if direction == "A_given_B" else "A_given_B"
    h = conditional_entropy(table, direction)
    return KeyRateResult(
        rate=key_rate(chsh, h),
        chsh=chsh,
        cond_entropy=h,
        settings=settings,
        epsilon=float(eps),
        direction=direction,
        other_entropy=conditional_entropy(table, other),
        qber=table.qber,
        table=table,
        diagnostics=diagnostics,
    )


def _optimize_settings(eps, loss, cfg, rng, warm, direction):
    state, scale = _lossy(eps_family_state(eps), loss)
    # K is flat (about -H, which can be driven to 0) wherever |B| <= 2, and a
    # warm start from a neighbouring point can sit on that plateau; always
    # add the CHSH optimum, with the keying setting next to a1, as a seed
    hint = [w.chsh_block() for w in warm]
    chsh = maximize_bell(eps_family_state(eps), "zero_nonzero", loss, cfg.lighter(), warm_start=hint, rng=rng)
    warm = [*warm, KeySettings.from_chsh(chsh.settings)]

    def objective(x):
        # Below |B| = 2 the rate is -H, which a deterministic keying outcome
        # drives to 0: a plateau that traps the search. Adding min(|B| - 2, 0)
        # slopes it towards the violating region and changes nothing where
        # |B| >= 2, so every key-positive optimum is unaffected.
        chsh, table = _evaluate_prepared(state, scale, KeySettings.from_array(x), direction)
        k = 1.0 - eve_entropy(chsh) - conditional_entropy(table, direction)
        return k + min(abs(chsh) - 2.0, 0.0)

    search = hybrid_maximize(objective, 10, cfg, rng, warm=[w.to_array() for w in warm])
    s = KeySettings.from_array(search.x)
    chsh, table = _evaluate_prepared(state, scale, s, direction)
    diag = dict(nfev=search.nfev, budget_exhausted=search.exhausted)
    return _result(chsh, table, s, eps, direction, diag)


def _golden_max(f, lo: float, hi: float, iters: int):
    """Golden-section maximisation of ``f`` on ``[lo, hi]``; returns best ``(value, x, payload)``."""
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = hi - inv * (hi - lo), lo + inv * (hi - lo)
    fc, fd = f(c), f(d)
    seen = [fc, fd]
    for _ in range(iters):
        if fc[0] >= fd[0]:
            hi, d, fd = d, c, fc
            c = hi - inv * (hi - lo)
            fc = f(c)
            seen.append(fc)
        else:
            lo, c, fc = c, d, fd
            d = lo + inv * (hi - lo)
            fd = f(d)
            seen.append(fd)
    return max(seen, key=lambda t: t[0])


def optimize_key_rate(
    loss: LossSpec | None,
    cfg: OptimizerConfig = QUICK,
    eps: float | None = 0.5,
    warm_start=(),
    direction: str = "A_given_B",
    eps_bounds: tuple[float, float] = (1e-3, 1.0),
    eps_iters: int = 10,
    rng=None,
) -> KeyRateResult:
    """Maximise the key rate over the five settings and, if ``eps is None``, over ``eps``.

    ``eps`` is searched by golden section on ``log10(eps)`` within
    ``eps_bounds``; every inner settings search is warm started from the
    best settings found so far and uses a lighter budget after the first.
    ``warm_start`` takes :class:`KeySettings` (or ``(settings, eps)``
    pairs when ``eps`` is free, to seed the search position).
    """
    if direction not in DIRECTIONS:
        raise DomainError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    t0 = time.perf_counter()
    rng = make_rng(cfg.seed, 31) if rng is None else rng
    seeds, eps_hint = [], None
    for w in warm_start:
        if isinstance(w, tuple):
            w, eps_hint = w
        seeds.append(w)
    if eps is not None:
        r = _optimize_settings(float(eps), loss, cfg, rng, seeds, direction)
        r.diagnostics["seconds"] = time.perf_counter() - t0
        return r

    lo, hi = (math.log10(b) for b in eps_bounds)
    best: list = [None]
    light = cfg.lighter() if seeds else cfg

    def f(log_eps):
        warm = [best[0].settings] if best[0] is not None else seeds
        r = _optimize_settings(10.0**log_eps, loss, light if best[0] is not None or seeds else cfg, rng, warm, direction)
        if best[0] is None or r.rate > best[0].rate:
            best[0] = r
        return (r.rate, log_eps, r)

    if eps_hint is not None:
        f(min(max(math.log10(eps_hint), lo), hi))
    _golden_max(f, lo, hi, eps_iters)
    r = best[0]
    r.diagnostics["seconds"] = time.perf_counter() - t0
    return r


@dataclass(frozen=True)
class KeyThreshold:
    """Largest loss at which the optimised key rate stays positive."""

    max_loss: float
    bracket: tuple[float, float]
    rate_below: KeyRateResult
    epsilon: float | None
    diagnostics: dict = field(default_factory=dict, compare=False)


def key_rate_threshold(
    cfg: OptimizerConfig = QUICK,
    eps: float | None = 0.5,
    placement: str = "detector",
    lo: float = 0.0,
    hi: float = 0.25,
    width: float = 1e-3,
    direction: str = "A_given_B",
    eps_fallback=(0.02, 0.035, 0.05, 0.07, 0.1, 0.15, 0.25),
) -> KeyThreshold:
    """Bisect on loss for the zero crossing of the optimised key rate.

    Each step is warm started from the optimum at the largest loss found
    key-positive so far. A step that comes out key-negative is retried at
    the full budget and, when ``eps`` is free, at each fixed value in
    ``eps_fallback``: near the threshold the best ``eps`` drifts towards
    small values where the golden-section search over ``eps`` (after a
    warm start from larger ``eps``) is easily misled.
    """
    t0 = time.perf_counter()
    placement = Placement(placement)
    rng = make_rng(cfg.seed, 37)

    def at(loss, warm, budget):
        return optimize_key_rate(LossSpec.from_loss(loss, placement), budget, eps, warm_start=warm,
                                 direction=direction, rng=rng)

    start = at(lo, (), cfg)
    if start.rate <= 0:
        return KeyThreshold(lo, (lo, lo), start, eps, dict(positive_at_lo=False))
    good, good_loss = start, lo
    light = cfg.lighter()
    steps = 0
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        warm = [(good.settings, good.epsilon)] if eps is None else [good.settings]
        r = at(mid, warm, light)
        if r.rate <= 0:
            # confirm a negative verdict at the full budget before shrinking the bracket
            retry = at(mid, warm, cfg)
            r = retry if retry.rate > r.rate else r
        if r.rate <= 0 and eps is None:
            for e in eps_fallback:
                loss = LossSpec.from_loss(mid, placement)
                fixed = optimize_key_rate(loss, cfg, float(e), warm_start=[good.settings], direction=direction, rng=rng)
                if fixed.rate > r.rate:
                    r = fixed
                if r.rate > 0:
                    break
        steps += 1
        if r.rate > 0:
            lo, good, good_loss = mid, r, mid
        else:
            hi = mid
    diag = dict(steps=steps, seconds=time.perf_counter() - t0, last_positive_loss=good_loss)
    return KeyThreshold(0.5 * (lo + hi), (lo, hi), good, good.epsilon, diag)


def key_rate_sweep(losses, cfg: OptimizerConfig = QUICK, eps: float | None = 0.5, placement: str = "detector",
                   direction: str = "A_given_B"):
    """Optimised key rates along a loss grid, warm started point to point.

    Yields one :class:`KeyRateResult` per loss, in order. Every point also
    gets a fresh seed from the CHSH optimum (see :func:`optimize_key_rate`),
    so a warm start stuck on the ``|B| <= 2`` plateau does not propagate.
    """
    placement = Placement(placement)
    prev = None
    for i, loss in enumerate(losses):
        warm = () if prev is None else ([(prev.settings, prev.epsilon)] if eps is None else [prev.settings])
        budget = cfg if prev is None else cfg.lighter()
        r = optimize_key_rate(LossSpec.from_loss(float(loss), placement), budget, eps, warm_start=warm,
                              direction=direction, rng=make_rng(cfg.seed, 41, i))
        # keep the warm start chain on key-positive optima only
        if r.rate > 0 or prev is None:
            prev = r
        yield r
