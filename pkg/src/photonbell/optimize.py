"""Global maximisation of Bell functionals over displacement settings.

The search runs over the real and imaginary parts of the four settings.
Each maximisation is differential evolution (scipy) followed by a
Nelder-Mead polish of the best few population members and a short series
of simulated-annealing restarts (perturb, polish, Metropolis accept)
around the incumbent.

Bell landscapes here are flat (value 2) for large displacements and the
interesting structure can sit at ``|delta| ~ sqrt(eps)`` for weakly
entangled states, so the initial population mixes log-uniform radii with
uniform box samples.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.optimize import differential_evolution, minimize

from .counting import LossSpec, Placement, apply_source_loss, tmsv_q, tmsv_q_marginal, tmsv_wigner
from .exceptions import NoViolationAtZeroLoss
from .fock import TmsvParams, TwoModeState, correlated_state, tmsv_cutoff, tmsv_state
from .inequalities import (
    BellResult,
    BellTest,
    ChshSettings,
    _parity_statistics,
    local_statistics,
    value_from_statistics,
    zero_nonzero_fast,
)

__all__ = [
    "OptimizerConfig",
    "ToleranceResult",
    "QUICK",
    "PAPER",
    "budget",
    "make_rng",
    "multiscale_population",
    "hybrid_maximize",
    "bell_objective",
    "maximize_bell",
    "loss_tolerance",
    "grid_scan_2photon",
    "scan_row",
    "scan_point",
    "cglmp_grid",
    "two_photon_state",
    "tmsv_sweep",
    "GUARD_BAND",
]

GUARD_BAND = 1e-4


@dataclass(frozen=True)
class OptimizerConfig:
    population: int = 40
    de_generations: int = 300
    nm_max_iters: int = 4000
    nm_top: int = 5
    sa_restarts: int = 2
    seed: int = 20240601
    box_radius: float = 3.0
    min_radius: float = 1e-3
    cutoff_tolerance: float = 1e-10

    def __post_init__(self):
        if self.population < 8:
            raise ValueError("population must be at least 8")
        if not self.box_radius > 0:
            raise ValueError("box_radius must be positive")
        if not 0 < self.cutoff_tolerance < 1e-3:
            raise ValueError("cutoff_tolerance must lie in (0, 1e-3)")

    def as_dict(self) -> dict:
        return asdict(self)

    def lighter(self, factor: float = 0.3) -> "OptimizerConfig":
        """Reduced budget for warm-started re-optimisations along a path."""
        return replace(
            self,
            de_generations=max(20, int(self.de_generations * factor)),
            population=max(16, int(self.population * 0.6)),
            sa_restarts=max(1, self.sa_restarts // 2),
            nm_top=max(2, self.nm_top // 2),
        )


QUICK = OptimizerConfig(population=32, de_generations=120, nm_max_iters=3000, nm_top=3, sa_restarts=2)
PAPER = OptimizerConfig(population=40, de_generations=300, nm_max_iters=6000, nm_top=5, sa_restarts=2)


def budget(name: str) -> OptimizerConfig:
    return {"quick": QUICK, "paper": PAPER}[name]


def make_rng(seed, *key) -> np.random.Generator:
    """Counter-based generator for the stream identified by ``(seed, *key)``.

    Streams for different keys are independent, so results do not depend
    on the order in which parallel work is scheduled.
    """
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *[int(k) for k in key]])
    return np.random.Generator(np.random.Philox(ss))


def multiscale_population(rng, size: int, n_complex: int, radius: float, min_radius: float) -> np.ndarray:
    """Population of ``size`` points, ``2 n_complex`` real coordinates each.

    Half the members draw each complex coordinate with a log-uniform modulus
    in ``[min_radius, radius]`` and uniform phase; the rest are uniform in
    the box.
    """
    half = size // 2
    r = np.exp(rng.uniform(math.log(min_radius), math.log(radius), size=(half, n_complex)))
    th = rng.uniform(0, 2 * math.pi, size=(half, n_complex))
    z = r * np.exp(1j * th)
    a = np.concatenate([z.real, z.imag], axis=1)
    b = rng.uniform(-radius, radius, size=(size - half, 2 * n_complex))
    return np.clip(np.concatenate([a, b]), -radius, radius)


@dataclass
class _Search:
    x: np.ndarray
    value: float
    nfev: int = 0
    exhausted: bool = False
    history: list = field(default_factory=list)


def hybrid_maximize(func, dim: int, cfg: OptimizerConfig, rng, warm=(), radius=None, de=True) -> _Search:
    """Maximise ``func`` over the box ``[-radius, radius]^dim``.

    ``warm`` points are inserted into the initial population and polished
    directly; the returned value is never below ``func`` at the origin or
    at any warm start.
    """
    radius = cfg.box_radius if radius is None else radius
    bounds = [(-radius, radius)] * dim
    nfev = 0

    def neg(x):
        nonlocal nfev
        nfev += 1
        v = func(x)
        return -v if math.isfinite(v) else 1e6

    starts = [np.zeros(dim)] + [np.clip(np.asarray(w, float), -radius, radius) for w in warm]
    cands = [(neg(x), x) for x in starts]
    exhausted = False
    if de:
        pop = multiscale_population(rng, max(cfg.population, 5), dim // 2, radius, min(cfg.min_radius, radius / 10))
        k = min(len(starts) - 1, pop.shape[0] // 2)
        if k:
            pop[:k] = np.array(starts[1 : k + 1])
        res = differential_evolution(
            neg,
            bounds,
            init=pop,
            maxiter=cfg.de_generations,
            rng=rng,
            polish=False,
            tol=1e-12,
            atol=1e-13,
            mutation=(0.5, 1.0),
            recombination=0.9,
        )
        exhausted = res.nit >= cfg.de_generations and not res.success
        order = np.argsort(res.population_energies)
        cands += [(res.population_energies[i], res.population[i]) for i in order[: cfg.nm_top]]
    cands.sort(key=lambda c: c[0])

    nm_opts = dict(maxiter=cfg.nm_max_iters, maxfev=cfg.nm_max_iters, xatol=1e-9, fatol=1e-14, adaptive=True)

    def polish(x):
        r = minimize(neg, x, method="Nelder-Mead", bounds=bounds, options=nm_opts)
        return (r.fun, r.x) if r.fun <= neg(x) else (neg(x), np.asarray(x))

    polished = [polish(x) for _, x in cands[: cfg.nm_top + 1]]
    best_f, best_x = min(polished + cands[:1], key=lambda c: c[0])

    # simulated-annealing restarts around the incumbent
    cur_f, cur_x = best_f, best_x
    temp = max(1e-4 * abs(best_f), 1e-8)
    for _ in range(cfg.sa_restarts):
        scale = 0.3 * (np.abs(cur_x) + 0.05)
        trial = np.clip(cur_x + scale * rng.standard_normal(dim), -radius, radius)
        f, x = polish(trial)
        if f < cur_f or rng.random() < math.exp(-(f - cur_f) / temp):
            cur_f, cur_x = f, x
        if f < best_f:
            best_f, best_x = f, x
        temp *= 0.5
    return _Search(np.asarray(best_x), -best_f, nfev, exhausted)


def _is_correlated(state) -> bool:
    if isinstance(state, TmsvParams):
        return True
    if isinstance(state, TwoModeState):
        c = state.coeffs
        return bool(np.allclose(c, np.diag(np.diag(c)), atol=1e-14))
    return False


def tmsv_analytic_value(test: BellTest, params: TmsvParams, s: ChshSettings) -> float:
    """Lossless TMSV Bell value from the closed-form Q and Wigner functions."""
    if test is BellTest.ZERO_NONZERO:
        q = sum(sign * tmsv_q(params, s.alice[x], s.bob[y]) for (x, y), sign in _CHSH_SIGNS.items())
        return 2.0 + 4.0 * (q - tmsv_q_marginal(params, s.a1) - tmsv_q_marginal(params, s.b1))
    if test is BellTest.EVEN_ODD:
        return sum(sign * tmsv_wigner(params, s.alice[x], s.bob[y]) for (x, y), sign in _CHSH_SIGNS.items())
    raise ValueError(f"no closed form for {test}")


_CHSH_SIGNS = {(0, 0): 1.0, (0, 1): 1.0, (1, 0): 1.0, (1, 1): -1.0}


def _evaluator(state, test: BellTest, loss: LossSpec | None, analytic: bool, cutoff_tol: float = 1e-10):
    """Return ``(f(settings) -> value, diagnostics(settings) -> dict)``."""
    lossless = loss is None or loss.lossless
    if isinstance(state, TmsvParams):
        if analytic and lossless and test is not BellTest.CGLMP3:
            return (lambda s: tmsv_analytic_value(test, state, s)), (lambda s: {"analytic": True})
        state = tmsv_state(state, tmsv_cutoff(state.g, cutoff_tol), tol=cutoff_tol)
    shrink = 1.0
    if not lossless and (loss.placement is Placement.SOURCE or test is not BellTest.EVEN_ODD):
        # Loss after a displacement equals the same loss before it with the
        # setting scaled by sqrt(eta); moving detector loss to the source lets
        # the count-based tests use a finite state and the low-count path.
        if loss.placement is Placement.DETECTOR:
            shrink = math.sqrt(loss.eta)
        state = apply_source_loss(state, loss.eta)
        loss = None

    # zero/non-zero and CGLMP read counts <= 1 only, exact without detector thinning
    low = 1 if test is not BellTest.EVEN_ODD and loss is None else None

    def stats(s):
        if shrink != 1.0:
            s = s.scaled(shrink)
        if test is BellTest.EVEN_ODD:
            return _parity_statistics(state, s, loss)
        return local_statistics(state, s, loss, max_count=low)

    if test is BellTest.ZERO_NONZERO and loss is None:
        value = lambda s: zero_nonzero_fast(state, s.scaled(shrink) if shrink != 1.0 else s)  # noqa: E731
    else:
        value = lambda s: value_from_statistics(test, stats(s))  # noqa: E731
    return value, (lambda s: stats(s).diagnostics())


def _search_scale(state, test, loss, analytic) -> float:
    # analytic Wigner of a TMSV varies on the scale 1/sqrt(cosh 2g)
    if isinstance(state, TmsvParams) and analytic and test is BellTest.EVEN_ODD and (loss is None or loss.lossless):
        return 1.0 / math.sqrt(math.cosh(2 * state.g))
    return 1.0


def bell_objective(state, test, loss: LossSpec | None = None, analytic: bool = True, cutoff_tol: float = 1e-10):
    """Objective ``x -> |B|`` (CHSH tests) or ``x -> I`` (CGLMP) over 8 reals."""
    test = BellTest(test)
    f, _ = _evaluator(state, test, loss, analytic, cutoff_tol)
    scale = _search_scale(state, test, loss, analytic)
    signed = test is BellTest.CGLMP3

    def obj(x):
        v = f(ChshSettings.from_array(scale * np.asarray(x)))
        return v if signed else abs(v)

    return obj, scale


def maximize_bell(
    state,
    test,
    loss: LossSpec | None = None,
    cfg: OptimizerConfig = QUICK,
    warm_start=(),
    rng=None,
    analytic: bool = True,
    de: bool = True,
) -> BellResult:
    """Maximise a Bell functional over all four complex settings.

    ``state`` may be a :class:`TwoModeState`, a density matrix, or
    :class:`TmsvParams` (lossless zero/non-zero and even/odd tests then use
    the closed forms). CHSH tests maximise ``|B|``. ``warm_start`` takes
    :class:`ChshSettings`. The returned diagnostics include the number of
    evaluations and a ``budget_exhausted`` flag; settings are gauge fixed
    for photon-number correlated states.
    """
    test = BellTest(test)
    t0 = time.perf_counter()
    rng = make_rng(cfg.seed) if rng is None else rng
    obj, scale = bell_objective(state, test, loss, analytic, cfg.cutoff_tolerance)
    warm = [w.to_array() / scale for w in warm_start]
    search = hybrid_maximize(obj, 8, cfg, rng, warm=warm, de=de)
    s = ChshSettings.from_array(scale * search.x)
    if _is_correlated(state):
        s = s.gauge_fixed()
    f, diag = _evaluator(state, test, loss, analytic, cfg.cutoff_tolerance)
    value = f(s)
    diagnostics = dict(diag(s))
    diagnostics.update(
        nfev=search.nfev,
        budget_exhausted=search.exhausted,
        seconds=time.perf_counter() - t0,
    )
    return BellResult(test, float(value), s, diagnostics)


@dataclass(frozen=True)
class ToleranceResult:
    """Largest loss ``1 - eta`` at which the optimised test still violates."""

    max_loss: float
    bell_at_threshold: float
    settings_at_threshold: ChshSettings | None
    bisection_width: float
    violates_at_zero_loss: bool = True
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def min_efficiency(self) -> float:
        return 1.0 - self.max_loss


def _violates(result: BellResult, guard: float) -> bool:
    return result.violation > guard


def loss_tolerance(
    state,
    test,
    placement="detector",
    cfg: OptimizerConfig = QUICK,
    width: float = 2e-3,
    guard: float = GUARD_BAND,
    verify: bool = False,
    strict: bool = False,
    warm_start=(),
    lo: float = 0.0,
    hi: float = 1.0,
) -> ToleranceResult:
    """Bisection on the loss ``1 - eta`` with re-optimisation at every probe.

    Each probe is warm started from the settings of the last violating
    probe. A probe counts as violating when the optimised value exceeds the
    classical bound by more than ``guard``. With ``verify`` the bracket is
    re-checked by two fresh optimisations at ``max_loss -/+ width``.

    ``lo`` and ``hi`` may narrow the initial bracket when the caller knows
    it; ``lo`` is re-checked, ``hi`` is assumed non-violating.
    """
    test = BellTest(test)
    placement = Placement(placement)
    rng = make_rng(cfg.seed, 1)
    r0 = maximize_bell(state, test, LossSpec(1.0 - lo, placement), cfg, warm_start=warm_start, rng=rng)
    probes = [(lo, r0.value)]
    # weakly entangled states violate by ~1e-3; a fixed guard would bias the threshold
    guard = min(guard, 1e-3 * max(r0.violation, 0.0))
    if r0.violation <= 0.0:
        if strict:
            raise NoViolationAtZeroLoss(f"{test.value}: optimised value {r0.value:.6f} does not violate")
        return ToleranceResult(lo, r0.value, r0.settings, 0.0, False, {"probes": probes})
    light = cfg.lighter()
    best, best_at = r0, lo
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        # the loss identity makes sqrt(eta) rescaling a good warm start for detector loss
        warm = [best.settings]
        if placement is Placement.DETECTOR:
            ratio = math.sqrt((1.0 - best_at) / (1.0 - mid))
            warm.append(best.settings.scaled(ratio))
        r = maximize_bell(state, test, LossSpec(1.0 - mid, placement), light, warm_start=warm, rng=rng)
        probes.append((mid, r.value))
        if _violates(r, guard):
            lo, best, best_at = mid, r, mid
        else:
            hi = mid
    diag = {"probes": probes}
    if verify:
        below = maximize_bell(state, test, LossSpec(1.0 - max(lo - width, 0.0), placement), cfg,
                              warm_start=[best.settings], rng=make_rng(cfg.seed, 2))
        above = maximize_bell(state, test, LossSpec(1.0 - min(lo + width, 1.0), placement), cfg,
                              warm_start=[best.settings], rng=make_rng(cfg.seed, 3))
        diag.update(verify_below=below.value, verify_above=above.value,
                    bracket_ok=_violates(below, 0.0) and not _violates(above, guard))
    return ToleranceResult(lo, best.value, best.settings, hi - lo, True, diag)


def two_photon_state(c00: float, c11: float) -> TwoModeState | None:
    """``C00|00> + C11|11> + C22|22>`` with ``C22 = +sqrt(1 - C00^2 - C11^2)``."""
    rest = 1.0 - c00 * c00 - c11 * c11
    if rest < -1e-12:
        return None
    return correlated_state([c00, c11, math.sqrt(max(rest, 0.0))])


def grid_scan_2photon(c00_values, c11_values, tests, cfg: OptimizerConfig = QUICK,
                      with_tolerance: bool = True, placement="detector", combined: bool = True):
    """Optimised Bell values (and loss tolerances) over a ``(C00, C11)`` grid.

    Yields one dict per grid point and test in row-major grid order;
    infeasible points (``C00^2 + C11^2 > 1``) yield ``feasible=False``.
    ``combined`` adds the pointwise maximum of the two CHSH tests.
    Neighbouring points warm start each other along the ``C11`` axis, so
    each ``C00`` row (:func:`scan_row`) is an independent unit of work.
    """
    for ia, c00 in enumerate(c00_values):
        yield from scan_row(c00, c11_values, tests, cfg, with_tolerance, placement, combined, ia)


def scan_row(c00, c11_values, tests, cfg: OptimizerConfig = QUICK, with_tolerance: bool = True,
             placement="detector", combined: bool = True, row_index: int = 0) -> list:
    """Rows of :func:`grid_scan_2photon` for one ``C00`` value."""
    tests = [BellTest(t) for t in tests]
    warm = {t: [] for t in tests}
    rows = []
    for ib, c11 in enumerate(c11_values):
        rows += scan_point(c00, c11, tests, cfg, with_tolerance, placement, combined, warm=warm, key=(row_index, ib))
    return rows


def scan_point(c00, c11, tests, cfg, with_tolerance=True, placement="detector", combined=True, warm=None, key=(0, 0)):
    """All rows of :func:`grid_scan_2photon` for one grid point."""
    tests = [BellTest(t) for t in tests]
    state = two_photon_state(c00, c11)
    c22 = math.sqrt(max(1.0 - c00 * c00 - c11 * c11, 0.0)) if state is not None else float("nan")
    rows = []
    if state is None:
        for t in tests:
            rows.append(dict(C00=c00, C11=c11, C22=c22, test=t.value, feasible=False))
        return rows
    local = replace(cfg, seed=int(make_rng(cfg.seed, *key).integers(2**63)))
    found = {}
    for t in tests:
        w = warm.get(t, []) if warm is not None else []
        r = maximize_bell(state, t, None, local, warm_start=w)
        row = dict(C00=c00, C11=c11, C22=c22, test=t.value, feasible=True, bell_value=r.value,
                   settings=r.settings, diagnostics=r.diagnostics)
        if with_tolerance:
            tol = loss_tolerance(state, t, placement, local, warm_start=[r.settings])
            row["loss_tolerance"] = tol.max_loss
        rows.append(row)
        found[t] = row
        if warm is not None:
            warm[t] = [r.settings]
    chsh = [found[t] for t in (BellTest.ZERO_NONZERO, BellTest.EVEN_ODD) if t in found]
    if combined and len(chsh) == 2:
        pick = max(chsh, key=lambda r: abs(r["bell_value"]))
        row = dict(pick, test="combined")
        if with_tolerance:
            row["loss_tolerance"] = max(r["loss_tolerance"] for r in chsh)
        rows.append(row)
    return rows


def cglmp_grid(c00_values, c11_values, cfg: OptimizerConfig = QUICK, refine: int = 3,
               mirror: bool = True, mapper=map, progress=None) -> dict:
    """Lossless CGLMP maxima over a ``(C00, C11)`` grid, cheaply.

    Three savings keep a 21x21 grid in minutes:

    * ``mirror``: a ``pi`` phase on Bob's mode maps ``C11 -> -C11`` and is
      undone by ``b -> -b``, so the value at ``-C11`` equals the value at
      ``C11`` exactly and only ``C11 >= 0`` is optimised;
    * each ``C00`` row is swept in increasing ``|C11|`` with a warm-started
      :meth:`OptimizerConfig.lighter` budget;
    * the ``refine`` best points are re-optimised at the full budget.

    Rows are independent, so ``mapper`` (e.g. an executor's ``map``) may
    run them in parallel without changing results. Returns a dict
    ``{(C00, C11): BellResult or None}`` (``None`` marks infeasible
    points); refined results carry ``refined=True`` in their diagnostics.
    ``progress`` is called with ``(rows_done, rows_total)``.
    """
    c00_values = [float(c) for c in c00_values]
    c11_values = [float(c) for c in c11_values]
    keyset = {round(c, 12) for c in c11_values}
    out: dict = {}
    jobs = []
    for ia, c00 in enumerate(c00_values):
        todo = []
        for c11 in c11_values:
            if two_photon_state(c00, c11) is None:
                out[c00, c11] = None
            elif mirror and c11 < -1e-12 and round(-c11, 12) in keyset:
                continue
            else:
                todo.append(c11)
        if todo:
            jobs.append((c00, sorted(todo, key=abs), cfg, ia))
    for n, (c00, row) in enumerate(mapper(_cglmp_row, jobs), 1):
        for c11, r in row:
            out[c00, c11] = r
        if progress is not None:
            progress(n, len(jobs))

    done = [k for k, v in out.items() if v is not None]
    for c00, c11 in sorted(done, key=lambda k: -out[k].value)[: max(int(refine), 0)]:
        prev = out[c00, c11]
        r = maximize_bell(two_photon_state(c00, c11), BellTest.CGLMP3, None, cfg, warm_start=[prev.settings])
        best = r if r.value > prev.value else prev
        out[c00, c11] = BellResult(best.test, best.value, best.settings, dict(best.diagnostics, refined=True))
    if mirror:
        for c00 in c00_values:
            for c11 in c11_values:
                if (c00, c11) not in out:
                    src = out[c00, -c11]
                    s = src.settings
                    flipped = ChshSettings(s.a1, s.a2, -s.b1, -s.b2)
                    out[c00, c11] = BellResult(src.test, src.value, flipped, dict(src.diagnostics, mirrored=True))
    return out


def _cglmp_row(job):
    c00, c11_values, cfg, ia = job
    light = cfg.lighter()
    warm, row = [], []
    for ib, c11 in enumerate(c11_values):
        local = replace(light, seed=int(make_rng(cfg.seed, 7, ia, ib).integers(2**63)))
        r = maximize_bell(two_photon_state(c00, c11), BellTest.CGLMP3, None, local, warm_start=warm)
        warm = [r.settings]
        row.append((c11, r))
    return c00, row


def tmsv_sweep(g_values, tests, placements=("detector", "source"), cfg: OptimizerConfig = QUICK,
               phi: float = 0.0, with_tolerance: bool = True):
    """Optimised Bell values and loss tolerances along a TMSV gain grid.

    Yields one dict per ``(g, test)``; ``g = 0`` (no entanglement) yields
    ``skipped=True``. Optima are carried as warm starts along the sweep.
    """
    tests = [BellTest(t) for t in tests]
    warm = {t: [] for t in tests}
    for ig, g in enumerate(g_values):
        if g <= 0:
            for t in tests:
                yield dict(g=g, test=t.value, skipped=True)
            continue
        params = TmsvParams(g, phi)
        local = replace(cfg, seed=int(make_rng(cfg.seed, ig).integers(2**63)))
        for t in tests:
            r = maximize_bell(params, t, None, local, warm_start=warm[t])
            warm[t] = [r.settings]
            row = dict(g=g, test=t.value, skipped=False, bell_value=r.value, settings=r.settings,
                       diagnostics=r.diagnostics)
            if with_tolerance:
                for p in placements:
                    tol = loss_tolerance(params, t, p, local, warm_start=[r.settings])
                    row[f"loss_tolerance_{Placement(p).value}"] = tol.max_loss
            yield row
