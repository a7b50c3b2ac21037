"""Acceptance criteria as runnable checks.

Each criterion is a function returning a :class:`Check` with the measured
value, the target and a pass flag decided at the criterion's stated
tolerance. Wall-clock time is recorded against the criterion's time budget
and reported separately; it does not decide pass or fail.

Used by ``photonbell verify`` and ``tests/test_acceptance.py``.
"""

from __future__ import annotations

import math
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from .counting import (
    LossSpec,
    apply_detector_loss,
    apply_source_loss,
    joint_counts,
    lossy_joint_counts,
)
from .fock import (
    TmsvParams,
    correlated_state,
    displacement_element,
    displacement_matrix_oracle,
    eps_family_state,
    two_mode_state,
)
from .inequalities import (
    ChshSettings,
    binary_chsh,
    cglmp3,
    cglmp_from_tables,
    chsh_zero_nonzero,
    evaluate,
)
from .optimize import QUICK, OptimizerConfig, cglmp_grid, loss_tolerance, maximize_bell, two_photon_state

__all__ = ["Check", "CRITERIA", "run_criteria", "format_line", "format_table"]


@dataclass
class Check:
    number: int
    title: str
    passed: bool
    measured: str
    target: str
    seconds: float = 0.0
    time_budget: float | None = None
    details: dict = field(default_factory=dict)

    @property
    def within_time(self) -> bool:
        return self.time_budget is None or self.seconds <= self.time_budget


def _timed(number, title, budget_s):
    def wrap(fn):
        def run(cfg: OptimizerConfig = QUICK) -> Check:
            t0 = time.perf_counter()
            passed, measured, target, details = fn(cfg)
            return Check(number, title, bool(passed), measured, target, time.perf_counter() - t0, budget_s, details)

        run.number = number
        run.title = title
        return run

    return wrap


# ---------------------------------------------------------------- criteria


@_timed(1, "max zero/non-zero CHSH of (|00>+|11>)/sqrt2", 30)
def c01_max_entangled(cfg):
    r = maximize_bell(eps_family_state(0.5), "zero_nonzero", None, cfg)
    v = abs(r.value)
    return abs(v - 2.69) <= 0.01, f"{v:.5f}", "2.69 +- 0.01", {"settings": r.settings}


@_timed(2, "TMSV zero/non-zero optimum at g = 0.74", 60)
def c02_tmsv_q(cfg):
    r = maximize_bell(TmsvParams(0.74), "zero_nonzero", None, cfg)
    v = abs(r.value)
    return abs(v - 2.45) <= 0.02, f"{v:.5f}", "2.45 +- 0.02", {"settings": r.settings}


@_timed(3, "TMSV even/odd high-gain asymptote", 60)
def c03_tmsv_w(cfg):
    r4 = maximize_bell(TmsvParams(4.0), "even_odd", None, cfg)
    r5 = maximize_bell(TmsvParams(5.0), "even_odd", None, cfg, warm_start=[r4.settings], rng=None)
    v4, v5 = abs(r4.value), abs(r5.value)
    drift = abs(v5 - v4)
    ok = abs(v5 - 2.32) <= 0.02 and drift < 1e-3
    return ok, f"B(g=5) = {v5:.5f}, drift {drift:.1e}", "2.32 +- 0.02, drift < 1e-3", {"g4": v4, "g5": v5}


@_timed(4, "Eberhard limit, detector-side loss", 300)
def c04_eberhard(cfg):
    eps = loss_tolerance(eps_family_state(1e-3), "zero_nonzero", "detector", cfg)
    tm = loss_tolerance(TmsvParams(0.05), "zero_nonzero", "detector", cfg)
    ok = 0.323 <= eps.max_loss <= 1 / 3 and tm.max_loss >= 0.32
    return (ok, f"eps=1e-3: {eps.max_loss:.4f}, TMSV g=0.05: {tm.max_loss:.4f}",
            "eps in [0.323, 1/3], TMSV >= 0.32", {"eps": eps.max_loss, "tmsv": tm.max_loss})


@_timed(5, "source-side loss limit of the weak TMSV", 300)
def c05_source(cfg):
    tm = loss_tolerance(TmsvParams(0.05), "zero_nonzero", "source", cfg)
    det = loss_tolerance(TmsvParams(0.05), "zero_nonzero", "detector", cfg)
    ok = abs(tm.max_loss - 0.29) <= 0.01
    return (ok, f"source {tm.max_loss:.4f} (detector {det.max_loss:.4f})", "0.29 +- 0.01",
            {"source": tm.max_loss, "detector": det.max_loss})


@_timed(6, "loss tolerance of the maximally entangled state", 120)
def c06_max_entangled_loss(cfg):
    r = loss_tolerance(eps_family_state(0.5), "zero_nonzero", "detector", cfg)
    return abs(r.max_loss - 0.15) <= 0.01, f"{r.max_loss:.4f}", "0.15 +- 0.01", {"max_loss": r.max_loss}


@_timed(7, "CGLMP maximum on the 21x21 (C00, C11) grid", 600)
def c07_cglmp(cfg):
    grid = [round(v, 10) for v in np.linspace(-1, 1, 21)]
    res = cglmp_grid(grid, grid, cfg)
    (best, where) = max((r.value, k) for k, r in res.items() if r is not None)
    return abs(best - 2.50) <= 0.02, f"{best:.5f} at (C00, C11) = {where}", "2.50 +- 0.02", {"max": best, "at": where}


@_timed(8, "key-rate zero crossings", 900)
def c08_qkd(cfg):
    from .qkd import key_rate_threshold

    # the keying bit is Bob's b1 outcome: see the decisions ledger on H(B1|A0)
    half = key_rate_threshold(cfg, 0.5, "detector", direction="B_given_A", width=2e-3)
    free = key_rate_threshold(cfg, None, "detector", lo=half.bracket[0], direction="B_given_A", width=2e-3)
    ok = abs(half.max_loss - 0.070) <= 0.005 and abs(free.max_loss - 0.105) <= 0.005
    return (ok, f"eps=1/2: {half.max_loss:.4f}, eps free: {free.max_loss:.4f} (eps* = {free.epsilon:.3g})",
            "0.070 +- 0.005 and 0.105 +- 0.005", {"half": half.max_loss, "free": free.max_loss})


@_timed(9, "displacement elements vs matrix-exponential oracle", 10)
def c09_oracle(cfg):
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(20):
        r, th = 2.0 * math.sqrt(rng.random()), rng.uniform(0, 2 * math.pi)
        d = r * complex(math.cos(th), math.sin(th))
        ref = displacement_matrix_oracle(6, d, work_cutoff=80)
        for i in range(7):
            for m in range(7):
                worst = max(worst, abs(displacement_element(i, m, d) - ref[i, m]))
    return worst < 1e-9, f"{worst:.2e}", "< 1e-9", {"max_error": worst}


def _random_state(rng, dim):
    c = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return two_mode_state(c)


def _random_settings(rng, scale=1.0):
    return ChshSettings(*(scale * (rng.normal(size=4) + 1j * rng.normal(size=4))))


def _product_state(rng, dim):
    u = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return two_mode_state(np.outer(u, v))


def property_checks(seed: int = 10) -> dict:
    """The six property suites; returns ``{name: (passed, measured)}``."""
    rng = np.random.default_rng(seed)
    out = {}

    worst = 0.0
    for _ in range(200):
        st = _random_state(rng, int(rng.integers(1, 4)))
        a, b = (complex(*(rng.uniform(-1.5, 1.5, 2))) for _ in range(2))
        loss = LossSpec(float(rng.uniform(0.05, 1.0)), "detector" if rng.random() < 0.5 else "source")
        worst = max(worst, abs(lossy_joint_counts(st, a, b, loss).probs.sum() - 1.0))
    out["normalisation"] = (worst <= 1e-9, f"max |sum - 1| = {worst:.1e}")

    worst = -math.inf
    for i in range(200):
        st = _product_state(rng, int(rng.integers(1, 4)))
        s = _random_settings(rng, 0.6)
        for test in ("zero_nonzero", "even_odd", "cglmp3"):
            worst = max(worst, abs(evaluate(test, st, s).value) if test != "cglmp3" else evaluate(test, st, s).value)
    out["separable"] = (worst <= 2 + 1e-9, f"max |B| = {worst:.6f}")

    worst = 0.0
    for _ in range(20):
        st = _random_state(rng, 3)
        e1, e2 = rng.uniform(0.2, 1.0, 2)
        a, b = complex(*rng.normal(size=2)), complex(*rng.normal(size=2))
        t = joint_counts(st, a, b)
        twice = apply_detector_loss(apply_detector_loss(t, e1), e2).probs
        once = apply_detector_loss(t, e1 * e2).probs
        worst = max(worst, np.abs(twice - once).max())
        rho2 = apply_source_loss(apply_source_loss(st, e1), e2).rho
        rho1 = apply_source_loss(st, e1 * e2).rho
        worst = max(worst, np.abs(rho2 - rho1).max())
    out["loss_composition"] = (worst <= 1e-9, f"max deviation {worst:.1e}")

    from .qkd import BinaryJoint, delta_positivity

    tables = rng.dirichlet(np.ones(4), size=100_000)
    joints = [BinaryJoint(t.reshape(2, 2)) for t in tables]
    deltas = np.array([delta_positivity(j) for j in joints])
    # tables with delta = 0: Bob reads Alice's bit through one symmetric channel
    pa, q = rng.random(2000), rng.random(2000)
    sym = np.stack([pa * (1 - q), pa * q, (1 - pa) * q, (1 - pa) * (1 - q)], axis=1)
    eq = [abs(delta_positivity(BinaryJoint(t.reshape(2, 2)))) for t in sym]
    eq += [abs(d) for d, j in zip(deltas, joints) if abs(j.delta) < 1e-6]
    out["delta_positivity"] = (
        deltas.min() >= -1e-12 and max(eq) < 1e-10,
        f"min Delta = {deltas.min():.1e}; max |Delta| where |delta| < 1e-6: {max(eq):.1e} ({len(eq)} tables)",
    )

    worst = 0.0
    for _ in range(30):
        c = rng.normal(size=3)
        st = correlated_state(c / np.linalg.norm(c))
        s = _random_settings(rng, 0.6)
        tables = {(x, y): joint_counts(st, s.alice[x - 1], s.bob[y - 1]).coarse(3) for x in (1, 2) for y in (1, 2)}
        worst = max(worst, abs(cglmp3(st, s).value - cglmp_from_tables(tables)))
    out["cglmp_reduction"] = (worst < 1e-8, f"max |finite - raw| = {worst:.1e}")

    worst = 0.0
    for _ in range(30):
        st = _random_state(rng, 3)
        s = _random_settings(rng, 0.6)
        swapped = {(x, y): joint_counts(st, s.alice[x - 1], s.bob[2 - y]).coarse(2) for x in (1, 2) for y in (1, 2)}
        binary = {(x, y): joint_counts(st, s.alice[x - 1], s.bob[y - 1]).coarse(2) for x in (1, 2) for y in (1, 2)}
        bq = chsh_zero_nonzero(st, s).value
        worst = max(worst, abs(cglmp_from_tables(swapped) - bq), abs(binary_chsh(binary) - bq))
    out["binarisation"] = (worst < 1e-9, f"max |I_2 - B_Q| = {worst:.1e}")
    return out


@_timed(10, "property suites", 360)
def c10_properties(cfg):
    res = property_checks()
    ok = all(p for p, _ in res.values())
    measured = "; ".join(f"{k}: {'ok' if p else 'FAIL'} ({m})" for k, (p, m) in res.items())
    return ok, measured, "all six suites at their tolerances", res


@_timed(11, "qualitative structure", 300)
def c11_structure(cfg):
    light = cfg.lighter()
    line = [round(v, 10) for v in np.linspace(-0.9, 0.9, 7)]
    zq = max(abs(maximize_bell(two_photon_state(0.0, c), "zero_nonzero", None, light).value) for c in line)
    ew = max(abs(maximize_bell(two_photon_state(c, 0.0), "even_odd", None, light).value) for c in line)
    phi = 0.9
    r = maximize_bell(TmsvParams(0.74, phi), "zero_nonzero", None, cfg)
    s = r.settings
    x, y = s.a1.real, -s.a2.real
    rot = complex(math.cos(phi), math.sin(phi))
    ideal = ChshSettings(x, -y, x * rot, -y * rot)
    dev = max(abs(p - q) for p, q in zip(s.alice + s.bob, ideal.alice + ideal.bob))
    ok = zq <= 2 + 1e-6 and ew <= 2 + 1e-6 and dev < 1e-2
    return (ok, f"max |B_Q| on C00=0: {zq:.6f}; max |B_W| on C11=0: {ew:.6f}; setting deviation {dev:.1e}",
            "<= 2, <= 2, < 1e-2", {"zq": zq, "ew": ew, "dev": dev})


CRITERIA = {f.number: f for f in (
    c01_max_entangled, c02_tmsv_q, c03_tmsv_w, c04_eberhard, c05_source, c06_max_entangled_loss,
    c07_cglmp, c08_qkd, c09_oracle, c10_properties, c11_structure,
)}


def format_line(c: Check) -> str:
    status = "PASS" if c.passed else "FAIL"
    clock = f"{c.seconds:.1f}s" + ("" if c.within_time else f" (over {c.time_budget:.0f}s budget)")
    return f"[{status}] criterion {c.number:2d} {c.title}: measured {c.measured}; target {c.target}; {clock}"


def format_table(results) -> str:
    lines = [format_line(c) for c in results]
    n = sum(c.passed for c in results)
    lines.append(f"{n}/{len(results)} criteria passed")
    return "\n".join(lines) + "\n"


def run_criteria(only=None, cfg: OptimizerConfig = QUICK, stream=None) -> list[Check]:
    """Run the selected criteria (all by default), printing each line as it finishes."""
    numbers = sorted(CRITERIA) if only is None else list(only)
    out = []
    for n in numbers:
        if n not in CRITERIA:
            raise KeyError(f"no acceptance criterion {n}")
        c = CRITERIA[n](cfg)
        out.append(c)
        if stream is not None:
            print(format_line(c), file=stream, flush=True)
    return out


if __name__ == "__main__":  # pragma: no cover
    print(format_table(run_criteria(stream=sys.stderr)), end="")
