"""Command-line front end: scans written as CSV or JSON tables.

Every output starts with a provenance header (tool version, the fully
resolved configuration, the seed) so a file can be regenerated from its own
header. Scans are split into independent units (a grid row, a test, a key
rate curve); units run in a process pool when ``--threads > 1`` and are
written in grid order, so the thread count never changes the numbers.

Exit codes: 0 success, 2 configuration or usage error, 3 numerical failure
(including a failed acceptance criterion in ``verify``).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields, replace

import numpy as np

from . import __version__
from .counting import Placement
from .exceptions import PhotonBellError
from .inequalities import BellTest, cglmp_from_tables, cglmp3
from .optimize import OptimizerConfig, budget, cglmp_grid, scan_row, tmsv_sweep, two_photon_state

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


class ConfigError(Exception):
    """Invalid command configuration (exit code 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


# ---------------------------------------------------------------- config

COMMON_DEFAULTS = {
    "seed": 20240601,
    "threads": None,
    "out": None,
    "format": "csv",
    "budget": "quick",
    "loss_placement": "detector",
    "cutoff_tolerance": 1e-10,
    "resume": False,
    "gnuplot_stub": False,
}

COMMAND_DEFAULTS = {
    "scan2": {
        "c00": "-1:1:61",
        "c11": "-1:1:61",
        "point": None,
        "tests": "zero_nonzero,even_odd",
        "tolerance": True,
        "combined": True,
    },
    "tmsv": {"g": "log:0.01:3:25", "phi": 0.0, "tests": "zero_nonzero,even_odd", "tolerance": True,
             "placements": None},
    "qkd": {"loss": "0:0.15:31", "eps": "0.5,free", "direction": "A_given_B", "threshold": False},
    "cglmp": {"c00": "-1:1:21", "c11": "-1:1:21", "refine": 3, "mirror": True},
    "verify": {"only": None},
}


def parse_grid(spec) -> list[float]:
    """Grid from ``start:stop:num``, ``log:start:stop:num`` or a comma list."""
    if isinstance(spec, (list, tuple)):
        return [float(v) for v in spec]
    text = str(spec).strip()
    try:
        if text.startswith("log:"):
            a, b, n = text[4:].split(":")
            if float(a) <= 0 or float(b) <= 0:
                raise ConfigError(f"log grid needs positive bounds: {spec!r}")
            vals = np.geomspace(float(a), float(b), int(n))
        elif text.count(":") == 2:
            a, b, n = text.split(":")
            vals = np.linspace(float(a), float(b), int(n))
        else:
            vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad grid {spec!r}: {exc}") from None
    vals = [float(round(v, 12)) for v in vals]
    if not vals or not all(math.isfinite(v) for v in vals):
        raise ConfigError(f"grid {spec!r} is empty or not finite")
    return vals


def _add_common(p: argparse.ArgumentParser) -> None:
    S = argparse.SUPPRESS
    p.add_argument("--config", help="JSON file with defaults; explicit flags override it")
    p.add_argument("--seed", type=int, default=S, help="master seed (default 20240601)")
    p.add_argument("--threads", type=int, default=S, help="worker processes (default: available cores)")
    p.add_argument("--out", default=S, help="output path (default: standard output)")
    p.add_argument("--format", choices=["csv", "json"], default=S)
    p.add_argument("--budget", choices=["quick", "paper"], default=S)
    p.add_argument("--loss-placement", dest="loss_placement", choices=["detector", "source"], default=S)
    p.add_argument("--cutoff-tolerance", dest="cutoff_tolerance", type=float, default=S,
                   help="maximum discarded Fock tail of truncated states (default 1e-10)")
    p.add_argument("--resume", action="store_true", default=S, help="reuse completed units of an existing --out file")
    p.add_argument("--gnuplot-stub", dest="gnuplot_stub", action="store_true", default=S,
                   help="also write a gnuplot script next to the output")


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = _Parser(prog="photonbell", description="Photon-counting Bell tests and key rates.")
    parser.add_argument("--version", action="version", version=f"photonbell {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("scan2", help="Bell values and loss tolerances over the C00|00>+C11|11>+C22|22> family")
    _add_common(p)
    p.add_argument("--c00", default=S, help="grid for C00 (start:stop:num or list)")
    p.add_argument("--c11", default=S, help="grid for C11")
    p.add_argument("--point", default=S, help="single point 'C00,C11'")
    p.add_argument("--tests", default=S, help="comma list of zero_nonzero, even_odd, cglmp3")
    p.add_argument("--no-tolerance", dest="tolerance", action="store_false", default=S)
    p.add_argument("--no-combined", dest="combined", action="store_false", default=S)

    p = sub.add_parser("tmsv", help="Bell values and loss tolerances of the two-mode squeezed vacuum")
    _add_common(p)
    p.add_argument("--g", default=S, help="gain grid (default log:0.01:3:25)")
    p.add_argument("--phi", type=float, default=S)
    p.add_argument("--tests", default=S)
    p.add_argument("--no-tolerance", dest="tolerance", action="store_false", default=S)
    p.add_argument("--placements", default=S,
                   help="comma list of placements for tolerances (default: detector,source)")

    p = sub.add_parser("qkd", help="optimised key rate against loss")
    _add_common(p)
    p.add_argument("--loss", default=S, help="loss grid (default 0:0.15:31)")
    p.add_argument("--eps", default=S, help="comma list of epsilon values and/or 'free' (default 0.5,free)")
    p.add_argument("--direction", choices=["A_given_B", "B_given_A"], default=S)
    p.add_argument("--threshold", action="store_true", default=S, help="also bisect for the zero crossing")

    p = sub.add_parser("cglmp", help="CGLMP maxima over the C00/C11/C22 family")
    _add_common(p)
    p.add_argument("--c00", default=S)
    p.add_argument("--c11", default=S)
    p.add_argument("--refine", type=int, default=S, help="re-optimise this many best points at full budget")
    p.add_argument("--no-mirror", dest="mirror", action="store_false", default=S)

    p = sub.add_parser("verify", help="run the acceptance criteria and print a pass/fail table")
    _add_common(p)
    p.add_argument("--only", default=S, help="comma list of criterion numbers")
    return parser


_VALUE_FLAGS = ("--c00", "--c11", "--g", "--loss", "--point", "--phi")


def _join_values(argv):
    # grids such as "-1:1:21" start with a minus sign, which argparse takes for a flag
    out, it = [], iter(argv)
    for a in it:
        if a in _VALUE_FLAGS:
            nxt = next(it, None)
            out.append(a if nxt is None else f"{a}={nxt}")
        else:
            out.append(a)
    return out


def resolve_config(argv=None) -> dict:
    """Parse ``argv`` and merge defaults, the ``--config`` file and explicit flags."""
    argv = sys.argv[1:] if argv is None else list(argv)
    args = vars(build_parser().parse_args(_join_values(argv)))
    command = args.pop("command")
    cfg = dict(COMMON_DEFAULTS, **COMMAND_DEFAULTS[command])
    path = args.pop("config", None)
    if path is not None:
        try:
            with open(path) as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path!r}: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        loaded = {k.replace("-", "_"): v for k, v in loaded.items()}
        unknown = set(loaded) - set(cfg) - {"optimizer"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    cfg.update(args)
    cfg["command"] = command
    _validate(cfg)
    return cfg


def _validate(cfg: dict) -> None:
    if cfg["format"] not in ("csv", "json"):
        raise ConfigError("format must be csv or json")
    if cfg["threads"] is not None and int(cfg["threads"]) < 1:
        raise ConfigError("--threads must be at least 1")
    try:
        Placement(cfg["loss_placement"])
        cfg["optimizer"] = optimizer_config(cfg).as_dict()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg["resume"] and not cfg["out"]:
        raise ConfigError("--resume needs --out")
    cmd = cfg["command"]
    if cmd in ("scan2", "tmsv"):
        for t in str(cfg["tests"]).split(","):
            try:
                BellTest(t.strip())
            except ValueError:
                raise ConfigError(f"unknown test {t!r}") from None
    for key in ("c00", "c11", "g", "loss"):
        if key in cfg and not (cmd == "scan2" and cfg.get("point")):
            parse_grid(cfg[key])
    if cmd == "scan2" and cfg.get("point"):
        _parse_point(cfg["point"])
    if cmd == "tmsv" and any(g < 0 for g in parse_grid(cfg["g"])):
        raise ConfigError("gain must be nonnegative")
    if cmd == "qkd":
        _parse_eps(cfg["eps"])
        if any(not 0 <= v <= 1 for v in parse_grid(cfg["loss"])):
            raise ConfigError("loss values must lie in [0, 1]")
    if cmd == "verify" and cfg.get("only"):
        _parse_only(cfg["only"])


def optimizer_config(cfg: dict) -> OptimizerConfig:
    """Budget preset, overridden by an ``optimizer`` mapping and the seed."""
    base = budget(cfg["budget"])
    extra = dict(cfg.get("optimizer") or {})
    names = {f.name for f in fields(OptimizerConfig)}
    bad = set(extra) - names
    if bad:
        raise ConfigError(f"unknown optimizer keys: {sorted(bad)}")
    extra.update(seed=int(cfg["seed"]), cutoff_tolerance=float(cfg["cutoff_tolerance"]))
    return replace(base, **extra)


def _parse_point(text) -> tuple[float, float]:
    try:
        a, b = (float(v) for v in str(text).split(","))
    except ValueError:
        raise ConfigError(f"--point needs 'C00,C11', got {text!r}") from None
    return a, b


def _parse_eps(text) -> list:
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if part == "free":
            out.append(None)
            continue
        try:
            v = float(part)
        except ValueError:
            raise ConfigError(f"bad epsilon {part!r}") from None
        if not 0 <= v <= 1:
            raise ConfigError(f"epsilon must lie in [0, 1], got {v}")
        out.append(v)
    return out


def _parse_only(text) -> list[int]:
    try:
        return [int(v) for v in str(text).split(",")]
    except ValueError:
        raise ConfigError(f"bad --only list {text!r}") from None


# ---------------------------------------------------------------- output

COLUMNS = {
    "scan2": ["C00", "C11", "C22", "test", "bell_value", "loss_tolerance", "settings", "diagnostics", "status"],
    "tmsv": ["g", "phi", "test", "bell_value", "loss_tolerance_detector", "loss_tolerance_source", "settings",
             "diagnostics", "status"],
    "qkd": ["eps_mode", "kind", "loss", "epsilon", "key_rate", "chsh", "cond_entropy", "other_entropy", "qber",
            "key_rate_qber_bound", "settings", "diagnostics", "status"],
    "cglmp": ["C00", "C11", "C22", "bell_value", "raw_check", "settings", "diagnostics", "status"],
}

KEYS = {
    "scan2": ("C00", "C11", "test"),
    "tmsv": ("g", "test"),
    "qkd": ("eps_mode", "kind", "loss"),
    "cglmp": ("C00", "C11"),
}


def _settings_json(s) -> str:
    names = [n for n in ("a0", "a1", "a2", "b1", "b2") if hasattr(s, n)]
    return json.dumps({n: [getattr(s, n).real, getattr(s, n).imag] for n in names})


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _diag_json(d: dict, drop=("seconds",)) -> str:
    # wall-clock time would break bit-for-bit reproducibility, so it is dropped
    return json.dumps(_clean({k: v for k, v in d.items() if k not in drop}), sort_keys=True)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def provenance(cfg: dict) -> dict:
    # where the file goes, how many workers wrote it and whether it was
    # resumed do not affect its contents
    shown = {k: v for k, v in sorted(cfg.items()) if k not in ("resume", "out", "threads")}
    return {"tool": "photonbell", "version": __version__, "seed": cfg["seed"], "config": shown}


def render(cfg: dict, rows: list[dict]) -> str:
    cols = COLUMNS[cfg["command"]]
    prov = provenance(cfg)
    if cfg["format"] == "json":
        body = [{c: r.get(c) for c in cols} for r in rows]
        return json.dumps({"provenance": prov, "columns": cols, "rows": body}, indent=1, sort_keys=True) + "\n"
    buf = io.StringIO()
    buf.write(f"# photonbell {__version__}\n")
    buf.write(f"# seed: {cfg['seed']}\n")
    buf.write("# config: " + json.dumps(prov["config"], sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in cols])
    return buf.getvalue()


def read_existing(cfg: dict) -> list[dict]:
    """Rows of an earlier output file (for ``--resume``), values as strings or JSON scalars."""
    path = cfg["out"]
    if not path or not os.path.exists(path):
        return []
    with open(path) as fh:
        text = fh.read()
    if cfg["format"] == "json":
        try:
            return json.loads(text)["rows"]
        except (json.JSONDecodeError, KeyError):
            raise ConfigError(f"cannot resume from {path!r}: not an output of this tool") from None
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    out = []
    for r in rows:
        out.append({k: _parse_cell(v) for k, v in r.items()})
    return out


def _parse_cell(v: str):
    if v == "":
        return None
    try:
        return float(v)
    except ValueError:
        return v


GNUPLOT = {
    "scan2": ("set view map; set pm3d\nset xlabel 'C00'; set ylabel 'C11'\n"
              "splot '{data}' using 1:2:5 every ::0 with pm3d title 'bell value'\n"),
    "tmsv": "set logscale x\nset xlabel 'g'\nplot '{data}' using 1:4 with linespoints title 'bell value'\n",
    "qkd": "set xlabel 'loss'\nplot '{data}' using 3:5 with linespoints title 'key rate'\n",
    "cglmp": "set view map; set pm3d\nsplot '{data}' using 1:2:4 with pm3d title 'CGLMP'\n",
}


def gnuplot_stub(cfg: dict) -> str:
    data = cfg["out"] or "data.csv"
    return ("# generated by photonbell " + __version__ + "\n"
            "set datafile separator ','\nset datafile commentschars '#'\nset key autotitle columnhead\n"
            + GNUPLOT[cfg["command"]].format(data=data))


# ---------------------------------------------------------------- units of work

def _numeric_errors():
    return (PhotonBellError, FloatingPointError, ArithmeticError, np.linalg.LinAlgError)


def _scan2_unit(job):
    row_index, c00, c11_values, tests, ocfg, tol, placement, combined = job
    cfg = OptimizerConfig(**ocfg)
    try:
        raw = scan_row(c00, c11_values, tests, cfg, tol, placement, combined, row_index)
    except _numeric_errors() as exc:
        return [dict(C00=c00, C11=c11, test=t, status=f"error: {exc}") for c11 in c11_values for t in tests]
    rows = []
    for r in raw:
        row = dict(C00=r["C00"], C11=r["C11"], C22=r["C22"], test=r["test"])
        if not r["feasible"]:
            row["status"] = "infeasible"
        else:
            row.update(bell_value=r["bell_value"], loss_tolerance=r.get("loss_tolerance"),
                       settings=_settings_json(r["settings"]), diagnostics=_diag_json(r["diagnostics"]),
                       status="ok")
        rows.append(row)
    return rows


def _tmsv_unit(job):
    test, g_values, phi, ocfg, tol, placements = job
    cfg = OptimizerConfig(**ocfg)
    rows = []
    try:
        for r in tmsv_sweep(g_values, [test], placements, cfg, phi, tol):
            row = dict(g=r["g"], phi=phi, test=r["test"])
            if r["skipped"]:
                row["status"] = "skipped: no entanglement at g = 0"
            else:
                row.update(bell_value=r["bell_value"], settings=_settings_json(r["settings"]),
                           diagnostics=_diag_json(r["diagnostics"]), status="ok")
                for p in placements:
                    row[f"loss_tolerance_{p}"] = r.get(f"loss_tolerance_{p}")
            rows.append(row)
    except _numeric_errors() as exc:
        done = {r["g"] for r in rows}
        rows += [dict(g=g, phi=phi, test=test, status=f"error: {exc}") for g in g_values if g not in done]
    return rows


def _qkd_unit(job):
    from .qkd import key_rate_qber_bound, key_rate_sweep, key_rate_threshold

    eps, losses, ocfg, placement, direction, threshold = job
    cfg = OptimizerConfig(**ocfg)
    mode = "free" if eps is None else repr(float(eps))
    rows = []

    def row_of(kind, loss, r, extra=None):
        d = dict(r.diagnostics, **(extra or {}))
        return dict(eps_mode=mode, kind=kind, loss=loss, epsilon=r.epsilon, key_rate=r.rate, chsh=r.chsh,
                    cond_entropy=r.cond_entropy, other_entropy=r.other_entropy, qber=r.qber,
                    key_rate_qber_bound=key_rate_qber_bound(r.chsh, r.qber), settings=_settings_json(r.settings),
                    diagnostics=_diag_json(d), status="ok")

    try:
        for loss, r in zip(losses, key_rate_sweep(losses, cfg, eps, placement, direction)):
            rows.append(row_of("rate", loss, r))
        if threshold:
            t = key_rate_threshold(cfg, eps, placement, direction=direction)
            rows.append(row_of("threshold", t.max_loss, t.rate_below, dict(bracket=list(t.bracket))))
    except _numeric_errors() as exc:
        done = {r["loss"] for r in rows}
        rows += [dict(eps_mode=mode, kind="rate", loss=v, status=f"error: {exc}") for v in losses if v not in done]
    return rows


def _raw_check(c00, c11, s) -> float:
    """``|I_finite - I_raw|`` with ``I_raw`` summed over coarse-grained 3x3 tables."""
    from .counting import joint_counts

    state = two_photon_state(c00, c11)
    tables = {(x, y): joint_counts(state, s.alice[x - 1], s.bob[y - 1]).coarse(3) for x in (1, 2) for y in (1, 2)}
    return abs(cglmp3(state, s).value - cglmp_from_tables(tables))


# ---------------------------------------------------------------- commands

def _mapper(cfg: dict):
    n = cfg["threads"] or os.cpu_count() or 1
    if int(n) <= 1:
        return map, None
    pool = ProcessPoolExecutor(max_workers=int(n))
    return pool.map, pool


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _run_units(cfg, unit, jobs, done_units):
    """Run ``unit`` over ``jobs`` (skipping indices in ``done_units``) in job order."""
    mapper, pool = _mapper(cfg)
    todo = [j for i, j in enumerate(jobs) if i not in done_units]
    results = {}
    try:
        for n, (idx, rows) in enumerate(zip([i for i in range(len(jobs)) if i not in done_units],
                                            mapper(unit, todo)), 1):
            results[idx] = rows
            _progress(f"[{cfg['command']}] unit {n}/{len(todo)} done")
    finally:
        if pool is not None:
            pool.shutdown()
    return results


def _with_resume(cfg, jobs, unit, unit_keys):
    """Reuse complete units from an earlier file; recompute the rest."""
    existing = read_existing(cfg) if cfg["resume"] else []
    key = KEYS[cfg["command"]]
    have = {tuple(_norm(r.get(k)) for k in key): r for r in existing if r.get("status") not in (None, "")
            and not str(r.get("status")).startswith("error")}
    done, reused = set(), {}
    for i, keys in enumerate(unit_keys):
        if keys and all(tuple(_norm(v) for v in k) in have for k in keys):
            done.add(i)
            reused[i] = [have[tuple(_norm(v) for v in k)] for k in keys]
    fresh = _run_units(cfg, unit, jobs, done)
    out = []
    for i in range(len(jobs)):
        out += reused[i] if i in done else fresh[i]
    return out


def _norm(v):
    if isinstance(v, float):
        return round(v, 12)
    try:
        return round(float(v), 12)
    except (TypeError, ValueError):
        return v


def cmd_scan2(cfg: dict) -> list[dict]:
    tests = [BellTest(t.strip()).value for t in str(cfg["tests"]).split(",")]
    if cfg.get("point"):
        c00, c11 = _parse_point(cfg["point"])
        c00s, c11s = [c00], [c11]
    else:
        c00s, c11s = parse_grid(cfg["c00"]), parse_grid(cfg["c11"])
    combined = bool(cfg["combined"]) and {"zero_nonzero", "even_odd"} <= set(tests)
    names = tests + (["combined"] if combined else [])
    jobs, keys = [], []
    for ia, c00 in enumerate(c00s):
        if all(two_photon_state(c00, c11) is None for c11 in c11s):
            continue  # whole row infeasible: nothing to report
        jobs.append((ia, c00, c11s, tests, cfg["optimizer"], bool(cfg["tolerance"]), cfg["loss_placement"], combined))
        keys.append([(c00, c11, t) for c11 in c11s if two_photon_state(c00, c11) is not None for t in names])
    rows = _with_resume(cfg, jobs, _scan2_unit, keys)
    return [r for r in rows if r.get("status") != "infeasible"]


def cmd_tmsv(cfg: dict) -> list[dict]:
    tests = [BellTest(t.strip()).value for t in str(cfg["tests"]).split(",")]
    g_values = parse_grid(cfg["g"])
    if cfg.get("placements"):
        placements = [Placement(p.strip()).value for p in str(cfg["placements"]).split(",")]
    else:
        placements = ["detector", "source"]
    jobs = [(t, g_values, float(cfg["phi"]), cfg["optimizer"], bool(cfg["tolerance"]), placements) for t in tests]
    keys = [[(g, t) for g in g_values] for t in tests]
    rows = _with_resume(cfg, jobs, _tmsv_unit, keys)
    order = {g: i for i, g in enumerate(g_values)}
    return sorted(rows, key=lambda r: (order.get(_norm(r["g"]), 0), tests.index(r["test"])))


def cmd_qkd(cfg: dict) -> list[dict]:
    losses = parse_grid(cfg["loss"])
    eps_list = _parse_eps(cfg["eps"])
    jobs = [(e, losses, cfg["optimizer"], cfg["loss_placement"], cfg["direction"], bool(cfg["threshold"]))
            for e in eps_list]
    keys = []
    for e in eps_list:
        mode = "free" if e is None else repr(float(e))
        # threshold rows have no fixed loss key, so those units are always recomputed
        keys.append([] if cfg["threshold"] else [(mode, "rate", v) for v in losses])
    return _with_resume(cfg, jobs, _qkd_unit, keys)


def cmd_cglmp(cfg: dict) -> list[dict]:
    # the refinement step ranks the whole grid, so --resume only reuses a complete file
    c00s, c11s = parse_grid(cfg["c00"]), parse_grid(cfg["c11"])
    if cfg["resume"]:
        existing = read_existing(cfg)
        feasible = [(a, b) for a in c00s for b in c11s if two_photon_state(a, b) is not None]
        have = {(_norm(r["C00"]), _norm(r["C11"])) for r in existing if r.get("status") == "ok"}
        if feasible and all((_norm(a), _norm(b)) in have for a, b in feasible):
            return existing
    ocfg = OptimizerConfig(**cfg["optimizer"])
    mapper, pool = _mapper(cfg)
    try:
        res = cglmp_grid(c00s, c11s, ocfg, refine=int(cfg["refine"]), mirror=bool(cfg["mirror"]), mapper=mapper,
                         progress=lambda n, t: _progress(f"[cglmp] row {n}/{t} done"))
    except _numeric_errors() as exc:
        raise _NumericFailure(str(exc)) from exc
    finally:
        if pool is not None:
            pool.shutdown()
    rows = []
    for c00 in c00s:
        for c11 in c11s:
            r = res.get((c00, c11))
            if r is None:
                continue
            c22 = math.sqrt(max(1.0 - c00 * c00 - c11 * c11, 0.0))
            rows.append(dict(C00=c00, C11=c11, C22=c22, bell_value=r.value, raw_check=_raw_check(c00, c11, r.settings),
                             settings=_settings_json(r.settings), diagnostics=_diag_json(r.diagnostics), status="ok"))
    return rows


class _NumericFailure(Exception):
    pass


def cmd_verify(cfg: dict) -> int:
    from .acceptance import format_table, run_criteria

    only = _parse_only(cfg["only"]) if cfg.get("only") else None
    results = run_criteria(only, OptimizerConfig(**cfg["optimizer"]), stream=sys.stderr)
    table = format_table(results)
    if cfg["out"]:
        with open(cfg["out"], "w") as fh:
            fh.write(table)
    print(table, end="")
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERIC


COMMANDS = {"scan2": cmd_scan2, "tmsv": cmd_tmsv, "qkd": cmd_qkd, "cglmp": cmd_cglmp}


def main(argv=None) -> int:
    try:
        cfg = resolve_config(argv)
    except ConfigError as exc:
        print(f"photonbell: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if cfg["command"] == "verify":
        return cmd_verify(cfg)
    try:
        rows = COMMANDS[cfg["command"]](cfg)
    except ConfigError as exc:
        print(f"photonbell: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _NumericFailure as exc:
        print(f"photonbell: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    text = render(cfg, rows)
    if cfg["out"]:
        with open(cfg["out"], "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if cfg["gnuplot_stub"]:
        stub = gnuplot_stub(cfg)
        if cfg["out"]:
            with open(os.path.splitext(cfg["out"])[0] + ".gp", "w") as fh:
                fh.write(stub)
        else:
            sys.stderr.write(stub)
    failed = [r for r in rows if str(r.get("status", "ok")).startswith("error")]
    if failed:
        print(f"photonbell: {len(failed)} rows failed numerically", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
