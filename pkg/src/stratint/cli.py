"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 numeric failure, 3 failed check.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

from .coefficients import SCHEME_FAMILIES, IntegralSpec, build_tensor, export_table, parse_weights
from .errors import QSelectionError, error_report, select_q_report, threshold
from .harness import (
    MIN_VALIDATION_SAMPLES,
    check_published_constants,
    strong_order_experiment,
    validate_error_formulas,
)
from .kernels import truncated_families
from .problems import PROBLEMS, get_problem
from .scheme import NumericalFailure, SchemeConfig, simulate

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_CHECK = 0, 1, 2, 3

DEFAULT_CONVERGE_DELTAS = "0.125,0.0625,0.03125,0.015625,0.0078125"

# keys that may come from a config file, with their defaults
DEFAULTS = {
    "weights": None,
    "q": None,
    "delta": None,
    "order": "2.5",
    "seed": "1",
    "paths": None,
    "samples": "100000",
    "c_target": "1.0",
    "out": None,
    "threads": None,
    "problem": None,
    "t_end": "1.0",
    "suite": "formulas",
    "min_order": None,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, *names: str):
    helps = {
        "weights": "weight exponents, e.g. 000 or a comma list or 'all'",
        "q": "truncation level(s): N, A:B, a comma list, or family=N pairs",
        "delta": "step size (comma list for converge)",
        "order": "scheme order: 1.0, 1.5, 2.0 or 2.5",
        "seed": "64-bit RNG seed",
        "paths": "number of simulated paths",
        "samples": "Monte-Carlo sample count",
        "c_target": "error constant C in the threshold C * delta**6",
        "out": "output file or directory",
        "threads": "worker threads (default: all cores)",
        "problem": f"builtin problem id: {', '.join(sorted(PROBLEMS))}",
        "t_end": "final time",
        "suite": "validation suite: formulas or constants",
        "min_order": "fail when the fitted order is below this value",
    }
    for name in names:
        p.add_argument("--" + name.replace("_", "-"), dest=name, default=None, help=helps[name])
    p.add_argument("--config", default=None, help="file of key=value lines; flags win")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stratint", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _common(sub.add_parser("gen-coeffs", help="write an exact coefficient table"),
            "weights", "q", "out")
    _common(sub.add_parser("errors", help="error table and selected truncation levels"),
            "weights", "q", "delta", "c_target", "out")
    _common(sub.add_parser("simulate", help="simulate trajectories of a builtin problem"),
            "problem", "order", "delta", "q", "seed", "paths", "t_end", "c_target",
            "threads", "out")
    _common(sub.add_parser("converge", help="strong order experiment"),
            "problem", "order", "delta", "q", "seed", "paths", "t_end", "c_target",
            "threads", "min_order", "out")
    _common(sub.add_parser("validate", help="check error formulas or published constants"),
            "suite", "q", "delta", "seed", "samples", "out")
    return parser


def read_config(path) -> dict:
    cfg = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in DEFAULTS:
            raise UsageError(f"{path}:{n}: unknown key {key!r}")
        cfg[key] = val
    return cfg


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, config file and flags (flags win)."""
    vals = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    cfg = read_config(args.config) if args.config else {}
    out = {}
    for key in vals:
        if vals[key] is not None:
            out[key] = vals[key]
        elif key in cfg:
            out[key] = cfg[key]
        else:
            out[key] = DEFAULTS[key]
    return out


def _require(cfg: dict, *keys):
    for k in keys:
        if cfg.get(k) in (None, ""):
            raise UsageError(f"missing required option --{k.replace('_', '-')}")


def _float(cfg, key) -> float:
    try:
        v = float(cfg[key])
    except (TypeError, ValueError):
        raise UsageError(f"--{key.replace('_', '-')} must be a number") from None
    if not math.isfinite(v):
        raise UsageError(f"--{key.replace('_', '-')} must be finite")
    return v


def _int(cfg, key) -> int:
    try:
        return int(cfg[key])
    except (TypeError, ValueError):
        raise UsageError(f"--{key.replace('_', '-')} must be an integer") from None


def _positive(cfg, key) -> float:
    v = _float(cfg, key)
    if v <= 0:
        raise UsageError(f"--{key.replace('_', '-')} must be positive")
    return v


def parse_q_list(text: str) -> list[int]:
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if ":" in part:
            a, b = part.split(":")
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    if not out or min(out) < 0:
        raise ValueError(f"bad q list {text!r}")
    return out


def parse_q_levels(text, order) -> dict:
    """'3' applies to every family; '00=4,10=2' sets families individually."""
    if text in (None, ""):
        return {}
    if "=" not in text:
        q = int(text)
        return {w: q for w in truncated_families(order)}
    out = {}
    for part in text.split(","):
        w, q = part.split("=")
        out[parse_weights(w)] = int(q)
    return out


def parse_weight_list(text) -> list[tuple[int, ...]]:
    if text in (None, "", "all"):
        return list(SCHEME_FAMILIES)
    return [parse_weights(w) for w in str(text).split(",")]


def _outdir(cfg, default: str) -> Path:
    path = Path(cfg["out"] or default)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _echo(path: Path, cfg: dict, command: str):
    lines = [f"command={command}"] + [f"{k}={v}" for k, v in sorted(cfg.items())
                                      if v is not None and k != "out"]
    (path / "config.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _summary(path: Path, doc: dict):
    (path / "summary.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# -- commands -----------------------------------------------------------------

def cmd_gen_coeffs(cfg: dict) -> int:
    _require(cfg, "weights", "q", "out")
    spec = IntegralSpec(parse_weights(cfg["weights"]))
    q = _int(cfg, "q")
    if q < 0:
        raise UsageError("--q must be nonnegative")
    tensor = build_tensor(spec, q, 1.0)
    out = Path(cfg["out"])
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    export_table(tensor, out)
    print(f"wrote {tensor.extent} entries for ({spec.label}) q={q} to {out}")
    return EXIT_OK


def _distinct(w) -> IntegralSpec:
    return IntegralSpec(w, tuple(range(1, len(w) + 1)))


def cmd_errors(cfg: dict) -> int:
    _require(cfg, "delta")
    delta = _positive(cfg, "delta")
    c_target = _positive(cfg, "c_target")
    fams = parse_weight_list(cfg["weights"])
    qs = parse_q_list(cfg["q"] or "0:6")
    out = _outdir(cfg, "errors_out")
    thr = threshold(delta, c_target)
    rows = []
    for w in fams:
        spec = _distinct(w)
        for q in qs:
            r = error_report(spec, q, delta)
            mc = r.mc_estimate or (None, None)
            rows.append([spec.label, q, _fmt(r.exact_error), _fmt(r.upper_bound),
                         _fmt(mc[0]), _fmt(mc[1]), r.method])
    _write_csv(out / "errors.csv",
               ["family", "q", "exact", "bound", "mc_mean", "mc_se", "method"], rows)
    sel_rows, selected = [], {}
    for w in fams:
        spec = _distinct(w)
        try:
            r = select_q_report(spec, delta, c_target)
            sel_rows.append([spec.label, r.q, _fmt(thr), _fmt(r.value), r.method])
            selected[spec.label] = r.q
        except QSelectionError as exc:
            sel_rows.append([spec.label, "", _fmt(thr), "", f"unreached: {exc}"])
            selected[spec.label] = None
    _write_csv(out / "selection.csv", ["family", "q", "threshold", "error", "method"], sel_rows)
    _echo(out, cfg, "errors")
    _summary(out, {"command": "errors", "delta": delta, "c_target": c_target,
                   "threshold": thr, "selected_q": selected})
    print(f"wrote {len(rows)} error rows and {len(sel_rows)} selections to {out}")
    return EXIT_OK


def _scheme_setup(cfg: dict):
    _require(cfg, "problem")
    try:
        problem = get_problem(cfg["problem"])
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from None
    order = _float(cfg, "order")
    try:
        q_levels = parse_q_levels(cfg["q"], order)
    except ValueError:
        raise UsageError(f"bad --q value {cfg['q']!r}") from None
    return problem, order, q_levels


def _threads(cfg) -> int:
    return _int(cfg, "threads") if cfg["threads"] else (os.cpu_count() or 1)


def cmd_simulate(cfg: dict) -> int:
    _require(cfg, "problem", "delta")
    problem, order, q_levels = _scheme_setup(cfg)
    delta = _positive(cfg, "delta")
    config = SchemeConfig(order, delta, q_levels, _int(cfg, "seed"), _positive(cfg, "c_target"))
    n_paths = _int(cfg, "paths") if cfg["paths"] else 1
    t_end = _positive(cfg, "t_end")
    out = _outdir(cfg, "simulate_out")
    trajs = simulate(problem, config, problem.x0, t_end, n_paths, threads=_threads(cfg))
    header = ["path", "time"] + [f"x{i + 1}" for i in range(problem.n)]
    rows = []
    for tr in trajs:
        for t, x in zip(tr.times, tr.states):
            rows.append([tr.path, repr(float(t))] + [repr(float(v)) for v in x])
    _write_csv(out / "trajectories.csv", header, rows)
    blown = [tr.path for tr in trajs if tr.blown_up]
    q_used = config.resolved_q_levels(problem.m)
    _echo(out, cfg, "simulate")
    _summary(out, {"command": "simulate", "problem": problem.name, "order": order,
                   "delta": delta, "paths": n_paths, "blown_up": blown,
                   "q_levels": {"".join(map(str, w)): q for w, q in sorted(q_used.items())}})
    print(f"wrote {len(trajs)} trajectories to {out}")
    if blown:
        print(f"blow-up on paths {blown}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_converge(cfg: dict) -> int:
    problem, order, q_levels = _scheme_setup(cfg)
    try:
        deltas = [float(d) for d in (cfg["delta"] or DEFAULT_CONVERGE_DELTAS).split(",")]
    except ValueError:
        raise UsageError("--delta must be a comma list of numbers") from None
    if len(deltas) < 3 or min(deltas) <= 0:
        raise UsageError("converge needs at least three positive step sizes")
    n_paths = _int(cfg, "paths") if cfg["paths"] else 1000
    template = SchemeConfig(order, deltas[0], q_levels, _int(cfg, "seed"),
                            _positive(cfg, "c_target"))
    rep = strong_order_experiment(problem, template, deltas, n_paths, _int(cfg, "seed"),
                                  T_end=_positive(cfg, "t_end"), threads=_threads(cfg))
    out = _outdir(cfg, "converge_out")
    _write_csv(out / "convergence.csv", ["delta", "rms_error"],
               [[repr(d), repr(e)] for d, e in zip(rep.deltas, rep.rms_errors)])
    status = rep.status
    if cfg["min_order"] and rep.status == "ok" and rep.fitted_order < _float(cfg, "min_order"):
        status = "fail"
    _echo(out, cfg, "converge")
    _summary(out, {"command": "converge", "problem": problem.name, "order": order,
                   "fitted_order": rep.fitted_order, "r_squared": rep.r_squared,
                   "status": status, "n_paths": n_paths, "deltas": rep.deltas,
                   "rms_errors": rep.rms_errors})
    slope = "undefined" if rep.fitted_order is None else f"{rep.fitted_order:.4f}"
    print(f"fitted order {slope} ({status})")
    return EXIT_CHECK if status == "fail" else EXIT_OK


FORMULA_SPECS = (
    IntegralSpec((0, 0), (1, 2)),
    IntegralSpec((1, 0), (1, 2)),
    IntegralSpec((0, 1), (1, 2)),
    IntegralSpec((1, 0), (1, 1)),
    IntegralSpec((0, 1), (1, 1)),
)


def cmd_validate(cfg: dict) -> int:
    out = _outdir(cfg, "validate_out")
    suite = cfg["suite"]
    if suite == "constants":
        rows = check_published_constants()
        _write_csv(out / "constants.csv",
                   ["family", "q", "computed", "published", "difference", "result"],
                   [["".join(map(str, r.weights)), r.q, repr(float(r.computed)),
                     repr(r.published), repr(r.difference), "PASS" if r.passed else "FAIL"]
                    for r in rows])
        ok = all(r.passed for r in rows)
        for r in rows:
            print(f"({''.join(map(str, r.weights))}) q={r.q}: {float(r.computed):.10f} vs "
                  f"{r.published:.8f} {'PASS' if r.passed else 'FAIL'}")
    elif suite == "formulas":
        n = _int(cfg, "samples")
        if n < MIN_VALIDATION_SAMPLES:
            raise UsageError(f"--samples must be at least {MIN_VALIDATION_SAMPLES}")
        delta = _positive(cfg, "delta") if cfg["delta"] else 1.0
        qs = parse_q_list(cfg["q"] or "0,2,6")
        rows = validate_error_formulas(FORMULA_SPECS, qs, delta, n, _int(cfg, "seed"))
        _write_csv(out / "formulas.csv",
                   ["spec", "q", "q_ref", "form", "expected", "mc_mean", "mc_se", "z", "result"],
                   [[str(r.spec), r.q, r.q_ref, r.form, repr(r.expected), repr(r.mc_mean),
                     repr(r.mc_se), repr(r.z), "PASS" if r.passed else "FAIL"] for r in rows])
        ok = all(r.passed for r in rows)
        for r in rows:
            print(f"{r.spec} q={r.q}: z={r.z:+.2f} {'PASS' if r.passed else 'FAIL'}")
    else:
        raise UsageError(f"unknown suite {suite!r}")
    _echo(out, cfg, "validate")
    _summary(out, {"command": "validate", "suite": suite, "passed": ok})
    return EXIT_OK if ok else EXIT_CHECK


COMMANDS = {
    "gen-coeffs": cmd_gen_coeffs,
    "errors": cmd_errors,
    "simulate": cmd_simulate,
    "converge": cmd_converge,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"stratint {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalFailure, FloatingPointError) as exc:
        print(f"stratint {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError, QSelectionError) as exc:
        print(f"stratint {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
