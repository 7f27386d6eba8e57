"""Command-line driver: solve, sweep, probe, validate and fit."""

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import asdict

import numpy as np

from . import __version__
from .asymptotics import (
    CSV_COLUMNS,
    escape_probe,
    make_record,
    sweep_analysis,
)
from .energy_model import constrained_residual, energy_of_samples, identity_report
from .errors import (
    BumpCountError,
    FitDivergedError,
    InsufficientDataError,
    InvalidArgumentError,
    NonConvergenceError,
    StagnationError,
)
from .ground_solver import (
    GroundState,
    SolverConfig,
    continue_sweep,
    eigen_crosscheck,
    gauge_fix,
    relax,
)
from .grid_core import build_grid
from .profile_fit import fit_decomposition

SCHEMA_VERSION = "1"
EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _clean(obj):
    """Replace non-finite floats by None and numpy scalars by Python numbers."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _fmt(v):
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    return format(v, ".17g") if math.isfinite(v) else "nan"


def write_json(path, record):
    record = {"schema_version": SCHEMA_VERSION, **_clean(record)}
    with open(path, "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def write_svg(path, series, title, xlabel, ylabel, width=480, height=320):
    """Self-contained line chart; ``series`` maps label -> (xs, ys)."""
    pts = [(x, y) for xs, ys in series.values() for x, y in zip(xs, ys)
           if math.isfinite(x) and math.isfinite(y)]
    if not pts:
        return None
    x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
    y0, y1 = min(p[1] for p in pts), max(p[1] for p in pts)
    x1, y1 = (x1 if x1 > x0 else x0 + 1), (y1 if y1 > y0 else y0 + 1)
    m = 50

    def sx(x):
        return m + (x - x0) / (x1 - x0) * (width - 2 * m)

    def sy(y):
        return height - m - (y - y0) / (y1 - y0) * (height - 2 * m)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           f'<text x="{width / 2}" y="20" text-anchor="middle">{title}</text>',
           f'<text x="{width / 2}" y="{height - 10}" text-anchor="middle">{xlabel}</text>',
           f'<text x="12" y="{height / 2}" transform="rotate(-90 12 {height / 2})" '
           f'text-anchor="middle">{ylabel}</text>',
           f'<rect x="{m}" y="{m}" width="{width - 2 * m}" height="{height - 2 * m}" '
           'fill="none" stroke="#888"/>']
    for k, (label, (xs, ys)) in enumerate(series.items()):
        c = colors[k % len(colors)]
        poly = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys)
                        if math.isfinite(x) and math.isfinite(y))
        out.append(f'<polyline fill="none" stroke="{c}" points="{poly}"/>')
        out.append(f'<text x="{m + 5}" y="{m + 15 + 15 * k}" fill="{c}">{label}</text>')
    out.append(f'<text x="{m}" y="{height - m + 15}">{x0:.4g}</text>')
    out.append(f'<text x="{width - m}" y="{height - m + 15}" text-anchor="end">{x1:.4g}</text>')
    out.append(f'<text x="{m - 5}" y="{height - m}" text-anchor="end">{y0:.4g}</text>')
    out.append(f'<text x="{m - 5}" y="{m + 5}" text-anchor="end">{y1:.4g}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
    return path


def write_manifest(out_dir, command, config, outputs):
    snapshot = json.dumps(_clean(config), sort_keys=True)
    manifest = {
        "command": command,
        "config": json.loads(snapshot),
        "tool_version": __version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "input_hash": hashlib.sha256(snapshot.encode()).hexdigest(),
        "outputs": [os.path.basename(p) for p in outputs if p],
    }
    return write_json(os.path.join(out_dir, "manifest.json"), manifest)


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError("config file must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in data.items()}


def _merge(defaults, args):
    """defaults < config file < explicit flags."""
    merged = dict(defaults)
    cfg = _load_config(getattr(args, "config", None))
    unknown = set(cfg) - set(defaults)
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    merged.update(cfg)
    for k in defaults:
        v = getattr(args, k, None)
        if v is not None:
            merged[k] = v
    return merged


def _fit_summary(gs):
    try:
        fit = fit_decomposition(gs)
    except (BumpCountError, FitDivergedError) as exc:
        return None, None, str(exc)
    return fit, make_record(gs, fit), None


def state_record(gs, fit, rec, fit_error=None):
    idr = identity_report(gs)
    record = {
        "p": gs.p, "L": gs.grid.L, "h": gs.grid.h, "n_points": gs.grid.n_points,
        "energy": {"E": gs.split.E, "T": gs.split.T, "P": gs.split.P},
        "mu1": gs.mu1, "mu2": gs.mu2, "residual_sup": gs.residual_sup,
        "iterations": gs.iterations, "converged": gs.converged, "flags": list(gs.flags),
        "identities": asdict(idr),
    }
    if gs.orbitals == 2 and gs.converged:
        record["eigen_crosscheck"] = asdict(eigen_crosscheck(gs))
    if fit is not None:
        record["fit"] = {"a": fit.a, "b": fit.b, "delta": fit.delta, "eta": fit.eta,
                         "xn": fit.xn, "Kn": fit.Kn, "phi_sup": fit.phi_sup,
                         "psi_sup": fit.psi_sup, "phi_hat_sup": fit.phi_hat_sup,
                         "psi_hat_sup": fit.psi_hat_sup, "F_value": fit.F_value}
        record["deviations"] = {"xn_dev": rec.xn_dev, "dmu_dev": rec.dmu_dev,
                                "Kn_dev": rec.Kn_dev, "xn_pred": rec.xn_pred,
                                "dmu_pred": rec.dmu_pred, "Kn_pred": rec.Kn_pred}
    else:
        record["fit"] = None
        if fit_error:
            record["fit_error"] = fit_error
    return record


def orbital_rows(gs):
    U = gs.U if gs.orbitals == 2 else np.vstack([gs.U, np.zeros_like(gs.U)])
    return zip(gs.grid.x, U[0], U[1], gs.rho)


SOLVE_DEFAULTS = {"p": None, "L": None, "h": 0.05, "tol": 1e-8, "tau": 0.5, "scheme": "pcg",
                  "xn_seed": None, "max_iterations": 200000, "orbitals": 2, "out_dir": "out",
                  "json": None, "csv": None}


def cmd_solve(args):
    opts = _merge(SOLVE_DEFAULTS, args)
    if opts["p"] is None:
        raise UsageError("--p is required")
    try:
        cfg = SolverConfig(p=opts["p"], L=opts["L"], h=opts["h"], tol=opts["tol"],
                           tau=opts["tau"], scheme=opts["scheme"], xn_seed=opts["xn_seed"],
                           max_iterations=opts["max_iterations"], orbitals=opts["orbitals"])
        cfg.grid()
    except InvalidArgumentError as exc:
        raise UsageError(str(exc)) from exc
    os.makedirs(opts["out_dir"], exist_ok=True)
    both = not opts["json"] and not opts["csv"]
    code = EXIT_OK
    try:
        gs = relax(cfg)
    except (NonConvergenceError, StagnationError) as exc:
        print(f"solve: {exc}", file=sys.stderr)
        gs = gauge_fix(exc.state, tol=cfg.tol)
        code = EXIT_NUMERIC
    fit, rec, fit_error = (None, None, None)
    if gs.orbitals == 2 and gs.converged:
        fit, rec, fit_error = _fit_summary(gs)
    outputs = []
    if both or opts["json"]:
        outputs.append(write_json(os.path.join(opts["out_dir"], "state.json"),
                                  state_record(gs, fit, rec, fit_error)))
    if both or opts["csv"]:
        outputs.append(write_csv(os.path.join(opts["out_dir"], "orbitals.csv"),
                                 ("x", "u1", "u2", "rho"), orbital_rows(gs)))
    write_manifest(opts["out_dir"], "solve", opts, outputs)
    print(f"p={gs.p} E={gs.split.E:.12g} mu=({gs.mu1:.10g}, {gs.mu2}) "
          f"residual={gs.residual_sup:.3e} iterations={gs.iterations}")
    return code


SWEEP_DEFAULTS = {"p_min": None, "p_max": None, "steps": None, "h": 0.05, "tol": 1e-8,
                  "parallel": None, "continuation": None, "svg": None, "out_dir": "out"}


def sweep_values(p_min, p_max, steps):
    if steps is None or steps < 1:
        raise UsageError("--steps must be a positive integer")
    if p_min is None or p_max is None:
        raise UsageError("--p-min and --p-max are required")
    if not 1.5 < p_min <= p_max < 2:
        raise UsageError("need 1.5 < p-min <= p-max < 2")
    if steps == 1:
        return [float(p_min)]
    return [round(float(v), 12) for v in np.linspace(p_min, p_max, steps)]


def cmd_sweep(args):
    opts = _merge(SWEEP_DEFAULTS, args)
    ps = sweep_values(opts["p_min"], opts["p_max"], opts["steps"])
    if opts["parallel"] and opts["continuation"]:
        raise UsageError("--continuation is sequential and cannot be combined with --parallel")
    os.makedirs(opts["out_dir"], exist_ok=True)
    base = SolverConfig(p=ps[0], h=opts["h"], tol=opts["tol"])
    run = continue_sweep(ps, base, warm_start=bool(opts["continuation"]),
                         parallel=bool(opts["parallel"]))
    records, failures = [], list(run.failures)
    for gs in run.states:
        fit, rec, err = _fit_summary(gs)
        if rec is None:
            failures.append((gs.p, err))
        else:
            records.append(rec)
    records.sort(key=lambda r: r.p)
    out = os.path.join
    d = opts["out_dir"]
    outputs = [write_csv(out(d, "sweep.csv"), CSV_COLUMNS,
                         ([getattr(r, c) for c in CSV_COLUMNS] for r in records))]
    try:
        report = sweep_analysis(records).as_dict()
    except InsufficientDataError as exc:
        report = {"error": str(exc)}
    report["failed_p"] = [{"p": p, "reason": msg} for p, msg in sorted(failures)]
    report["converged"] = len(records)
    report["requested"] = len(ps)
    outputs.append(write_json(out(d, "regression.json"), report))
    inv = [(2 - r.p) ** -0.5 for r in records]
    outputs.append(write_csv(out(d, "plot_xn_law.csv"), ("inv_sqrt_2_minus_p", "xn", "xn_pred"),
                             ((a, r.xn, r.xn_pred) for a, r in zip(inv, records))))
    outputs.append(write_csv(out(d, "plot_s_trend.csv"), ("p", "s", "limit"),
                             ((r.p, (2 - r.p) * r.xn ** 2, 48.0) for r in records)))
    outputs.append(write_csv(out(d, "plot_dmu.csv"), ("p", "dmu", "dmu_pred"),
                             ((r.p, r.mu2 - r.mu1, r.dmu_pred) for r in records)))
    if opts["svg"] and records:
        ps_r = [r.p for r in records]
        outputs.append(write_svg(out(d, "xn_law.svg"),
                                 {"measured": (inv, [r.xn for r in records]),
                                  "law": (inv, [r.xn_pred for r in records])},
                                 "bump distance", "(2-p)^(-1/2)", "xn"))
        outputs.append(write_svg(out(d, "s_trend.svg"),
                                 {"(2-p)xn^2": (ps_r, [(2 - r.p) * r.xn ** 2 for r in records]),
                                  "48": (ps_r, [48.0] * len(ps_r))}, "(2-p) xn^2", "p", "s"))
        outputs.append(write_svg(out(d, "dmu.svg"),
                                 {"measured": (ps_r, [r.mu2 - r.mu1 for r in records]),
                                  "predicted": (ps_r, [r.dmu_pred for r in records])},
                                 "mu2 - mu1", "p", "dmu"))
    write_manifest(d, "sweep", opts, outputs)
    print(f"converged {len(records)}/{len(ps)}; gamma={report.get('gamma')}")
    return EXIT_OK if len(records) >= 0.75 * len(ps) else EXIT_NUMERIC


PROBE_DEFAULTS = {"p": None, "L_list": None, "h": 0.05, "tol": 1e-8, "parallel": None,
                  "out_dir": "out"}


def cmd_probe(args):
    opts = _merge(PROBE_DEFAULTS, args)
    p = opts["p"]
    if p is None or opts["L_list"] is None:
        raise UsageError("--p and --L-list are required")
    if not 1.5 < p <= 2.1:
        raise UsageError("probe requires p in (1.5, 2.1]; use p > 2 to look for escape")
    try:
        Ls = [float(v) for v in str(opts["L_list"]).split(",") if v.strip()]
        verdict = escape_probe(p, Ls, h=opts["h"], tol=opts["tol"],
                               parallel=bool(opts["parallel"]))
    except (ValueError, InvalidArgumentError) as exc:
        raise UsageError(str(exc)) from exc
    os.makedirs(opts["out_dir"], exist_ok=True)
    d = opts["out_dir"]
    outputs = [write_json(os.path.join(d, "probe.json"), verdict.as_dict()),
               write_csv(os.path.join(d, "probe.csv"), ("L", "xn", "E", "gap", "seed"),
                         ((r.L, r.xn, r.E, r.gap, r.seed) for r in verdict.rows))]
    write_manifest(d, "probe", opts, outputs)
    print(f"verdict: {verdict.verdict}")
    return EXIT_OK


def cmd_validate(args):
    from .validation import run_checks

    results = run_checks(quick=args.quick, fault=args.inject_fault)
    width = max(len(r[0]) for r in results)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {detail}")
    failed = sum(1 for r in results if not r[1])
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_USAGE


def load_state(state_path, orbitals_path=None):
    """Rebuild a gauge-fixed state from a state JSON and its orbital CSV."""
    with open(state_path) as fh:
        meta = json.load(fh)
    orbitals_path = orbitals_path or os.path.join(os.path.dirname(state_path), "orbitals.csv")
    data = np.loadtxt(orbitals_path, delimiter=",", skiprows=1, ndmin=2)
    grid = build_grid(meta["L"], data.shape[0])
    U = data[:, 1:3].T.copy()
    p = meta["p"]
    G, M = constrained_residual(U, grid, p)
    gs = GroundState(grid, U, p, energy_of_samples(U, grid, p), M, np.linalg.eigvalsh(M),
                     float(np.max(np.abs(G))), meta.get("iterations", 0))
    return gauge_fix(gs)


def cmd_fit(args):
    if args.state is None:
        raise UsageError("--state is required")
    try:
        gs = load_state(args.state, args.orbitals)
    except (OSError, KeyError, ValueError) as exc:
        raise UsageError(f"cannot load state: {exc}") from exc
    fit, rec, err = _fit_summary(gs)
    out_dir = args.out_dir or os.path.dirname(args.state) or "."
    os.makedirs(out_dir, exist_ok=True)
    path = write_json(os.path.join(out_dir, "fit.json"), state_record(gs, fit, rec, err))
    write_manifest(out_dir, "fit", {"state": args.state, "orbitals": args.orbitals}, [path])
    if fit is None:
        print(f"fit failed: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"a={fit.a:.8f} b={fit.b:.8f} xn={fit.xn:.6f} Kn={fit.Kn:.6e}")
    return EXIT_OK


def build_parser():
    ap = _Parser(prog="fermionic-nls", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("solve", help="compute one ground state")
    s.add_argument("--p", type=float)
    s.add_argument("--L", type=float)
    s.add_argument("--h", type=float)
    s.add_argument("--tol", type=float)
    s.add_argument("--tau", type=float)
    s.add_argument("--scheme", choices=("pcg", "semi_implicit", "explicit"))
    s.add_argument("--xn-seed", type=float)
    s.add_argument("--max-iterations", type=int)
    s.add_argument("--orbitals", type=int, choices=(1, 2))
    s.add_argument("--out-dir")
    s.add_argument("--json", action="store_true", default=None, help="write state JSON")
    s.add_argument("--csv", action="store_true", default=None, help="write orbital CSV")
    s.add_argument("--config")
    s.set_defaults(func=cmd_solve)

    w = sub.add_parser("sweep", help="solve along p toward 2 and regress the limit laws")
    w.add_argument("--p-min", type=float)
    w.add_argument("--p-max", type=float)
    w.add_argument("--steps", type=int)
    w.add_argument("--h", type=float)
    w.add_argument("--tol", type=float)
    w.add_argument("--parallel", action="store_true", default=None)
    w.add_argument("--continuation", action="store_true", default=None)
    w.add_argument("--svg", action="store_true", default=None)
    w.add_argument("--out-dir")
    w.add_argument("--config")
    w.set_defaults(func=cmd_sweep)

    r = sub.add_parser("probe", help="bound-versus-escaping test on growing boxes")
    r.add_argument("--p", type=float)
    r.add_argument("--L-list", dest="L_list")
    r.add_argument("--h", type=float)
    r.add_argument("--tol", type=float)
    r.add_argument("--parallel", action="store_true", default=None)
    r.add_argument("--out-dir")
    r.add_argument("--config")
    r.set_defaults(func=cmd_probe)

    v = sub.add_parser("validate", help="run the built-in reference checks")
    v.add_argument("--quick", action="store_true")
    v.add_argument("--inject-fault", choices=("w_star_sign",), help=argparse.SUPPRESS)
    v.set_defaults(func=cmd_validate)

    f = sub.add_parser("fit", help="re-fit a stored state")
    f.add_argument("--state")
    f.add_argument("--orbitals")
    f.add_argument("--out-dir")
    f.set_defaults(func=cmd_fit)
    return ap


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required: solve, sweep, probe, validate or fit")
        return args.func(args)
    except UsageError as exc:
        print(f"fermionic-nls: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
