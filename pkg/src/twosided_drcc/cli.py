"""Batch command-line front end.

Every command writes its artifacts into ``--out`` together with a
``<command>.manifest.json`` recording the arguments, config snapshot, seed,
timings and output paths. CSV files are UTF-8 with a header row; their
schema versions are listed in the manifest under ``schemas``.

Exit codes: 0 success, 2 infeasible or unbounded model, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .grid import build_operators, bundled_case, load_case
from .opf import Dispatch, OpfConfig, assemble, estimate_moments, solve_opf
from .stochastics import TruthModel, mean_ci, oos_violation, sample
from .wdrcc import (
    RiskSpec,
    apx_bound,
    construct_points,
    eval_g,
    level_grid,
    solve_asymptotes,
)

log = logging.getLogger("twosided_drcc")

EXIT_OK, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 2, 3

SCHEMAS = {
    "trace_grid.csv": "trace-grid/1: ell,u,g",
    "trace_curve.csv": "trace-curve/1: delta,index,ell,u,g",
    "apxbd.csv": "apxbd/1: epsilon,delta,N,apx_bd,tau_sq_max,tail_upper,tail_lower",
    "oos.csv": "oos/1: seed,oos[,oos_baseline]; last row seed=mean then ci_lo, ci_hi rows",
    "study.csv": "study/1: seed,train_samples,delta,status_drc,cost_drc,oos_drc,status_cc,cost_cc,oos_cc",
}

CC_DELTA = 1e-6


class _Run:
    """Collects outputs and timings; writes the manifest on close."""

    def __init__(self, command, args, out):
        self.command = command
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.args = {k: v for k, v in vars(args).items() if k != "func"}
        self.timings = {}
        self.outputs = []
        self.config = None
        self.t0 = time.perf_counter()

    @property
    def manifest_name(self):
        return f"{self.command}.manifest.json"

    def path(self, name):
        p = self.out / name
        self.outputs.append(str(p))
        return p

    def timed(self, key, fn, *a, **kw):
        t = time.perf_counter()
        res = fn(*a, **kw)
        self.timings[key] = self.timings.get(key, 0.0) + time.perf_counter() - t
        return res

    def close(self, status="ok"):
        self.timings["total"] = time.perf_counter() - self.t0
        manifest = {
            "command": self.command,
            "version": __version__,
            "status": status,
            "arguments": self.args,
            "config": self.config,
            "seed": self.args.get("seed"),
            "timings_s": self.timings,
            "outputs": self.outputs,
            "schemas": {os.path.basename(o): SCHEMAS[os.path.basename(o)]
                        for o in self.outputs if os.path.basename(o) in SCHEMAS},
        }
        (self.out / self.manifest_name).write_text(json.dumps(manifest, indent=2, default=str))


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.12g}" if isinstance(v, float) else v for v in r])


def _floats(text):
    return [float(t) for t in str(text).split(",") if t.strip()]


def _ints(text):
    return [int(t) for t in str(text).split(",") if t.strip()]


# ---------------------------------------------------------------------------
# config / case resolution
# ---------------------------------------------------------------------------

def resolve_case(spec):
    p = Path(spec)
    if p.is_file():
        return load_case(p)
    return bundled_case(spec)


def bundled_config_path(case_name):
    from importlib import resources
    ref = resources.files(__package__).joinpath("data", f"{case_name}.json")
    return ref if ref.is_file() else None


def load_config(path, case_spec=None, **overrides) -> OpfConfig:
    if path is None and case_spec is not None:
        path = bundled_config_path(Path(case_spec).stem)
    if path is None:
        cfg = OpfConfig()
    else:
        path = Path(path) if isinstance(path, str) else path
        cfg = OpfConfig.from_json(path.read_text(encoding="utf-8"))
    kw = {k: v for k, v in overrides.items() if v is not None}
    return cfg.replace(**kw) if kw else cfg


def _setup(case_spec, cfg):
    net = resolve_case(case_spec)
    ops = build_operators(net, slack=None if cfg.slack_bus is None else net.bus_index(cfg.slack_bus))
    if not cfg.truth:
        raise ValueError("config has no 'truth' wind model")
    truth = TruthModel.from_dict(cfg.truth)
    return net, ops, truth, truth.fleet()


def _status_code(status):
    if status == "optimal":
        return EXIT_OK
    if status in ("infeasible", "unbounded"):
        return EXIT_INFEASIBLE
    return EXIT_NUMERICAL


def solve_pipeline(net, ops, truth, fleet, cfg, seed, delta=None, polys=None, timer=None):
    """Train on ``cfg.train_samples`` draws, assemble, solve. Returns ``(model, sol, dispatch)``."""
    timer = timer or (lambda key, fn, *a, **kw: fn(*a, **kw))
    if delta is not None:
        cfg = cfg.replace(delta=delta)
    train = timer("sample", sample, truth, cfg.train_samples, seed)
    moments = timer("moments", estimate_moments, train)
    model = timer("assemble", assemble, net, ops, fleet, moments, cfg, polys)
    sol, disp = timer("solve", solve_opf, model)
    return model, sol, disp


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_trace(args):
    run = _Run("trace", args, args.out)
    deltas = _floats(args.delta)
    eps = args.epsilon
    specs = [RiskSpec(eps, d) for d in deltas]
    lo = min(solve_asymptotes(s)[0] for s in specs)
    span = 2.0 * max(-lo, 1.0) + 1.0
    ells = np.linspace(-span, 0.0, args.grid)
    us = np.linspace(0.0, span, args.grid)
    G = run.timed("grid", level_grid, eps, ells, us)
    _write_csv(run.path("trace_grid.csv"), ["ell", "u", "g"],
               ((float(a), float(b), float(G[i, j])) for i, a in enumerate(ells) for j, b in enumerate(us)))
    rows = []
    for s in specs:
        poly = run.timed("curve", construct_points, s, args.pieces)
        for k, p in enumerate(poly.points):
            rows.append((s.delta, k, p.ell, p.u, eval_g(eps, p.ell, p.u)))
    _write_csv(run.path("trace_curve.csv"), ["delta", "index", "ell", "u", "g"], rows)
    run.close()
    return EXIT_OK


def apxbd_table(epsilons, deltas, pieces):
    rows = []
    for eps in epsilons:
        for delta in deltas:
            spec = RiskSpec(eps, delta)
            for n in pieces:
                b = apx_bound(spec, construct_points(spec, n))
                rows.append((eps, delta, n, b.bound, b.tau_sq_max, b.tail_upper, b.tail_lower))
    return rows


def cmd_apxbd(args):
    run = _Run("apxbd", args, args.out)
    rows = run.timed("table", apxbd_table, _floats(args.epsilon), _floats(args.delta), _ints(args.pieces))
    _write_csv(run.path("apxbd.csv"),
               ["epsilon", "delta", "N", "apx_bd", "tau_sq_max", "tail_upper", "tail_lower"], rows)
    if not args.quiet:
        for r in rows:
            print(f"eps={r[0]:<5g} delta={r[1]:<5g} N={r[2]:<3d} Apx-Bd={r[3]:.3f}")
    run.close()
    return EXIT_OK


def cmd_solve_opf(args):
    run = _Run("solve-opf", args, args.out)
    cfg = load_config(args.config, args.case, delta=args.delta, pieces=args.pieces,
                      eps_g=args.epsilon, eps_b=args.epsilon, train_samples=args.train)
    run.config = json.loads(cfg.to_json())
    net, ops, truth, fleet = run.timed("parse", _setup, args.case, cfg)
    _, sol, disp = solve_pipeline(net, ops, truth, fleet, cfg, args.seed, timer=run.timed)
    doc = json.loads(disp.to_json())
    doc["case"] = net.name
    doc["manifest"] = run.manifest_name
    run.path("dispatch.json").write_text(json.dumps(doc, indent=1))
    code = _status_code(sol.status)
    msg = (f"{net.name}: status={sol.status} objective={sol.objective_value:.6f} "
           f"residuals=({', '.join(f'{r:.2e}' for r in sol.kkt_residuals)}) "
           f"time={sum(run.timings.values()):.2f}s")
    print(msg, file=sys.stderr if code else sys.stdout)
    run.close(sol.status)
    return code


def _load_dispatch(path):
    return Dispatch.from_json(Path(path).read_text(encoding="utf-8"))


def cmd_oos(args):
    run = _Run("oos", args, args.out)
    cfg = load_config(args.config, args.case)
    run.config = json.loads(cfg.to_json())
    net, ops, truth, fleet = _setup(args.case, cfg)
    main = _load_dispatch(args.dispatch)
    base = _load_dispatch(args.baseline) if args.baseline else None
    seeds = _ints(args.seeds)
    rows = []
    for sd in seeds:
        xi = run.timed("sample", sample, truth, args.samples, sd)
        r = [sd, run.timed("evaluate", oos_violation, main, net, ops, fleet, xi, cfg)]
        if base is not None:
            r.append(oos_violation(base, net, ops, fleet, xi, cfg))
        rows.append(r)
    header = ["seed", "oos"] + (["oos_baseline"] if base is not None else [])
    cols = np.array([r[1:] for r in rows], dtype=float)
    stats = [mean_ci(cols[:, j]) for j in range(cols.shape[1])]
    for label, k in (("mean", 0), ("ci_lo", 1), ("ci_hi", 2)):
        rows.append([label] + [float(s[k]) for s in stats])
    _write_csv(run.path("oos.csv"), header, rows)
    run.close()
    return EXIT_OK


def cmd_study(args):
    """Robust vs non-robust over seeds and training sizes: solve, then evaluate."""
    run = _Run("study", args, args.out)
    cfg = load_config(args.config, args.case, delta=args.delta, pieces=args.pieces)
    run.config = json.loads(cfg.to_json())
    net, ops, truth, fleet = _setup(args.case, cfg)
    rows = []
    worst = EXIT_OK
    for m in _ints(args.train):
        for sd in _ints(args.seeds):
            c = cfg.replace(train_samples=m)
            xi = sample(truth, args.samples, 10_000 + sd)
            rec = [sd, m, c.delta]
            for delta in (c.delta, CC_DELTA):
                _, sol, disp = solve_pipeline(net, ops, truth, fleet, c, sd, delta=delta, timer=run.timed)
                oos = oos_violation(disp, net, ops, fleet, xi, c) if sol.optimal else float("nan")
                rec += [sol.status, float(sol.objective_value), oos]
                worst = max(worst, _status_code(sol.status))
            rows.append(rec)
            if not args.quiet:
                print(f"M={m:<4d} seed={sd:<3d} robust oos={rec[5]:.4f} baseline oos={rec[8]:.4f}")
    _write_csv(run.path("study.csv"),
               ["seed", "train_samples", "delta", "status_drc", "cost_drc", "oos_drc",
                "status_cc", "cost_cc", "oos_cc"], rows)
    run.close()
    return worst


# ---------------------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="twosided-drcc", description=__doc__.split("\n\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("trace", help="g on a grid plus level-curve points")
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--delta", default="0.02,0.05,0.08", help="comma-separated radii")
    p.add_argument("--grid", type=int, default=81, help="grid points per axis")
    p.add_argument("--pieces", type=int, default=29)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("apxbd", help="approximation-bound table")
    p.add_argument("--epsilon", default="0.01,0.05")
    p.add_argument("--delta", default="0.01,0.05,0.1")
    p.add_argument("--pieces", default="3,5,9,19,29")
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_apxbd)

    p = sub.add_parser("solve-opf", help="train, assemble and solve the robust OPF")
    p.add_argument("--case", required=True, help="case file or bundled name (case30, case39, case118)")
    p.add_argument("--config", help="OpfConfig JSON (default: bundled config of the case)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--pieces", type=int)
    p.add_argument("--train", type=int, help="training sample count M")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_solve_opf)

    p = sub.add_parser("oos", help="out-of-sample success of a saved dispatch")
    p.add_argument("--dispatch", required=True)
    p.add_argument("--baseline", help="second dispatch evaluated on the same samples")
    p.add_argument("--case", required=True)
    p.add_argument("--config")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--seed", type=int, help=argparse.SUPPRESS)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_oos)

    p = sub.add_parser("study", help="robust vs non-robust OOS over seeds and training sizes")
    p.add_argument("--case", default="case118")
    p.add_argument("--config")
    p.add_argument("--delta", type=float)
    p.add_argument("--pieces", type=int)
    p.add_argument("--train", default="100")
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--seed", type=int, help=argparse.SUPPRESS)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_study)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (RuntimeError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
