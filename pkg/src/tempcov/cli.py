"""Command line interface: ``tempcov {synth,fit,grid,eval,bench}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Every JSON output carries a ``version`` field.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import evaluation, experiments, synthetic, tcorex
from .dlr import invert
from .exceptions import (CorruptModel, DimensionError, DivergenceError, NotPositiveDefinite,
                         UnsupportedVersion, ZeroVariance)
from .tcorex import FitConfig, TemporalDataset

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
OUTPUT_VERSION = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; we reserve 2 for data errors
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _dump(obj, out=None):
    obj = dict(obj, version=OUTPUT_VERSION)
    text = json.dumps(obj, indent=1)
    if out is None:
        print(text)
    else:
        with open(out, "w") as fh:
            fh.write(text + "\n")


def _load_data(path, split, window):
    """A scenario directory (uses ``split``) or a single CSV cut into windows."""
    if os.path.isdir(path):
        return synthetic.load_scenario(path).split(split)
    if window is None:
        raise UsageError("--window is required when the data are a single CSV file")
    return tcorex.window(synthetic.read_csv(path), window)


def _config(args, **extra) -> FitConfig:
    fields = dict(m=args.m, lam=args.lam, beta=args.beta, phi=args.phi, seed=args.seed,
                  adam_lr=args.lr, steps_per_round=args.steps)
    fields = {k: v for k, v in fields.items() if v is not None}
    fields.update(extra)
    return FitConfig(**fields)


# -- subcommands ---------------------------------------------------------------


def cmd_synth(args):
    scenario = synthetic.make_scenario(args.kind, args.p, args.m, args.s, args.T, args.seed)
    synthetic.export_scenario(scenario, args.out)
    print(f"wrote {args.kind} scenario (T={args.T}, p={args.p}) to {args.out}")


def cmd_fit(args):
    train = _load_data(args.data, "train", args.window)
    config = _config(args)
    log = {}
    model = tcorex.fit(train, config, log=log)
    tcorex.save_model(model, args.out, binary=args.binary)
    if args.log:
        _dump({"config": config.to_json(), "init": log["init"], "main": log["main"]}, args.log)
    print(f"wrote model (T={model.T}, p={model.p}, m={model.m}) to {args.out}")


def cmd_grid(args):
    if not os.path.isdir(args.data):
        raise UsageError("grid search needs a scenario directory with train/val splits")
    scenario = synthetic.load_scenario(args.data)
    if args.grid:
        with open(args.grid) as fh:
            grid = json.load(fh)
    else:
        grid = experiments.default_grid(scenario.params.get("kind", "sudden"))
    base = _config(args)
    results = experiments.grid_search(scenario.split("train"), scenario.split("val"), grid, base)
    best = experiments.select(results)
    test_report = evaluation.nll(best.model, scenario.split("test"))
    os.makedirs(args.out, exist_ok=True)
    _dump({"cells": [r.to_json() for r in results]},
          os.path.join(args.out, "leaderboard.json"))
    _dump({"selected": best.to_json(), "test_nll": test_report.mean_nll,
           "test_nll_per_period": test_report.nll.tolist()},
          os.path.join(args.out, "best.json"))
    tcorex.save_model(best.model, os.path.join(args.out, "best_model.json"))
    c = best.config
    print(f"best cell: lambda={c.lam:g} beta={c.beta:g} val NLL={best.val_nll:.4f} "
          f"test NLL={test_report.mean_nll:.4f}")


def _precision_edges(cov, threshold):
    """Off-diagonal precision entries with magnitude above ``threshold`` (1-based)."""
    prec = invert(cov)
    edges = []
    for i in range(prec.p):
        row = prec.sign * (prec.u[:, i] @ prec.u)
        row[i] = 0.0
        for k in np.flatnonzero(np.abs(row) > threshold):
            if k > i:
                edges.append([i + 1, int(k) + 1, float(row[k])])
    return edges


def _truth_model(path):
    """The scenario's ground-truth covariances wrapped as a raw-scale model."""
    if not os.path.isdir(path):
        raise UsageError("--truth needs a scenario directory")
    scenario = synthetic.load_scenario(path)
    T, p = scenario.T, scenario.p
    covs = scenario.truth
    m = max(1, max(c.m for c in covs))
    return tcorex.TCorexModel(np.zeros((T, m, p)), covs, np.zeros((T, p)), np.ones((T, p)),
                              FitConfig(m=m))


def cmd_eval(args):
    if (args.model is None) == (not args.truth):
        raise UsageError("give exactly one of --model and --truth")
    model = _truth_model(args.data) if args.truth else tcorex.load_model(args.model)
    test = _load_data(args.data, args.split, args.window)
    report = evaluation.nll(model, test)
    truth_path = os.path.join(args.data, "truth", "labels.csv") if os.path.isdir(args.data) else None
    if truth_path and os.path.exists(truth_path):
        labels = synthetic.read_csv(truth_path).astype(np.int64) - 1
        report.ari = evaluation.time_averaged_ari(model, labels)
    if args.changepoints:
        report.changepoints = evaluation.changepoint_scores(model)
    out = report.to_json()
    if args.threshold is not None:
        out["precision_edges"] = [_precision_edges(c, args.threshold) for c in model.covariances]
    _dump(out, args.out)
    if args.changepoints:
        # boundary k separates periods k and k + 1 (1-based)
        lines = ["# boundary score"] + [f"{t + 1} {s:.10g}" for t, s in enumerate(report.changepoints)]
        text = "\n".join(lines) + "\n"
        if args.out:
            with open(os.path.splitext(args.out)[0] + ".changepoints.txt", "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)


def cmd_bench(args):
    rows = []
    for p in args.p:
        per_step, total = experiments.time_steps(p, m=args.m, T=args.T, s=args.s,
                                                 steps=args.steps, seed=args.seed)
        rows.append((p, per_step, total))
    slope = experiments.scaling_slope([r[0] for r in rows], [r[1] for r in rows]) \
        if len(rows) > 1 else float("nan")
    print(f"{'p':>8} {'sec/step':>12} {'total':>10}")
    for p, per_step, total in rows:
        print(f"{p:>8d} {per_step:>12.6f} {total:>10.3f}")
    print(f"# log-log slope {slope:.3f}")
    if args.out:
        _dump({"rows": [{"p": p, "seconds_per_step": s, "seconds": t} for p, s, t in rows],
               "slope": slope, "m": args.m, "T": args.T, "s": args.s}, args.out)


# -- parser --------------------------------------------------------------------


def _add_fit_flags(p):
    p.add_argument("--m", type=int, default=8, help="number of latent factors")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="temporal regularization strength")
    p.add_argument("--beta", type=float, default=None, help="sample-weight decay")
    p.add_argument("--phi", choices=["l1", "l2"], default=None, help="temporal penalty")
    p.add_argument("--steps", type=int, default=None, help="Adam steps per annealing round")
    p.add_argument("--lr", type=float, default=None, help="Adam learning rate")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--window", type=int, default=None,
                   help="samples per period when the data are one CSV file")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tempcov",
                     description="Estimate time-varying covariance matrices with T-CorEx.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic scenario directory")
    p.add_argument("--kind", choices=["sudden", "smooth"], required=True)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--s", type=int, required=True, help="training samples per period")
    p.add_argument("--T", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="fit T-CorEx")
    p.add_argument("--data", required=True, help="scenario directory or CSV file")
    _add_fit_flags(p)
    p.add_argument("--out", required=True, help="model JSON path")
    p.add_argument("--binary", action="store_true", help="store arrays in a binary sidecar")
    p.add_argument("--log", default=None, help="write the per-step fit log here")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("grid", help="grid search selected by validation NLL")
    p.add_argument("--data", required=True, help="scenario directory")
    p.add_argument("--grid", default=None, help="JSON grid (keys lambda, beta, m, phi)")
    _add_fit_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("eval", help="evaluate a fitted model")
    p.add_argument("--model", default=None, help="fitted model JSON")
    p.add_argument("--truth", action="store_true",
                   help="evaluate the scenario's ground-truth covariances instead of a model")
    p.add_argument("--data", required=True, help="scenario directory or CSV file")
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--changepoints", action="store_true", help="also score period boundaries")
    p.add_argument("--threshold", type=float, default=None,
                   help="export off-diagonal precision entries above this magnitude")
    p.add_argument("--out", default=None, help="report JSON path (default stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="time optimizer steps against dimension")
    p.add_argument("--p", type=int, nargs="+", default=[512, 1024, 2048, 4096])
    p.add_argument("--m", type=int, default=64)
    p.add_argument("--T", type=int, default=10)
    p.add_argument("--s", type=int, default=16)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        print(f"tempcov: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DivergenceError, NotPositiveDefinite, FloatingPointError) as exc:
        print(f"tempcov: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, CorruptModel, UnsupportedVersion, ZeroVariance, DimensionError,
            ValueError, KeyError) as exc:
        print(f"tempcov: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
