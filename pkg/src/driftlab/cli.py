"""Command line front end.

Subcommands: run, verify-theorems, fit, relufy, plot-data. Configs are TOML
or JSON files; dotted --override key=value flags patch them after loading.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import tomli

from .analysis import fit_power_law, r_squared
from .errors import FormatError
from .harness import (ExperimentConfig, aggregate_metrics, default_config,
                      emit_metrics, emit_points, read_metrics_csv,
                      run_experiment)
from . import theory


def load_config(path: str) -> dict:
    ext = os.path.splitext(path)[1].lower()
    with open(path, "rb") as fh:
        raw = fh.read()
    if ext == ".toml":
        return tomli.loads(raw.decode())
    if ext == ".json":
        return json.loads(raw.decode())
    try:
        return json.loads(raw.decode())
    except json.JSONDecodeError:
        try:
            return tomli.loads(raw.decode())
        except tomli.TOMLDecodeError:
            raise FormatError(f"{path}: neither valid JSON nor TOML")


def parse_override(text: str):
    if "=" not in text:
        raise ValueError(f"override {text!r} must look like key.path=value")
    key, _, value = text.partition("=")
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value  # bare strings stay strings
    return key.strip(), parsed


def apply_overrides(cfg: dict, overrides) -> dict:
    for text in overrides or []:
        key, value = parse_override(text)
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ValueError(f"override {key!r} descends into a non-table")
        node[parts[-1]] = value
    return cfg


def _build_config(args) -> ExperimentConfig:
    if args.config:
        raw = load_config(args.config)
    elif getattr(args, "experiment", None):
        raw = default_config(args.experiment)
    else:
        raise SystemExit("need --config or --experiment")
    if getattr(args, "experiment", None):
        raw["experiment"] = args.experiment
    raw = apply_overrides(raw, args.override)
    if args.seeds:
        raw["seeds"] = [int(s) for s in args.seeds.split(",") if s]
    return ExperimentConfig.from_dict(raw)


def _emit_result(result, out_dir: str) -> list:
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for label, log in result.logs:
        name = f"metrics_{label}.csv" if label else "metrics.csv"
        path = os.path.join(out_dir, name)
        sidecar = emit_metrics(log, path)
        written.extend([path, sidecar])
    if result.points is not None:
        path = os.path.join(out_dir, "points.csv")
        emit_points(result.points, path)
        written.append(path)
    if result.report is not None:
        path = os.path.join(out_dir, "report.json")
        with open(path, "w") as fh:
            json.dump(result.report, fh, sort_keys=True, indent=2)
            fh.write("\n")
        written.append(path)
    return written


def cmd_run(args) -> int:
    cfg = _build_config(args)
    result = run_experiment(cfg)
    for path in _emit_result(result, args.out):
        print(f"wrote {path}")
    for label, log in result.logs:
        if log.diverged:
            print(f"diverged seeds{f' [{label}]' if label else ''}: {log.diverged}")
    if result.report is not None and not result.report.get("all_pass", True):
        return 1
    return 0


def cmd_relufy(args) -> int:
    if not args.config and not args.experiment:
        args.experiment = "relufication"
    cfg = _build_config(args)
    if cfg.experiment != "relufication":
        raise SystemExit("relufy drives the relufication experiment; "
                         f"config says {cfg.experiment!r}")
    if args.to:
        cfg = cfg.with_updates(relufy_to=args.to)
    result = run_experiment(cfg)
    for path in _emit_result(result, args.out):
        print(f"wrote {path}")
    _, log = result.logs[0]
    for seed, final in log.final.items():
        base = final["baseline"].get("accuracy")
        conv = final["converted"].get("accuracy")
        tuned = final["finetuned"].get("accuracy")
        print(f"seed {seed}: accuracy {base:.4f} -> {conv:.4f} -> {tuned:.4f} "
              f"(sparsity {final['finetuned_profile']['sparsity']:.3f})")
    return 0


def cmd_verify_theorems(args) -> int:
    report = theory.verification_report(seed=args.seed, n=args.n)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "report.json")
    with open(path, "w") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
        fh.write("\n")
    for check in report["checks"]:
        status = "pass" if check["pass"] else "FAIL"
        print(f"{status}  {check['name']}")
    print(f"wrote {path}")
    return 0 if report["all_pass"] else 1


def read_points_csv(path: str):
    s, a = [], []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header is None or [h.strip() for h in header[:2]] != ["s", "a"]:
            raise FormatError(f"{path}: expected header s,a")
        for row in r:
            s.append(float(row[0]))
            a.append(float(row[1]))
    return s, a


def cmd_fit(args) -> int:
    s, a = read_points_csv(args.points)
    fit = fit_power_law(s, a)
    payload = {
        "A": fit.A, "B": fit.B, "N": fit.N,
        "r2": r_squared(a, fit.predict(s)),
        "iterations": fit.iterations, "converged": fit.converged,
    }
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "fit.json")
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(f"A={fit.A:.6g} B={fit.B:.6g} N={fit.N:.6g} r2={payload['r2']:.6g}")
    print(f"wrote {path}")
    return 0


def cmd_plot_data(args) -> int:
    rows = read_metrics_csv(args.metrics)
    agg = aggregate_metrics(rows)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "aggregate.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("step", "layer", "metric", "mean", "std", "n"))
        for step, layer, metric, mean, std, n in agg:
            w.writerow((step, layer, metric, repr(mean), repr(std), n))
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="driftlab",
                                description="training drift experiments")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default="runs/out"):
        sp.add_argument("--config", help="TOML or JSON experiment config")
        sp.add_argument("--experiment", help="named default config to start from")
        sp.add_argument("--out", default=out_default, help="output directory")
        sp.add_argument("--seeds", help="comma-separated seed list override")
        sp.add_argument("--override", action="append", default=[],
                        metavar="KEY=VALUE", help="dotted config override")

    sp = sub.add_parser("run", help="run an experiment")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("verify-theorems", help="Monte Carlo theorem checks")
    sp.add_argument("--seed", type=int, default=2)
    sp.add_argument("--n", type=int, default=10_000)
    sp.add_argument("--out", default="runs/theorems")
    sp.set_defaults(func=cmd_verify_theorems)

    sp = sub.add_parser("fit", help="fit a = A - B * s^N to sweep points")
    sp.add_argument("--points", required=True, help="CSV with header s,a")
    sp.add_argument("--out", default="runs/fit")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("relufy", help="train, swap activation, fine-tune")
    common(sp, out_default="runs/relufy")
    sp.add_argument("--to", help="target activation name")
    sp.set_defaults(func=cmd_relufy)

    sp = sub.add_parser("plot-data", help="aggregate a metrics CSV for plotting")
    sp.add_argument("--metrics", required=True)
    sp.add_argument("--out", default="runs/plot")
    sp.set_defaults(func=cmd_plot_data)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
