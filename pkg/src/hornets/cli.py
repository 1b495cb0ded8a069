"""Command-line front end: gen, train, eval, bench, rules.

Exit codes: 0 success, 2 usage or configuration error, 1 runtime error.
Progress goes to stderr; results go to stdout and files.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from .activations import ActivationKind
from .benchmark import (
    FULL_GRID,
    CsvFormatError,
    GridSpec,
    StratificationError,
    grid_search,
    load_csv,
    run_cv,
    save_csv,
    synthetic_suite,
)
from .datagen import DEFAULT_DIMS, GATES, GateSpec, generate_gate_dataset
from .layers import ConfigError
from .numeric import derive_seed
from .rules import UnsupportedRouteError, extract_rules
from .training import HorNetsConfig, TrainingError, fit, load_model, save_model

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _default_seed() -> int:
    raw = os.environ.get("HORNETS_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"HORNETS_SEED must be an integer, got {raw!r}") from None


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _gate_list(text: str) -> list[str]:
    gates = [g.strip().lower() for g in text.split(",") if g.strip()]
    bad = [g for g in gates if g not in GATES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown gate(s) {', '.join(bad)}; choose from {', '.join(GATES)}")
    return gates


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    d = HorNetsConfig()
    p.add_argument("--activation", choices=("polyclip", "relu"), default="polyclip")
    p.add_argument("--k", type=int, default=d.activation.k, help="polyClip exponent parameter")
    p.add_argument("--order", type=int, default=d.order)
    p.add_argument("--rules", type=int, default=d.num_rules, help="number of feature combinations")
    p.add_argument("--lr", type=float, default=d.learning_rate)
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--dropout", type=float, default=d.dropout_rate)
    p.add_argument("--resample-fraction", type=float, default=d.resample_fraction)
    p.add_argument("--patience", type=int, default=d.early_stop_patience)


def _config_from(args) -> HorNetsConfig:
    try:
        act = ActivationKind.relu() if args.activation == "relu" else ActivationKind.polyclip(args.k)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return HorNetsConfig(activation=act, order=args.order, num_rules=args.rules,
                         learning_rate=args.lr, batch_size=args.batch_size, epochs=args.epochs,
                         dropout_rate=args.dropout, resample_fraction=args.resample_fraction,
                         early_stop_patience=args.patience, seed=args.seed)


def _write_json(path, payload) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1, ensure_ascii=False)
        fh.write("\n")


# --- commands -----------------------------------------------------------------

def cmd_gen(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for rep in range(args.reps):
        seed = args.seed if args.reps == 1 else derive_seed(args.seed, rep)
        try:
            spec = GateSpec(args.gate, args.dim, args.count, seed)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        path = out / f"{spec.op}_d{spec.dim}_r{rep}.csv"
        save_csv(generate_gate_dataset(spec), path)
        print(path)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config_from(args)
    ds = load_csv(args.data)
    cfg.validate(ds.features.shape[1])
    model, report = fit(ds, cfg)
    save_model(model, args.model_out)
    report_path = args.report_out or str(args.model_out) + ".report.json"
    _write_json(report_path, report.to_dict())
    loss = report.losses[-1] if report.losses else float("nan")
    routes = ", ".join(f"{k}={v}" for k, v in sorted(report.route_counts.items()))
    print(f"final_loss\t{loss:.6f}")
    print(f"epochs\t{report.epochs_run}")
    print(f"routes\t{routes}")
    print(f"fitted_route\t{model.fitted_route.value if model.fitted_route else 'none'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ds = load_csv(args.data)
    if args.model:
        cfg = replace(load_model(args.model).config, seed=args.seed)
    else:
        cfg = _config_from(args)
    cfg.validate(ds.features.shape[1])
    _progress(f"evaluating {args.folds} folds x {args.seeds} seeds")
    report = run_cv(ds, cfg, args.folds, args.seeds, jobs=args.jobs)
    print(f"macro_f1\t{report.mean:.4f} ± {report.std:.4f}\t(n={len(report.scores)})")
    if args.report_out:
        _write_json(args.report_out, report.to_dict())
    return EXIT_OK


def _load_grid(path) -> GridSpec:
    if not path:
        return FULL_GRID
    with open(path, encoding="utf-8") as fh:
        try:
            return GridSpec.from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid grid file ({exc})") from None


def cmd_bench(args) -> int:
    grid = _load_grid(args.grid_file)
    print(f"grid_cells\t{len(grid)}")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = HorNetsConfig(seed=args.seed)
    if args.data:
        ds = load_csv(args.data)
        results = grid_search(ds, grid, args.folds, args.seeds, base=base, jobs=args.jobs)
        name = Path(args.data).stem
        table = [{"dataset": name, "rank": r.rank, "config": json.dumps(r.config.to_dict(), sort_keys=True),
                  "mean": r.report.mean, "std": r.report.std} for r in results]
        fields = ["dataset", "rank", "config", "mean", "std"]
        summary = {"dataset": name, "grid": grid.to_dict(),
                   "results": [r.report.to_dict(timing=False) for r in results]}
    else:
        rows = synthetic_suite(args.gates, args.dims, grid, args.reps, args.seed, args.count,
                               args.jobs, base, progress=_progress)
        table = [{"gate": r.gate, "dim": r.dim, "method": r.method, "mean": r.mean, "std": r.std}
                 for r in rows]
        fields = ["gate", "dim", "method", "mean", "std"]
        summary = {"grid": grid.to_dict(), "reps": args.reps, "seed": args.seed,
                   "rows": [vars(r) for r in rows]}
    with open(out / "results.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for row in table:
            w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})
    _write_json(out / "summary.json", summary)
    for row in table:
        print("\t".join(f"{row[k]:.4f}" if isinstance(row[k], float) else str(row[k])
                        for k in fields if k != "config"))
    return EXIT_OK


def cmd_rules(args) -> int:
    model = load_model(args.model)
    report = extract_rules(model, load_csv(args.data), args.top)
    sys.stdout.write(report.to_text())
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(report.to_json(), encoding="utf-8")
    return EXIT_OK


# --- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    seed = _default_seed()
    parser = argparse.ArgumentParser(prog="hornets", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate logic-gate datasets")
    p.add_argument("--gate", required=True, type=str.lower, choices=GATES)
    p.add_argument("--dim", required=True, type=int)
    p.add_argument("--count", type=int, default=128)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="fit a model on a CSV dataset")
    p.add_argument("--data", required=True)
    _add_model_flags(p)
    p.add_argument("--model-out", required=True)
    p.add_argument("--report-out", help="training report path (default: MODEL_OUT.report.json)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="stratified cross-validation")
    p.add_argument("--data", required=True)
    p.add_argument("--model", help="take the configuration from a saved model")
    _add_model_flags(p)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--report-out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="grid search on the synthetic suite or a CSV dataset")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--suite", choices=("synthetic",))
    src.add_argument("--data")
    p.add_argument("--gates", type=_gate_list, default=list(GATES))
    p.add_argument("--dims", type=_int_list, default=list(DEFAULT_DIMS))
    p.add_argument("--reps", type=int, default=30)
    p.add_argument("--count", type=int, default=128)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--grid-file", help="JSON grid (default: the full 600-cell grid)")
    p.add_argument("--out-dir", default="bench-out")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("rules", help="print the top-scored interactions as clauses")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--out")
    p.set_defaults(func=cmd_rules)

    for name, sp in sub.choices.items():
        sp.add_argument("--seed", type=int, default=seed, help="master seed (env HORNETS_SEED)")
    return parser


def main(argv=None) -> int:
    try:
        parser = build_parser()
    except UsageError as exc:
        print(f"hornets: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, StratificationError) as exc:
        print(f"hornets {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CsvFormatError, UnsupportedRouteError, TrainingError, OSError, ValueError) as exc:
        print(f"hornets {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
