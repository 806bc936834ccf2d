"""Command-line entry point: ``muonlab train|sweep|polar-bench|grad-check``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure, 3 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigError, MuonLabError
from .harness.bench import DEFAULT_METHODS, BENCH_HEADER, parse_iters, parse_shapes, polar_bench, write_bench_csv
from .harness.config import RunConfig
from .harness.sweep import SweepSpec, sweep
from .harness.train import fmt, train
from .models import grad_check

EXIT_OK = 0


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; here 2 means numerical failure
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(ConfigError.exit_code, f"{self.prog}: error: {message}\n")


def _csv_list(text, cast, what):
    try:
        values = [cast(v.strip()) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad {what} list {text!r}") from None
    if not values:
        raise ConfigError(f"empty {what} list")
    return values


def _load_config(path) -> RunConfig:
    return RunConfig.load(path) if path else RunConfig()


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["output_dir"] = args.out
    if changes:
        cfg = cfg.replace(**changes)
        cfg.validate()
    record = train(cfg)
    print(f"status={record.status} steps={len(record.train_rows)} "
          f"final_eval_loss={fmt(record.final_eval_loss)} final_ppl={fmt(record.final_ppl)}")
    if record.status != "ok":
        print(record.message, file=sys.stderr)
        return 2
    return EXIT_OK


def cmd_sweep(args) -> int:
    base = _load_config(args.config)
    spec = SweepSpec(
        base=base,
        lr_grid=_csv_list(args.lrs, float, "learning-rate"),
        direction_grid=_csv_list(args.dirs, str, "direction"),
        seeds=_csv_list(args.seeds, int, "seed"),
    )
    result = sweep(spec, out_dir=args.out, workers=args.workers, keep_runs=args.keep_runs)
    sys.stdout.write(result.pivot_csv("min"))
    for direction, value in result.best_by_direction("min").items():
        print(f"best[{direction}]={fmt(value)}")
    return EXIT_OK


def cmd_polar_bench(args) -> int:
    rows = polar_bench(
        shapes=parse_shapes(args.shapes),
        methods=_csv_list(args.methods, str, "method"),
        iteration_grid=parse_iters(args.iters),
        seed=args.seed,
    )
    if args.out:
        write_bench_csv(rows, args.out)
    else:
        print(BENCH_HEADER)
        for row in rows:
            print(row.csv())
    return EXIT_OK


def cmd_grad_check(args) -> int:
    report = grad_check(args.model, seed=args.seed, tolerance=args.tol)
    for line in report.lines():
        print(line)
    print(f"max_error={report.max_error:.3e} tolerance={report.tolerance:.1e} "
          f"{'PASS' if report.passed else 'FAIL'}")
    return EXIT_OK if report.passed else 2


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="muonlab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="run one training job")
    p.add_argument("--config", help="flat JSON config file (defaults used when omitted)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory for train.csv, eval.csv, summary.json")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="learning-rate x direction x seed grid")
    p.add_argument("--config")
    p.add_argument("--lrs", default="0.005,0.01,0.02,0.04,0.06,0.08")
    p.add_argument("--dirs", default="none,col,row,col_row,row_col")
    p.add_argument("--seeds", default="1,2,3")
    p.add_argument("--out", help="directory for sweep_long.csv, pivot tables and summary")
    p.add_argument("--workers", type=int, default=1, help="worker processes (whole runs each)")
    p.add_argument("--keep-runs", action="store_true", help="also keep per-run CSVs under OUT/runs")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("polar-bench", help="Newton-Schulz accuracy against the exact polar factor")
    p.add_argument("--shapes", default="64x64,64x256")
    p.add_argument("--methods", default=",".join(DEFAULT_METHODS))
    p.add_argument("--iters", default="1..30", help="inclusive range A..B or a comma list")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV path (stdout when omitted)")
    p.set_defaults(func=cmd_polar_bench)

    p = sub.add_parser("grad-check", help="manual gradients against finite differences")
    p.add_argument("--model", choices=("mlp", "transformer"), default="mlp")
    p.add_argument("--tol", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_grad_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except MuonLabError as exc:
        print(f"muonlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
