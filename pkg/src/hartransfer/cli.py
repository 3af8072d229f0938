"""Command-line front end over the harness.

Exit codes: 0 success, 1 validation error (bad config, missing data),
2 runtime failure (a run that started and died).
"""

import argparse
import sys
from pathlib import Path

from hartransfer.configio import ConfigError, load_yaml
from hartransfer.data import MissingRunsError, SplitSpec
from hartransfer.synthgen import ShiftSpec


def _add_config_arg(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="experiment config (YAML)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hartransfer",
        description="Transfer-learning workbench for wearable activity recognition",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="cache the OPPORTUNITY split for later runs")
    p.add_argument("--data-root", required=True, help="directory holding S*-*.dat files")
    p.add_argument("--out", required=True, help="output cache directory")
    p.add_argument("--split-spec", help="YAML split spec; defaults to the cross-subject preset")

    p = sub.add_parser("generate", help="materialize a synthetic benchmark split")
    p.add_argument("--out", required=True, help="output cache directory")
    p.add_argument("--shift-spec", help="YAML shift spec; defaults to the frozen fixture")
    p.add_argument("--train-fraction", type=float, default=0.75)

    for verb in ("train", "finetune", "classical"):
        p = sub.add_parser(verb, help=f"run one {verb} experiment from a config")
        _add_config_arg(p)

    p = sub.add_parser("compare", help="summarize finished runs into one table")
    p.add_argument("runs", nargs="+", help="run directories")
    p.add_argument("--out", help="write the table (JSONL + text) to this path")

    p = sub.add_parser("plot", help="emit per-iteration charts for runs")
    p.add_argument("runs", nargs="+", help="run directories")
    p.add_argument("--kind", choices=("f1_curve", "lambda_trace", "domain_accuracy"), default="f1_curve")
    p.add_argument("--out", default="plots", help="output directory for images")

    p = sub.add_parser("sweep", help="run a parameter grid around a base config")
    _add_config_arg(p)
    p.add_argument("--grid", required=True, help="YAML mapping of dotted config paths to value lists")
    p.add_argument("--out", help="write the sweep table to this path")
    return parser


_EXPECTED_METHODS = {
    "train": ("baseline", "loss_weighted", "dann"),
    "finetune": ("finetune",),
    "classical": ("kmm", "tradaboost"),
}


def _dispatch(args: argparse.Namespace) -> int:
    from hartransfer import harness

    if args.command == "ingest":
        spec = SplitSpec(**load_yaml(args.split_spec)) if args.split_spec else None
        out = harness.ingest(args.data_root, args.out, spec)
        print(f"cached split at {out}")
        return 0
    if args.command == "generate":
        shift = ShiftSpec.from_dict(load_yaml(args.shift_spec)) if args.shift_spec else None
        out = harness.generate_synthetic(args.out, shift, args.train_fraction)
        print(f"generated synthetic split at {out}")
        return 0
    if args.command in ("train", "finetune", "classical"):
        config = harness.ExperimentConfig.load(args.config)
        expected = _EXPECTED_METHODS[args.command]
        if config.method not in expected:
            raise ConfigError(
                [f"'{args.command}' expects method in {expected}, config says {config.method!r}"]
            )
        result = harness.run(config)
        print(f"run complete: {result.run_dir}")
        if result.record is not None:
            print(
                f"max target F1 {result.record.max_target_f1:.4f}  "
                f"(at best-val iteration: {result.record.target_f1_at_best:.4f})"
            )
        return 0
    if args.command == "compare":
        table = harness.compare(args.runs)
        print(table.render())
        if args.out:
            table.save(Path(args.out))
        return 0
    if args.command == "plot":
        files = harness.plot(args.runs, args.kind, args.out)
        for f in files:
            print(f)
        return 0
    if args.command == "sweep":
        config = harness.ExperimentConfig.load(args.config)
        grid = load_yaml(args.grid)
        table = harness.sweep(config, grid)
        print(table.render())
        if args.out:
            table.save(Path(args.out))
        return 0
    raise AssertionError(f"unhandled command {args.command}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (ConfigError, MissingRunsError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc, ConfigError):
            for problem in exc.problems:
                print(f"  - {problem}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure inside a run
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
