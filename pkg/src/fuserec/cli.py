"""Command-line entry point.

Subcommands: ``synth`` (generate a planted dataset), ``train`` (train one
configuration and save the model file), ``bench`` (run the configuration
matrix and emit the report), ``report`` (re-render an existing report CSV).

Exit codes: 0 success, 1 usage error, 2 data/config error, 3 training
divergence.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import List, Optional

from fuserec import config as config_mod
from fuserec import data as data_mod
from fuserec import modelfile, report as report_mod
from fuserec.config import PRESET_ORDER, ExperimentConfig
from fuserec.errors import ConfigError, DataFormatError, DivergenceError, FuseRecError
from fuserec.experiment import prepare_data, run_matrix, train_single

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1, not argparse's default 2
        raise _UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="fuserec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate the planted synthetic dataset")
    synth.add_argument("--out", required=True, help="output directory")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--users", type=int, default=5000)
    synth.add_argument("--items", type=int, default=2000)

    tr = sub.add_parser("train", help="train one configuration, save the model")
    tr.add_argument("--data", required=True, help="dataset directory")
    tr.add_argument("--config", help="key = value config file")
    tr.add_argument("--out", required=True, help="model file path")
    tr.add_argument("--seed", type=int, help="override config seed")

    bench = sub.add_parser("bench", help="run the full configuration matrix")
    bench.add_argument("--data", required=True, help="dataset directory")
    bench.add_argument("--config", help="key = value config file")
    bench.add_argument("--out", default="report.csv", help="report path")
    bench.add_argument("--seed", type=int, help="override config seed")
    bench.add_argument(
        "--rows", help=f"comma list of presets (default all: {','.join(PRESET_ORDER)})"
    )
    bench.add_argument("--format", choices=["csv", "table"], default="csv")

    rep = sub.add_parser("report", help="re-render a report CSV")
    rep.add_argument("input", help="existing report CSV")
    rep.add_argument("--out", required=True, help="output path")
    rep.add_argument("--format", choices=["csv", "table"], default="table")

    return parser


def _load_cfg(args) -> ExperimentConfig:
    cfg = (
        config_mod.load_config(args.config)
        if getattr(args, "config", None)
        else ExperimentConfig()
    )
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    cfg.validate()
    return cfg


def _prepare(args, cfg: ExperimentConfig):
    interactions, texts = data_mod.load_dataset(args.data)
    return prepare_data(
        interactions,
        texts,
        seed=cfg.seed,
        candidates_per_user=cfg.eval.candidates_per_user,
    )


def cmd_synth(args) -> int:
    interactions, texts = data_mod.generate_synthetic(args.users, args.items, args.seed)
    data_mod.write_dataset(args.out, interactions, texts)
    print(f"wrote {len(interactions)} interactions, {len(texts)} item texts to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    prepared = _prepare(args, cfg)
    row_model, report = train_single(cfg, prepared)
    graph_meta = {
        "num_users": prepared.graph.num_users,
        "num_items": prepared.graph.num_items,
        "num_buckets": prepared.corpus.num_buckets,
        "seed": cfg.seed,
    }
    modelfile.save_model(args.out, row_model, graph_meta)
    print(
        f"trained {cfg.label}: final loss {report.final_loss:.5f}, "
        f"{report.trainable_params} trainable params, "
        f"{report.wall_clock_seconds:.1f}s -> {args.out}"
    )
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _load_cfg(args)
    names: Optional[List[str]] = None
    if args.rows:
        names = [r.strip() for r in args.rows.split(",") if r.strip()]
        unknown = [n for n in names if n not in PRESET_ORDER]
        if unknown:
            raise _UsageError(f"unknown presets in --rows: {', '.join(unknown)}")
    prepared = _prepare(args, cfg)
    rows = run_matrix(prepared, cfg, names)
    report_mod.emit_report(rows, args.format, args.out)
    out_dir = os.path.dirname(os.path.abspath(args.out))
    report_mod.emit_tradeoff(rows, os.path.join(out_dir, "tradeoff.csv"))
    print(report_mod.render_table(rows), end="")
    print(f"report written to {args.out}")
    return EXIT_OK


def cmd_report(args) -> int:
    rows = report_mod.read_report(args.input)
    report_mod.emit_report(rows, args.format, args.out)
    print(f"rendered {len(rows)} rows to {args.out}")
    return EXIT_OK


_COMMANDS = {"synth": cmd_synth, "train": cmd_train, "bench": cmd_bench, "report": cmd_report}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help and friends
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataFormatError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FuseRecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
