"""Command-line entry point: ``sevae {gen,train,eval,sweep,ablate,plot}``.

Exit codes: 0 success, 1 configuration or usage error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from sevae.datagen import generate, load_csv, save_csv, split
from sevae.errors import ConfigError, SevaeError, TrainingError
from sevae.harness.config import load_config
from sevae.harness.plots import emit_plots
from sevae.harness.runs import (prepare_data, read_rows, resolve_threads, run_ablation,
                                run_sweep, score_model, subsample, write_loss_curves)
from sevae.models.train import load_checkpoint, save_checkpoint, train

log = logging.getLogger("sevae")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _globals(suppress: bool) -> argparse.ArgumentParser:
    # defined on the top-level parser and again on each subcommand, so the
    # flags may appear on either side of the subcommand name
    default = argparse.SUPPRESS if suppress else None
    p = _Parser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--config", default=default, help="experiment JSON (default: shipped default.json)")
    g.add_argument("--seed", type=int, default=default, help="override the seed(s) of the command")
    g.add_argument("--out", default=default, help="output directory (default: config output_dir)")
    g.add_argument("--threads", type=int, default=default,
                   help="worker threads; the SEVAE_THREADS env var takes precedence")
    g.add_argument("-v", "--verbose", action="store_true",
                   default=argparse.SUPPRESS if suppress else False)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sevae", parents=[_globals(False)],
                     description="SE-VAE experiments on synthetic grouped-indicator data.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = [_globals(True)]

    sub.add_parser("gen", parents=common, help="write the dataset CSV and its spec JSON")

    p = sub.add_parser("train", parents=common, help="train one model, save checkpoint and loss curves")
    p.add_argument("--model", help="model name from the config (default: first)")
    p.add_argument("--data", help="dataset CSV (default: generate from the config)")
    p.add_argument("--n", type=int, help="training rows to subsample (default: whole train split)")

    p = sub.add_parser("eval", parents=common, help="score a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", help="dataset CSV (default: generate from the config)")
    p.add_argument("--split", choices=("eval", "train", "all"), default="eval",
                   help="rows to score (default: the held-out split)")

    sub.add_parser("sweep", parents=common, help="sample-size sweep over the model grid")
    p = sub.add_parser("ablate", parents=common, help="16-cell SE-VAE ablation grid")
    p.add_argument("--components", nargs="+", help="flags to report (default: all four)")

    p = sub.add_parser("plot", parents=common, help="SVG panels from results.csv")
    p.add_argument("--results", help="results CSV (default: <out>/results.csv)")
    return parser


def _out_dir(args, config) -> Path:
    return Path(args.out or config.output_dir)


def _datasets(args, config):
    if args.data:
        ds = load_csv(args.data)
        return ds, split(ds, config.train_frac, config.split_seed)
    ds = generate(config.generator)
    return ds, split(ds, config.train_frac, config.split_seed)


def cmd_gen(args, config) -> None:
    spec = config.generator if args.seed is None else replace(config.generator, seed=args.seed)
    paths = save_csv(generate(spec), _out_dir(args, config) / "data.csv")
    for path in paths:
        print(path)


def cmd_train(args, config) -> None:
    spec = config.model(args.model) if args.model else config.models[0]
    _, (pool, _) = _datasets(args, config)
    seed = 0 if args.seed is None else args.seed
    data = subsample(pool, args.n, seed) if args.n else pool
    model_cfg = spec.build_config(pool.spec.K, pool.spec.J)
    result = train(model_cfg, data, replace(config.train, seed=seed))
    out = _out_dir(args, config)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(result.model, out / "checkpoint.json",
                    {"model": spec.name, "rows": data.n, "seed": seed,
                     "config_hash": config.hash()})
    write_loss_curves(result.history, out / "loss_curves.csv")
    print(out / "checkpoint.json")
    print(out / "loss_curves.csv")


def cmd_eval(args, config) -> None:
    model = load_checkpoint(args.checkpoint)
    full, (train_part, eval_part) = _datasets(args, config)
    ds = {"eval": eval_part, "train": train_part, "all": full}[args.split]
    report = score_model(model, ds, config.metrics, 0 if args.seed is None else args.seed)
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.json").write_text(text + "\n")
    print(text)


def _with_seed(args, config):
    if args.seed is not None:
        config = replace(config, seeds=[args.seed])
        config.ablation.seeds = None
    return config


def cmd_sweep(args, config) -> None:
    config = _with_seed(args, config)
    out = _out_dir(args, config)
    rows = run_sweep(config, resolve_threads(args.threads), out)
    failed = sum(r["status"] != "ok" for r in rows)
    print(f"{len(rows)} runs ({failed} failed) -> {out / 'results.csv'}")


def cmd_ablate(args, config) -> None:
    config = _with_seed(args, config)
    out = _out_dir(args, config)
    kwargs = {"components": args.components} if args.components else {}
    deltas = run_ablation(config, resolve_threads(args.threads), out, **kwargs)
    for d in deltas:
        print(f"{d.component:7s} N={d.N:<6d} {d.metric:10s} {d.mean:+.3f} ± {d.sd:.3f}")
    print(f"-> {out / 'ablation.csv'}")


def cmd_plot(args, config) -> None:
    out = _out_dir(args, config)
    results = Path(args.results) if args.results else out / "results.csv"
    if not results.exists():
        raise ConfigError(f"results file {results} does not exist")
    for path in emit_plots(read_rows(results), out):
        print(path)


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "sweep": cmd_sweep,
            "ablate": cmd_ablate, "plot": cmd_plot}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config)
        COMMANDS[args.command](args, config)
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (SevaeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
