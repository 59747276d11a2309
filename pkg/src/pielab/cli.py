"""Command-line entry point.

    pielab gen-corpus  --out DIR [--config SYNTH.json] [--seed S]
    pielab train       --config EXP.json [--out ROOT] [--seed S] [--jobs K]
    pielab prune-exp   --config EXP.json [--out ROOT] [--seed S] [--jobs K]
    pielab pies        --run RUN_DIR
    pielab influence   --run RUN_DIR [--condition NAME]
    pielab readability --run RUN_DIR [--easy-words FILE]
    pielab report      --run RUN_DIR

Exit codes: 0 success, 2 config error, 3 missing input, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import __version__, analysis, plots
from .corpus import CorpusError, SyntheticSpec, generate_synthetic_corpus, save_corpus
from .harness import (ConfigError, ExperimentConfig, MissingInputError, parse_config,
                      run_experiment, summarize)
from .nn import NumericError
from .prune import PrunerSpecError
from .readability import EasyWordList

log = logging.getLogger("pielab")

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_NUMERIC = 0, 2, 3, 4


def _load_experiment(args) -> ExperimentConfig:
    if args.config is None:
        raise ConfigError("--config is required")
    cfg = parse_config(args.config)
    if args.out is not None:
        cfg.output_dir = args.out
    if args.seed is not None:
        cfg.base_seed = args.seed
    return cfg


def _run_dir(args) -> Path:
    if args.run is not None:
        path = Path(args.run)
    else:
        path = _load_experiment(args).run_dir()
    if not (path / "config.json").exists():
        raise MissingInputError(f"{path} is not a run directory (no config.json)")
    return path


def cmd_gen_corpus(args) -> int:
    raw = {}
    if args.config:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        fields = {f.name for f in dataclasses.fields(SyntheticSpec)}
        unknown = sorted(set(raw) - fields)
        if unknown:
            raise ConfigError(f"unknown key {unknown[0]!r} in synthetic corpus config")
    if args.seed is not None:
        raw["seed"] = args.seed
    try:
        spec = SyntheticSpec(**{k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()})
        corpus = generate_synthetic_corpus(spec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid synthetic corpus spec: {exc}") from None
    out = Path(args.out or "corpus")
    save_corpus(corpus, out)
    print(out)
    return EXIT_OK


def cmd_train(args, include_pruned: bool = False) -> int:
    cfg = _load_experiment(args)
    run_dir = run_experiment(cfg, jobs=args.jobs, force=args.force, include_pruned=include_pruned)
    if include_pruned:
        summarize(run_dir)
    print(run_dir)
    return EXIT_OK


def cmd_pies(args) -> int:
    run_dir = _run_dir(args)
    summarize(run_dir)
    analysis.run_pies(run_dir)
    print(run_dir / "pies.csv")
    return EXIT_OK


def cmd_influence(args) -> int:
    run_dir = _run_dir(args)
    analysis.run_influence(run_dir, condition=args.condition)
    print(run_dir / "influence_bins.csv")
    return EXIT_OK


def cmd_readability(args) -> int:
    run_dir = _run_dir(args)
    easy = EasyWordList.from_file(args.easy_words) if args.easy_words else None
    analysis.run_readability(run_dir, easy_list=easy)
    print(run_dir / "readability_ratios.csv")
    return EXIT_OK


def cmd_report(args) -> int:
    bundle = plots.report(_run_dir(args))
    for p in bundle.csvs + bundle.figures:
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pielab", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"pielab {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="override the base seed")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for training")
        p.set_defaults(func=func)
        return p

    add("gen-corpus", cmd_gen_corpus, "write a synthetic corpus directory")
    p = add("train", cmd_train, "train the unpruned initializations of an experiment")
    p.add_argument("--force", action="store_true", help="retrain units that already finished")
    p = add("prune-exp", lambda a: cmd_train(a, include_pruned=True),
            "train unpruned and pruned initializations and summarize")
    p.add_argument("--force", action="store_true", help="retrain units that already finished")
    for name, func, text in (("pies", cmd_pies, "detect PIEs for every pruned condition"),
                             ("influence", cmd_influence, "EL2N profile and PIE fraction per bin"),
                             ("readability", cmd_readability, "readability ratios of PIEs"),
                             ("report", cmd_report, "render CSV bundle and figures")):
        p = add(name, func, text)
        p.add_argument("--run", help="run directory (defaults to the config's run directory)")
        if name == "influence":
            p.add_argument("--condition", default="unpruned",
                           help="condition whose checkpoints provide the EL2N scores")
        if name == "readability":
            p.add_argument("--easy-words", help="easy word list, one word per line")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, PrunerSpecError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingInputError, FileNotFoundError, CorpusError) as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
