"""Command-line driver: generate | train | eval | transfer | report | reproduce.

Exit codes: 0 ok, 1 usage or configuration error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import config as C
from . import pipeline
from .errors import ConfigurationError, SefdmError

OUT_ENV = "SEFDM_CNN_OUT"
DEFAULT_OUT = "sefdm-out"
EXIT_USAGE, EXIT_DATA = 1, 2

log = logging.getLogger("sefdm_cnn")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", action="append", default=[], metavar="TOML",
                   help="config file or bundled name ('desk'); repeatable, later wins")
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
    p.add_argument("--out", type=Path, default=None,
                   help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    p.add_argument("--threads", type=int, default=None, help="cap BLAS/OpenMP threads")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sefdm-cnn", description="SEFDM/OFDM signal classification workbench")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="materialise a dataset recipe")
    _common(p)
    p.add_argument("recipe", choices=sorted(C.RECIPES))
    p.add_argument("--scale", type=float, default=1.0, help="multiply the per-class sizes")

    p = sub.add_parser("train", help="train a model from dataset files")
    _common(p)
    p.add_argument("recipe", nargs="?", help="recipe whose generated train/val sets to use")
    p.add_argument("--train-data", type=Path)
    p.add_argument("--val-data", type=Path)
    p.add_argument("--name", help="model name (default: the recipe)")

    p = sub.add_parser("eval", help="evaluate a model on a test set")
    _common(p)
    p.add_argument("model", type=Path)
    p.add_argument("test", type=Path)
    p.add_argument("--name")
    p.add_argument("--test-name")

    p = sub.add_parser("transfer", help="fine-tune a model's head on a target set")
    _common(p)
    p.add_argument("model", type=Path)
    p.add_argument("target", type=Path)
    p.add_argument("--name")

    p = sub.add_parser("report", help="report tables and figures from result files")
    _common(p)
    p.add_argument("results", nargs="*", type=Path)
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("reproduce", help="generate, train, evaluate and report all eight models")
    _common(p)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--models", nargs="+", choices=C.MODEL_RECIPES, default=list(C.MODEL_RECIPES))
    p.add_argument("--no-transfer", action="store_true")
    p.add_argument("--no-figures", action="store_true")
    return parser


def _run(args) -> int:
    cfg = C.load_config(*args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    out = args.out or Path(os.environ.get(OUT_ENV, DEFAULT_OUT))
    out.mkdir(parents=True, exist_ok=True)

    if args.command == "generate":
        paths = pipeline.generate(cfg, args.recipe, out, args.scale)
        m = C.manifest_for(cfg, args.recipe, args.scale)
        print(f"{args.recipe}: {m.group} {m.domain} "
              f"{'impaired' if m.impaired else 'clean'} seed={m.seed}")
        for split, path in paths.items():
            print(f"  {split}: {path}")
    elif args.command == "train":
        if args.recipe:
            data = out / "data"
            train_path = args.train_data or data / f"{args.recipe}-train.sefc"
            val_path = args.val_data or data / f"{args.recipe}-val.sefc"
        elif args.train_data:
            train_path, val_path = args.train_data, args.val_data
        else:
            raise ConfigurationError("train needs a recipe or --train-data")
        name = args.name or args.recipe or Path(train_path).stem
        path, secs = pipeline.train_model(cfg, pipeline.require(train_path),
                                          pipeline.require(val_path) if val_path else None,
                                          out, name, args.seed)
        print(f"model: {path} ({secs:.1f} s)")
    elif args.command == "eval":
        paths = pipeline.evaluate_model(args.model, args.test, out, args.name, args.test_name)
        res = pipeline.load_result(paths["result"])
        print(f"{res.name} on {res.test_name}: accuracy {res.accuracy:.4f}")
        for p in res.curve.points:
            label = "noiseless" if p.esn0_db is None else f"{p.esn0_db:g} dB"
            print(f"  {label:>10}: {p.accuracy:.4f} ({p.count})")
        print(f"result: {paths['result']}")
    elif args.command == "transfer":
        path, secs = pipeline.transfer_model(cfg, args.model, args.target, out, args.name, args.seed)
        print(f"adapted model: {path} ({secs:.1f} s)")
    elif args.command == "report":
        if not args.results:
            raise ConfigurationError("report needs at least one result file")
        paths = pipeline.report(args.results, out, figures=not args.no_figures)
        print(f"report: {out / 'report'} ({len(paths)} outputs)")
    elif args.command == "reproduce":
        paths = pipeline.reproduce(cfg, out, args.scale, tuple(args.models),
                                   transfer=not args.no_transfer, figures=not args.no_figures,
                                   progress=print)
        print(f"report: {paths['summary'].parent}")
    return 0


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigurationError("--threads must be >= 1")
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=args.threads):
                return _run(args)
        return _run(args)
    except SefdmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
