"""Command-line entry point: ``m2vsl <command> [--config FILE] [--<field> VALUE ...]``.

Exit codes: 0 success, 1 validation failure, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import train as TR
from .config import RunConfig
from .errors import DegenerateInputError, DimensionError, GenerationError, NumericalError, UsageError
from .gradcheck import SUITES, gradcheck
from .io import write_report
from .synthdata import write_cache

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with 2, which is reserved for numerical failures
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key (repeatable)")
    g = p.add_argument_group("config fields (override the file)")
    for f in fields(RunConfig):
        g.add_argument(f"--{f.name.replace('_', '-')}", dest=f"cfg_{f.name}", metavar="V")


def _overrides(args) -> dict:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    for f in fields(RunConfig):
        v = getattr(args, f"cfg_{f.name}", None)
        if v is not None:
            overrides[f.name] = v
    return overrides


def load_config(args, fallback: Path | None = None) -> RunConfig:
    """File values (``--config``, else ``fallback`` if it exists) overridden by flags."""
    path = Path(args.config) if args.config else fallback
    text = path.read_text() if path is not None and path.exists() else ""
    return RunConfig.from_text(text, **_overrides(args))


def _run_config(args, cfg: RunConfig) -> tuple[Path, RunConfig]:
    """Checkpoint path plus the config it was trained with, unless ``--config`` was given."""
    ckpt = _checkpoint(args, cfg)
    if args.config:
        return ckpt, cfg
    return ckpt, load_config(args, ckpt.parent / "config.txt")


def _checkpoint(args, cfg: RunConfig) -> Path:
    return Path(args.checkpoint) if args.checkpoint else Path(cfg.out_dir) / TR.CHECKPOINT_STEM


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def cmd_train(args, cfg):
    res = TR.train(cfg)
    _emit({"checkpoint": str(res.checkpoint), "epochs": len(res.loss_curve),
           "first_loss": res.loss_curve[0], "final_loss": res.loss_curve[-1],
           "seconds": round(res.seconds, 2)})
    return EXIT_OK


def cmd_eval(args, cfg):
    ckpt, cfg = _run_config(args, cfg)
    report = TR.report_dict(TR.evaluate(ckpt, args.split, cfg))
    out = Path(args.report) if args.report else Path(cfg.out_dir) / f"report_{args.split}.json"
    write_report(out, report)
    _emit({k: v for k, v in report.items() if not k.startswith("config.")})
    return EXIT_OK


def cmd_localize(args, cfg):
    ckpt, cfg = _run_config(args, cfg)
    model = TR.load_model(ckpt, cfg)
    out = args.out or str(Path(cfg.out_dir) / "localize")
    written = TR.localize(model, args.split, _int_list(args.ids), out)
    print("\n".join(str(p) for p in written))
    return EXIT_OK


def cmd_gradcheck(args, cfg):
    suites = args.suites.split(",") if args.suites else SUITES
    report = gradcheck(cfg, suites)
    print("\n".join(report.lines()))
    if args.report:
        write_report(args.report, report.to_dict())
    return EXIT_OK if report.passed else EXIT_NUMERICAL


def cmd_sweep(args, cfg):
    rows = TR.sweep_batch(cfg, _int_list(args.sizes), args.split)
    _emit(rows)
    return EXIT_OK


def cmd_ablate(args, cfg):
    rows = TR.ablate_seeds(cfg, _int_list(args.seeds), args.split) if args.seeds else TR.ablate(cfg, args.split)
    _emit(rows)
    return EXIT_OK


def cmd_synth(args, cfg):
    out = args.out or str(Path(cfg.out_dir) / "data")
    for split in args.splits.split(","):
        root = write_cache(TR.load_split(cfg, split.strip()), out, split.strip())
        print(root)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="m2vsl", description="Multi-scale multi-instance sound source localization")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        _add_config_args(p)
        p.set_defaults(func=fn)
        return p

    add("train", cmd_train, "train a model and write its checkpoint")
    p = add("eval", cmd_eval, "evaluate a checkpoint on a split")
    p.add_argument("--checkpoint")
    p.add_argument("--split", default="test", choices=("val", "test", "duet"))
    p.add_argument("--report", help="JSON output path")
    p = add("localize", cmd_localize, "write heatmap and mask PGMs for sample ids")
    p.add_argument("--checkpoint")
    p.add_argument("--split", default="test", choices=("train", "val", "test", "duet"))
    p.add_argument("--ids", default="0", help="comma-separated sample indices")
    p.add_argument("--out")
    p = add("gradcheck", cmd_gradcheck, "finite-difference gradient suites")
    p.add_argument("--suites", help=f"comma-separated subset of {','.join(SUITES)}")
    p.add_argument("--report")
    p = add("sweep-batch", cmd_sweep, "train and evaluate once per batch size")
    p.add_argument("--sizes", default="2,4,8,16")
    p.add_argument("--split", default="test", choices=("val", "test", "duet"))
    p = add("ablate", cmd_ablate, "MMC/MMT on-off grid")
    p.add_argument("--split", default="duet", choices=("val", "test", "duet"))
    p.add_argument("--seeds", help="comma-separated seeds; averages the grid over them")
    p = add("synth", cmd_synth, "materialize the synthetic dataset cache")
    p.add_argument("--splits", default="train,val,test,duet")
    p.add_argument("--out")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = load_config(args)
        return args.func(args, cfg)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (UsageError, DimensionError, DegenerateInputError, GenerationError,
            FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
