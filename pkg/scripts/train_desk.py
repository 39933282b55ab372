#!/usr/bin/env python3
"""Train one configuration and evaluate it on the single-source and duet splits."""
import argparse
import json
from pathlib import Path

from m2vsl import train as TR
from m2vsl.config import RunConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(Path(__file__).parent.parent / "configs" / "desk.cfg"))
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    args = ap.parse_args()
    overrides = dict(item.split("=", 1) for item in args.set)
    cfg = RunConfig.load(args.config, **overrides)
    res, reports = TR.train_and_evaluate(cfg, ("test", "duet"))
    print(f"trained in {res.seconds:.1f}s; loss {res.loss_curve[0]:.3f} -> {res.loss_curve[-1]:.3f}")
    for split, rep in reports.items():
        print(split, json.dumps({k: v for k, v in rep.values().items() if v is not None}))


if __name__ == "__main__":
    main()
