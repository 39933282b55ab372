#!/usr/bin/env python3
"""Batch-size sweep: one model per size, evaluated on the held-out split."""
import argparse

from m2vsl import train as TR
from m2vsl.config import RunConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", default="2,4,8,16")
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--split", default="test")
    ap.add_argument("--out-dir", default="runs/sweep")
    args = ap.parse_args()
    cfg = RunConfig(epochs=args.epochs, out_dir=args.out_dir)
    rows = TR.sweep_batch(cfg, [int(s) for s in args.sizes.split(",")], args.split)
    for r in rows:
        print(f"B={r['batch_size']:<4} final loss {r['final_loss']:.3f}  mIoU {r['miou']:.3f}")


if __name__ == "__main__":
    main()
