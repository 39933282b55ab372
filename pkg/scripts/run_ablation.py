#!/usr/bin/env python3
"""MMC / MMT on-off grid on the duet split, averaged over seeds."""
import argparse

from m2vsl import train as TR
from m2vsl.config import RunConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--split", default="duet")
    ap.add_argument("--out-dir", default="runs/ablation")
    ap.add_argument("--mask-source", default="auto",
                    help="auto: fused map for arms with the attention head, similarity otherwise")
    args = ap.parse_args()
    cfg = RunConfig(epochs=args.epochs, out_dir=args.out_dir, mask_source=args.mask_source)
    rows = TR.ablate_seeds(cfg, [int(s) for s in args.seeds.split(",")], args.split)
    print(f"{'arm':<10}{'mIoU':>8}{'F':>8}")
    for r in rows:
        print(f"{r['arm']:<10}{r['miou']:>8.3f}{r['f_score']:>8.3f}")
    gain = rows[3]["miou"] - rows[1]["miou"]
    print(f"full minus MMC-only: {100 * gain:+.2f} mIoU points")


if __name__ == "__main__":
    main()
