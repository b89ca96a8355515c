#!/usr/bin/env python3
"""Five-seed classification benchmark: joint vs two-step vs image-only, and
accuracy under a gradient-sign attack.

    python3 scripts/classification_benchmark.py --seeds 0 1 2 3 4 --out bench.json
"""
import argparse
import json
import logging
import time

import numpy as np

from geosic.benchmark import ROBUST_EPS, classification_seed


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument("--epsilon", type=float, default=ROBUST_EPS)
    p.add_argument("--out", default=None, help="write per-seed results as JSON")
    p.add_argument("-v", "--verbose", action="store_true")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)

    t0 = time.perf_counter()
    runs = []
    for seed in args.seeds:
        r = classification_seed(seed, epsilon=args.epsilon)
        runs.append(r)
        print(f"seed {seed}: joint {r['joint']:.3f} two-step {r['two_step']:.3f} "
              f"image-only {r['image_only']:.3f} | eps={args.epsilon}: fused {r['robust_fused']:.3f} "
              f"image-only {r['robust_image_only']:.3f} | {r['joint_seconds'] + r['image_only_seconds']:.0f}s",
              flush=True)
    for key in ("joint", "two_step", "image_only"):
        print(f"mean {key}: {np.mean([r[key] for r in runs]):.3f}")
    wins = sum(r["robust_fused"] >= r["robust_image_only"] for r in runs)
    print(f"fused >= image-only under attack in {wins}/{len(runs)} seeds")
    print(f"total {time.perf_counter() - t0:.0f}s")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(runs, fh, indent=2)


if __name__ == "__main__":
    main()
