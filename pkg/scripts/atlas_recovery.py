#!/usr/bin/env python3
"""Atlas from 20 perturbed renders of one shape vs the pixelwise mean.

    python3 scripts/atlas_recovery.py --shape square
"""
import argparse
import json

from geosic.atlas import AtlasConfig
from geosic.benchmark import atlas_recovery
from geosic.synth import SHAPES


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--shape", choices=SHAPES, default="square")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--outer-iters", type=int, default=AtlasConfig.outer_iters)
    args = p.parse_args()
    r = atlas_recovery(args.shape, args.n, args.seed, AtlasConfig(outer_iters=args.outer_iters))
    print(json.dumps(r, indent=2))
    ok = r["sharpness_atlas"] > r["sharpness_mean"] and r["ssd_atlas"] < 0.5 * r["ssd_mean"]
    print("sharper than mean and SSD below half of the mean's:", ok)


if __name__ == "__main__":
    main()
