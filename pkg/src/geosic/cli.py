"""Command-line entry point: ``geosic <command> ...``.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical
divergence, 4 I/O or file-format error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4
TRAIN_MODES = ("joint", "two-step", "image-only", "shape-only")

log = logging.getLogger("geosic")


class UsageError(Exception):
    pass


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _require_dir(path, what):
    if not os.path.isdir(path):
        raise UsageError(f"{what} {path!r} does not exist")


# ---------------------------------------------------------------------------
# dataset directories

def save_dataset(ds, manifest, out):
    from . import io
    os.makedirs(os.path.join(out, "images"), exist_ok=True)
    for i, im in enumerate(ds.images):
        io.write_gsf(im, os.path.join(out, "images", f"{i:05d}.gsf"))
    with open(os.path.join(out, "labels.csv"), "w") as fh:
        fh.write("index,class,split\n")
        for i, (y, s) in enumerate(zip(ds.labels, ds.split)):
            fh.write(f"{i},{int(y)},{s}\n")
    _write_json(os.path.join(out, "manifest.json"), dict(manifest, class_names=ds.class_names))


def load_dataset(path):
    import numpy as np

    from . import io
    from .synth import LabeledDataset
    _require_dir(path, "data directory")
    with open(os.path.join(path, "manifest.json")) as fh:
        manifest = json.load(fh)
    idx, labels, split = [], [], []
    with open(os.path.join(path, "labels.csv")) as fh:
        header = fh.readline().strip().split(",")
        if header[:2] != ["index", "class"]:
            raise UsageError(f"{path}/labels.csv: unexpected header {header}")
        for line in fh:
            parts = line.strip().split(",")
            idx.append(int(parts[0]))
            labels.append(int(parts[1]))
            split.append(parts[2] if len(parts) > 2 else "train")
    images = np.stack([io.read_image(os.path.join(path, "images", f"{i:05d}.gsf")) for i in idx])
    return LabeledDataset(images, np.array(labels), np.array(split), manifest["class_names"])


# ---------------------------------------------------------------------------
# commands

def cmd_gen_data(args, cfg):
    from .synth import generate, manifest
    specs = cfg.data.specs()
    ds = generate(specs, cfg.data.perturbation, cfg.data.n, cfg.seed, cfg.data.split)
    save_dataset(ds, manifest(specs, cfg.data.perturbation, cfg.data.n, cfg.seed, cfg.data.split), args.out)


def cmd_build_atlas(args, cfg):
    import numpy as np

    from .atlas import build_atlas
    ds = load_dataset(args.data_dir)
    cap = cfg.joint.atlas_images
    energies = {}
    for c in range(ds.n_classes):
        idx = np.flatnonzero((ds.split == "train") & (ds.labels == c))
        if cap:
            idx = idx[:cap]
        if len(idx) == 0:
            continue
        model = build_atlas(ds.images[idx], cfg.joint.atlas, class_id=c)
        model.save(os.path.join(args.out, f"class_{c:02d}"))
        energies[ds.class_names[c]] = model.energy_history[-1].total
        log.info("class %d: %d images, final energy %.6g", c, len(idx), energies[ds.class_names[c]])
    _write_json(os.path.join(args.out, "summary.json"), {"final_energy": energies})


def _train_config(args, cfg):
    import dataclasses
    joint = cfg.joint
    if args.mode != "joint" and args.rounds is not None:
        raise UsageError(f"--rounds only applies to --mode joint, not {args.mode}")
    if args.mode == "joint":
        joint = dataclasses.replace(joint, mode="fused", rounds=args.rounds or joint.rounds)
    elif args.mode == "two-step":
        joint = dataclasses.replace(joint, mode="fused", rounds=1)
    else:
        joint = dataclasses.replace(joint, mode=args.mode, rounds=1)
    return dataclasses.replace(cfg, joint=joint)


def cmd_train(args, cfg):
    from .classify.joint import joint_train
    from .config import dumps
    cfg = _train_config(args, cfg)
    ds = load_dataset(args.data_dir)
    with open(os.path.join(args.out, "config.json"), "w") as fh:
        fh.write(dumps(cfg))

    def on_round(rec, pipeline, velocity):
        rdir = os.path.join(args.out, f"round_{rec.round}")
        os.makedirs(rdir, exist_ok=True)
        _write_json(os.path.join(rdir, "metrics.json"), {
            "round": rec.round, "split": "val", "train_accuracy": rec.train_accuracy,
            "atlas_energy": rec.atlas_energy, "val": rec.val})
        with open(os.path.join(rdir, "history.csv"), "w") as fh:
            fh.write("epoch,train_loss,val_accuracy\n")
            for epoch, loss, acc in rec.history:
                fh.write(f"{epoch},{loss!r},{acc!r}\n")

    result = joint_train(ds, cfg.joint, cfg.seed, on_round=on_round)
    result.pipeline.save(os.path.join(args.out, "model"))
    last = result.rounds[-1]
    _write_json(os.path.join(args.out, "metrics.json"), {
        "mode": args.mode, "rounds": len(result.rounds), "split": "val",
        "train_accuracy": last.train_accuracy, "val": last.val,
        "val_accuracy_per_round": [r.val["accuracy"] if r.val else None for r in result.rounds]})


def _load_model(model_dir):
    from .classify.joint import Pipeline
    from .config import read_config
    _require_dir(model_dir, "model directory")
    cfg = read_config(os.path.join(model_dir, "config.json"))
    return cfg, Pipeline.load(os.path.join(model_dir, "model"), cfg.joint)


def cmd_eval(args, cfg):
    from .classify.metrics import evaluate, write_roc
    cfg, pipeline = _load_model(args.model_dir)
    ds = load_dataset(args.data_dir)
    idx = ds.indices(args.split)
    if len(idx) == 0:
        raise UsageError(f"split {args.split!r} is empty")
    probs = pipeline.predict_proba(ds.images[idx])
    report, roc = evaluate(probs, ds.labels[idx], ds.n_classes)
    report["split"] = args.split
    _write_json(os.path.join(args.out, "metrics.json"), report)
    write_roc(os.path.join(args.out, "roc.csv"), roc)


def cmd_saliency(args, cfg):
    from . import io
    from .classify.analysis import saliency
    cfg, pipeline = _load_model(args.model_dir)
    ds = load_dataset(args.data_dir)
    idx = args.indices if args.indices else list(ds.indices(args.split)[:cfg.saliency_images])
    for i in idx:
        if not 0 <= i < len(ds.images):
            raise UsageError(f"image index {i} out of range")
    sal, _, shape_mag = saliency(pipeline, ds.images[idx])
    with open(os.path.join(args.out, "shape_saliency.csv"), "w") as fh:
        fh.write("index,shape_gradient_norm\n")
        for i, s, m in zip(idx, sal, shape_mag):
            io.write_image(s, os.path.join(args.out, f"saliency_{i:05d}.pgm"))
            fh.write(f"{i},{float(m)!r}\n")


def cmd_robustness(args, cfg):
    from .classify.analysis import robustness_sweep
    cfg, pipeline = _load_model(args.model_dir)
    ds = load_dataset(args.data_dir)
    idx = ds.indices(args.split)
    if len(idx) == 0:
        raise UsageError(f"split {args.split!r} is empty")
    eps = tuple(args.epsilons) if args.epsilons else cfg.epsilons
    if any(e <= 0 for e in eps):
        raise UsageError("epsilons must be positive")
    rows = robustness_sweep(pipeline, ds.images[idx], ds.labels[idx], eps)
    with open(os.path.join(args.out, "robustness.csv"), "w") as fh:
        fh.write("epsilon,accuracy\n")
        for e, a in rows:
            fh.write(f"{e!r},{a!r}\n")
    _write_json(os.path.join(args.out, "metrics.json"),
                {"split": args.split, "robustness": [{"epsilon": e, "accuracy": a} for e, a in rows]})


COMMANDS = {
    "gen-data": cmd_gen_data, "build-atlas": cmd_build_atlas, "train": cmd_train,
    "eval": cmd_eval, "saliency": cmd_saliency, "robustness": cmd_robustness,
}


def build_parser():
    p = argparse.ArgumentParser(prog="geosic", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=int, default=None, help="cap on worker threads (default: all cores)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True, model=False):
        if model:
            sp.add_argument("model_dir")
        if data:
            sp.add_argument("data_dir")
        sp.add_argument("--config", default=None, help="JSON run config (defaults when omitted)")
        sp.add_argument("--out", required=True)

    common(sub.add_parser("gen-data", help="render a synthetic shape dataset"), data=False)
    common(sub.add_parser("build-atlas", help="build one atlas per class from the training split"))
    tr = sub.add_parser("train", help="joint training, two-step baseline or ablations")
    common(tr)
    tr.add_argument("--mode", choices=TRAIN_MODES, default="joint")
    tr.add_argument("--rounds", type=int, default=None)
    for name in ("eval", "saliency", "robustness"):
        sp = sub.add_parser(name)
        common(sp, model=True)
        sp.add_argument("--split", default="test")
    sub.choices["saliency"].add_argument("--indices", type=int, nargs="*", default=None)
    sub.choices["robustness"].add_argument("--epsilons", type=float, nargs="*", default=None)
    return p


def _limit_threads(n):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return EXIT_USAGE
        # only effective before numpy's BLAS is loaded, i.e. when run as a fresh process
        _limit_threads(args.threads)

    from .config import dumps, read_config, with_trunc_grid
    from .errors import ContractError, DivergenceError, FormatError
    try:
        cfg = with_trunc_grid(read_config(args.config))
        os.makedirs(args.out, exist_ok=True)
        if args.command in ("gen-data", "build-atlas"):
            with open(os.path.join(args.out, "config.json"), "w") as fh:
                fh.write(dumps(cfg))
        COMMANDS[args.command](args, cfg)
    except (UsageError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"error: numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
