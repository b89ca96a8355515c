"""Scaled-down experiments: atlas recovery, classification ordering, robustness.

The classification benchmark runs at a 32x32 canvas with an 8x8 velocity
band so that five seeds of joint training fit in a desk-scale time budget.
"""
from __future__ import annotations

import dataclasses
import logging
import time

import numpy as np

from .atlas import AtlasConfig, build_atlas, sharpness
from .classify.analysis import robustness_sweep
from .classify.features import FeatureConfig, raw_features
from .classify.joint import JointConfig, joint_train
from .classify.mlp import ClassifierConfig
from .config import DataConfig, RunConfig, with_trunc_grid
from .synth import PerturbationSpec, ShapeSpec, canonical, generate, sample

log = logging.getLogger(__name__)

ROBUST_EPS = 5e-2


def benchmark_config(seed=0):
    """Run config of the 5-class 500/100/100 benchmark."""
    data = DataConfig(
        canvas=(32, 32), size=9.0, background=0.2, n=700, split=(500, 100, 100),
        perturbation=PerturbationSpec(rotation=30.0, translation=4.0, log_scale=0.15,
                                      warp_amplitude=1.0, warp_cutoff=2, noise=0.1))
    joint = JointConfig(
        rounds=3, atlas_images=30,
        atlas=AtlasConfig(outer_iters=8, v_steps=3, trunc=(8, 8)),
        features=FeatureConfig(register_steps=8),
        classifier=ClassifierConfig(epochs=40))
    return with_trunc_grid(RunConfig(seed=seed, data=data, joint=joint))


def _test_accuracy(pipeline, images, labels, velocity, mode):
    x = pipeline.normalizer(raw_features(images, velocity, pipeline.config.features, mode))
    return float((pipeline.classifier.predict(x) == labels).mean())


def classification_seed(seed, cfg=None, epsilon=ROBUST_EPS):
    """Test accuracies of two-step (round 1), joint (last round) and image-only,
    plus accuracy of the joint and image-only models under an ``epsilon`` attack."""
    cfg = cfg or benchmark_config(seed)
    ds = generate(cfg.data.specs(), cfg.data.perturbation, cfg.data.n, seed, cfg.data.split)
    te = ds.indices("test")
    images, labels = ds.images[te], ds.labels[te]
    out = {"seed": seed}
    per_round = {}

    def on_round(rec, pipeline, velocity):
        per_round[rec.round] = _test_accuracy(pipeline, images, labels, velocity[te], "fused")

    t0 = time.perf_counter()
    joint = joint_train(ds, cfg.joint, seed, on_round=on_round)
    out["joint_seconds"] = time.perf_counter() - t0
    out["two_step"] = per_round[1]
    out["joint"] = per_round[max(per_round)]
    out["per_round"] = [per_round[r] for r in sorted(per_round)]

    t0 = time.perf_counter()
    img_cfg = dataclasses.replace(cfg.joint, mode="image-only", rounds=1)
    image_only = joint_train(ds, img_cfg, seed)
    out["image_only"] = _test_accuracy(image_only.pipeline, images, labels, None, "image-only")
    out["image_only_seconds"] = time.perf_counter() - t0

    if epsilon is not None:
        t0 = time.perf_counter()
        fused_rows = robustness_sweep(joint.pipeline, images, labels, (epsilon,), joint.shape_velocity[te])
        image_rows = robustness_sweep(image_only.pipeline, images, labels, (epsilon,))
        out["robust_fused"] = fused_rows[1][1]
        out["robust_image_only"] = image_rows[1][1]
        out["robust_seconds"] = time.perf_counter() - t0
    log.info("seed %d: %s", seed, out)
    return out


def atlas_recovery(shape="square", n=20, seed=0, config=None):
    """Atlas from ``n`` perturbed renders of one shape, compared with the pixelwise mean.

    Renders come in mirrored pairs so that the sample is centred on the
    canonical pose; otherwise the finite-sample mean pose, which both the atlas
    and the mean image inherit, dominates the SSD to the canonical render.
    """
    spec = ShapeSpec(shape, size=16.0, background=0.2)
    perturb = PerturbationSpec(rotation=10.0, translation=3.0, warp_amplitude=1.5)
    images = np.stack([sample([spec], perturb, seed, i // 2, mirror=i % 2 == 1)[0] for i in range(n)])
    truth = canonical(spec)
    t0 = time.perf_counter()
    model = build_atlas(images, config or AtlasConfig())
    seconds = time.perf_counter() - t0
    mean = images.mean(axis=0)
    return {
        "seconds": seconds,
        "iterations": len(model.energy_history),
        "sharpness_atlas": sharpness(model.atlas),
        "sharpness_mean": sharpness(mean),
        "ssd_atlas": float(((model.atlas - truth) ** 2).sum()),
        "ssd_mean": float(((mean - truth) ** 2).sum()),
    }
