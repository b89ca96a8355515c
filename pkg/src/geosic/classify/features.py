"""Fused shape + image feature vectors.

Layout of one feature row (before normalization)::

    [ Re/Im of the best-atlas velocity, (2, 2, th, tw) flattened | block-averaged image, flattened ]

Which atlas won is never written into the row; only its velocity is.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import grid
from ..atlas import VelocityDescent, velocity_to_real
from ..errors import ContractError

CHUNK_PIXELS = 32 * 32 * 32
MODES = ("fused", "image-only", "shape-only")


@dataclass(frozen=True)
class FeatureConfig:
    register_steps: int = 10
    step_size: float = 1.0
    image_size: int = 16       # side of the block-averaged image feature

    def __post_init__(self):
        if self.register_steps < 1 or self.image_size < 1:
            raise ContractError("register_steps and image_size must be >= 1")


@dataclass
class ShapeState:
    """Velocities of every image against every atlas, kept for warm starts."""
    velocities: np.ndarray     # (N, K, 2, th, tw)
    energies: np.ndarray       # (N, K)

    def best(self):
        k = np.argmin(self.energies, axis=1)
        return self.velocities[np.arange(len(k)), k]


def register_to_atlases(images, models, shooting, cfg, previous=None):
    """Register every image to every class atlas; returns a :class:`ShapeState`."""
    if not models:
        raise ContractError("no atlas models to extract shape features from")
    images = np.asarray(images, dtype=float)
    trunc = models[0].velocities.shape[-2:]
    n, k = len(images), len(models)
    # small batches keep the stored trajectories in cache
    chunk = max(1, CHUNK_PIXELS // images[0].size)
    vel = np.zeros((n, k, 2) + tuple(trunc), dtype=complex)
    energy = np.empty((n, k))
    for j, model in enumerate(models):
        if model.atlas.shape != images.shape[-2:]:
            raise ContractError(f"atlas {j} shape {model.atlas.shape} does not match images")
        init = vel[:, j] if previous is None else previous.velocities[:, j]
        for s in range(0, n, chunk):
            opt = VelocityDescent(shooting, init[s:s + chunk], step=cfg.step_size)
            trace = opt.run(model.atlas, images[s:s + chunk], cfg.register_steps)
            vel[s:s + chunk, j] = opt.v
            energy[s:s + chunk, j] = trace[-1]
    return ShapeState(vel, energy)


def image_block(images, cfg):
    images = np.asarray(images, dtype=float)
    h = images.shape[-1]
    if h % cfg.image_size:
        raise ContractError(f"image width {h} is not a multiple of image_size {cfg.image_size}")
    return h // cfg.image_size


def raw_features(images, shape_velocity, cfg, mode="fused"):
    """Unnormalized feature rows for ``mode`` in {fused, image-only, shape-only}."""
    if mode not in MODES:
        raise ContractError(f"unknown feature mode {mode!r}; expected one of {MODES}")
    images = np.asarray(images, dtype=float)
    parts = []
    if mode != "image-only":
        parts.append(velocity_to_real(shape_velocity).reshape(len(images), -1))
    if mode != "shape-only":
        parts.append(grid.block_average(images, image_block(images, cfg)).reshape(len(images), -1))
    return np.concatenate(parts, axis=1)


def feature_length(trunc, cfg, mode="fused"):
    shape = 4 * trunc[0] * trunc[1]
    image = cfg.image_size ** 2
    return {"fused": shape + image, "image-only": image, "shape-only": shape}[mode]


def branch_widths(n_features, cfg, mode="fused"):
    """Column counts of the (shape, image) branches present in ``mode``."""
    image = cfg.image_size ** 2
    return {"fused": (n_features - image, image), "image-only": (image,),
            "shape-only": (n_features,)}[mode]


@dataclass
class Normalizer:
    """Centering per dimension and one scale per feature branch, from training statistics.

    Each branch is divided by the pooled standard deviation of its centered
    columns, so relative magnitudes inside a branch are kept. Per-column
    z-scoring would blow up near-constant columns such as background pixels
    that only carry noise.
    """
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, x, widths=None):
        x = np.asarray(x, dtype=float)
        widths = (x.shape[1],) if widths is None else tuple(widths)
        if sum(widths) != x.shape[1]:
            raise ContractError(f"branch widths {widths} do not add up to {x.shape[1]} features")
        mean = x.mean(axis=0)
        scale = np.empty(x.shape[1])
        start = 0
        for w in widths:
            sd = np.sqrt(((x[:, start:start + w] - mean[start:start + w]) ** 2).mean())
            scale[start:start + w] = sd if sd > 1e-12 else 1.0
            start += w
        return cls(mean, scale)

    def __call__(self, x):
        return (x - self.mean) / self.scale
