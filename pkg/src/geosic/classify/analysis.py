"""Input-gradient saliency and gradient-sign robustness sweeps."""
from __future__ import annotations

import numpy as np

from .. import grid
from .features import image_block
from .mlp import softmax

EPSILONS = (5e-3, 5e-2, 5e-1)


def _image_columns(pipeline):
    return slice(-pipeline.config.features.image_size ** 2, None) if pipeline.mode != "shape-only" else None


def _feature_to_image(pipeline, dfeat, images):
    """Pull a feature-space gradient back to pixels through the image branch only."""
    cols = _image_columns(pipeline)
    out = np.zeros(np.shape(images))
    if cols is None:
        return out
    s = pipeline.config.features.image_size
    coarse = (dfeat[:, cols] / pipeline.normalizer.scale[cols]).reshape(len(images), s, s)
    return grid.block_average_adjoint(coarse, image_block(images, pipeline.config.features))


def saliency(pipeline, images, shape_velocity=None):
    """Image saliency in [0, 1] and the shape-branch gradient magnitude per image.

    The image map is |d logit_c / d pixel| for the predicted class ``c``,
    normalized by its maximum; shape features are held fixed.
    """
    images = np.asarray(images, dtype=float)
    x = pipeline.features(images, shape_velocity)
    logits = pipeline.classifier.logits(x)
    pick = np.eye(logits.shape[1])[np.argmax(logits, axis=1)]
    dfeat = pipeline.classifier.input_gradient(x, pick)
    raw = _feature_to_image(pipeline, dfeat, images)
    mag = np.abs(raw)
    peak = mag.max(axis=(-2, -1), keepdims=True)
    sal = np.divide(mag, peak, out=np.zeros_like(mag), where=peak > 0)
    if pipeline.mode == "image-only":
        shape_mag = np.zeros(len(images))
    else:
        n_shape = dfeat.shape[1] - (pipeline.config.features.image_size ** 2 if pipeline.mode == "fused" else 0)
        shape_mag = np.linalg.norm(dfeat[:, :n_shape] / pipeline.normalizer.scale[:n_shape], axis=1)
    return sal, raw, shape_mag


def loss_image_gradient(pipeline, images, labels, shape_velocity=None):
    """d(cross-entropy)/d(image) through the image branch, per image."""
    x = pipeline.features(images, shape_velocity)
    p = softmax(pipeline.classifier.logits(x))
    p[np.arange(len(labels)), labels] -= 1.0
    return _feature_to_image(pipeline, pipeline.classifier.input_gradient(x, p), images)


def robustness_sweep(pipeline, images, labels, epsilons=EPSILONS, shape_velocity=None):
    """Accuracy under ``eps * sign(grad)`` perturbations; rows ``(eps, accuracy)`` with eps=0 first."""
    images = np.asarray(images, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if shape_velocity is None and pipeline.uses_shape:
        shape_velocity = pipeline.shape_velocity(images)
    clean = float((np.argmax(pipeline.predict_proba(images, shape_velocity), axis=1) == labels).mean())
    rows = [(0.0, clean)]
    direction = np.sign(loss_image_gradient(pipeline, images, labels, shape_velocity))
    for eps in epsilons:
        if eps == 0:
            rows.append((0.0, clean))
            continue
        attacked = images + eps * direction
        acc = float((np.argmax(pipeline.predict_proba(attacked), axis=1) == labels).mean())
        rows.append((float(eps), acc))
    return rows
