"""Alternating training of per-class atlases and the fused classifier.

Each round (1) continues atlas building for every class from the previous
round's atlas and velocities, (2) re-extracts features for all images
against the updated atlases and (3) continues classifier training from the
previous parameters. One round is the two-step baseline: atlases as
preprocessing, then the classifier.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from ..atlas import AtlasConfig, AtlasModel, build_atlas
from ..errors import ContractError
from .features import MODES, FeatureConfig, Normalizer, branch_widths, raw_features, register_to_atlases
from .metrics import evaluate
from .mlp import ClassifierConfig, FusedClassifier, accuracy, train_classifier

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class JointConfig:
    mode: str = "fused"
    rounds: int = 3
    atlas_images: int = 0     # per-class cap on training images used to build atlases; 0 = all
    atlas: AtlasConfig = field(default_factory=AtlasConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ContractError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.rounds < 1:
            raise ContractError("rounds must be >= 1")
        if self.mode == "image-only" and self.rounds != 1:
            raise ContractError("image-only mode has no atlases to alternate with; rounds must be 1")
        if self.atlas_images < 0:
            raise ContractError("atlas_images must be >= 0")


@dataclass
class Pipeline:
    """Everything needed to turn images into class probabilities."""
    mode: str
    models: list                 # AtlasModel per class (empty for image-only)
    config: JointConfig
    normalizer: Normalizer
    classifier: FusedClassifier

    @property
    def uses_shape(self):
        return self.mode != "image-only"

    def shape_velocity(self, images):
        if not self.uses_shape:
            return None
        state = register_to_atlases(images, self.models, self.config.atlas.shooting, self.config.features)
        return state.best()

    def features(self, images, shape_velocity=None):
        if self.uses_shape and shape_velocity is None:
            shape_velocity = self.shape_velocity(images)
        return self.normalizer(raw_features(images, shape_velocity, self.config.features, self.mode))

    def predict_proba(self, images, shape_velocity=None):
        return self.classifier.predict_proba(self.features(images, shape_velocity))

    def save(self, path):
        os.makedirs(path, exist_ok=True)
        for model in self.models:
            model.save(os.path.join(path, "atlases", f"class_{model.class_id:02d}"))
        self.classifier.save(os.path.join(path, "classifier.npz"))
        np.savez(os.path.join(path, "normalizer.npz"), mean=self.normalizer.mean, scale=self.normalizer.scale)

    @classmethod
    def load(cls, path, config):
        models = []
        adir = os.path.join(path, "atlases")
        if config.mode != "image-only":
            models = [AtlasModel.load(os.path.join(adir, d)) for d in sorted(os.listdir(adir))]
        with np.load(os.path.join(path, "normalizer.npz")) as z:
            norm = Normalizer(z["mean"], z["scale"])
        clf = FusedClassifier.load(os.path.join(path, "classifier.npz"))
        return cls(config.mode, models, config, norm, clf)


@dataclass
class RoundRecord:
    round: int
    atlas_energy: list           # final total energy per class
    val: dict                    # metrics report on the validation split
    train_accuracy: float
    history: list                # classifier (epoch, loss, val_acc) rows


@dataclass
class JointResult:
    pipeline: Pipeline
    rounds: list
    shape_velocity: np.ndarray   # best-atlas velocity for every dataset image (None for image-only)


def _atlas_indices(dataset, c, cap):
    idx = np.flatnonzero((dataset.split == "train") & (dataset.labels == c))
    return idx[:cap] if cap else idx


def joint_train(dataset, cfg, seed, on_round=None):
    """Alternate atlas building and classifier training for ``cfg.rounds`` rounds.

    ``on_round(record, pipeline, velocity)`` is called after every round with the
    best-atlas velocities of all dataset images for that round.
    """
    n_classes = dataset.n_classes
    train = dataset.indices("train")
    val = dataset.indices("val")
    if len(train) == 0:
        raise ContractError("training split is empty")
    y = dataset.labels
    models = []
    clf = None
    records = []
    velocity = None
    for r in range(1, cfg.rounds + 1):
        if cfg.mode != "image-only":
            updated = []
            for c in range(n_classes):
                idx = _atlas_indices(dataset, c, cfg.atlas_images)
                if len(idx) == 0:
                    raise ContractError(f"class {c} has no training images")
                prev = models[c] if models else None
                model = build_atlas(
                    dataset.images[idx], cfg.atlas,
                    init_atlas=None if prev is None else prev.atlas,
                    init_velocities=None if prev is None else prev.velocities,
                    class_id=c)
                if prev is not None:
                    model.energy_history = prev.energy_history + model.energy_history
                updated.append(model)
            models = updated
            velocity = register_to_atlases(dataset.images, models, cfg.atlas.shooting, cfg.features).best()
        raw = raw_features(dataset.images, velocity, cfg.features, cfg.mode)
        norm = Normalizer.fit(raw[train], branch_widths(raw.shape[1], cfg.features, cfg.mode))
        x = norm(raw)
        clf, history = train_classifier(x[train], y[train], x[val], y[val], n_classes,
                                        cfg.classifier, seed, init=clf)
        pipeline = Pipeline(cfg.mode, models, cfg, norm, clf)
        val_report = evaluate(clf.predict_proba(x[val]), y[val], n_classes)[0] if len(val) else None
        rec = RoundRecord(r, [float(m.energy_history[-1].total) for m in models], val_report,
                          accuracy(clf, x[train], y[train]), history)
        records.append(rec)
        log.info("round %d: train acc %.3f, val acc %s", r, rec.train_accuracy,
                 None if val_report is None else f"{val_report['accuracy']:.3f}")
        if on_round is not None:
            on_round(rec, pipeline, velocity)
    return JointResult(pipeline, records, velocity)
