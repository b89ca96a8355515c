"""Fused shape + image classification on top of per-class atlases."""
from .features import FeatureConfig, Normalizer, raw_features, register_to_atlases
from .joint import JointConfig, Pipeline, joint_train
from .metrics import auc, evaluate, mann_whitney_auc, roc_curve
from .mlp import ClassifierConfig, FusedClassifier, train_classifier

__all__ = [
    "FeatureConfig", "Normalizer", "raw_features", "register_to_atlases",
    "JointConfig", "Pipeline", "joint_train",
    "auc", "evaluate", "mann_whitney_auc", "roc_curve",
    "ClassifierConfig", "FusedClassifier", "train_classifier",
]
