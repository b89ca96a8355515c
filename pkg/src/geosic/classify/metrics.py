"""Classification metrics: micro-averaged one-vs-rest rates, ROC and AUC.

The ROC is built from scores sorted in decreasing order with tied scores
entering as one step, and the trapezoidal area is accumulated in integer
counts, so the AUC equals the Mann-Whitney concordance ``(C + T/2) / (P*N)``
exactly (``C`` concordant pairs, ``T`` tied pairs).
"""
from __future__ import annotations

import numpy as np


def roc_curve(scores, positive):
    """ROC vertices ``(fpr, tpr)`` starting at (0, 0); also returns integer counts."""
    scores = np.asarray(scores, dtype=float).ravel()
    positive = np.asarray(positive, dtype=bool).ravel()
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    pos = positive[order]
    # last index of each block of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.r_[0, np.cumsum(pos)[ends]]
    fp = np.r_[0, np.cumsum(~pos)[ends]]
    P, N = int(pos.sum()), int((~pos).sum())
    fpr = fp / N if N else np.full(len(fp), np.nan)
    tpr = tp / P if P else np.full(len(tp), np.nan)
    return fpr, tpr, tp, fp


def auc(scores, positive):
    """Trapezoidal ROC area, or ``None`` when only one class is present."""
    _, _, tp, fp = roc_curve(scores, positive)
    P, N = int(tp[-1]), int(fp[-1])
    if P == 0 or N == 0:
        return None
    twice_area = sum(int(f1 - f0) * int(t1 + t0) for f0, f1, t0, t1 in zip(fp[:-1], fp[1:], tp[:-1], tp[1:]))
    return twice_area / (2 * P * N)


def mann_whitney_auc(scores, positive):
    """Brute-force pairwise concordance, the reference the trapezoid must equal."""
    scores = np.asarray(scores, dtype=float).ravel()
    positive = np.asarray(positive, dtype=bool).ravel()
    sp, sn = scores[positive], scores[~positive]
    if len(sp) == 0 or len(sn) == 0:
        return None
    twice = 2 * int((sp[:, None] > sn[None, :]).sum()) + int((sp[:, None] == sn[None, :]).sum())
    return twice / (2 * len(sp) * len(sn))


def _safe_div(a, b):
    return float(a / b) if b else None


def evaluate(probs, labels, n_classes):
    """Metrics dictionary plus the micro-averaged ROC polyline ``(fpr, tpr)``."""
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if len(labels) == 0:
        raise ValueError("cannot evaluate an empty split")
    pred = np.argmax(probs, axis=1)
    onehot = np.eye(n_classes, dtype=bool)[labels]
    predhot = np.eye(n_classes, dtype=bool)[pred]
    tp = (onehot & predhot).sum(axis=0)
    fp = (~onehot & predhot).sum(axis=0)
    fn = (onehot & ~predhot).sum(axis=0)
    tn = (~onehot & ~predhot).sum(axis=0)
    TP, FP, FN, TN = int(tp.sum()), int(fp.sum()), int(fn.sum()), int(tn.sum())
    precision = _safe_div(TP, TP + FP)
    recall = _safe_div(TP, TP + FN)
    f1 = _safe_div(2 * TP, 2 * TP + FP + FN)
    single_class = len(np.unique(labels)) < 2
    micro_auc = None if single_class else auc(probs, onehot)
    per_class_auc = [None if single_class else auc(probs[:, c], onehot[:, c]) for c in range(n_classes)]
    fpr, tpr, _, _ = roc_curve(probs, onehot)
    report = {
        "n": int(len(labels)),
        "accuracy": float((pred == labels).mean()),
        "auc": micro_auc,
        "f1": f1,
        "precision": precision,
        "sensitivity": recall,
        "specificity": _safe_div(TN, TN + FP),
        "per_class": {
            "precision": [_safe_div(a, a + b) for a, b in zip(tp, fp)],
            "sensitivity": [_safe_div(a, a + b) for a, b in zip(tp, fn)],
            "specificity": [_safe_div(a, a + b) for a, b in zip(tn, fp)],
            "f1": [_safe_div(2 * a, 2 * a + b + c) for a, b, c in zip(tp, fp, fn)],
            "auc": per_class_auc,
        },
    }
    return report, (fpr, tpr)


def write_roc(path, roc):
    fpr, tpr = roc
    with open(path, "w") as fh:
        fh.write("fpr,tpr\n")
        for a, b in zip(fpr, tpr):
            fh.write(f"{float(a)!r},{float(b)!r}\n")
