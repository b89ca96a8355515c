"""Two-layer tanh perceptron over fused features, trained with Adam."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError


@dataclass(frozen=True)
class ClassifierConfig:
    hidden: int = 64
    lam: float = 1.0            # weight on the cross-entropy term
    weight_decay: float = 1e-4
    lr: float = 1e-3
    batch_size: int = 16
    epochs: int = 60
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    schedule: str = "cosine"    # or "constant"

    def __post_init__(self):
        if self.hidden < 1 or self.batch_size < 1 or self.epochs < 1:
            raise ContractError("hidden, batch_size and epochs must be >= 1")
        if self.schedule not in ("cosine", "constant"):
            raise ContractError(f"unknown schedule {self.schedule!r}")


@dataclass
class FusedClassifier:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @classmethod
    def init(cls, n_in, n_out, hidden, rng):
        return cls(rng.standard_normal((n_in, hidden)) / np.sqrt(n_in), np.zeros(hidden),
                   rng.standard_normal((hidden, n_out)) / np.sqrt(hidden), np.zeros(n_out))

    def params(self):
        return [self.w1, self.b1, self.w2, self.b2]

    def copy(self):
        return FusedClassifier(*(p.copy() for p in self.params()))

    def hidden(self, x):
        return np.tanh(x @ self.w1 + self.b1)

    def logits(self, x):
        return self.hidden(x) @ self.w2 + self.b2

    def predict_proba(self, x):
        return softmax(self.logits(x))

    def predict(self, x):
        return np.argmax(self.logits(x), axis=1)

    def input_gradient(self, x, out_grad):
        """d(sum(out_grad * logits)) / dx for a batch."""
        h = self.hidden(x)
        return ((out_grad @ self.w2.T) * (1 - h * h)) @ self.w1.T

    def save(self, path):
        np.savez(path, w1=self.w1, b1=self.b1, w2=self.w2, b2=self.b2)

    @classmethod
    def load(cls, path):
        with np.load(path) as z:
            return cls(z["w1"], z["b1"], z["w2"], z["b2"])


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grads(model, x, y, cfg):
    """lam * mean cross-entropy + weight_decay * ||theta||^2 and its gradient."""
    n = len(x)
    h = model.hidden(x)
    p = softmax(h @ model.w2 + model.b2)
    ce = -np.log(np.maximum(p[np.arange(n), y], 1e-300)).mean()
    params = model.params()
    loss = cfg.lam * ce + cfg.weight_decay * sum((q * q).sum() for q in params)
    dz = p.copy()
    dz[np.arange(n), y] -= 1.0
    dz *= cfg.lam / n
    gw2 = h.T @ dz
    gb2 = dz.sum(axis=0)
    dh = (dz @ model.w2.T) * (1 - h * h)
    gw1 = x.T @ dh
    gb1 = dh.sum(axis=0)
    grads = [g + 2 * cfg.weight_decay * q for g, q in zip((gw1, gb1, gw2, gb2), params)]
    return loss, grads


def accuracy(model, x, y):
    return float((model.predict(x) == y).mean())


def train_classifier(x_train, y_train, x_val, y_val, n_classes, cfg, seed, init=None):
    """Adam with a cosine-annealed rate; returns ``(best_model, history)``.

    ``history`` holds one ``(epoch, train_loss, val_accuracy)`` row per epoch.
    The returned parameters are those of the epoch with the best validation
    accuracy (earliest on ties), or the final ones without a validation
    split. ``init`` continues from existing parameters.
    """
    y_train = np.asarray(y_train, dtype=int)
    missing = set(range(n_classes)) - set(np.unique(y_train).tolist())
    if missing:
        raise ContractError(f"classes {sorted(missing)} are missing from the training split")
    rng = np.random.default_rng([seed, 0xC1A5])
    model = init.copy() if init is not None else FusedClassifier.init(
        x_train.shape[1], n_classes, cfg.hidden, rng)
    m = [np.zeros_like(q) for q in model.params()]
    v = [np.zeros_like(q) for q in model.params()]
    n = len(x_train)
    steps_per_epoch = -(-n // cfg.batch_size)
    total_steps = cfg.epochs * steps_per_epoch
    best, best_acc = model.copy(), -1.0
    history = []
    t = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = loss_and_grads(model, x_train[idx], y_train[idx], cfg)
            losses.append(loss)
            lr = cfg.lr
            if cfg.schedule == "cosine":
                lr = 0.5 * cfg.lr * (1 + np.cos(np.pi * t / total_steps))
            t += 1
            for q, g, mq, vq in zip(model.params(), grads, m, v):
                mq *= cfg.beta1
                mq += (1 - cfg.beta1) * g
                vq *= cfg.beta2
                vq += (1 - cfg.beta2) * g * g
                mhat = mq / (1 - cfg.beta1 ** t)
                vhat = vq / (1 - cfg.beta2 ** t)
                q -= lr * mhat / (np.sqrt(vhat) + cfg.eps)
        val_acc = accuracy(model, x_val, y_val) if len(x_val) else 0.0
        history.append((epoch, float(np.mean(losses)), val_acc))
        if val_acc > best_acc:
            best, best_acc = model.copy(), val_acc
    if not len(x_val):
        best = model
    return best, history
