"""Precision-recall evaluation and the supervised baselines."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .numerics import AdamConfig, ParamStore, adam_step, log_sigmoid, sigmoid
from .ssgan import Mlp, loss_labeled, make_discriminator, positive_scores


@dataclass
class PrCurve:
    recall: np.ndarray
    precision: np.ndarray
    threshold: np.ndarray  # anchor carries +inf
    base_rate: float

    def points(self) -> List[Tuple[float, float]]:
        return list(zip(self.recall.tolist(), self.precision.tolist()))


def pr_curve(scores, labels) -> PrCurve:
    """One point per distinct score, ties entering the confusion matrix together.

    The curve starts at an anchor ``(recall 0, precision of the first point)``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-d and of equal length")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    P = int(labels.sum())
    if P == 0 or P == len(labels):
        raise ValueError("need at least one positive and one negative label")
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    # last index of every run of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y)[ends]
    predicted = ends + 1
    precision = tp / predicted
    recall = tp / P
    return PrCurve(np.r_[0.0, recall], np.r_[precision[0], precision],
                   np.r_[np.inf, s[ends]], P / len(labels))


def pr_auc(curve: PrCurve) -> float:
    """Trapezoidal area under precision as a function of recall."""
    r, p = curve.recall, curve.precision
    return float(np.sum(np.diff(r) * (p[1:] + p[:-1]) / 2.0))


def average_pr_auc(scores, labels) -> float:
    return pr_auc(pr_curve(scores, labels))


def export_pr_csv(curve: PrCurve, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["threshold", "recall", "precision"])
        for t, r, p in zip(curve.threshold, curve.recall, curve.precision):
            w.writerow([repr(float(t)), repr(float(r)), repr(float(p))])


# -------------------------------------------------------------- baselines

@dataclass(frozen=True)
class BaselineConfig:
    epochs: int = 20
    learning_rate: float = 0.001
    batch_size: int = 32
    dropout: float = 0.3
    widths: Tuple[int, ...] = (256, 128, 64, 32, 16)
    seed: int = 0


def _check_two_classes(y):
    y = np.asarray(y)
    if len(np.unique(y)) < 2:
        raise ValueError("baseline training needs both classes")
    return y


def logistic_loss(w, b, x, y):
    """Mean binary cross-entropy of ``sigmoid(x @ w + b)``; returns ``(loss, dw, db)``."""
    z = x @ w + b
    loss = -np.mean(y * log_sigmoid(z) + (1 - y) * log_sigmoid(-z))
    dz = (sigmoid(z) - y) / len(y)
    return float(loss), x.T @ dz, float(dz.sum())


@dataclass
class LogisticModel:
    w: np.ndarray
    b: float
    loss_history: List[float]

    def scores(self, x):
        return sigmoid(np.asarray(x, dtype=np.float64) @ self.w + self.b)

    def to_json(self):
        return {"w": self.w.tolist(), "b": self.b}


def train_logistic_baseline(x, y, cfg: BaselineConfig = BaselineConfig()) -> LogisticModel:
    x = np.asarray(x, dtype=np.float64)
    y = _check_two_classes(y).astype(np.float64)
    rng = np.random.default_rng(cfg.seed)
    store = ParamStore({"w": np.zeros(x.shape[1]), "b": np.zeros(1)})
    adam = AdamConfig(learning_rate=cfg.learning_rate)
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(x))
        total = 0.0
        for s in range(0, len(order), cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            loss, dw, db = logistic_loss(store["w"], store["b"][0], x[idx], y[idx])
            total += loss * len(idx)
            store.accumulate({"w": dw, "b": np.array([db])})
            adam_step(store, adam)
        history.append(total / len(x))
    return LogisticModel(store["w"].copy(), float(store["b"][0]), history)


@dataclass
class DnnModel:
    discriminator: Mlp
    loss_history: List[float]

    def scores(self, x):
        return positive_scores(self.discriminator.forward(x, training=False)[0])


def train_dnn_baseline(x, y, cfg: BaselineConfig = BaselineConfig()) -> DnnModel:
    """The discriminator architecture trained on labeled data with L_labeled alone."""
    x = np.asarray(x, dtype=np.float64)
    y = _check_two_classes(y).astype(np.int64)
    rng = np.random.default_rng(cfg.seed)
    D = make_discriminator(x.shape[1], cfg.widths, 2, cfg.dropout, rng)
    adam = AdamConfig(learning_rate=cfg.learning_rate)
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(x))
        total = 0.0
        for s in range(0, len(order), cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            logits, _, cache = D.forward(x[idx], training=True, rng=rng)
            loss, dlogits = loss_labeled(logits, y[idx])
            total += loss * len(idx)
            grads, _ = D.backward(cache, dlogits)
            D.store.accumulate(grads)
            adam_step(D.store, adam)
        history.append(total / len(x))
    return DnnModel(D, history)
