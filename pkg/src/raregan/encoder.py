"""LSTM sequence encoder: pad, run, max-pool over real steps, add demographics, scale."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .embedder import EmbeddingMatrix
from .numerics import (AdamConfig, ParamStore, adam_step, check_finite, log_sigmoid,
                       sigmoid)

PAD = None


@dataclass(frozen=True)
class EncoderConfig:
    max_length: int = 60
    hidden: int = 32
    epochs: int = 20
    learning_rate: float = 0.005
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.max_length < 1 or self.hidden < 1:
            raise ValueError("max_length and hidden must be >= 1")


def pad_or_truncate(codes: Sequence, n: int):
    """Keep the last ``n`` codes, post-pad shorter sequences with ``PAD``.

    Returns ``(codes, mask)`` where ``mask`` is a boolean array of real positions.
    """
    if n < 1:
        raise ValueError("padded length must be >= 1")
    codes = list(codes)
    if not codes:
        raise ValueError("cannot pad an empty sequence")
    codes = codes[-n:]
    mask = np.zeros(n, dtype=bool)
    mask[:len(codes)] = True
    return codes + [PAD] * (n - len(codes)), mask


def sequence_batch(records, emb: EmbeddingMatrix, n: int):
    """Embedded inputs ``(B, n, d_w)`` and mask ``(B, n)`` for a list of records."""
    zero = emb.zero_index
    idx = np.full((len(records), n), zero, dtype=np.int64)
    mask = np.zeros((len(records), n), dtype=bool)
    for b, rec in enumerate(records):
        codes, m = pad_or_truncate(rec.codes, n)
        k = int(m.sum())
        idx[b, :k] = emb.vocab.indices(codes[:k], missing=zero)
        mask[b] = m
    return emb.center[idx], mask


class LstmCell:
    """Single-layer LSTM. Gate order in the fused weight: input, forget, output, candidate."""

    def __init__(self, input_dim: int, hidden: int, rng=None, params=None):
        self.input_dim = input_dim
        self.hidden = hidden
        if params is None:
            rng = rng or np.random.default_rng(0)
            scale = 1.0 / np.sqrt(input_dim + hidden)
            W = rng.uniform(-scale, scale, size=(input_dim + hidden, 4 * hidden))
            b = np.zeros(4 * hidden)
            b[hidden:2 * hidden] = 1.0
            params = {"lstm_W": W, "lstm_b": b}
        self.params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}

    def forward(self, x, mask=None):
        """Run over ``x`` of shape ``(B, T, d_w)``; returns hidden states ``(B, T, d_S)`` and a cache."""
        W, b = self.params["lstm_W"], self.params["lstm_b"]
        B, T, _ = x.shape
        H = self.hidden
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        hs = np.empty((B, T, H))
        cache = []
        for t in range(T):
            xh = np.concatenate([x[:, t], h], axis=1)
            z = xh @ W + b
            i = sigmoid(z[:, :H])
            f = sigmoid(z[:, H:2 * H])
            o = sigmoid(z[:, 2 * H:3 * H])
            g = np.tanh(z[:, 3 * H:])
            c_prev = c
            c = f * c_prev + i * g
            tc = np.tanh(c)
            h = o * tc
            hs[:, t] = h
            cache.append((xh, i, f, o, g, c_prev, tc))
        check_finite(hs, "LSTM hidden states")
        return hs, cache

    def backward(self, dhs, cache):
        """Backprop through time given ``dL/dh_t`` for every step; returns parameter grads."""
        W = self.params["lstm_W"]
        H = self.hidden
        B, T, _ = dhs.shape
        dW = np.zeros_like(W)
        db = np.zeros(4 * H)
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in reversed(range(T)):
            xh, i, f, o, g, c_prev, tc = cache[t]
            dh = dhs[:, t] + dh_next
            do = dh * tc
            dc = dh * o * (1.0 - tc * tc) + dc_next
            dz = np.concatenate([
                dc * g * i * (1.0 - i),
                dc * c_prev * f * (1.0 - f),
                do * o * (1.0 - o),
                dc * i * (1.0 - g * g),
            ], axis=1)
            dW += xh.T @ dz
            db += dz.sum(axis=0)
            dh_next = (dz @ W.T)[:, self.input_dim:]
            dc_next = dc * f
        return {"lstm_W": dW, "lstm_b": db}


def lstm_forward(cell: LstmCell, embedded, mask):
    """Hidden states for one embedded sequence ``(N, d_w)``; PAD rows are zeroed in the output."""
    hs, _ = cell.forward(np.asarray(embedded, dtype=np.float64)[None])
    return hs[0] * np.asarray(mask, dtype=bool)[:, None]


def masked_max_pool(hs, mask):
    """Max over real time steps. Returns ``(pooled (B, d_S), argmax (B, d_S))``."""
    if not np.all(mask.any(axis=1)):
        raise ValueError("sequence has no real (unmasked) positions")
    masked = np.where(mask[:, :, None], hs, -np.inf)
    arg = np.argmax(masked, axis=1)
    pooled = np.take_along_axis(hs, arg[:, None, :], axis=1)[:, 0]
    return pooled, arg


def masked_max_pool_backward(dpooled, arg, shape):
    dhs = np.zeros(shape)
    np.put_along_axis(dhs, arg[:, None, :], dpooled[:, None, :], axis=1)
    return dhs


@dataclass
class FeatureScaler:
    """Per-dimension min-max map onto [-1, 1]; constant dimensions map to 0."""
    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def fit(cls, features) -> "FeatureScaler":
        features = np.asarray(features, dtype=np.float64)
        return cls(features.min(axis=0), features.max(axis=0))

    def apply(self, features):
        features = np.asarray(features, dtype=np.float64)
        span = self.hi - self.lo
        safe = np.where(span > 0, span, 1.0)
        out = 2.0 * (features - self.lo) / safe - 1.0
        out = np.where(span > 0, out, 0.0)
        return np.clip(out, -1.0, 1.0)

    def to_json(self):
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}

    @classmethod
    def from_json(cls, doc):
        return cls(np.asarray(doc["lo"], dtype=np.float64), np.asarray(doc["hi"], dtype=np.float64))


def fit_scaler(features) -> FeatureScaler:
    return FeatureScaler.fit(features)


@dataclass
class SequenceEncoder:
    """Frozen embedding + trained LSTM + (optionally) a fitted scaler."""
    emb: EmbeddingMatrix
    cell: LstmCell
    max_length: int
    scaler: Optional[FeatureScaler] = None
    loss_history: List[float] = field(default_factory=list)

    @property
    def feature_dim(self) -> int:
        return self.cell.hidden + 2

    def pooled(self, records, batch_size: int = 256):
        out = []
        for s in range(0, len(records), batch_size):
            x, mask = sequence_batch(records[s:s + batch_size], self.emb, self.max_length)
            hs, _ = self.cell.forward(x)
            out.append(masked_max_pool(hs, mask)[0])
        return np.concatenate(out) if out else np.empty((0, self.cell.hidden))

    def raw_features(self, records):
        demo = np.array([[r.age, r.gender] for r in records], dtype=np.float64).reshape(-1, 2)
        return np.hstack([self.pooled(records), demo])

    def features(self, records):
        if self.scaler is None:
            raise RuntimeError("scaler not fitted; call fit_scaler on training features")
        return self.scaler.apply(self.raw_features(records))

    def fit_scaler(self, train_records) -> FeatureScaler:
        self.scaler = FeatureScaler.fit(self.raw_features(train_records))
        return self.scaler


def encode(record, emb: EmbeddingMatrix, lstm: LstmCell, scaler: FeatureScaler,
           max_length: int = 60):
    return SequenceEncoder(emb, lstm, max_length, scaler).features([record])[0]


def pooled_classifier_loss(cell: LstmCell, head_w, head_b, x, mask, y):
    """Mean binary cross-entropy of a logistic head on max-pooled LSTM states.

    Returns ``(loss, grads)`` over ``lstm_W``, ``lstm_b``, ``head_w``, ``head_b``.
    """
    hs, cache = cell.forward(x)
    pooled, arg = masked_max_pool(hs, mask)
    logit = pooled @ head_w + head_b
    n = len(y)
    loss = -np.sum(y * log_sigmoid(logit) + (1 - y) * log_sigmoid(-logit)) / n
    dlogit = (sigmoid(logit) - y) / n
    grads = cell.backward(masked_max_pool_backward(np.outer(dlogit, head_w), arg, hs.shape), cache)
    grads["head_w"] = pooled.T @ dlogit
    grads["head_b"] = np.array([dlogit.sum()])
    return float(loss), grads


def train_encoder(records, emb: EmbeddingMatrix, cfg: EncoderConfig = EncoderConfig()) -> SequenceEncoder:
    """Fit the LSTM with a throwaway logistic head on labeled records only."""
    labeled = [r for r in records if r.label in ("positive", "negative")]
    y_all = np.array([r.label == "positive" for r in labeled], dtype=np.float64)
    if len(labeled) == 0 or y_all.min() == y_all.max():
        raise ValueError("encoder training needs both positive and negative records")
    rng = np.random.default_rng(cfg.seed)
    cell = LstmCell(emb.dim, cfg.hidden, rng)
    store = ParamStore(dict(cell.params, head_w=rng.normal(0, 0.1, cfg.hidden), head_b=np.zeros(1)))
    cell.params = {k: store.params[k] for k in ("lstm_W", "lstm_b")}
    adam = AdamConfig(learning_rate=cfg.learning_rate)
    x_all, mask_all = sequence_batch(labeled, emb, cfg.max_length)
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(labeled))
        total = 0.0
        for s in range(0, len(order), cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            loss, grads = pooled_classifier_loss(cell, store["head_w"], store["head_b"][0],
                                                 x_all[idx], mask_all[idx], y_all[idx])
            total += loss * len(idx)
            store.accumulate(grads)
            adam_step(store, adam)
        history.append(total / len(labeled))
    final = LstmCell(emb.dim, cfg.hidden, params={k: store.params[k].copy()
                                                   for k in ("lstm_W", "lstm_b")})
    return SequenceEncoder(emb, final, cfg.max_length, None, history)


def export_features_csv(path, records, features):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["patient_id", "label"] + [f"f_{j}" for j in range(features.shape[1])])
        for rec, row in zip(records, features):
            w.writerow([rec.patient_id, rec.label] + [repr(float(v)) for v in row])


def read_features_csv(path):
    """Returns ``(patient_ids, labels, features)``."""
    ids, labels, rows = [], [], []
    with open(path, newline="") as f:
        r = csv.reader(f)
        next(r)
        for line in r:
            ids.append(line[0])
            labels.append(line[1])
            rows.append([float(v) for v in line[2:]])
    return ids, labels, np.array(rows, dtype=np.float64)
