"""Skip-gram with negative sampling over patient code sequences."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, List, Mapping, Sequence

import numpy as np
from scipy import sparse

from .numerics import AdamConfig, ParamStore, adam_step, check_finite, log_sigmoid, sigmoid
from .vocab import MedicalCode, Vocabulary


NOISE_TABLE_SIZE = 1_000_000


@dataclass(frozen=True)
class SgnsConfig:
    dim: int = 32
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    learning_rate: float = 0.01
    batch_size: int = 4096
    noise_exponent: float = 0.75
    seed: int = 0

    def __post_init__(self):
        if self.window < 1 or self.negatives < 1 or self.dim < 1:
            raise ValueError("window, negatives and dim must be >= 1")


@dataclass
class EmbeddingMatrix:
    """Center vectors ``W`` with one extra all-zero row at index ``V``.

    The zero row stands in for dropped, unknown and padding codes, so
    ``W[vocab.indices(codes, missing=V)]`` embeds any sequence.
    """
    vocab: Vocabulary
    center: np.ndarray
    context: np.ndarray
    loss_history: List[float] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.center.shape[1]

    @property
    def zero_index(self) -> int:
        return len(self.vocab)

    def vector(self, code: MedicalCode) -> np.ndarray:
        return self.center[self.vocab.index.get(code, self.zero_index)]

    def to_json(self) -> dict:
        return {"center": self.center.tolist(), "loss_history": self.loss_history}

    @classmethod
    def from_json(cls, doc, vocab):
        center = np.asarray(doc["center"], dtype=np.float64)
        return cls(vocab, center, np.zeros_like(center), list(doc.get("loss_history", [])))

    def export_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["kind", "id"] + [f"dim_{j}" for j in range(self.dim)])
            for code in self.vocab.codes:
                w.writerow([code.kind, code.identifier] + [repr(float(x)) for x in self.vector(code)])
            for code in sorted(self.vocab.dropped):
                w.writerow([code.kind, code.identifier] + ["0.0"] * self.dim)


def sgns_loss(center, context, negatives):
    """Negative-sampling loss for one (center, context) pair.

    Returns ``(loss, d_center, d_context, d_negatives)``.
    """
    center = np.asarray(center, dtype=np.float64)
    context = np.asarray(context, dtype=np.float64)
    negatives = np.asarray(negatives, dtype=np.float64).reshape(-1, center.shape[0])
    if context.shape != center.shape:
        raise ValueError(f"dimension mismatch: center {center.shape}, context {context.shape}")
    pos = context @ center
    neg = negatives @ center
    loss = -log_sigmoid(pos) - np.sum(log_sigmoid(-neg))
    g_pos = sigmoid(np.array([pos]))[0] - 1.0
    g_neg = sigmoid(neg)
    d_center = g_pos * context + g_neg @ negatives
    return float(loss), d_center, g_pos * center, np.outer(g_neg, center)


def _batch_loss(W, C, centers, contexts, negs):
    """Summed SGNS loss over a batch and its gradients w.r.t. the rows used."""
    vc = W[centers]
    uo = C[contexts]
    un = C[negs]
    pos = np.einsum("bd,bd->b", vc, uo)
    neg = np.einsum("bkd,bd->bk", un, vc)
    loss = -np.sum(log_sigmoid(pos)) - np.sum(log_sigmoid(-neg))
    g_pos = sigmoid(pos) - 1.0
    g_neg = sigmoid(neg)
    d_vc = g_pos[:, None] * uo + np.einsum("bk,bkd->bd", g_neg, un)
    d_uo = g_pos[:, None] * vc
    d_un = g_neg[:, :, None] * vc[:, None, :]
    return loss, d_vc, d_uo, d_un


def _scatter_rows(rows, values, n_rows):
    """Sum ``values`` into ``n_rows`` buckets by ``rows`` (a sparse one-hot product)."""
    onehot = sparse.csr_matrix((np.ones(len(rows)), (rows, np.arange(len(rows)))),
                               shape=(n_rows, len(rows)))
    return onehot @ values


def skipgram_pairs(sequences: Sequence[np.ndarray], window: int) -> np.ndarray:
    """All (center, context) index pairs within ``window`` positions."""
    out = []
    for seq in sequences:
        n = len(seq)
        for off in range(1, window + 1):
            if off >= n:
                break
            a, b = seq[:-off], seq[off:]
            out.append(np.stack([a, b], axis=1))
            out.append(np.stack([b, a], axis=1))
    if not out:
        return np.empty((0, 2), dtype=np.int64)
    return np.concatenate(out)


def train_skipgram(cohort, vocab: Vocabulary, cfg: SgnsConfig = SgnsConfig()) -> EmbeddingMatrix:
    V, d = len(vocab), cfg.dim
    if V == 0:
        raise ValueError("vocabulary is empty")
    rng = np.random.default_rng(cfg.seed)
    # dropped codes are removed before windowing, as in the usual word2vec recipe
    seqs = []
    for rec in cohort:
        idx = vocab.indices(rec.codes, missing=-1)
        seqs.append(idx[idx >= 0])
    pairs = skipgram_pairs(seqs, cfg.window)
    if len(pairs) == 0:
        raise ValueError("corpus yields no skip-gram pairs")

    freq = np.array([vocab.counts[c] for c in vocab.codes], dtype=np.float64)
    noise = freq ** cfg.noise_exponent
    noise /= noise.sum()
    # word2vec-style unigram table: uniform draws from it follow the noise distribution
    table = np.repeat(np.arange(V), np.maximum(1, np.round(noise * NOISE_TABLE_SIZE).astype(np.int64)))

    store = ParamStore({
        "center": rng.uniform(-0.5 / d, 0.5 / d, size=(V, d)),
        "context": np.zeros((V, d)),
    })
    adam = AdamConfig(learning_rate=cfg.learning_rate)
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(pairs))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = pairs[order[start:start + cfg.batch_size]]
            centers, contexts = batch[:, 0], batch[:, 1]
            negs = table[rng.integers(len(table), size=(len(batch), cfg.negatives))]
            loss, d_vc, d_uo, d_un = _batch_loss(store["center"], store["context"],
                                                 centers, contexts, negs)
            total += loss
            n = len(batch)
            store.grads["center"] += _scatter_rows(centers, d_vc, V) / n
            ctx_rows = np.concatenate([contexts, negs.reshape(-1)])
            ctx_grad = np.concatenate([d_uo, d_un.reshape(-1, d)])
            store.grads["context"] += _scatter_rows(ctx_rows, ctx_grad, V) / n
            adam_step(store, adam)
        history.append(total / len(pairs))
    center = np.vstack([store["center"], np.zeros((1, d))])
    context = np.vstack([store["context"], np.zeros((1, d))])
    check_finite(center, "embedding")
    return EmbeddingMatrix(vocab, center, context, history)


def corpus_loss(emb: EmbeddingMatrix, cohort, window: int, negatives: int, seed: int = 0) -> float:
    """Mean SGNS loss over every corpus pair with freshly drawn negatives."""
    vocab = emb.vocab
    V = len(vocab)
    rng = np.random.default_rng(seed)
    seqs = []
    for rec in cohort:
        idx = vocab.indices(rec.codes, missing=-1)
        seqs.append(idx[idx >= 0])
    pairs = skipgram_pairs(seqs, window)
    freq = np.array([vocab.counts[c] for c in vocab.codes], dtype=np.float64) ** 0.75
    negs = rng.choice(V, size=(len(pairs), negatives), p=freq / freq.sum())
    loss = _batch_loss(emb.center, emb.context, pairs[:, 0], pairs[:, 1], negs)[0]
    return loss / len(pairs)


def _unit_rows(x):
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("cosine similarity undefined for a zero vector")
    return x / norms


def cluster_separation(emb, groups: Mapping[MedicalCode, int]):
    """Mean within-group and between-group cosine similarity.

    ``emb`` is an :class:`EmbeddingMatrix` or a plain mapping code -> vector.
    Returns ``(intra, inter)``.
    """
    lookup = emb.vector if isinstance(emb, EmbeddingMatrix) else (lambda c: emb[c])
    by_group: Dict[int, List[MedicalCode]] = {}
    for code, g in groups.items():
        by_group.setdefault(g, []).append(code)
    if len(by_group) < 2 or any(len(v) < 2 for v in by_group.values()):
        raise ValueError("need at least two groups with at least two codes each")
    keys = sorted(by_group)
    units = {g: _unit_rows(np.array([lookup(c) for c in sorted(by_group[g])], dtype=np.float64))
             for g in keys}
    intra_sum, intra_n = 0.0, 0
    for g in keys:
        u = units[g]
        s = u @ u.T
        n = len(u)
        intra_sum += (s.sum() - np.trace(s)) / 2
        intra_n += n * (n - 1) // 2
    inter_sum, inter_n = 0.0, 0
    for a, b in combinations(keys, 2):
        s = units[a] @ units[b].T
        inter_sum += s.sum()
        inter_n += s.size
    return float(intra_sum / intra_n), float(inter_sum / inter_n)


def save_embedding(emb: EmbeddingMatrix, path):
    with open(path, "w") as f:
        json.dump(emb.to_json(), f)
