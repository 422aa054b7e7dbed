"""Semi-supervised GAN over encoded patient features.

The discriminator emits K class logits; the fake class is implicit with a
fixed logit of zero, so p(fake | x) = 1 / (Z + 1) with Z = sum_k exp(l_k).
Class index 1 is "positive", 0 is "negative".
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .numerics import (AdamConfig, NonFiniteError, ParamStore, adam_step, affine_backward,
                       affine_forward, dropout_apply, dropout_backward, leaky_relu,
                       leaky_relu_backward, log_softmax, logsumexp, softmax, tanh,
                       tanh_backward, weight_norm_apply, weight_norm_backward)

NEGATIVE, POSITIVE = 0, 1


# ------------------------------------------------------------ probabilities

def _with_fake(logits):
    logits = np.asarray(logits, dtype=np.float64)
    return np.concatenate([logits, np.zeros(logits.shape[:-1] + (1,))], axis=-1)


def class_and_fake_probs(logits):
    """``(class_probs, p_fake)`` for K real-class logits.

    class_probs[..., k] = exp(l_k) / (Z + 1); p_fake = 1 / (Z + 1).
    """
    logp = log_softmax(_with_fake(logits))
    p = np.exp(logp)
    return p[..., :-1], p[..., -1]


def realness(logits):
    """D(x) = Z / (Z + 1), taken as 1 - p_fake so the two always sum to one."""
    return 1.0 - class_and_fake_probs(logits)[1]


# ------------------------------------------------------------------ losses
# Each returns (value, gradient w.r.t. its input).

def loss_labeled(logits, labels):
    """Cross-entropy of the label under the K-class softmax (conditioned on real)."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    B, K = logits.shape
    if np.any(labels < 0) or np.any(labels >= K):
        raise ValueError(f"labels must lie in [0, {K})")
    logq = log_softmax(logits)
    rows = np.arange(B)
    value = -np.mean(logq[rows, labels])
    grad = np.exp(logq)
    grad[rows, labels] -= 1.0
    return float(value), grad / B


def loss_unlabeled(logits):
    """Mean of -log D(x) = log(Z + 1) - log Z."""
    logits = np.asarray(logits, dtype=np.float64)
    B = logits.shape[0]
    value = np.mean(logsumexp(_with_fake(logits)) - logsumexp(logits))
    grad = softmax(_with_fake(logits))[:, :-1] - softmax(logits)
    return float(value), grad / B


def loss_fake(logits):
    """Mean of -log p(fake | x) = log(Z + 1)."""
    logits = np.asarray(logits, dtype=np.float64)
    B = logits.shape[0]
    value = np.mean(logsumexp(_with_fake(logits)))
    grad = softmax(_with_fake(logits))[:, :-1]
    return float(value), grad / B


def loss_entropy(logits):
    """Mean of sum_k q_k log q_k over the K-class conditional q (a negative entropy)."""
    logits = np.asarray(logits, dtype=np.float64)
    B = logits.shape[0]
    logq = log_softmax(logits)
    q = np.exp(logq)
    per_row = np.sum(q * logq, axis=1)
    grad = q * (logq - per_row[:, None])
    return float(np.mean(per_row)), grad / B


def loss_feature_matching(real_features, fake_features):
    """Squared distance between mean fake and mean real features.

    The gradient is returned w.r.t. ``fake_features`` only; real features are
    treated as constants.
    """
    real = np.asarray(real_features, dtype=np.float64)
    fake = np.asarray(fake_features, dtype=np.float64)
    if len(real) == 0 or len(fake) == 0:
        raise ValueError("feature matching needs non-empty batches")
    diff = fake.mean(axis=0) - real.mean(axis=0)
    grad = np.broadcast_to(2.0 * diff / len(fake), fake.shape).copy()
    return float(diff @ diff), grad


def loss_pull_away(features):
    """Mean squared cosine similarity over all ordered pairs i != j."""
    f = np.asarray(features, dtype=np.float64)
    n = f.shape[0]
    if n < 2:
        raise ValueError("pull-away term needs at least two samples")
    norms = np.linalg.norm(f, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("pull-away term undefined for a zero feature vector")
    u = f / norms
    s = u @ u.T
    c = 1.0 / (n * (n - 1))
    value = c * (np.sum(s * s) - np.sum(np.diag(s) ** 2))
    du = 4.0 * c * (s @ u)
    # the diagonal term is constant in f; projecting onto the tangent space drops it
    grad = (du - np.sum(du * u, axis=1, keepdims=True) * u) / norms
    return float(value), grad


# -------------------------------------------------------------- networks

class Mlp:
    """Stack of weight-normalized dense layers.

    Hidden layers use leaky ReLU and optional dropout. ``features`` are the
    last hidden layer's activations before dropout.
    """

    def __init__(self, sizes: Sequence[int], prefix: str, rng=None, dropout: float = 0.0,
                 output: str = "linear", store: Optional[ParamStore] = None):
        self.sizes = list(sizes)
        self.prefix = prefix
        self.dropout = dropout
        self.output = output
        self.store = store if store is not None else ParamStore()
        if store is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            for i, (n_in, n_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
                v = rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_in, n_out))
                self.store.add(self._name(i, "v"), v)
                # g starts at the column norms so the first pass equals the raw init
                self.store.add(self._name(i, "g"), np.linalg.norm(v, axis=0))
                self.store.add(self._name(i, "b"), np.zeros(n_out))

    def _name(self, i, part):
        return f"{self.prefix}{i}_{part}"

    @property
    def n_layers(self):
        return len(self.sizes) - 1

    def forward(self, x, training=False, rng=None):
        """Returns ``(out, features, cache)``."""
        p = self.store.params
        cache = []
        h = np.asarray(x, dtype=np.float64)
        features = None
        for i in range(self.n_layers):
            v, g, b = p[self._name(i, "v")], p[self._name(i, "g")], p[self._name(i, "b")]
            W = weight_norm_apply(v, g)
            pre = affine_forward(h, W, b)
            last = i == self.n_layers - 1
            if last:
                out = tanh(pre) if self.output == "tanh" else pre
                cache.append((h, W, pre, out, None))
                h = out
            else:
                act = leaky_relu(pre)
                features = act
                dropped, mask = dropout_apply(act, self.dropout, training, rng)
                cache.append((h, W, pre, act, mask))
                h = dropped
        return h, features, cache

    def backward(self, cache, dout, dfeatures=None):
        """Returns ``(grads, dx)``; ``dfeatures`` is the gradient at the feature layer."""
        p = self.store.params
        grads = {}
        dh = dout
        for i in reversed(range(self.n_layers)):
            h_in, W, pre, act, mask = cache[i]
            if i == self.n_layers - 1:
                dpre = tanh_backward(dh, act) if self.output == "tanh" else dh
            else:
                dact = dropout_backward(dh, mask)
                if i == self.n_layers - 2 and dfeatures is not None:
                    dact = dact + dfeatures
                dpre = leaky_relu_backward(dact, pre)
            dh, dW, db = affine_backward(dpre, h_in, W)
            dv, dg = weight_norm_backward(dW, p[self._name(i, "v")], p[self._name(i, "g")])
            grads[self._name(i, "v")] = dv
            grads[self._name(i, "g")] = dg
            grads[self._name(i, "b")] = db
        return grads, dh


def make_discriminator(feature_dim, widths=(256, 128, 64, 32, 16), n_classes=2,
                       dropout=0.3, rng=None) -> Mlp:
    if n_classes < 2:
        raise ValueError("need K >= 2 classes")
    return Mlp([feature_dim, *widths, n_classes], "D", rng, dropout=dropout)


def make_generator(noise_dim, feature_dim, widths=(256, 128, 64, 32, 16), rng=None) -> Mlp:
    """Generator with the discriminator's hidden widths reversed and a tanh output."""
    return Mlp([noise_dim, *reversed(widths), feature_dim], "G", rng, output="tanh")


def positive_scores(logits):
    """p(positive and real) = exp(l_pos) / (Z + 1)."""
    return class_and_fake_probs(logits)[0][:, POSITIVE]


# --------------------------------------------------------------- training

@dataclass(frozen=True)
class GanTrainConfig:
    batch_size: int = 128
    epochs: int = 20
    learning_rate: float = 0.001
    beta1: float = 0.9
    dropout: float = 0.3
    noise_dim: int = 100
    widths: Tuple[int, ...] = (256, 128, 64, 32, 16)
    entropy_sign: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 for the pull-away term")
        if self.entropy_sign not in (1.0, -1.0):
            raise ValueError("entropy_sign must be +1 or -1")


@dataclass
class LossBreakdown:
    epoch: int
    step: int
    L_labeled: float
    L_unlabeled: float
    L_fake: float
    L_entropy: float
    L_FM: float
    L_PT: float
    L_D: float
    L_G: float

    FIELDS = ("epoch", "step", "L_labeled", "L_unlabeled", "L_fake", "L_entropy",
              "L_FM", "L_PT", "L_D", "L_G")

    def row(self):
        return [getattr(self, k) for k in self.FIELDS]


@dataclass
class GanModel:
    discriminator: Mlp
    generator: Mlp
    config: GanTrainConfig
    history: List[LossBreakdown] = field(default_factory=list)

    def logits(self, features):
        return self.discriminator.forward(features, training=False)[0]

    def generate(self, n, rng):
        z = rng.uniform(-1.0, 1.0, size=(n, self.config.noise_dim))
        return self.generator.forward(z)[0]

    def to_json(self):
        params = {}
        for net in (self.discriminator, self.generator):
            params.update({k: v.tolist() for k, v in net.store.params.items()})
        cfg = asdict(self.config)
        cfg["widths"] = list(cfg["widths"])
        return {"config": cfg, "feature_dim": self.discriminator.sizes[0],
                "n_classes": self.discriminator.sizes[-1], "params": params,
                "epochs_trained": len({h.epoch for h in self.history})}

    @classmethod
    def from_json(cls, doc):
        cfg = dict(doc["config"])
        cfg["widths"] = tuple(cfg["widths"])
        cfg = GanTrainConfig(**cfg)
        d_store = ParamStore({k: np.asarray(v) for k, v in doc["params"].items() if k.startswith("D")})
        g_store = ParamStore({k: np.asarray(v) for k, v in doc["params"].items() if k.startswith("G")})
        fd = doc["feature_dim"]
        D = Mlp([fd, *cfg.widths, doc["n_classes"]], "D", dropout=cfg.dropout, store=d_store)
        G = Mlp([cfg.noise_dim, *reversed(cfg.widths), fd], "G", output="tanh", store=g_store)
        return cls(D, G, cfg)


def discriminator_loss(D: Mlp, x_lab, y_lab, x_unl, x_fake, training=False, rng=None,
                       entropy_sign=1.0):
    """L_D = L_labeled + L_unlabeled + L_fake + sign * L_entropy.

    Returns ``(parts, grads, dx_fake)`` where parts maps loss names to values.
    """
    nl, nu = len(x_lab), len(x_unl)
    x = np.concatenate([x_lab, x_unl, x_fake])
    logits, _, cache = D.forward(x, training, rng)
    ll, gl = loss_labeled(logits[:nl], y_lab)
    lu, gu = loss_unlabeled(logits[nl:nl + nu])
    lf, gf = loss_fake(logits[nl + nu:])
    le, ge = loss_entropy(logits[nl:nl + nu])
    dlogits = np.concatenate([gl, gu + entropy_sign * ge, gf])
    grads, dx = D.backward(cache, dlogits)
    parts = {"L_labeled": ll, "L_unlabeled": lu, "L_fake": lf, "L_entropy": entropy_sign * le}
    parts["L_D"] = ll + lu + lf + entropy_sign * le
    return parts, grads, dx[nl + nu:]


def generator_loss(G: Mlp, D: Mlp, z, x_unl, training=False, rng=None):
    """L_G = L_FM + L_PT through D's feature layer. Returns ``(parts, G grads)``."""
    x_fake, _, g_cache = G.forward(z)
    nu = len(x_unl)
    _, feats, d_cache = D.forward(np.concatenate([x_unl, x_fake]), training, rng)
    fm, dfm = loss_feature_matching(feats[:nu], feats[nu:])
    pt, dpt = loss_pull_away(feats[nu:])
    dfeat = np.zeros_like(feats)
    dfeat[nu:] = dfm + dpt
    n_out = D.sizes[-1]
    _, dx = D.backward(d_cache, np.zeros((len(feats), n_out)), dfeat)
    grads, _ = G.backward(g_cache, dx[nu:])
    return {"L_FM": fm, "L_PT": pt, "L_G": fm + pt}, grads


def _check(parts, epoch, step):
    for name, value in parts.items():
        if not np.isfinite(value):
            raise NonFiniteError(f"{name} is not finite at epoch {epoch}, step {step}")


def train_gan(x_labeled, y_labeled, x_unlabeled, cfg: GanTrainConfig = GanTrainConfig(),
              n_classes: int = 2) -> GanModel:
    """Alternate one discriminator and one generator Adam step per minibatch.

    One epoch is one pass over the unlabeled pool; labeled batches are drawn
    from a reshuffled cycle over the labeled set.
    """
    x_labeled = np.asarray(x_labeled, dtype=np.float64)
    y_labeled = np.asarray(y_labeled, dtype=np.int64)
    x_unlabeled = np.asarray(x_unlabeled, dtype=np.float64)
    if len(np.unique(y_labeled)) < n_classes:
        raise ValueError("every class needs at least one labeled example")
    if len(x_unlabeled) < cfg.batch_size:
        raise ValueError(f"need at least batch_size={cfg.batch_size} unlabeled examples")
    rng = np.random.default_rng(cfg.seed)
    feature_dim = x_labeled.shape[1]
    D = make_discriminator(feature_dim, cfg.widths, n_classes, cfg.dropout, rng)
    G = make_generator(cfg.noise_dim, feature_dim, cfg.widths, rng)
    adam = AdamConfig(learning_rate=cfg.learning_rate, beta1=cfg.beta1)
    model = GanModel(D, G, cfg)
    B = cfg.batch_size

    lab_order = rng.permutation(len(x_labeled))
    lab_pos = 0

    def labeled_batch():
        nonlocal lab_order, lab_pos
        idx = []
        while len(idx) < B:
            if lab_pos == len(lab_order):
                lab_order, lab_pos = rng.permutation(len(x_labeled)), 0
            take = lab_order[lab_pos:lab_pos + B - len(idx)]
            lab_pos += len(take)
            idx.extend(take)
        return np.array(idx)

    steps_per_epoch = len(x_unlabeled) // B
    for epoch in range(cfg.epochs):
        unl_order = rng.permutation(len(x_unlabeled))
        for step in range(steps_per_epoch):
            li = labeled_batch()
            xu = x_unlabeled[unl_order[step * B:(step + 1) * B]]
            z = rng.uniform(-1.0, 1.0, size=(B, cfg.noise_dim))
            x_fake = G.forward(z)[0]
            d_parts, d_grads, _ = discriminator_loss(
                D, x_labeled[li], y_labeled[li], xu, x_fake, True, rng, cfg.entropy_sign)
            _check(d_parts, epoch, step)
            D.store.accumulate(d_grads)
            adam_step(D.store, adam)

            z = rng.uniform(-1.0, 1.0, size=(B, cfg.noise_dim))
            g_parts, g_grads = generator_loss(G, D, z, xu, True, rng)
            _check(g_parts, epoch, step)
            G.store.accumulate(g_grads)
            adam_step(G.store, adam)
            model.history.append(LossBreakdown(epoch, step, **d_parts, **g_parts))
    return model


def predict_scores(model, features):
    """Positive-class score ``exp(l_pos) / (Z + 1)`` with dropout disabled."""
    D = model.discriminator if isinstance(model, GanModel) else model
    return positive_scores(D.forward(np.asarray(features, dtype=np.float64), training=False)[0])


def write_history_csv(history: Sequence[LossBreakdown], path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(LossBreakdown.FIELDS)
        for h in history:
            w.writerow([h.epoch, h.step] + [repr(float(v)) for v in h.row()[2:]])


def save_model(model: GanModel, path, meta: Optional[dict] = None):
    doc = model.to_json()
    if meta:
        doc["meta"] = meta
    with open(path, "w") as f:
        json.dump(doc, f)
