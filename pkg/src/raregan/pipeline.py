"""Stage-by-stage pipeline over an artifact directory.

Every stage reads its upstream artifacts, checks that they were produced under
the current config (by stage hash), writes its own artifact with a ``meta``
block, and appends a line to ``manifest.jsonl``.
"""
from __future__ import annotations

import csv
import json
import time
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from .config import PipelineConfig
from .embedder import EmbeddingMatrix, save_embedding, train_skipgram
from .encoder import (FeatureScaler, LstmCell, SequenceEncoder, export_features_csv,
                      read_features_csv, train_encoder)
from .evaluation import (DnnModel, LogisticModel, average_pr_auc, export_pr_csv, pr_curve,
                         train_dnn_baseline, train_logistic_baseline)
from .numerics import ParamStore
from .ssgan import GanModel, Mlp, predict_scores, save_model, train_gan, write_history_csv
from .synthgen import generate_cohort, read_jsonl, split_cohort, write_jsonl
from .vocab import Vocabulary, build_vocabulary

MODELS = ("sgan", "dnn", "lr")


class PipelineError(RuntimeError):
    """A stage cannot run: missing prerequisite or bad input."""


class StalenessError(PipelineError):
    """An upstream artifact was produced under a different configuration."""


# which command produces each artifact, for actionable error messages
PRODUCERS = {
    "cohort.jsonl": "gen-data", "split.json": "gen-data", "vocab.json": "build-vocab",
    "embedding.json": "train-embedding", "encoder.json": "train-encoder",
    "features.csv": "encode-features", "features.json": "encode-features",
    "gan.json": "train-gan", "baseline_lr.json": "train-baseline --variant lr",
    "baseline_dnn.json": "train-baseline --variant dnn", "metrics.csv": "evaluate",
}


class Workspace:
    def __init__(self, out_dir, cfg: PipelineConfig):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.cfg = cfg

    def path(self, name) -> Path:
        return self.dir / name

    def require(self, name) -> Path:
        p = self.path(name)
        if not p.exists():
            raise PipelineError(f"missing {p}; run `{PRODUCERS.get(name, '?')}` first")
        return p

    def meta(self, stage, **extra) -> dict:
        return {"stage": stage, "config_hash": self.cfg.stage_hash(stage),
                "seed": self.cfg.seed, **extra}

    def read_json(self, name, stage) -> dict:
        """Load a JSON artifact and check it was written under the current config."""
        with open(self.require(name)) as f:
            doc = json.load(f)
        expected = self.cfg.stage_hash(stage)
        got = doc.get("meta", {}).get("config_hash")
        if got != expected:
            raise StalenessError(
                f"{name} was produced with config hash {got}, current config gives "
                f"{expected}; rerun `{PRODUCERS.get(name, stage)}`")
        return doc

    def write_json(self, name, doc):
        tmp = self.path(name + ".tmp")
        with open(tmp, "w") as f:
            json.dump(doc, f)
        tmp.replace(self.path(name))

    def log(self, stage, started, outputs, **extra):
        entry = {"stage": stage, "config_hash": self.cfg.stage_hash(stage.split(":")[0]),
                 "seed": self.cfg.seed, "wall_time": round(time.time() - started, 3),
                 "outputs": outputs, **extra}
        with open(self.path("manifest.jsonl"), "a") as f:
            f.write(json.dumps(entry) + "\n")

    # ------------------------------------------------------------ loaders

    def cohort(self):
        self.read_json("split.json", "gen-data")
        return read_jsonl(self.require("cohort.jsonl"))

    def split(self, cohort=None):
        cohort = cohort if cohort is not None else self.cohort()
        doc = self.read_json("split.json", "gen-data")
        train_ids = set(doc["train"])
        return ([r for r in cohort if r.patient_id in train_ids],
                [r for r in cohort if r.patient_id not in train_ids])

    def vocab(self) -> Vocabulary:
        return Vocabulary.from_json(self.read_json("vocab.json", "build-vocab"))

    def embedding(self) -> EmbeddingMatrix:
        doc = self.read_json("embedding.json", "train-embedding")
        return EmbeddingMatrix.from_json(doc, self.vocab())

    def encoder(self) -> SequenceEncoder:
        doc = self.read_json("encoder.json", "train-encoder")
        emb = self.embedding()
        cell = LstmCell(emb.dim, doc["hidden"],
                        params={k: np.asarray(v) for k, v in doc["params"].items()})
        scaler = FeatureScaler.from_json(doc["scaler"])
        return SequenceEncoder(emb, cell, doc["max_length"], scaler, doc["loss_history"])

    def features(self):
        """``(ids, labels, X, split)`` where split maps patient id to train/test."""
        meta = self.read_json("features.json", "encode-features")
        ids, labels, X = read_features_csv(self.require("features.csv"))
        if X.shape[1] != meta["meta"]["feature_dim"]:
            raise StalenessError("features.csv does not match features.json; rerun encode-features")
        return ids, labels, X, meta["split"]


# ---------------------------------------------------------------- stages

def gen_data(ws: Workspace):
    t0 = time.time()
    cfg = ws.cfg
    cohort = generate_cohort(cfg.cohort_cfg())
    train, test = split_cohort(cohort, cfg.train_fraction, cfg.stage_seed("split"),
                               cfg.cohort.labeled_negative_ratio)
    write_jsonl(cohort, ws.path("cohort.jsonl"))
    ws.write_json("split.json", {"meta": ws.meta("gen-data", counts=cfg.cohort.label_counts()),
                                 "train": [r.patient_id for r in train],
                                 "test": [r.patient_id for r in test]})
    ws.log("gen-data", t0, ["cohort.jsonl", "split.json"])


def build_vocab(ws: Workspace):
    t0 = time.time()
    vocab = build_vocabulary(ws.cohort(), ws.cfg.min_count)
    ws.write_json("vocab.json", {"meta": ws.meta("build-vocab"), **vocab.to_json()})
    ws.log("build-vocab", t0, ["vocab.json"], kept=len(vocab), dropped=len(vocab.dropped))


def train_embedding(ws: Workspace):
    t0 = time.time()
    emb = train_skipgram(ws.cohort(), ws.vocab(), ws.cfg.skipgram_cfg())
    ws.write_json("embedding.json", {"meta": ws.meta("train-embedding"), **emb.to_json()})
    emb.export_csv(ws.path("embedding.csv"))
    ws.log("train-embedding", t0, ["embedding.json", "embedding.csv"])


def train_encoder_stage(ws: Workspace):
    t0 = time.time()
    train, _ = ws.split()
    emb = ws.embedding()
    enc = train_encoder(train, emb, ws.cfg.encoder_cfg())
    # the scaler is fit on the full training split, labeled and unlabeled alike
    enc.fit_scaler(train)
    ws.write_json("encoder.json", {
        "meta": ws.meta("train-encoder", feature_dim=enc.feature_dim),
        "hidden": enc.cell.hidden, "max_length": enc.max_length,
        "params": {k: v.tolist() for k, v in enc.cell.params.items()},
        "scaler": enc.scaler.to_json(), "loss_history": enc.loss_history})
    ws.log("train-encoder", t0, ["encoder.json"])


def encode_features(ws: Workspace):
    t0 = time.time()
    cohort = ws.cohort()
    train, test = ws.split(cohort)
    enc = ws.encoder()
    records = train + test
    X = enc.features(records)
    export_features_csv(ws.path("features.csv"), records, X)
    split = {r.patient_id: "train" for r in train}
    split.update({r.patient_id: "test" for r in test})
    ws.write_json("features.json", {"meta": ws.meta("encode-features", feature_dim=X.shape[1]),
                                    "split": split})
    ws.log("encode-features", t0, ["features.csv", "features.json"])


def _train_arrays(ws: Workspace):
    ids, labels, X, split = ws.features()
    labels = np.array(labels)
    is_train = np.array([split[i] == "train" for i in ids])
    labeled = is_train & (labels != "unlabeled")
    unlabeled = is_train & (labels == "unlabeled")
    y = (labels == "positive").astype(np.int64)
    return X, y, labeled, unlabeled


def train_gan_stage(ws: Workspace):
    t0 = time.time()
    X, y, labeled, unlabeled = _train_arrays(ws)
    model = train_gan(X[labeled], y[labeled], X[unlabeled], ws.cfg.gan_cfg())
    save_model(model, ws.path("gan.json"), ws.meta("train-gan", feature_dim=X.shape[1]))
    write_history_csv(model.history, ws.path("gan_history.csv"))
    ws.log("train-gan", t0, ["gan.json", "gan_history.csv"])


def train_baseline_stage(ws: Workspace, variant: str):
    t0 = time.time()
    X, y, labeled, _ = _train_arrays(ws)
    cfg = ws.cfg.baseline_cfg()
    meta = ws.meta("train-baseline", feature_dim=X.shape[1], variant=variant)
    if variant == "lr":
        m = train_logistic_baseline(X[labeled], y[labeled], cfg)
        doc = {"meta": meta, **m.to_json(), "loss_history": m.loss_history}
    elif variant == "dnn":
        m = train_dnn_baseline(X[labeled], y[labeled], cfg)
        doc = {"meta": meta, "widths": list(cfg.widths), "dropout": cfg.dropout,
               "params": {k: v.tolist() for k, v in m.discriminator.store.params.items()},
               "loss_history": m.loss_history}
    else:
        raise PipelineError(f"unknown baseline variant {variant!r}; use lr or dnn")
    ws.write_json(f"baseline_{variant}.json", doc)
    ws.log(f"train-baseline:{variant}", t0, [f"baseline_{variant}.json"])


def _load_scorers(ws: Workspace, feature_dim: int):
    """Score functions for every trained model, after staleness checks."""
    docs = {"sgan": ws.read_json("gan.json", "train-gan"),
            "dnn": ws.read_json("baseline_dnn.json", "train-baseline"),
            "lr": ws.read_json("baseline_lr.json", "train-baseline")}
    for name, doc in docs.items():
        dim = doc["meta"].get("feature_dim")
        if dim != feature_dim:
            raise StalenessError(f"{name} model expects feature dimension {dim}, "
                                 f"features have {feature_dim}")
    gan = GanModel.from_json(docs["sgan"])
    lr_doc = docs["lr"]
    lr = LogisticModel(np.asarray(lr_doc["w"]), float(lr_doc["b"]), [])
    dnn_doc = docs["dnn"]
    store = ParamStore({k: np.asarray(v) for k, v in dnn_doc["params"].items()})
    D = Mlp([feature_dim, *dnn_doc["widths"], 2], "D", dropout=dnn_doc["dropout"], store=store)
    dnn = DnnModel(D, [])
    return {"sgan": lambda X: predict_scores(gan, X), "dnn": dnn.scores, "lr": lr.scores}


def _test_scores(ws: Workspace):
    ids, labels, X, split = ws.features()
    scorers = _load_scorers(ws, X.shape[1])
    test = np.array([split[i] == "test" for i in ids])
    y = (np.array(labels)[test] == "positive").astype(np.int64)
    return {name: f(X[test]) for name, f in scorers.items()}, y


def evaluate(ws: Workspace) -> Dict[str, float]:
    t0 = time.time()
    scores, y = _test_scores(ws)
    results = {name: average_pr_auc(s, y) for name, s in scores.items()}
    prevalence = float(y.mean())
    with open(ws.path("metrics.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["model", "pr_auc", "prevalence", "n_test", "n_test_positive",
                    "config_hash", "seed"])
        for name in MODELS:
            w.writerow([name, repr(results[name]), repr(prevalence), len(y), int(y.sum()),
                        ws.cfg.stage_hash("evaluate"), ws.cfg.seed])
    ws.log("evaluate", t0, ["metrics.csv"], pr_auc=results, prevalence=prevalence)
    return results


def export_pr(ws: Workspace):
    t0 = time.time()
    scores, y = _test_scores(ws)
    outputs = []
    for name, s in scores.items():
        export_pr_csv(pr_curve(s, y), ws.path(f"pr_{name}.csv"))
        outputs.append(f"pr_{name}.csv")
    ws.log("export-pr", t0, outputs)


def run_all(ws: Workspace) -> Dict[str, float]:
    gen_data(ws)
    build_vocab(ws)
    train_embedding(ws)
    train_encoder_stage(ws)
    encode_features(ws)
    train_gan_stage(ws)
    train_baseline_stage(ws, "lr")
    train_baseline_stage(ws, "dnn")
    results = evaluate(ws)
    export_pr(ws)
    return results
