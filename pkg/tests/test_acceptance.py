"""End-to-end acceptance checks.

Each test appends one ``PASS``/``FAIL`` line to the session report printed at
the end of the run. The default-scale pipeline runs are shared between the
directional, null-signal and determinism checks.
"""
import csv
import itertools
import json
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from raregan import pipeline
from raregan.cli import main
from raregan.config import PipelineConfig
from raregan.embedder import SgnsConfig, cluster_separation, sgns_loss, train_skipgram
from raregan.encoder import LstmCell, pooled_classifier_loss
from raregan.evaluation import average_pr_auc, logistic_loss
from raregan.numerics import grad_check, softmax
from raregan.ssgan import (class_and_fake_probs, loss_entropy, loss_fake,
                           loss_feature_matching, loss_labeled, loss_pull_away,
                           loss_unlabeled, realness)
from raregan.synthgen import CohortConfig, code_catalog, generate_cohort
from raregan.vocab import build_vocabulary

SEEDS = range(5)


def report(acceptance_report, number, title, ok, detail):
    acceptance_report.append(f"[{'PASS' if ok else 'FAIL'}] {number}. {title}: {detail}")
    assert ok, detail


# ---------------------------------------------------------------- identities

def test_1_reparameterization(acceptance_report):
    rng = np.random.default_rng(0)
    t0 = time.time()
    worst, exact = 0.0, True
    for _ in range(1000):
        logits = rng.uniform(-30, 30, size=2)
        cls, fake = class_and_fake_probs(logits)
        explicit = softmax(np.append(logits, 0.0))
        worst = max(worst, np.max(np.abs(np.append(cls, fake) - explicit)))
        exact &= bool(realness(logits) == 1.0 - fake)
    elapsed = time.time() - t0
    report(acceptance_report, 1, "reparameterization identity",
           worst <= 1e-12 and exact and elapsed < 1,
           f"max |diff| {worst:.1e}, D = 1 - p_fake: {exact}, {elapsed:.2f}s")


def _gradient_cases(rng):
    """One (name, f, params) triple per loss at a fresh random point."""
    def wrap(fn, key):
        return lambda p: (lambda v, g: (v, {key: g}))(*fn(p[key]))

    y3 = rng.integers(0, 2, 6)
    real = rng.normal(size=(5, 4))
    yield "L_labeled", wrap(lambda l: loss_labeled(l, y3), "l"), {"l": rng.normal(0, 2, (6, 2))}
    yield "L_unlabeled", wrap(loss_unlabeled, "l"), {"l": rng.normal(0, 2, (6, 2))}
    yield "L_fake", wrap(loss_fake, "l"), {"l": rng.normal(0, 2, (6, 2))}
    yield "L_entropy", wrap(loss_entropy, "l"), {"l": rng.normal(0, 2, (6, 2))}
    yield "L_FM", wrap(lambda f: loss_feature_matching(real, f), "f"), {"f": rng.normal(size=(6, 4))}
    yield "L_PT", wrap(loss_pull_away, "f"), {"f": rng.normal(size=(6, 4))}

    def sgns(p):
        loss, dc, dx, dn = sgns_loss(p["c"], p["x"], p["n"])
        return loss, {"c": dc, "x": dx, "n": dn}
    yield "SGNS", sgns, {"c": rng.normal(size=5), "x": rng.normal(size=5),
                         "n": rng.normal(size=(5, 5))}

    x = rng.normal(size=(4, 5, 3))
    mask = np.ones((4, 5), dtype=bool)
    mask[1, 3:] = False
    y = np.array([1.0, 0.0, 1.0, 0.0])

    def lstm(p):
        cell = LstmCell(3, 4, params={"lstm_W": p["lstm_W"], "lstm_b": p["lstm_b"]})
        return pooled_classifier_loss(cell, p["head_w"], p["head_b"][0], x, mask, y)
    yield "LSTM-pooled", lstm, dict(LstmCell(3, 4, rng).params, head_w=rng.normal(size=4),
                                    head_b=rng.normal(size=1))

    xl, yl = rng.normal(size=(7, 3)), rng.integers(0, 2, 7).astype(float)

    def logistic(p):
        loss, dw, db = logistic_loss(p["w"], p["b"][0], xl, yl)
        return loss, {"w": dw, "b": np.array([db])}
    yield "logistic", logistic, {"w": rng.normal(size=3), "b": rng.normal(size=1)}


def test_2_gradient_suite(acceptance_report):
    rng = np.random.default_rng(1)
    t0 = time.time()
    worst = {}
    for _ in range(10):
        for name, f, params in _gradient_cases(rng):
            worst[name] = max(worst.get(name, 0.0), grad_check(f, params))
    elapsed = time.time() - t0
    top = max(worst, key=worst.get)
    report(acceptance_report, 2, "gradient suite",
           max(worst.values()) < 1e-4 and elapsed < 120,
           f"{len(worst)} losses x 10 points, worst {top} {worst[top]:.1e}, {elapsed:.1f}s")


def test_3_loss_value_oracles(acceptance_report):
    z = np.zeros((4, 2))
    checks = {
        "L_labeled": (loss_labeled(z, [0, 1, 0, 1])[0], -math.log(0.5)),
        "L_unlabeled": (loss_unlabeled(z)[0], -math.log(2 / 3)),
        "L_fake": (loss_fake(z)[0], math.log(3)),
        "L_entropy": (loss_entropy(z)[0], -math.log(2)),
        "L_PT orthogonal": (loss_pull_away(np.eye(3))[0], 0.0),
        "L_PT parallel": (loss_pull_away(np.array([[1.0, 1.0], [2.0, 2.0], [-3.0, -3.0]]))[0], 1.0),
        "L_PT one pair": (loss_pull_away(np.array([[1.0, 0.0], [2.0, 0.0], [0.0, 1.0]]))[0], 1 / 3),
        "SGNS zero": (sgns_loss(np.zeros(4), np.zeros(4), np.zeros((5, 4)))[0], 6 * math.log(2)),
    }
    errors = {k: abs(a - b) for k, (a, b) in checks.items()}
    bad = [k for k, e in errors.items() if e > 1e-12]
    report(acceptance_report, 3, "loss-value oracles", not bad,
           f"{len(checks)} cases, max error {max(errors.values()):.1e}"
           + (f", failing: {bad}" if bad else ""))


def _brute_force_auc(scores, labels):
    pts = []
    for t in sorted(set(scores.tolist()), reverse=True):
        pred = scores >= t
        tp = int(np.sum(pred & labels))
        pts.append((tp / labels.sum(), tp / pred.sum()))
    pts.insert(0, (0.0, pts[0][1]))
    return sum((r1 - r0) * (p0 + p1) / 2 for (r0, p0), (r1, p1) in zip(pts, pts[1:]))


def test_4_pr_auc_oracle(acceptance_report):
    rng = np.random.default_rng(4)
    t0 = time.time()
    # integer-valued scores on half the vectors so ties are exercised
    score_sets = [rng.normal(size=8) if i % 2 else rng.integers(0, 4, 8).astype(float)
                  for i in range(20)]
    worst, compared, invariant = 0.0, 0, True
    for bits in itertools.product([False, True], repeat=8):
        labels = np.array(bits)
        if labels.all() or not labels.any():
            continue
        for s in score_sets:
            got = average_pr_auc(s, labels)
            worst = max(worst, abs(got - _brute_force_auc(s, labels)))
            invariant &= average_pr_auc(np.exp(2 * s) - 3, labels) == got
            compared += 1
    elapsed = time.time() - t0
    report(acceptance_report, 4, "PR-AUC oracle", worst <= 1e-12 and invariant and elapsed < 30,
           f"{compared} cases (all-one-class label vectors undefined, skipped), "
           f"max error {worst:.1e}, monotone invariance {invariant}, {elapsed:.1f}s")


# -------------------------------------------------------------- embeddings

def test_5_embedding_structure(acceptance_report):
    t0 = time.time()
    margins = []
    for seed in SEEDS:
        cfg = CohortConfig(n_patients=3000, n_therapeutic_areas=4, vocab_size=200, seed=seed)
        cohort = generate_cohort(cfg)
        vocab = build_vocabulary(cohort, 5)
        emb = train_skipgram(cohort, vocab, SgnsConfig(dim=32, seed=seed))
        _, groups = code_catalog(cfg)
        intra, inter = cluster_separation(emb, {c: g for c, g in groups.items() if c in vocab})
        margins.append(intra - inter)
    elapsed = time.time() - t0
    median = float(np.median(margins))
    report(acceptance_report, 5, "embedding structure", median >= 0.1 and elapsed < 120,
           f"median intra - inter {median:.3f} over {len(margins)} seeds "
           f"(min {min(margins):.3f}), {elapsed:.0f}s")


# ------------------------------------------------------------ end to end

def _run_seeds(root, base: PipelineConfig):
    runs = {}
    t0 = time.time()
    for seed in SEEDS:
        ws = pipeline.Workspace(root / f"seed{seed}", base.with_seed(seed))
        results = pipeline.run_all(ws)
        scores, y = pipeline._test_scores(ws)
        runs[seed] = {"dir": ws.dir, "pr_auc": results, "scores": scores, "y": y}
    return runs, time.time() - t0


@pytest.fixture(scope="session")
def default_runs(tmp_path_factory):
    return _run_seeds(tmp_path_factory.mktemp("default"), PipelineConfig())


@pytest.fixture(scope="session")
def null_runs(tmp_path_factory):
    base = PipelineConfig()
    base = replace(base, cohort=replace(base.cohort, signal_strength=0.0))
    return _run_seeds(tmp_path_factory.mktemp("null"), base)


def test_6a_every_model_beats_prevalence(default_runs, acceptance_report):
    runs, elapsed = default_runs
    ratios = {m: [r["pr_auc"][m] / r["y"].mean() for r in runs.values()]
              for m in pipeline.MODELS}
    worst = min(min(v) for v in ratios.values())
    detail = ", ".join(f"{m} min {min(v):.1f}x" for m, v in ratios.items())
    report(acceptance_report, "6a", "every model >= 5x prevalence", worst >= 5,
           f"{detail} over {len(runs)} seeds, {elapsed:.0f}s for all runs")


def test_6b_sgan_median_at_least_dnn(default_runs, acceptance_report):
    runs, elapsed = default_runs
    med = {m: float(np.median([r["pr_auc"][m] for r in runs.values()]))
           for m in pipeline.MODELS}
    per_seed = "; ".join(f"seed {s}: " + " ".join(f"{m} {r['pr_auc'][m]:.3f}"
                                                  for m in pipeline.MODELS)
                         for s, r in runs.items())
    report(acceptance_report, "6b", "sGAN median PR-AUC >= DNN median",
           med["sgan"] >= med["dnn"] and elapsed < 600,
           f"medians sgan {med['sgan']:.3f} dnn {med['dnn']:.3f} lr {med['lr']:.3f}; "
           f"{per_seed}; {elapsed:.0f}s")


def _null_sigma(scores, y, rng, n_perm=500):
    return float(np.std([average_pr_auc(scores, rng.permutation(y)) for _ in range(n_perm)]))


def test_7_null_signal(null_runs, acceptance_report):
    runs, _ = null_runs
    rng = np.random.default_rng(7)
    lines, ok = [], True
    for m in pipeline.MODELS:
        gaps = [r["pr_auc"][m] - r["y"].mean() for r in runs.values()]
        sigmas = [_null_sigma(r["scores"][m], r["y"], rng) for r in runs.values()]
        # sigma of a five-seed mean under independent label-permutation nulls
        sigma = math.sqrt(sum(s * s for s in sigmas)) / len(sigmas)
        z = float(np.mean(gaps)) / sigma
        ok &= abs(z) <= 3
        lines.append(f"{m} mean gap {np.mean(gaps):+.4f} ({z:+.1f} sigma)")
    report(acceptance_report, 7, "null signal within 3 sigma of prevalence", ok,
           ", ".join(lines))


def _histories(run_dir):
    gan = (run_dir / "gan_history.csv").read_text()
    docs = {n: json.loads((run_dir / n).read_text())
            for n in ("embedding.json", "encoder.json", "baseline_lr.json", "baseline_dnn.json")}
    return gan, {n: d.get("loss_history") for n, d in docs.items()}


def test_8_determinism(default_runs, tmp_path, acceptance_report, capsys):
    runs, _ = default_runs
    first = runs[0]
    assert main(["run-all", "--seed", "0", "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    gan_a, hist_a = _histories(first["dir"])
    gan_b, hist_b = _histories(tmp_path)
    rows_a = [list(map(float, r)) for r in list(csv.reader(gan_a.splitlines()))[1:]]
    rows_b = [list(map(float, r)) for r in list(csv.reader(gan_b.splitlines()))[1:]]
    gan_diff = max(np.max(np.abs(np.array(rows_a) - np.array(rows_b))), 0.0)
    other_diff = max(np.max(np.abs(np.array(hist_a[n]) - np.array(hist_b[n]))) for n in hist_a)
    with open(tmp_path / "metrics.csv") as f:
        again = {r["model"]: float(r["pr_auc"]) for r in csv.DictReader(f)}
    same_auc = again == first["pr_auc"]
    report(acceptance_report, 8, "determinism",
           len(rows_a) == len(rows_b) and gan_diff <= 1e-9 and other_diff <= 1e-9 and same_auc,
           f"GAN history max diff {gan_diff:.1e} over {len(rows_a)} steps, other histories "
           f"{other_diff:.1e}, PR-AUC identical {same_auc}")


def test_trained_discriminator_beats_untrained(default_runs):
    from raregan.ssgan import make_discriminator, positive_scores
    runs, _ = default_runs
    for seed, run in runs.items():
        ws = pipeline.Workspace(run["dir"], PipelineConfig().with_seed(seed))
        ids, labels, X, split = ws.features()
        test = np.array([split[i] == "test" for i in ids])
        cfg = ws.cfg.gan_cfg()
        fresh = make_discriminator(X.shape[1], cfg.widths, 2, cfg.dropout,
                                   np.random.default_rng(cfg.seed))
        untrained = average_pr_auc(positive_scores(fresh.forward(X[test])[0]), run["y"])
        assert run["pr_auc"]["sgan"] > untrained, (seed, untrained)
