"""Seeded synthetic patient cohorts.

Codes are organised into therapeutic areas (TAs). Each patient draws most of
their history from one primary TA, some from a secondary TA, and positives
additionally carry marker codes scattered through the sequence. Labeled
negatives are assigned directly: there is no rule-based negative selection.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .vocab import MedicalCode

LABELS = ("positive", "negative", "unlabeled")


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    codes: Tuple[MedicalCode, ...]
    age: int
    gender: int
    label: str

    def __post_init__(self):
        if not self.codes:
            raise ValueError(f"{self.patient_id}: empty code sequence")
        if not 0 <= self.age <= 120:
            raise ValueError(f"{self.patient_id}: age {self.age} out of range")
        if self.gender not in (0, 1):
            raise ValueError(f"{self.patient_id}: gender must be 0 or 1")
        if self.label not in LABELS:
            raise ValueError(f"{self.patient_id}: unknown label {self.label!r}")

    def to_json(self) -> dict:
        return {"patient_id": self.patient_id,
                "codes": [{"kind": c.kind, "id": c.identifier} for c in self.codes],
                "age": self.age, "gender": self.gender, "label": self.label}

    @classmethod
    def from_json(cls, doc: dict) -> "PatientRecord":
        return cls(doc["patient_id"],
                   tuple(MedicalCode(c["kind"], c["id"]) for c in doc["codes"]),
                   int(doc["age"]), int(doc["gender"]), doc["label"])


@dataclass(frozen=True)
class CohortConfig:
    n_patients: int = 10_000
    prevalence: float = 0.016
    labeled_negative_ratio: int = 3
    unlabeled_fraction: float = 0.7
    vocab_size: int = 200
    n_therapeutic_areas: int = 4
    signal_strength: float = 0.6
    n_marker_codes: int = 4
    min_length: int = 8
    max_length: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.n_patients < 1:
            raise ValueError("n_patients must be positive")
        if not 0 < self.prevalence < 1:
            raise ValueError("prevalence must lie in (0, 1)")
        if not 0 <= self.unlabeled_fraction <= 1 or not 0 <= self.signal_strength <= 1:
            raise ValueError("fractions and probabilities must lie in [0, 1]")
        if self.prevalence + self.unlabeled_fraction > 1:
            raise ValueError("prevalence + unlabeled_fraction exceeds 1")
        if self.labeled_negative_ratio < 0:
            raise ValueError("labeled_negative_ratio must be non-negative")
        if self.n_therapeutic_areas < 2:
            raise ValueError("need at least two therapeutic areas")
        if self.vocab_size < 2 * self.n_therapeutic_areas + self.n_marker_codes:
            raise ValueError("vocab_size too small for the requested TAs and markers")
        if not 1 <= self.min_length <= self.max_length:
            raise ValueError("need 1 <= min_length <= max_length")

    def label_counts(self) -> Dict[str, int]:
        """Exact class sizes: floor rounding, remainder to the unlabeled pool."""
        n = self.n_patients
        n_pos = math.floor(n * self.prevalence)
        n_neg = math.floor(n * (1.0 - self.prevalence - self.unlabeled_fraction) + 1e-9)
        return {"positive": n_pos, "negative": n_neg, "unlabeled": n - n_pos - n_neg}


def code_catalog(cfg: CohortConfig) -> Tuple[List[MedicalCode], Dict[MedicalCode, int]]:
    """All codes of the synthetic code system and their TA assignment.

    Codes are dealt round-robin to TAs. Within a TA, half are diagnoses, a
    third prescriptions, the rest procedures. The last ``n_marker_codes`` codes
    are disease markers and belong to TA 0.
    """
    n_ta = cfg.n_therapeutic_areas
    n_regular = cfg.vocab_size - cfg.n_marker_codes
    codes, groups = [], {}
    per_ta = [list(range(t, n_regular, n_ta)) for t in range(n_ta)]
    for t, members in enumerate(per_ta):
        for rank, _ in enumerate(members):
            frac = rank / len(members)
            kind = "Dx" if frac < 0.5 else ("Rx" if frac < 0.83 else "Px")
            code = MedicalCode(kind, f"T{t}{kind[0]}{rank:03d}")
            codes.append(code)
            groups[code] = t
    for m in range(cfg.n_marker_codes):
        code = MedicalCode("Dx", f"M{m:03d}")
        codes.append(code)
        groups[code] = 0
    return codes, groups


def marker_codes(cfg: CohortConfig) -> List[MedicalCode]:
    return [MedicalCode("Dx", f"M{m:03d}") for m in range(cfg.n_marker_codes)]


def _ta_distributions(cfg, codes, groups):
    """Zipf-like code weights within each TA, so some codes are rare."""
    n_ta = cfg.n_therapeutic_areas
    dists = []
    for t in range(n_ta):
        members = [i for i, c in enumerate(codes)
                   if groups[c] == t and not c.identifier.startswith("M")]
        w = 1.0 / (np.arange(len(members)) + 2.0) ** 1.1
        # a rare tail that mostly falls under the vocabulary's min_count
        n_rare = max(1, len(members) // 10)
        w[-n_rare:] = 1e-5
        dists.append((np.array(members), w / w.sum()))
    return dists


def generate_cohort(cfg: CohortConfig) -> List[PatientRecord]:
    rng = np.random.default_rng(cfg.seed)
    codes, groups = code_catalog(cfg)
    dists = _ta_distributions(cfg, codes, groups)
    markers = [codes.index(c) for c in marker_codes(cfg)]
    counts = cfg.label_counts()

    labels = np.array(["positive"] * counts["positive"] + ["negative"] * counts["negative"]
                      + ["unlabeled"] * counts["unlabeled"])
    rng.shuffle(labels)
    # the unlabeled pool is under-diagnosed, not negative: it hides positives
    hidden = rng.random(len(labels)) < cfg.prevalence
    n_ta = cfg.n_therapeutic_areas
    background_marker_rate = 0.003

    records = []
    for i, label in enumerate(labels):
        length = int(rng.integers(cfg.min_length, cfg.max_length + 1))
        primary = int(rng.integers(n_ta))
        secondary = int(rng.integers(n_ta))
        use_primary = rng.random(length) < 0.8
        seq = np.empty(length, dtype=np.int64)
        for ta, where in ((primary, use_primary), (secondary, ~use_primary)):
            members, p = dists[ta]
            seq[where] = members[rng.choice(len(members), size=int(where.sum()), p=p)]
        seq = seq.tolist()
        # markers also show up at a low background rate in everyone
        for pos in np.nonzero(rng.random(length) < background_marker_rate)[0]:
            seq[pos] = markers[int(rng.integers(len(markers)))]
        diseased = label == "positive" or (label == "unlabeled" and hidden[i])
        if diseased:
            for m in markers:
                if rng.random() < cfg.signal_strength:
                    seq.insert(int(rng.integers(len(seq) + 1)), m)
        age = int(np.clip(round(rng.normal(52.0, 17.0)), 0, 120))
        gender = int(rng.random() < 0.5)
        records.append(PatientRecord(f"P{i:07d}", tuple(codes[j] for j in seq),
                                     age, gender, str(label)))
    return records


def split_cohort(cohort: Sequence[PatientRecord], train_fraction: float = 0.8,
                 seed: int = 0, labeled_negative_ratio: int = 3):
    """Split into ``(train, test)``.

    Positives are split by ``train_fraction``. The training set receives
    ``labeled_negative_ratio`` negatives per training positive and the whole
    unlabeled pool; every other negative goes to test.
    """
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    pos = [r for r in cohort if r.label == "positive"]
    neg = [r for r in cohort if r.label == "negative"]
    unl = [r for r in cohort if r.label == "unlabeled"]
    n_train_pos = math.floor(len(pos) * train_fraction + 1e-9)
    if n_train_pos < 1 or n_train_pos >= len(pos):
        raise ValueError(f"too few positives ({len(pos)}) to split at {train_fraction}")
    n_train_neg = labeled_negative_ratio * n_train_pos
    if n_train_neg > len(neg):
        raise ValueError(f"need {n_train_neg} negatives for training, have {len(neg)}")
    pos_order = rng.permutation(len(pos))
    neg_order = rng.permutation(len(neg))
    train_ids = {pos[i].patient_id for i in pos_order[:n_train_pos]}
    train_ids |= {neg[i].patient_id for i in neg_order[:n_train_neg]}
    train_ids |= {r.patient_id for r in unl}
    train = [r for r in cohort if r.patient_id in train_ids]
    test = [r for r in cohort if r.patient_id not in train_ids]
    return train, test


def write_jsonl(records, path):
    with open(path, "w") as f:
        for r in records:
            f.write(json.dumps(r.to_json(), separators=(",", ":")) + "\n")


def read_jsonl(path) -> List[PatientRecord]:
    with open(path) as f:
        return [PatientRecord.from_json(json.loads(line)) for line in f if line.strip()]
