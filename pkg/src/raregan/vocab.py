"""Medical-code vocabulary with a minimum-count filter."""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional

import numpy as np

KINDS = ("Dx", "Rx", "Px")

# returned by one_hot for codes outside the vocabulary
DROPPED = None


@dataclass(frozen=True, order=True)
class MedicalCode:
    kind: str
    identifier: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown code kind {self.kind!r}")
        if not self.identifier:
            raise ValueError("code identifier must be non-empty")

    def __str__(self):
        return f"{self.kind}:{self.identifier}"


class Vocabulary:
    """Bijection between kept codes and ``0..V-1``.

    Index order is descending frequency, ties broken by identifier then kind.
    """

    def __init__(self, counts: Dict[MedicalCode, int], min_count: int):
        if min_count < 1:
            raise ValueError("min_count must be >= 1")
        self.min_count = int(min_count)
        self.counts = dict(counts)
        kept = [c for c, n in self.counts.items() if n >= min_count]
        kept.sort(key=lambda c: (-self.counts[c], c.identifier, c.kind))
        self.codes: List[MedicalCode] = kept
        self.index: Dict[MedicalCode, int] = {c: i for i, c in enumerate(kept)}
        self.dropped = {c for c, n in self.counts.items() if n < min_count}

    def __len__(self):
        return len(self.codes)

    def __contains__(self, code):
        return code in self.index

    def lookup(self, code: MedicalCode) -> Optional[int]:
        return self.index.get(code)

    def indices(self, codes: Iterable[MedicalCode], missing: int) -> np.ndarray:
        """Map codes to indices, using ``missing`` for dropped or unknown codes."""
        return np.array([self.index.get(c, missing) for c in codes], dtype=np.int64)

    def to_json(self) -> dict:
        return {
            "min_count": self.min_count,
            "codes": [{"kind": c.kind, "id": c.identifier, "index": i,
                       "count": self.counts[c]} for i, c in enumerate(self.codes)],
            "dropped": [{"kind": c.kind, "id": c.identifier, "count": self.counts[c]}
                        for c in sorted(self.dropped)],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Vocabulary":
        counts = {MedicalCode(e["kind"], e["id"]): int(e["count"])
                  for e in doc["codes"] + doc.get("dropped", [])}
        vocab = cls(counts, doc["min_count"])
        for e in doc["codes"]:
            if vocab.index[MedicalCode(e["kind"], e["id"])] != e["index"]:
                raise ValueError("vocabulary JSON index does not match ordering rule")
        return vocab

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_json(), f, indent=1)

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path) as f:
            return cls.from_json(json.load(f))


def build_vocabulary(records, min_count: int = 5) -> Vocabulary:
    counts: Counter = Counter()
    for rec in records:
        counts.update(rec.codes)
    if not counts:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    return Vocabulary(counts, min_count)


def one_hot(vocab: Vocabulary, code: MedicalCode):
    """Indicator vector of length ``len(vocab)``, or ``DROPPED`` for codes not kept."""
    i = vocab.lookup(code)
    if i is None:
        return DROPPED
    out = np.zeros(len(vocab))
    out[i] = 1.0
    return out
