import math

import pytest

from raregan.synthgen import (CohortConfig, PatientRecord, code_catalog, generate_cohort,
                              marker_codes, read_jsonl, split_cohort, write_jsonl)
from raregan.vocab import MedicalCode


def small_codes():
    return (MedicalCode("Dx", "x"),)


def test_label_counts_exact():
    cfg = CohortConfig(n_patients=1000, prevalence=0.016, n_therapeutic_areas=4, seed=0)
    cohort = generate_cohort(cfg)
    counts = {lab: sum(r.label == lab for r in cohort) for lab in ("positive", "negative", "unlabeled")}
    assert counts["positive"] == 16
    assert counts == cfg.label_counts()
    assert sum(counts.values()) == 1000


@pytest.mark.parametrize("n,prev,unl", [(997, 0.016, 0.7), (10_000, 0.016, 0.7), (123, 0.1, 0.33)])
def test_label_arithmetic(n, prev, unl):
    counts = CohortConfig(n_patients=n, prevalence=prev, unlabeled_fraction=unl).label_counts()
    assert counts["positive"] == math.floor(n * prev)
    assert counts["negative"] == math.floor(n * (1 - prev - unl) + 1e-9)
    assert counts["unlabeled"] == n - counts["positive"] - counts["negative"]


def test_inconsistent_config():
    with pytest.raises(ValueError):
        CohortConfig(prevalence=0.5, unlabeled_fraction=0.6)
    with pytest.raises(ValueError):
        CohortConfig(prevalence=0.0)
    with pytest.raises(ValueError):
        CohortConfig(min_length=0)


def test_deterministic_bytes(tmp_path):
    cfg = CohortConfig(n_patients=300, seed=5)
    write_jsonl(generate_cohort(cfg), tmp_path / "a.jsonl")
    write_jsonl(generate_cohort(cfg), tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    other = CohortConfig(n_patients=300, seed=6)
    write_jsonl(generate_cohort(other), tmp_path / "c.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() != (tmp_path / "c.jsonl").read_bytes()


def test_jsonl_round_trip(tmp_path, small_cohort):
    write_jsonl(small_cohort[:50], tmp_path / "c.jsonl")
    assert read_jsonl(tmp_path / "c.jsonl") == small_cohort[:50]
    first = (tmp_path / "c.jsonl").read_text().splitlines()[0]
    assert first.startswith('{"patient_id":')


def test_record_invariants(small_cohort):
    for r in small_cohort:
        assert r.codes and 0 <= r.age <= 120 and r.gender in (0, 1)
    with pytest.raises(ValueError):
        PatientRecord("x", (), 30, 0, "negative")
    with pytest.raises(ValueError):
        PatientRecord("x", small_cohort[0].codes, 130, 0, "negative")


def test_markers_enriched_in_positives(small_cohort):
    markers = set(marker_codes(CohortConfig()))

    def rate(label):
        group = [r for r in small_cohort if r.label == label]
        return sum(any(c in markers for c in r.codes) for r in group) / len(group)

    assert rate("positive") > 0.9
    assert rate("negative") < 0.5


def test_zero_signal_has_no_marker_enrichment():
    cohort = generate_cohort(CohortConfig(n_patients=3000, prevalence=0.2, unlabeled_fraction=0.3,
                                          signal_strength=0.0, seed=3))
    markers = set(marker_codes(CohortConfig()))
    pos = [sum(c in markers for c in r.codes) for r in cohort if r.label == "positive"]
    neg = [sum(c in markers for c in r.codes) for r in cohort if r.label == "negative"]
    assert abs(sum(pos) / len(pos) - sum(neg) / len(neg)) < 0.05


def test_catalog_groups():
    cfg = CohortConfig(vocab_size=200, n_therapeutic_areas=4)
    codes, groups = code_catalog(cfg)
    assert len(codes) == len(set(codes)) == 200
    assert set(groups.values()) == {0, 1, 2, 3}
    assert {c.kind for c in codes} == {"Dx", "Rx", "Px"}


def test_split_example():
    records = [PatientRecord(f"p{i}", small_codes(), 30, 0, "positive") for i in range(100)]
    records += [PatientRecord(f"n{i}", small_codes(), 30, 0, "negative") for i in range(400)]
    records += [PatientRecord(f"u{i}", small_codes(), 30, 0, "unlabeled") for i in range(50)]
    train, test = split_cohort(records, 0.8, seed=0)
    assert sum(r.label == "positive" for r in train) == 80
    assert sum(r.label == "positive" for r in test) == 20
    assert sum(r.label == "negative" for r in train) == 240
    assert sum(r.label == "unlabeled" for r in test) == 0
    ids = [r.patient_id for r in train + test]
    assert len(ids) == len(set(ids)) == len(records)


def test_split_partition(small_cohort):
    train, test = split_cohort(small_cohort, 0.8, seed=3)
    assert {r.patient_id for r in train}.isdisjoint(r.patient_id for r in test)
    assert len(train) + len(test) == len(small_cohort)
    assert not any(r.label == "unlabeled" for r in test)


def test_split_errors():
    one = [PatientRecord("p", small_codes(), 30, 0, "positive")] + \
          [PatientRecord(f"n{i}", small_codes(), 30, 0, "negative") for i in range(10)]
    with pytest.raises(ValueError):
        split_cohort(one, 0.8)
    with pytest.raises(ValueError):
        split_cohort(one, 1.0)


def test_reference_cohort_arithmetic():
    # a 1.79M-patient reference cohort: 29,149 positives, 1,257,161 unlabeled
    n, pos, unl = 1_792_760, 29_149, 1_257_161
    assert round(100 * pos / n, 1) == 1.6
    assert 23_395 + 5_754 == pos
    assert 69_845 + 436_605 == n - pos - unl
