import numpy as np
import pytest

from raregan.embedder import SgnsConfig, train_skipgram
from raregan.synthgen import CohortConfig, generate_cohort, split_cohort
from raregan.vocab import build_vocabulary

SMALL_COHORT = CohortConfig(n_patients=2000, prevalence=0.1, unlabeled_fraction=0.5,
                            signal_strength=0.8, seed=11)


@pytest.fixture(scope="session")
def small_cohort():
    return generate_cohort(SMALL_COHORT)


@pytest.fixture(scope="session")
def small_split(small_cohort):
    return split_cohort(small_cohort, 0.8, seed=1)


@pytest.fixture(scope="session")
def small_vocab(small_cohort):
    return build_vocabulary(small_cohort, 5)


@pytest.fixture(scope="session")
def small_embedding(small_cohort, small_vocab):
    return train_skipgram(small_cohort, small_vocab, SgnsConfig(dim=16, epochs=5, seed=2))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ---------------------------------------------------------------- acceptance report

_REPORT = []


@pytest.fixture(scope="session")
def acceptance_report():
    return _REPORT


def pytest_terminal_summary(terminalreporter):
    if _REPORT:
        terminalreporter.section("acceptance criteria")
        for line in _REPORT:
            terminalreporter.write_line(line)
