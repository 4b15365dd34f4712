import numpy as np
import pytest

from mbcodec import pqmf


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def bank8():
    return pqmf.default_bank(8, 481)


@pytest.fixture(scope="session")
def bank16():
    return pqmf.default_bank(16, 481)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def direct_roundtrip(bank, x):
    """Analysis/synthesis with plain np.convolve, independent of upfirdn."""
    M, L = bank.num_bands, bank.num_taps
    xp = np.concatenate([x, np.zeros((-len(x)) % M)])
    out = np.zeros(len(xp) + 2 * (L - 1) + M)
    for h, f in zip(bank.analysis_filters, bank.synthesis_filters):
        band = np.convolve(xp, h)[::M]
        up = np.zeros(len(band) * M)
        up[::M] = band
        y = np.convolve(up, f)
        out[: len(y)] += y
    return out[L - 1 : L - 1 + len(x)]


from mbcodec import pipeline, synth  # noqa: E402

SMALL_CONFIG = pipeline.CodecConfig(frame_rate=50, total_codebooks=4, codebook_size=32)
SMALL_TRAINING = pipeline.TrainingConfig(epochs=4, steps=6, seed=3)


@pytest.fixture(scope="session")
def small_corpus():
    return synth.synthetic_corpus(4, 2.0, 24000, SMALL_CONFIG.retained_regions(), seed=0)


@pytest.fixture(scope="session")
def small_model(small_corpus):
    return pipeline.train(SMALL_CONFIG, small_corpus, SMALL_TRAINING)
