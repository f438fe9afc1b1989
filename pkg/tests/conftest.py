import logging

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nrser.pipeline import SystemConfig, build_desk_corpus, compare_variants, train_nrser

settings.register_profile("nrser", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("nrser")

logging.getLogger("nrser").setLevel(logging.ERROR)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))


@pytest.fixture(scope="session")
def desk_corpus(tmp_path_factory):
    """Default synthetic corpus (200 speech, 100 noise) with every mixture set."""
    return build_desk_corpus(tmp_path_factory.mktemp("desk"), seed=0)


@pytest.fixture(scope="session")
def trained_run(desk_corpus, tmp_path_factory):
    """Full three-phase training on the desk corpus."""
    run_dir = tmp_path_factory.mktemp("run")
    system = train_nrser(SystemConfig(), desk_corpus, run_dir)
    return system, run_dir


@pytest.fixture(scope="session")
def comparison(desk_corpus, tmp_path_factory):
    """All five variants on clean / 12 dB / 8 dB tests, averaged over three seeds."""
    work = tmp_path_factory.mktemp("compare")
    rows = compare_variants(SystemConfig(), desk_corpus, work, seeds=(0, 1, 2), out_csv=work / "table.csv")
    return rows, work / "table.csv"


@pytest.fixture(scope="session")
def heldout_detection_set(tmp_path_factory):
    """Fresh synthetic test data: 100 speech, 100 noise, and the speech mixed at 6-14 dB."""
    from nrser.mixing import synthesize_corpus
    from nrser.synth import generate_synthetic_desk_data

    d = tmp_path_factory.mktemp("heldout")
    speech, noise = generate_synthetic_desk_data(d / "data", seed=7, n_speech=100, n_noise=100, split="test")
    noisy = synthesize_corpus(speech, noise, [6, 8, 10, 12, 14], 8, d / "mix")
    return speech, noise, noisy


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    def record(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
