import os
from pathlib import Path

import numpy as np
import pytest

from hybridecg.beats import BeatSet, extract_beats
from hybridecg.synthetic import make_database

DATA = Path(__file__).parent / "data"


def mitdb_dir():
    """Directory of the MIT-BIH Arrhythmia Database, or None when it is absent."""
    path = os.environ.get("HYBRIDECG_MITDB")
    if path and (Path(path) / "100.hea").exists():
        return Path(path)
    return None


@pytest.fixture(scope="session")
def data_dir():
    return DATA


@pytest.fixture(scope="session")
def synthetic_records():
    return make_database(n_records=3, n_beats=300, seed=11)


@pytest.fixture(scope="session")
def synthetic_beats(synthetic_records):
    return BeatSet.concat([extract_beats(r) for r in synthetic_records])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance lines are echoed as they happen and again in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def criterion(capsys):
    def report(number: int, passed: bool, detail: str):
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        with capsys.disabled():
            print(f"\n{line}")
        return passed
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
