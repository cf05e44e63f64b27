import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from octx import pipeline, synth  # noqa: E402


@pytest.fixture(scope="session")
def default_dataset():
    return synth.generate()


@pytest.fixture(scope="session")
def default_table(default_dataset):
    return pipeline.extract(default_dataset.frames)


@pytest.fixture(scope="session")
def small_table():
    ds = synth.generate(n_frames=12, seed=3)
    return pipeline.extract(ds.frames)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod._line(n))
