import numpy as np
import pytest

from freqmpc.harness import DATA_DIR, load_scenario, run
from freqmpc.netcase import load_case

SCENARIOS = DATA_DIR / "scenarios"


@pytest.fixture(scope="session")
def data_dir():
    return DATA_DIR


@pytest.fixture(scope="session")
def ieee9():
    return load_case(DATA_DIR / "ieee9.case")


@pytest.fixture(scope="session")
def ieee39():
    return load_case(DATA_DIR / "ieee39.case")


@pytest.fixture(scope="session")
def two_gen():
    return load_case(DATA_DIR / "two_gen.case")


@pytest.fixture(scope="session")
def two_bus():
    return load_case(DATA_DIR / "two_bus.case")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


class RunCache:
    """Closed-loop runs shared by every test of the session."""

    def __init__(self):
        self._logs = {}

    def get(self, name: str):
        if name not in self._logs:
            self._logs[name] = run(load_scenario(SCENARIOS / f"{name}.scn"))
        return self._logs[name]

    def logs(self):
        return dict(self._logs)


@pytest.fixture(scope="session")
def runs():
    return RunCache()
