import numpy as np
import pytest
from hypothesis import settings

from stripesim.scenario import ScenarioConfig

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def cfg() -> ScenarioConfig:
    return ScenarioConfig()


@pytest.fixture(scope="session")
def x_grid() -> np.ndarray:
    return np.round(np.arange(301) * 0.05, 12)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
