import functools

import pytest

from charwave.scenarios import run_scenario


@functools.lru_cache(maxsize=None)
def scenario_report(name):
    """Each packaged scenario runs at most once per test session."""
    return run_scenario(name)


@pytest.fixture
def scenario():
    return scenario_report
