import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "repo", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session", autouse=True)
def _grid_cache(tmp_path_factory):
    path = tmp_path_factory.mktemp("grid-cache")
    old = os.environ.get("QPRDC_CACHE_DIR")
    os.environ["QPRDC_CACHE_DIR"] = str(path)
    yield path
    if old is None:
        os.environ.pop("QPRDC_CACHE_DIR", None)
    else:
        os.environ["QPRDC_CACHE_DIR"] = old


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

