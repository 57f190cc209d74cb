import numpy as np
import pytest

from attnbarter.core import AttentionSpec, ModelParams
from attnbarter.heterogeneous import solve_fixed_point
from attnbarter.homogeneous import FIVE_CLUB_EPSILON, StoppingRule, solve_clubs


@pytest.fixture(scope="session")
def params():
    return ModelParams(q0=0.8, c=0.2)


@pytest.fixture(scope="session")
def log_params():
    return ModelParams(q0=0.8, c=0.2, attention=AttentionSpec("log1p"))


@pytest.fixture(scope="session")
def eq(params):
    return solve_clubs(params)


@pytest.fixture(scope="session")
def five_club_eq(params):
    return solve_clubs(params, StoppingRule("gain_floor", FIVE_CLUB_EPSILON))


@pytest.fixture(scope="session")
def het_profile(log_params):
    return solve_fixed_point(log_params, grid_size=201)


@pytest.fixture
def rng():
    return np.random.default_rng(20240531)


# acceptance reporting: one PASS/FAIL line per criterion-marked test

_CRITERIA = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_CRITERIA] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    results = item.config.stash[_CRITERIA]
    if report.failed or (report.when == "call" and number not in results):
        results[number] = (title, "PASS" if report.passed else "FAIL")
    elif report.skipped:
        results.setdefault(number, (title, "SKIP"))


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_CRITERIA, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        title, status = results[number]
        terminalreporter.write_line(f"{status} criterion {number}: {title}")
