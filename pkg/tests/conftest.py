import os

import numpy as np
import pytest

from validity_audit.graph import SampleGraph, ingest_movielens

ML_ENV = "VALIDITY_AUDIT_ML100K"
ML_DEFAULT = "/root/data/ml-100k"


def pytest_addoption(parser):
    parser.addoption("--run-slow", action="store_true", default=False,
                     help="run long experiments (full MovieLens worlds ensemble)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip = pytest.mark.skip(reason="slow; enable with --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def movielens_dir():
    path = os.environ.get(ML_ENV, ML_DEFAULT)
    if os.path.exists(os.path.join(path, "u.data")) and os.path.exists(os.path.join(path, "u.user")):
        return path
    return None


@pytest.fixture(scope="session")
def ml_dir():
    path = movielens_dir()
    if path is None:
        pytest.skip(f"MovieLens 100k not found; set {ML_ENV} to a directory with u.data and u.user")
    return path


@pytest.fixture(scope="session")
def movielens(ml_dir):
    return ingest_movielens(os.path.join(ml_dir, "u.data"), os.path.join(ml_dir, "u.user"))


def random_bipartite(rng, n_left, n_right, p, labels=(1.0, 5.0)):
    """Erdos-Renyi bipartite graph with integer labels in ``labels``."""
    m = rng.random((n_left, n_right)) < p
    r, c = np.nonzero(m)
    y = rng.integers(int(labels[0]), int(labels[1]) + 1, size=len(r)).astype(float)
    return SampleGraph.from_interactions(r.tolist(), c.tolist(), y, label_range=labels,
                                         left_ids=range(n_left), right_ids=range(n_right))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Acceptance criteria: tests marked ``criterion(name)`` attach a ``detail``
# user property; one PASS/FAIL/SKIP line per criterion closes the run.

_CRITERIA: list[tuple[str, str, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        detail = dict(item.user_properties).get("detail", "")
        if rep.skipped:
            detail = str(rep.longrepr[-1]) if isinstance(rep.longrepr, tuple) else detail
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[rep.outcome]
        _CRITERIA.append((mark.args[0], status, detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    width = max(len(name) for name, _, _ in _CRITERIA)
    for name, status, detail in _CRITERIA:
        terminalreporter.write_line(f"{status}  {name:<{width}}  {detail}")
