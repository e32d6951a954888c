import time

import pytest

from schwarzlin.harness.config import ExperimentConfig
from schwarzlin.harness.experiments import reproduce_table

ACCEPTANCE_LINES = []


def pytest_addoption(parser):
    parser.addoption("--large", action="store_true", default=False,
                     help="also run the large figure sweeps (slow)")


def pytest_configure(config):
    config.addinivalue_line("markers", "large: needs --large")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--large"):
        return
    skip = pytest.mark.skip(reason="needs --large")
    for item in items:
        if "large" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def report():
    def record(criterion, ok, detail):
        line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


@pytest.fixture(scope="session")
def run_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("runs")


@pytest.fixture(scope="session")
def table_memo():
    return {}


@pytest.fixture(scope="session")
def tables(run_dir, table_memo):
    """Table cells keyed by table id, computed once per session."""
    done = {}
    timings = {}

    def get(table_id):
        if table_id not in done:
            base = ExperimentConfig(problem="monomial", m=3, out=str(run_dir))
            start = time.perf_counter()
            done[table_id] = reproduce_table(table_id, base=base, memo=table_memo,
                                             cache_dir=run_dir / "cache")
            timings[table_id] = time.perf_counter() - start
        return done[table_id], timings[table_id]

    return get
