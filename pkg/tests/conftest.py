import numpy as np
import pytest

from dmxci.txsignal import ChannelPlan, build_wdm


@pytest.fixture(scope="session")
def plan():
    return ChannelPlan()


@pytest.fixture(scope="session")
def small_wdm(plan):
    """Two-channel transmit field with 2^11 symbols."""
    return build_wdm(plan, 2048, seeds=1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    from tests import acceptance_log

    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_log.LINES:
            terminalreporter.write_line(line)


def _write_matrix(res, out):
    from dmxci.report import summary, write_json, write_scatter, write_traces

    write_traces(out / "traces.csv", res.traces, res.provenance)
    write_scatter(out / "scatter.csv", res.correlations, res.provenance)
    write_json(out / "summary.json", summary(res.traces, res.correlations, res.provenance, res.failures))
    return out


@pytest.fixture(scope="session")
def desk_matrix(tmp_path_factory):
    """The six-panel desk-scale matrix with correlation runs, computed once
    per session (about an hour on one core; ``DMXCI_WORKERS`` parallelizes)."""
    from dmxci.campaign import run_paper_matrix

    res = run_paper_matrix(scale="desk", seed=1)
    out = _write_matrix(res, tmp_path_factory.mktemp("matrix_a"))
    return res, out


@pytest.fixture(scope="session")
def rerun_matrix():
    """Callable that recomputes the desk matrix into a fresh directory."""
    from dmxci.campaign import run_paper_matrix

    def run(out):
        return _write_matrix(run_paper_matrix(scale="desk", seed=1), out)

    return run
