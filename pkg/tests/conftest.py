import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cachebeam.conic import cccp
from cachebeam.netgen import ScenarioConfig, TopologyConfig, build_scenario

settings.register_profile("cachebeam", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("cachebeam")


def tiny_config(n_bs=2, n_users=2, **kw) -> ScenarioConfig:
    """Small instance used across the solver tests (2 files, no cache by default)."""
    kw.setdefault("n_files", 2)
    kw.setdefault("cache_size", 0)
    return ScenarioConfig(topology=TopologyConfig(n_bs=n_bs, n_users=n_users), **kw)


@pytest.fixture
def tiny_scenario():
    return build_scenario(tiny_config(), seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --------------------------------------------------------------------------
# session-wide CCCP audit and acceptance report

class CccpAudit:
    """Checks every finished CCCP run: nonincreasing monitored objective
    (relative slack 1e-8) and exact DC feasibility of every accepted iterate
    (1e-6)."""

    def __init__(self, rel_slack=1e-8, feas_tol=1e-6):
        self.rel_slack = rel_slack
        self.feas_tol = feas_tol
        self.runs = 0
        self.iterates = 0
        self.problems = []

    def __call__(self, result, _program):
        self.runs += 1
        tr = np.asarray(result.trace, dtype=float)
        self.iterates += tr.size
        if tr.size > 1 and np.any(np.diff(tr) > self.rel_slack * np.abs(tr[:-1])):
            self.problems.append(f"run {self.runs}: objective increased ({tr.tolist()})")
        worst = max(result.max_violation, default=-np.inf)
        if worst > self.feas_tol:
            self.problems.append(f"run {self.runs}: DC violation {worst:.3g}")

    def summary(self) -> str:
        return (f"{self.runs} CCCP runs, {self.iterates} iterates audited, "
                f"{len(self.problems)} violations")


CCCP_AUDIT = CccpAudit()
cccp.add_observer(CCCP_AUDIT)

# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    tr = terminalreporter
    if ACCEPTANCE_LINES:
        tr.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            tr.write_line(ACCEPTANCE_LINES[n])
    tr.section("CCCP audit (whole session)")
    tr.write_line(CCCP_AUDIT.summary())
    for msg in CCCP_AUDIT.problems[:20]:
        tr.write_line("  " + msg)


def pytest_sessionfinish(session, exitstatus):
    if CCCP_AUDIT.problems and session.exitstatus == 0:
        session.exitstatus = 1
