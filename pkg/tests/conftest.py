import numpy as np
import pytest
from hypothesis import settings

from lprmdp.mdp import Mdp, random_mdp

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


def philox(seed):
    return np.random.Generator(np.random.Philox(seed))


def instance(seed, S=3, A=2, gamma=0.9):
    return random_mdp(S, A, gamma, philox(seed))


def power_series_value(m: Mdp, pi, x, terms=200):
    """Truncated ``sum_t gamma^t (P^pi)^t x^pi``, an oracle independent of the LU solve."""
    P_pi = np.einsum("sa,sat->st", pi, m.P)
    r = np.einsum("sa,sa->s", pi, x)
    v, term = np.zeros_like(r), r.copy()
    for _ in range(terms):
        v += term
        term = m.gamma * (P_pi @ term)
    return v


@pytest.fixture
def rng():
    return philox(2024)


# one PASS/FAIL line per acceptance criterion, printed after the run
_criteria = {}


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or report.failed:
        key = props["criterion"]
        prev = _criteria.get(key, ("PASS", props.get("summary", "")))
        status = "FAIL" if report.failed or prev[0] == "FAIL" else ("SKIP" if report.skipped else "PASS")
        _criteria[key] = (status, props.get("summary", prev[1]))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_criteria, key=lambda k: int(k[1:])):
        status, summary = _criteria[key]
        terminalreporter.write_line(f"{key} {status}: {summary}")
