"""Shared fixtures for the test suite.

The desk-scale adaptive runs used by the acceptance tests are expensive
(tens of seconds each), so they are computed once per session here and
shared across the criteria that inspect them.
"""

import re

import pytest

from sgfem import (
    MarkingParams,
    effectivity,
    lshape_benchmark,
    reference_solution,
    run_adaptive,
)

CRITERIA = ("A", "B", "C", "D")


@pytest.fixture(scope="session")
def benchmark_spec():
    return lshape_benchmark()


@pytest.fixture(scope="session")
def desk_runs(benchmark_spec):
    """Adaptive runs to tol 1e-2 for all four criteria, theta = (0.5, 0.5)."""
    params = MarkingParams(theta_x=0.5, theta_p=0.5, vartheta=1.0)
    return {
        crit: run_adaptive(benchmark_spec, crit, params, tol=1e-2)
        for crit in CRITERIA
    }


@pytest.fixture(scope="session")
def desk_refs(benchmark_spec, desk_runs):
    """Reference solutions and effectivity series for the desk runs."""
    refs = {}
    for crit, trace in desk_runs.items():
        ref = reference_solution(trace, benchmark_spec)
        refs[crit] = (ref, effectivity(trace, ref))
    return refs


@pytest.fixture(scope="session")
def runs_07(benchmark_spec):
    """Adaptive runs to tol 1e-2 for all four criteria, theta = (0.7, 0.5)."""
    params = MarkingParams(theta_x=0.7, theta_p=0.5, vartheta=1.0)
    return {
        crit: run_adaptive(benchmark_spec, crit, params, tol=1e-2)
        for crit in CRITERIA
    }


_ACCEPTANCE_RE = re.compile(r"test_criterion_(\d+)")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one pass/fail line per acceptance criterion."""
    results = {}
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance" not in nodeid:
                continue
            match = _ACCEPTANCE_RE.search(nodeid)
            if match:
                status = "PASS" if outcome == "passed" else "FAIL"
                results[int(match.group(1))] = status
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        terminalreporter.write_line(f"acceptance criterion {num:2d}: {results[num]}")
