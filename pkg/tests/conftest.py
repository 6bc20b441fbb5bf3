"""Shared, expensive computations reused across test modules."""

import math

import pytest

from plaplace_mass.core import ProblemParams

LAMBDA_STAR_23 = math.pi**2 / 4


def cot(x):
    return math.cos(x) / math.sin(x)


def helmholtz_mass(lam, R=1.0):
    """H_λ(0,0) for p = 2, N = 3 on B_R: -√λ cot(√λ R)/(4π); -1/(4πR) at λ = 0."""
    if lam == 0:
        return -1.0 / (4 * math.pi * R)
    k = math.sqrt(lam)
    return -k * cot(k * R) / (4 * math.pi)


@pytest.fixture(scope="session")
def p23():
    return ProblemParams(2, 3, 1.0, 0.0)


@pytest.fixture(scope="session")
def ground_states():
    from plaplace_mass.blowup import ground_state_shoot

    cache = {}

    def get(lam):
        if lam not in cache:
            cache[lam] = ground_state_shoot(ProblemParams(2, 3, 1.0, lam))
        return cache[lam]

    return get


@pytest.fixture(scope="session")
def solvability_23():
    import numpy as np

    from plaplace_mass.blowup import solvability_scan

    return solvability_scan(ProblemParams(2, 3, 1.0, 0.0), np.linspace(0.5, 9.5, 20))


@pytest.fixture(scope="session")
def blowup_23():
    from plaplace_mass.blowup import blowup_diagnostics

    ls = LAMBDA_STAR_23
    # λ* itself comes from the bisection inside blowup_diagnostics
    return blowup_diagnostics(ProblemParams(2, 3, 1.0, 0.0), [ls + 0.5, ls + 0.2, ls + 0.1, ls + 0.05])


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, detail = RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
