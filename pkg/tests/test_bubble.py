import math

import numpy as np
import pytest

from conftest import helmholtz_mass
from plaplace_mass.bubble import (
    FitError,
    energy_expansion,
    expansion_terms,
    minimize_quotient,
    predicted_slope,
    project_bubble,
    quotient_parts,
    rayleigh_quotient,
    rayleigh_quotient_entire,
)
from plaplace_mass.core import (
    DomainError,
    InconclusiveError,
    ProblemParams,
    RadialField,
    RadialGrid,
    bubble_derivative,
    bubble_eval,
)
from plaplace_mass.radial_ode import first_eigenvalue

P23 = ProblemParams(2, 3, 1.0, 1.0)
S0_23 = 3 * (math.pi / 2) ** (4 / 3)
ULP = np.finfo(float).eps
EPS_LIST = [0.1, 0.05, 0.025, 0.02, 0.0125, 0.01]


def fine_grid(R=1.0):
    rmin = 1e-12
    return RadialGrid(R, int(math.log(1 / rmin) / 0.01) + 1, rmin)


def parabola(grid, R=1.0):
    r = grid.nodes
    return RadialField(grid, 1 - (r / R) ** 2, -2 * r / R**2)


def test_projected_bubble_basic():
    pb = project_bubble(P23, 0.1)
    assert pb.PU.values[-1] == 0.0
    assert np.all(pb.PU.values[:-1] > 0)
    assert pb.PU.meta["residual"] < 1e-10


def test_projected_bubble_lambda0_limit():
    params = P23.with_lambda(0.0)
    vals = [project_bubble(params, e).H_eps_scaled.values[0] for e in (0.04, 0.02, 0.01)]
    target = -1 / (4 * math.pi)
    errs = [abs(v - target) for v in vals]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-3


def test_projected_bubble_regular_part_convergence():
    from plaplace_mass.green import solve_green

    H = solve_green(P23).H.values
    d = [np.max(np.abs(project_bubble(P23, e).H_eps_scaled.values[1:] - H[1:])) for e in (0.2, 0.1, 0.05)]
    assert d[0] > d[1] > d[2]


def test_projection_rejects_bad_input():
    with pytest.raises(DomainError):
        project_bubble(P23, 0.0)
    with pytest.raises(DomainError):
        project_bubble(P23.with_lambda(10.0), 0.1)


def test_entire_bubble_quotient_is_S0():
    params = P23.with_lambda(0.0)
    Q = rayleigh_quotient_entire(params, lambda r: bubble_eval(params, 1.0, r),
                                 lambda r: bubble_derivative(params, 1.0, r), decay=1.0)
    assert Q == pytest.approx(S0_23, rel=1e-9)


@pytest.mark.parametrize("t", [0.5, 2.0, 3.0])
def test_quotient_homogeneity(t):
    u = project_bubble(P23, 0.1).PU
    q1 = rayleigh_quotient(P23, u)
    q2 = rayleigh_quotient(P23, u.scaled(t))
    assert abs(q1 - q2) <= 4 * ULP * abs(q1)


def test_quotient_of_eigenfunction():
    lam1, e1 = first_eigenvalue(P23.with_lambda(0.0))
    params = P23.with_lambda(lam1 / 2)
    grad, lp, _ = quotient_parts(params, e1)
    assert grad == pytest.approx(lam1 * lp, rel=1e-8)
    assert grad - params.lam * lp == pytest.approx(lam1 / 2 * lp, rel=1e-7)
    assert rayleigh_quotient(params, e1) > 0


def test_quotient_decreasing_in_lambda():
    u = project_bubble(P23, 0.1).PU
    qs = [rayleigh_quotient(P23.with_lambda(l), u) for l in (0.0, 1.0, 2.0, 5.0)]
    assert np.all(np.diff(qs) < 0)


def test_zero_function_rejected():
    g = RadialGrid.default()
    with pytest.raises(DomainError):
        rayleigh_quotient(P23, RadialField(g, np.zeros(g.M + 1), np.zeros(g.M + 1)))


@pytest.fixture(scope="module")
def expansion_4():
    return energy_expansion(P23.with_lambda(4.0), EPS_LIST)


def test_energy_expansion_slope_lambda4(expansion_4):
    ee = expansion_4
    assert ee.mass == pytest.approx(helmholtz_mass(4.0), abs=1e-8)
    assert ee.predicted_slope == pytest.approx(predicted_slope(P23, helmholtz_mass(4.0)), rel=1e-8)
    assert ee.relative_gap < 0.02
    assert ee.fit_window[1] <= ee.fit_window[0] * 10**0.5 * (1 + 1e-12)


def test_energy_below_S0_for_small_eps(expansion_4):
    small = [q for e, q in zip(expansion_4.eps_list, expansion_4.Q_values) if e <= 0.05]
    assert all(q < S0_23 for q in small)


def test_energy_expansion_lambda1_sign():
    ee = energy_expansion(P23, EPS_LIST)
    assert ee.fitted_slope < 0
    small = [q for e, q in zip(ee.eps_list, ee.Q_values) if e <= 0.05]
    assert all(q > S0_23 for q in small)
    assert np.all(np.diff(small) > 0)  # ε ascending: Q falls toward S0 as ε -> 0


def test_energy_expansion_one_term_fit_runs():
    ee = energy_expansion(P23.with_lambda(4.0), EPS_LIST, fit_terms=1)
    assert ee.fit_terms == 1 and ee.correction == 0.0
    assert ee.fitted_slope > 0


def test_energy_expansion_input_checks():
    with pytest.raises(DomainError):
        energy_expansion(P23, [0.1, 0.05, 0.02])
    with pytest.raises(DomainError):
        energy_expansion(ProblemParams(2, 5, 1.0, 1.0), EPS_LIST)


def test_fit_degeneracy_detected():
    # a positive mass forced onto a case where every Q lies above S0
    with pytest.raises(FitError):
        energy_expansion(P23, EPS_LIST, mass=0.05)


def test_expansion_terms_within_headroom():
    params = P23.with_lambda(4.0)
    t = expansion_terms(params, 0.05)
    assert abs(t.numerator_split_residual) < 1e-9 * t.numerator
    assert t.bulk == pytest.approx(t.bulk_exact, rel=1e-9)
    assert abs(t.numerator_remainder) < 0.5 * abs(t.leading)
    assert abs(t.denominator_remainder) < 0.5 * abs(t.pstar * t.leading)


def test_minimize_above_lambda_star():
    g = fine_grid()
    res = minimize_quotient(P23.with_lambda(5.0), parabola(g))
    assert not res.concentrated
    assert res.minimizer is not None
    assert res.S_est < S0_23 - 1e-3
    assert np.all(np.diff(res.history) < 0)


def test_minimize_matches_ground_state(ground_states):
    g = fine_grid()
    res = minimize_quotient(P23.with_lambda(5.0), parabola(g))
    assert res.S_est == pytest.approx(ground_states(5.0).Q_value, abs=1e-4)


def test_minimize_below_lambda_star_concentrates():
    g = fine_grid()
    res = minimize_quotient(P23, parabola(g))
    assert res.concentrated
    assert res.S_est >= S0_23 - 1e-3


def test_flow_monotone_at_lambda0():
    params = P23.with_lambda(0.0)
    g = fine_grid()
    init = project_bubble(params, 0.05, g).PU
    try:
        history = minimize_quotient(params, init, max_iters=300).history
    except InconclusiveError as exc:
        history = exc.partial.history
    assert len(history) > 10
    assert np.all(np.diff(history) < 0)


def test_minimize_rejects_nonpositive_init():
    g = RadialGrid.default()
    r = g.nodes
    with pytest.raises(DomainError):
        minimize_quotient(P23, RadialField(g, np.cos(3 * r), -3 * np.sin(3 * r)))
