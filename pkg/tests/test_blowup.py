import math

import numpy as np
import pytest

from conftest import LAMBDA_STAR_23
from plaplace_mass.blowup import (
    GroundState,
    Nonexistence,
    bn_rhs,
    blowup_diagnostics,
    ground_state_shoot,
    profile_integral,
    shoot_bn,
)
from plaplace_mass.core import DomainError, ProblemParams
from plaplace_mass.pohozaev import pohozaev_residual
from plaplace_mass.radial_ode import shoot_ivp

P23 = ProblemParams(2, 3, 1.0, 1.0)
S0_23 = 3 * (math.pi / 2) ** (4 / 3)


@pytest.mark.parametrize("lam", [5.0, 9.0])
def test_ground_state_exists(ground_states, lam):
    gs = ground_states(lam)
    assert isinstance(gs, GroundState)
    assert gs.first_zero == pytest.approx(1.0, abs=1e-8)
    v = gs.profile.values
    assert np.all(v[:-1] > 0)
    assert np.all(np.diff(v) <= 0)
    assert 0 < gs.Q_value < S0_23
    assert gs.min_rho < 1.0


def test_ground_state_amplitudes(ground_states):
    a5, a9 = ground_states(5.0).amplitude, ground_states(9.0).amplitude
    assert a9 < a5
    # two independent shooters agree on ρ(1) > 1 at λ = 9, so a(9) > 1
    assert a9 == pytest.approx(1.419, abs=1e-3)


def test_mu_normalization(ground_states):
    gs = ground_states(5.0)
    assert gs.mu * gs.amplitude ** (2 / (3 - 2)) == pytest.approx(1.0, rel=1e-14)


@pytest.mark.parametrize("lam", [0.5, 2.0])
def test_nonexistence(lam):
    out = ground_state_shoot(P23.with_lambda(lam))
    assert isinstance(out, Nonexistence)
    assert out.min_rho > 1.0


def test_rho_asymptote_lambda2():
    # for p = 2, N = 3 the first zero tends to π/(2√λ) as a -> ∞
    rho = shoot_bn(P23.with_lambda(2.0), 1e6, with_profile=False).first_zero
    assert rho == pytest.approx(math.pi / (2 * math.sqrt(2)), abs=1e-9)


@pytest.mark.parametrize("a", [0.5, 3.0, 30.0, 100.0])
def test_split_shooter_matches_direct(a):
    params = P23.with_lambda(4.0)
    split = shoot_bn(params, a).first_zero
    direct = shoot_ivp(params, a, bn_rhs(params)).first_zero
    assert split == pytest.approx(direct, rel=1e-9)


def test_ground_state_domain():
    with pytest.raises(DomainError):
        ground_state_shoot(P23.with_lambda(0.0))
    with pytest.raises(DomainError):
        ground_state_shoot(P23.with_lambda(10.0))
    with pytest.raises(DomainError):
        shoot_bn(P23, -1.0)


@pytest.mark.parametrize("lam", [5.0, 9.0])
def test_ground_state_pohozaev(ground_states, lam):
    gs = ground_states(lam)
    params = ProblemParams(2, 3, gs.first_zero, lam)
    assert pohozaev_residual(params, gs.profile, 0.5, c=1, relative=True) < 1e-6


def test_solvability_dichotomy(solvability_23):
    sc = solvability_23
    for lam, ok in zip(sc.lambda_grid, sc.exists):
        if lam <= 2.0:
            assert not ok
        if lam >= 3.0:
            assert ok
    lo, hi = sc.bracket
    assert lo < LAMBDA_STAR_23 < hi
    for lam, ok, rho in zip(sc.lambda_grid, sc.exists, sc.min_rho):
        assert (rho < 1.0) == ok


def test_solvability_min_rho_decreasing(solvability_23):
    assert np.all(np.diff(solvability_23.min_rho) < 0)


def test_profile_integral_23():
    # ∫(1 + |y|²/3)^{-5/2} dy over R^3 = 4π√3
    assert profile_integral(P23) == pytest.approx(4 * math.pi * math.sqrt(3), rel=1e-10)


def test_blowup_lambda_star(blowup_23):
    assert blowup_23.lambda_star == pytest.approx(LAMBDA_STAR_23, rel=1e-7)
    assert "not attained" in blowup_23.caveat


def test_blowup_concentration(blowup_23):
    rows = blowup_23.rows
    lams = [r.lam for r in rows]
    assert lams == sorted(lams, reverse=True)
    mus = [r.mu for r in rows]
    assert np.all(np.diff(mus) < 0)
    amps = [r.amplitude for r in rows]
    assert np.all(np.diff(amps) > 0)
    for r in rows:
        assert r.mu * r.amplitude**2 == pytest.approx(1.0, rel=1e-14)


def test_blowup_profile_distance(blowup_23):
    by_lam = {round(r.lam - LAMBDA_STAR_23, 6): r for r in blowup_23.rows}
    assert by_lam[0.1].profile_distance < 0.02
    d = [r.profile_distance for r in blowup_23.rows]
    assert np.all(np.diff(d) < 0)


def test_blowup_green_ratio(blowup_23):
    last = blowup_23.rows[-1]
    assert last.green_ratio[0.5] == pytest.approx(1.0, rel=0.05)
    for rr in (0.3, 0.7):
        assert last.green_ratio[rr] == pytest.approx(1.0, rel=0.1)


def test_blowup_bound_and_energy(blowup_23):
    for r in blowup_23.rows:
        assert 1.0 <= r.bound_constant <= 2.0
        assert 0 < r.Q_value <= S0_23 + 1e-6
    last = blowup_23.rows[-1]
    assert last.crit_integral == pytest.approx(S0_23**1.5, rel=0.01)


def test_blowup_rejects_lambda_below_star():
    with pytest.raises(DomainError):
        blowup_diagnostics(P23, [2.0], lambda_star=LAMBDA_STAR_23)
