import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plaplace_mass.core import DomainError, ProblemParams, RadialGrid, bubble_eval
from plaplace_mass.radial_ode import (
    eigen_rhs,
    first_eigenvalue,
    inverse_flux,
    rayleigh_p,
    shoot_ivp,
    solve_bvp,
)

P23 = ProblemParams(2, 3)
P34 = ProblemParams(3, 4)
one = lambda r, u: np.ones_like(r)


def torsion_center(p, N, R=1.0):
    # flux r^{N-1}|u'|^{p-1} = r^N/N, so u(0) = ∫_0^R (s/N)^{1/(p-1)} ds
    q = 1 / (p - 1)
    return N**-q * R ** (q + 1) / (q + 1)


def test_torsion_23():
    u = solve_bvp(P23, one)
    r = u.r
    assert u.values[0] == pytest.approx(1 / 6, rel=1e-10)
    assert np.max(np.abs(u.values - (1 - r**2) / 6)) < 1e-10
    assert u.values[-1] == 0.0


def test_torsion_34_closed_form():
    u = solve_bvp(P34, one)
    assert u.values[0] == pytest.approx(1 / 3, rel=1e-8)
    assert u.values[0] == pytest.approx(torsion_center(3, 4), rel=1e-8)
    r = u.r
    assert np.max(np.abs(u.values - (1 - r**1.5) / 3)) < 1e-8


@pytest.mark.parametrize("params", [P23, P34, ProblemParams(2.5, 3)])
def test_zero_source_gives_zero(params):
    u = solve_bvp(params, lambda r, u: np.zeros_like(r))
    assert np.max(np.abs(u.values)) == 0.0


def test_nonzero_boundary_value():
    u = solve_bvp(P23, one, boundary=2.0)
    assert u.values[-1] == pytest.approx(2.0, abs=1e-14)
    assert u.values[0] == pytest.approx(2.0 + 1 / 6, rel=1e-10)


def test_mesh_convergence_order():
    errs = []
    for M in (41, 81):
        g = RadialGrid(1.0, M, 1e-3)
        u = solve_bvp(P34, one, grid=g)
        errs.append(np.max(np.abs(u.values - (1 - u.r**1.5) / 3)))
    assert errs[0] / errs[1] > 4.0


def test_flux_monotone_for_nonnegative_source():
    u = solve_bvp(P34, lambda r, u: 1.0 + np.abs(u))
    F = u.meta["flux"]
    assert np.all(np.diff(F[1:]) >= 0)


@settings(max_examples=50, deadline=None)
@given(q=st.floats(-1e6, 1e6), p=st.sampled_from([2.0, 2.5, 3.0, 4.0]))
def test_inverse_flux_roundtrip(q, p):
    g, _ = inverse_flux(np.array([q]), p)
    assert abs(g[0]) ** (p - 2) * g[0] == pytest.approx(q, rel=1e-12, abs=1e-300)


def test_shoot_eigenfunction_sinc():
    res = shoot_ivp(P23, 1.0, eigen_rhs(P23, math.pi**2))
    assert res.first_zero == pytest.approx(1.0, abs=1e-10)
    r = np.linspace(0.05, 0.95, 19)
    u, _ = res.evaluate(r)
    assert np.max(np.abs(u - np.sin(math.pi * r) / (math.pi * r))) < 1e-9


def test_shoot_constant_solution():
    res = shoot_ivp(P34, 2.5, lambda r, u: 0.0 * u)
    assert res.first_zero == math.inf
    u, _ = res.evaluate(np.array([0.1, 1.0, 9.0]))
    assert np.allclose(u, 2.5, rtol=1e-14)


def test_shoot_pure_critical_is_bubble():
    res = shoot_ivp(P23, 3**0.25, lambda r, u: np.sign(u) * np.abs(u) ** 5)
    assert res.first_zero == math.inf
    r = np.geomspace(1e-3, 10.0, 40)
    u, _ = res.evaluate(r)
    assert np.max(np.abs(u / bubble_eval(P23, 1.0, r) - 1)) < 1e-9


def test_shoot_rejects_nonpositive_amplitude():
    with pytest.raises(DomainError):
        shoot_ivp(P23, 0.0, eigen_rhs(P23, 1.0))


def test_first_eigenvalue_ball_23():
    lam, eig = first_eigenvalue(P23)
    assert lam == pytest.approx(math.pi**2, rel=1e-8)
    v = eig.values
    assert np.all(v[:-1] > 0) and np.all(np.diff(v) <= 0)
    assert rayleigh_p(P23, eig) == pytest.approx(lam, rel=1e-8)


@pytest.mark.parametrize("R", [0.5, 2.0])
def test_first_eigenvalue_scaling(R):
    lam, _ = first_eigenvalue(ProblemParams(2, 3, R))
    assert lam == pytest.approx(math.pi**2 / R**2, rel=1e-8)


def test_first_eigenvalue_34_dual_methods():
    lam, eig = first_eigenvalue(P34)
    ipi = eig.meta["lambda_inverse_power"]
    assert abs(ipi - lam) < 1e-6 * lam
    assert rayleigh_p(P34, eig) == pytest.approx(lam, rel=1e-6)
