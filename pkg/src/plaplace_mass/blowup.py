"""Ground states of -Δ_p u = λu^{p-1} + u^{p*-1} on B_R by shooting, solvability
scans in λ, and the blow-up picture as λ decreases to λ*."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .core import (
    ConvergenceError,
    DomainError,
    InconclusiveError,
    ProblemParams,
    RadialField,
    RadialGrid,
    ball_integral,
    bubble_derivative,
    bubble_eval,
    compute_constants,
    profile_limit,
    radial_quadrature,
)
from .radial_ode import ShootingResult, _signed_power


class ConsistencyError(RuntimeError):
    pass


@dataclass
class GroundState:
    lam: float
    amplitude: float
    profile: RadialField
    mu: float
    Q_value: float
    first_zero: float
    evaluate: Callable = field(repr=False, default=None)
    min_rho: float = math.nan  # smallest first zero seen on the amplitude grid


@dataclass
class Nonexistence:
    lam: float
    min_rho: float
    amplitudes: np.ndarray = field(repr=False, default=None)
    rhos: np.ndarray = field(repr=False, default=None)


@dataclass
class SolvabilityScan:
    lambda_grid: list
    exists: list
    min_rho: list
    bracket: tuple | None


@dataclass
class BlowupRow:
    lam: float
    amplitude: float
    mu: float
    Q_value: float
    profile_distance: float
    bound_constant: float
    green_ratio: dict
    crit_integral: float


@dataclass
class BlowupReport:
    lambda_star: float
    rows: list
    caveat: str = ("the blow-up sequence presumes that S_λ* is not attained; "
                   "this is observed numerically, not verified")


def bn_rhs(params: ProblemParams):
    lam, p, ps = params.lam, params.p, params.pstar
    return lambda r, u: lam * _signed_power(u, p - 1) + _signed_power(u, ps - 1)


def _bubble_scale(params, a, C1):
    p, N = params.p, params.N
    return (C1 / a) ** (p / ((N - p) * (p - 1)))


def shoot_bn(params: ProblemParams, amplitude: float, *, r_max: float | None = None,
             rtol: float = 1e-12, grid_step: float = 0.01, with_profile: bool = True) -> ShootingResult:
    """Shooting for -Δ_p u = λu^{p-1} + u^{p*-1}, u(0) = a, split as u = U + v.

    U is the entire bubble with U(0) = a, whose flux is known in closed form,
    so the integrator only carries the λ-driven correction v and its flux.
    Integrating u directly loses about log10(a²) digits for concentrated
    profiles, where u(R) is tiny compared to u(0).
    """
    if amplitude <= 0:
        raise DomainError("shooting amplitude must be positive")
    p, N, lam, ps = params.p, params.N, params.lam, params.pstar
    a = float(amplitude)
    R = params.R
    r_max = 10.0 * R if r_max is None else r_max
    C1 = compute_constants(params).C1
    eps = _bubble_scale(params, a, C1)
    q = p / (p - 1)
    ell = eps ** (p - 1)  # radius where U has dropped by a fixed factor
    f_bub = a ** (ps - 1)
    f_tot = lam * a ** (p - 1) + f_bub
    r_s = 1e-5 * min(ell, R)

    def U(r):
        return bubble_eval(params, eps, r, C1), -bubble_derivative(params, eps, r, C1)

    # scalar bubble and -U' for the integrator, without array overhead
    ep, beta = eps**p, (N - p) / p
    k_val = C1 * eps**beta
    k_der = k_val * (N - p) / (p - 1)

    def U_scalar(r):
        base = ep + r**q
        return k_val * base**-beta, k_der * r ** (1 / (p - 1)) * base ** (-N / p)

    # leading terms of u - U and of the extra flux at r_s
    coef = (p - 1) / p * (f_bub / N) ** (1 / (p - 1)) * np.expm1(np.log1p(lam * a ** (p - 1) / f_bub) / (p - 1))
    v_s = -coef * r_s**q
    G_s = lam * a ** (p - 1) * r_s**N / N
    v_scale = coef * min(ell, R) ** q + 1e-300
    G_scale = lam * a ** (p - 1) * min(ell, R) ** N + 1e-300

    def powdiff(v, Uv, e):
        # (U + v)^e - U^e, accurate for |v| << U
        if v > -Uv:
            return Uv**e * math.expm1(e * math.log1p(v / Uv))
        return -abs(Uv + v) ** e - Uv**e

    def fun(x, y):
        r = math.exp(x)
        v, G = y
        Uv, dU = U_scalar(r)
        u = Uv + v
        FU = r ** (N - 1) * dU ** (p - 1)
        # inverse flux difference from the flux ratio, avoiding FU + G - FU
        dv = -r * dU * math.expm1(math.log1p(G / FU) / (p - 1))
        src = lam * math.copysign(abs(u) ** (p - 1), u) + powdiff(v, Uv, ps - 1)
        return [dv, r**N * src]

    def hit_zero(x, y):
        return U_scalar(math.exp(x))[0] + y[0]

    hit_zero.terminal = True
    hit_zero.direction = -1
    sol = solve_ivp(fun, (math.log(r_s), math.log(r_max)), [v_s, G_s], method="DOP853",
                    rtol=rtol, atol=[1e-15 * v_scale, 1e-15 * G_scale], events=hit_zero,
                    dense_output=with_profile)
    if sol.status == -1:
        raise ConvergenceError(f"radial integration failed: {sol.message}")
    rho = math.exp(sol.t_events[0][0]) if sol.t_events[0].size else math.inf
    end = rho if math.isfinite(rho) else r_max
    dense = sol.sol

    def evaluate(rr):
        rr = np.atleast_1d(np.asarray(rr, dtype=float))
        Uv, dU = U(rr)
        v = np.empty_like(rr)
        G = np.empty_like(rr)
        small = rr < r_s
        if np.any(~small):
            y = dense(np.log(rr[~small]))
            v[~small], G[~small] = y[0], y[1]
        v[small] = -coef * rr[small] ** q
        G[small] = lam * a ** (p - 1) * rr[small] ** N / N
        F = rr ** (N - 1) * dU ** (p - 1) + G
        return Uv + v, F

    profile = None
    if with_profile:
        rmin_ratio = min(1e-6, 1e-3 * min(ell, R) / end)
        M = int(math.ceil(-math.log(rmin_ratio) / grid_step)) + 1
        grid = RadialGrid(end, M, rmin_ratio)
        rr = grid.positive
        u, F = evaluate(rr)
        if math.isfinite(rho):
            u[-1] = 0.0
        du = -np.sign(F) * np.abs(F / rr ** (N - 1)) ** (1 / (p - 1))
        profile = RadialField(grid, np.concatenate([[a], u]), np.concatenate([[0.0], du]),
                              dirichlet_at_R=math.isfinite(rho),
                              meta={"flux": np.concatenate([[0.0], F])})
    return ShootingResult(a, rho, profile, evaluate, r_max)


def _rho(params, a, rtol=1e-12):
    return shoot_bn(params, a, rtol=rtol, with_profile=False).first_zero


def amplitude_scan(params: ProblemParams, a_min: float = 1e-2, a_max: float = 1e6,
                   per_decade: int = 25, rtol: float = 1e-9):
    """(amplitudes, first-zero radii) on a geometric amplitude grid.

    The scan only locates sign changes of ρ - R, so a looser tolerance than the
    root refinement is enough."""
    n = int(round(per_decade * math.log10(a_max / a_min))) + 1
    amps = np.geomspace(a_min, a_max, n)
    return amps, np.array([_rho(params, a, rtol) for a in amps])


def _mu(params, a):
    return a ** (-params.p / (params.N - params.p))


def ground_state_shoot(params: ProblemParams, a_min: float = 1e-2, a_max: float = 1e6,
                       per_decade: int = 25, root_tol: float = 1e-8, margin: float = 1e-3,
                       flat: float = 1e-4):
    """Positive radial solution with u(R) = 0, or a Nonexistence record.

    The first amplitude where ρ(a) crosses R is refined by Brent's method in
    log a.  Without a crossing, nonexistence is declared only if min ρ exceeds
    R(1 + margin) and ρ changed by less than ``flat``·R over the last three
    decades; anything else is inconclusive.
    """
    from .bubble import rayleigh_quotient
    from .green import lambda1

    lam1 = lambda1(params)
    if not 0 < params.lam < lam1:
        raise DomainError(f"λ = {params.lam} must lie in (0, λ₁ = {lam1:.10g})")
    R = params.R
    amps, rhos = amplitude_scan(params, a_min, a_max, per_decade)
    above = rhos > R
    cross = np.nonzero(above[:-1] != above[1:])[0]
    if cross.size == 0:
        min_rho = float(np.min(rhos))
        tail = rhos[-3 * per_decade - 1:]
        if min_rho > R * (1 + margin) and np.ptp(tail) < flat * R:
            return Nonexistence(params.lam, min_rho, amps, rhos)
        raise InconclusiveError(f"no crossing of ρ = R and no clear asymptote (min ρ = {min_rho:.6g})",
                                partial=(amps, rhos))
    k = cross[0]

    def f(la):
        rho = _rho(params, math.exp(la))
        return (rho if math.isfinite(rho) else 10 * R) - R

    la = brentq(f, math.log(amps[k]), math.log(amps[k + 1]), xtol=1e-15, rtol=4 * np.finfo(float).eps)
    a = math.exp(la)
    sh = shoot_bn(params, a)
    if not abs(sh.first_zero - R) < root_tol * R:
        raise InconclusiveError(f"root refinement stalled at |ρ - R| = {abs(sh.first_zero - R):.2e}")
    Q = rayleigh_quotient(params.with_radius(sh.first_zero), sh.profile)
    return GroundState(params.lam, a, sh.profile, _mu(params, a), Q, sh.first_zero, sh.evaluate,
                       float(np.min(rhos)))


def solvability_scan(params: ProblemParams, lambda_grid, **kw) -> SolvabilityScan:
    lams = sorted(float(x) for x in lambda_grid)
    exists, min_rho = [], []
    for lam in lams:
        out = ground_state_shoot(params.with_lambda(lam), **kw)
        if isinstance(out, GroundState):
            exists.append(True)
            min_rho.append(out.min_rho)
        else:
            exists.append(False)
            min_rho.append(out.min_rho)
    first = exists.index(True) if True in exists else None
    if first is not None and not all(exists[first:]):
        raise ConsistencyError("solvability is not monotone along the λ grid")
    bracket = None
    if first is not None and first > 0:
        bracket = (lams[first - 1], lams[first])
    return SolvabilityScan(lams, exists, min_rho, bracket)


def profile_integral(params: ProblemParams) -> float:
    """∫ U_∞^{p*-1} over R^N, U_∞ the bubble normalized by U_∞(0) = 1."""
    c = compute_constants(params)
    e = params.pstar - 1
    return radial_quadrature(lambda r: profile_limit(params, r, c.Lambda) ** e, params,
                             tail_exponent=params.beta * e)


def blowup_diagnostics(params: ProblemParams, lambda_list, lambda_star: float | None = None,
                       radii=(0.3, 0.5, 0.7), y_max: float = 10.0, green_grid=None) -> BlowupReport:
    """Rescaled ground states against the limit profile and the Green function at λ*."""
    from .green import lambda1, lambda_star_bisection, solve_green

    params.require_small_dimension()
    if lambda_star is None:
        lambda_star = lambda_star_bisection(params, grid=green_grid).lambda_star
    lam1 = lambda1(params)
    lams = sorted((float(x) for x in lambda_list), reverse=True)
    for lam in lams:
        if not lambda_star < lam < lam1:
            raise DomainError(f"λ = {lam} is outside (λ*, λ₁)")
    p, N = params.p, params.N
    c = compute_constants(params)
    K = profile_integral(params) ** (1 / (p - 1))
    green = solve_green(params.with_lambda(lambda_star), green_grid, estimate_error=False)
    spline = CubicSpline(np.log(green.grid.positive), green.G.values[1:])
    rows = []
    for lam in lams:
        gs = ground_state_shoot(params.with_lambda(lam))
        if not isinstance(gs, GroundState):
            raise InconclusiveError(f"no ground state found at λ = {lam}")
        a, mu = gs.amplitude, gs.mu
        y = np.linspace(0.0, min(y_max, gs.first_zero / mu), 2001)
        u_y = gs.evaluate(np.maximum(mu * y, 1e-300))[0]
        dist = float(np.max(np.abs(u_y / a - profile_limit(params, y, c.Lambda))))
        r = gs.profile.grid.positive[:-1]
        ratio = gs.profile.values[1:-1] / (a * profile_limit(params, r / mu, c.Lambda))
        scale = mu ** (-(N - p) / (p * (p - 1)))
        green_ratio = {}
        for rr in radii:
            green_ratio[float(rr)] = float(scale * gs.evaluate(rr)[0][0] / (K * spline(math.log(rr))))
        crit = float(ball_integral(np.abs(gs.profile.values[1:]) ** params.pstar, gs.profile.grid, N))
        rows.append(BlowupRow(lam, a, mu, gs.Q_value, dist, float(max(1.0, np.max(ratio))),
                              green_ratio, crit))
    return BlowupReport(lambda_star, rows)
