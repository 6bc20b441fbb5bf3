"""Radial p-Laplace engine: flux-form boundary value solver, shooting, λ₁.

The radial operator is written through the signed flux

    F(r) = -r^{N-1} |u'|^{p-2} u',    F' = r^{N-1} * source,

so a boundary value problem on B_R becomes two quadratures (from 0 for F,
from R for u) wrapped in a Newton iteration.  A known *reference profile*
(Γ, Γ_ε, U_ε) can be split off analytically; the solver then works on the
regular remainder and never subtracts two large numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import LinearOperator, gmres

from .core import (
    ConvergenceError,
    DomainError,
    ProblemParams,
    RadialField,
    RadialGrid,
    ball_integral,
    cumulative_from_zero,
    cumulative_to_R,
    unit_ball_volume,
)

DELTA_SCHEDULE = (1e-2, 1e-4, 1e-6, 1e-8, 1e-10, 0.0)


class BracketError(DomainError):
    """A bisection bracket could not be established."""


@dataclass
class Reference:
    """Exactly known profile with its derivative and flux on a grid.

    ``values[0]`` may be NaN for profiles singular at the origin.
    """

    values: np.ndarray
    derivative: np.ndarray
    flux: np.ndarray
    singular_at_zero: bool = False


@dataclass
class FluxState:
    grid: RadialGrid
    u: np.ndarray
    F: np.ndarray


@dataclass
class ShootingResult:
    amplitude: float
    first_zero: float
    profile: RadialField
    evaluate: Callable = field(repr=False, default=None)
    max_radius: float = math.inf


# --------------------------------------------------------------------------
# flux inversion


def inverse_flux(q: np.ndarray, p: float, delta: float = 0.0):
    """Solve (g^2 + δ^2)^{(p-2)/2} g = q; returns (g, dg/dq).

    With δ = 0 this is g = |q|^{1/(p-1)} sign(q).
    """
    q = np.asarray(q, dtype=float)
    a = np.abs(q)
    if delta == 0.0 or p == 2.0:
        with np.errstate(divide="ignore", invalid="ignore"):
            g = a ** (1.0 / (p - 1.0))
            dg = np.where(a > 0, g / ((p - 1.0) * a), np.inf if p > 2 else 1.0)
        return np.sign(q) * g, dg
    g = a ** (1.0 / (p - 1.0))
    d2 = delta * delta
    for _ in range(60):
        base = g * g + d2
        val = base ** ((p - 2) / 2) * g - a
        der = base ** ((p - 4) / 2) * ((p - 1) * g * g + d2)
        step = val / der
        g = np.maximum(g - step, 0.5 * g)
        if np.all(np.abs(step) <= 1e-15 * np.maximum(g, 1e-300)):
            break
    base = g * g + d2
    dg = 1.0 / (base ** ((p - 4) / 2) * ((p - 1) * g * g + d2))
    return np.sign(q) * g, dg


def _phi_difference(q_tot, q_ref, p, delta):
    """inverse_flux(q_tot) - inverse_flux(q_ref), without cancellation when δ = 0."""
    if delta == 0.0 and np.all(q_ref > 0):
        ratio = (q_tot - q_ref) / q_ref
        out = q_ref ** (1.0 / (p - 1.0)) * np.expm1(np.log1p(ratio) / (p - 1.0))
        return out
    return inverse_flux(q_tot, p, delta)[0] - inverse_flux(q_ref, p, delta)[0]


def flux_solve(params: ProblemParams, grid: RadialGrid, extra_source: np.ndarray,
               boundary: float = 0.0, reference: Reference | None = None,
               delta: float = 0.0):
    """Solve -(r^{N-1}|u'|^{p-2}u')' = r^{N-1} s for a *given* source s.

    With a reference, the reference flux is added to the flux of ``extra_source``.
    Returns (v, du, F) on the full grid, where v = u - reference (or u) and
    v[0] is the limit at the origin.
    """
    p, N = params.p, params.N
    r = grid.positive
    w = r ** (N - 1)
    F_extra = cumulative_from_zero(w * extra_source, grid)[1:]
    if reference is None:
        F = F_extra
        g, _ = inverse_flux(F / w, p, delta)
        du = -g
        v = boundary + cumulative_to_R(g, grid)
        F_full = np.concatenate([[0.0], F])
        du_full = np.concatenate([[0.0], du])
        return v, du_full, F_full
    F_ref = reference.flux[1:]
    F = F_ref + F_extra
    diff = _phi_difference(F / w, F_ref / w, p, delta)
    v = boundary - reference.values[-1] + cumulative_to_R(diff, grid)
    du = reference.derivative[1:] - diff
    return v, np.concatenate([[np.nan], du]), np.concatenate([[0.0], F])


def _numeric_dsource(source, r, u):
    h = 1e-7 * (1.0 + np.abs(u))
    return (source(r, u + h) - source(r, u - h)) / (2 * h)


def solve_bvp(params: ProblemParams, source: Callable, boundary: float = 0.0,
              init: RadialField | None = None, *, grid: RadialGrid | None = None,
              reference: Reference | None = None, dsource: Callable | None = None,
              tol: float = 1e-10, max_newton: int = 40, deltas=None) -> RadialField:
    """Newton solver for the radial Dirichlet problem on B_R.

    Solves -Δ_p u = source(r, u) with u(R) = ``boundary`` and u'(0) = 0.  When a
    ``reference`` is given, its flux is carried exactly and ``source`` is only
    the remaining part of the right-hand side.  For p > 2 the derivative of the
    flux inversion is regularized with δ driven through ``DELTA_SCHEDULE``.
    """
    if grid is None:
        grid = init.grid if init is not None else RadialGrid.default(params.R)
    p, N = params.p, params.N
    r = grid.positive
    w = r ** (N - 1)
    ref_u = reference.values[1:] if reference is not None else 0.0
    if init is not None:
        v = init.values[1:] - ref_u
    else:
        v = np.zeros(grid.M)
    if deltas is None:
        deltas = DELTA_SCHEDULE if p > 2 else (0.0,)

    def T(v, delta):
        return flux_solve(params, grid, source(r, ref_u + v), boundary, reference, delta)

    scale = lambda v: max(np.max(np.abs(ref_u + v)), 1e-300)
    res_norm = math.inf
    for delta in deltas:
        for it in range(max_newton):
            vt, du, F = T(v, delta)
            res = v - vt[1:]
            res_norm = np.max(np.abs(res)) / scale(v)
            if res_norm < tol:
                break
            ds = (dsource or (lambda rr, uu: _numeric_dsource(source, rr, uu)))(r, ref_u + v)
            q = F[1:] / w
            _, dphi = inverse_flux(q, p, delta)
            dphi = np.where(np.isfinite(dphi), dphi, 0.0)

            def jt(x):
                dF = cumulative_from_zero(w * ds * x, grid)[1:]
                return x - cumulative_to_R(dphi * dF / w, grid)[1:]

            A = LinearOperator((grid.M, grid.M), matvec=jt, dtype=float)
            step, info = gmres(A, -res, rtol=1e-12, atol=0.0, restart=60, maxiter=20)
            t = 1.0
            for _ in range(30):
                vn = v + t * step
                rn = np.max(np.abs(vn - T(vn, delta)[0][1:])) / scale(vn)
                if rn <= (1 - 1e-4 * t) * res_norm or rn < tol:
                    break
                t *= 0.5
            else:
                raise ConvergenceError("Newton line search failed", residual=res_norm)
            v = vn
        else:
            raise ConvergenceError(f"Newton did not converge (δ={delta:g})", residual=res_norm)

    vt, du, F = T(v, 0.0 if deltas[-1] == 0.0 else deltas[-1])
    if reference is not None:
        values = reference.values + vt
        if reference.singular_at_zero:
            values[0] = np.nan
        else:
            values[0] = reference.values[0] + vt[0]
    else:
        values = vt
    return RadialField(grid, values, du, dirichlet_at_R=True,
                       singular_at_zero=reference is not None and reference.singular_at_zero,
                       meta={"flux": F, "regular": vt, "residual": res_norm})


def solve_linear_source(params: ProblemParams, grid: RadialGrid, source_values: np.ndarray,
                        boundary: float = 0.0) -> RadialField:
    """-Δ_p u = f with f given at the positive nodes; explicit by two quadratures."""
    v, du, F = flux_solve(params, grid, source_values, boundary)
    return RadialField(grid, v, du, dirichlet_at_R=True, meta={"flux": F})


# --------------------------------------------------------------------------
# shooting


def _length_scale(params, a, f0):
    p, N = params.p, params.N
    if f0 <= 0:
        return math.inf
    return (a * p / (p - 1)) ** ((p - 1) / p) * (N / f0) ** (1 / p)


def shoot_ivp(params: ProblemParams, amplitude: float, rhs: Callable, *,
              r_max: float | None = None, rtol: float = 1e-12, grid_step: float = 0.01,
              with_profile: bool = True) -> ShootingResult:
    """Integrate -Δ_p u = rhs(r, u), u(0) = a, u'(0) = 0 outward to the first zero.

    The independent variable is log r and the state is (u, F).  Reports the first
    zero ρ(a), or ``inf`` if u stays positive up to ``r_max`` (default 10 R).
    ``rhs`` must accept negative u (the solver may probe past the zero).
    """
    if amplitude <= 0:
        raise DomainError("shooting amplitude must be positive")
    p, N = params.p, params.N
    a = float(amplitude)
    r_max = 10.0 * params.R if r_max is None else r_max
    f0 = float(rhs(0.0, a))
    ell = _length_scale(params, a, f0)
    r_s = 1e-5 * min(ell, params.R)
    if f0 > 0:
        F_s = f0 * r_s**N / N
        u_s = a - (p - 1) / p * (f0 / N) ** (1 / (p - 1)) * r_s ** (p / (p - 1))
    else:
        F_s, u_s = f0 * r_s**N / N, a
    F_scale = max(abs(f0), 1e-300) * min(ell, params.R) ** N
    # size of u in the far field of a concentrated profile
    u_scale = a * (min(ell, params.R) / params.R) ** params.beta

    def fun(x, y):
        r = math.exp(x)
        u, F = y
        g = math.copysign(abs(F / r ** (N - 1)) ** (1 / (p - 1)), F)
        return [-r * g, r**N * rhs(r, u)]

    def hit_zero(x, y):
        return y[0]

    hit_zero.terminal = True
    hit_zero.direction = -1
    sol = solve_ivp(fun, (math.log(r_s), math.log(r_max)), [u_s, F_s], method="DOP853",
                    rtol=rtol, atol=[1e-15 * u_scale, 1e-15 * F_scale], events=hit_zero,
                    dense_output=True)
    if sol.status == -1:
        raise ConvergenceError(f"radial integration failed: {sol.message}")
    if sol.t_events[0].size:
        rho = math.exp(sol.t_events[0][0])
    else:
        rho = math.inf
    end = rho if math.isfinite(rho) else r_max
    dense = sol.sol

    def evaluate(rr):
        rr = np.atleast_1d(np.asarray(rr, dtype=float))
        u = np.empty_like(rr)
        F = np.empty_like(rr)
        small = rr < r_s
        if np.any(~small):
            y = dense(np.log(rr[~small]))
            u[~small], F[~small] = y[0], y[1]
        if np.any(small):
            rs = rr[small]
            u[small] = a - (p - 1) / p * (max(f0, 0) / N) ** (1 / (p - 1)) * rs ** (p / (p - 1))
            F[small] = f0 * rs**N / N
        return u, F

    profile = None
    if with_profile:
        rmin_ratio = min(1e-6, 1e-3 * min(ell, params.R) / end)
        M = int(math.ceil(-math.log(rmin_ratio) / grid_step)) + 1
        grid = RadialGrid(end, M, rmin_ratio)
        u, F = evaluate(grid.positive)
        if math.isfinite(rho):
            u[-1] = 0.0
        rr = grid.positive
        du = -np.sign(F) * np.abs(F / rr ** (N - 1)) ** (1 / (p - 1))
        profile = RadialField(grid, np.concatenate([[a], u]), np.concatenate([[0.0], du]),
                              dirichlet_at_R=math.isfinite(rho),
                              meta={"flux": np.concatenate([[0.0], F])})
    return ShootingResult(a, rho, profile, evaluate, r_max)


# --------------------------------------------------------------------------
# first eigenvalue


def _signed_power(u, e):
    return np.sign(u) * np.abs(u) ** e


def eigen_rhs(params: ProblemParams, lam: float) -> Callable:
    e = params.p - 1
    return lambda r, u: lam * _signed_power(u, e)


def lambda1_by_shooting(params: ProblemParams, rel_width: float = 1e-10) -> float:
    """Bisection on λ so that the eigen-shooting from u(0)=1 first vanishes at R."""
    R = params.R

    def rho(lam):
        return shoot_ivp(params, 1.0, eigen_rhs(params, lam), with_profile=False).first_zero

    lo, hi = 1.0 / R**params.p, 1.0 / R**params.p
    for _ in range(80):
        if rho(hi) < R:
            break
        hi *= 4.0
    else:
        raise BracketError("could not find λ with first zero inside the ball; widen the λ bracket")
    for _ in range(80):
        if rho(lo) > R:
            break
        lo /= 4.0
    else:
        raise BracketError("could not find λ with first zero outside the ball; widen the λ bracket")
    while hi - lo > rel_width * hi:
        mid = 0.5 * (lo + hi)
        if rho(mid) > R:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def rayleigh_p(params: ProblemParams, u: RadialField) -> float:
    """∫|∇u|^p / ∫|u|^p over B_R."""
    g = u.grid
    du = u.derivative_values()[1:]
    num = ball_integral(np.abs(du) ** params.p, g, params.N)
    den = ball_integral(np.abs(u.values[1:]) ** params.p, g, params.N)
    return num / den


def inverse_power_eigenvalue(params: ProblemParams, grid: RadialGrid | None = None,
                             lam0: float = 1.0, tol: float = 1e-13, max_iter: int = 500):
    """Inverse power iteration -Δ_p u_{k+1} = λ_k u_k^{p-1}, normalized in L^p."""
    grid = grid or RadialGrid.default(params.R)
    p, N = params.p, params.N
    r = grid.positive
    u = np.concatenate([[1.0], 1.0 - (r / params.R) ** 2])
    lam = lam0
    field_ = None
    for _ in range(max_iter):
        field_ = solve_linear_source(params, grid, lam * np.abs(u[1:]) ** (p - 1))
        nrm = ball_integral(np.abs(field_.values[1:]) ** p, grid, N) ** (1 / p)
        field_ = field_.scaled(1.0 / nrm)
        lam_new = rayleigh_p(params, field_)
        u = field_.values
        if abs(lam_new - lam) < tol * lam_new:
            lam = lam_new
            break
        lam = lam_new
    else:
        raise ConvergenceError("inverse power iteration did not converge")
    return lam, field_


def first_eigenvalue(params: ProblemParams, grid: RadialGrid | None = None,
                     check: bool = True):
    """λ₁ of -Δ_p on B_R with a positive L^p-normalized eigenfunction.

    λ₁ comes from shooting bisection; the inverse power iteration is run as an
    independent cross-check (relative agreement 1e-6).
    """
    lam_shoot = lambda1_by_shooting(params)
    lam_ipi, eig = inverse_power_eigenvalue(params, grid, lam0=lam_shoot)
    if check and abs(lam_ipi - lam_shoot) > 1e-6 * lam_shoot:
        raise ConvergenceError(
            f"shooting ({lam_shoot:.12g}) and inverse power ({lam_ipi:.12g}) disagree")
    eig.meta.update(lambda_shooting=lam_shoot, lambda_inverse_power=lam_ipi)
    return lam_shoot, eig
