"""Green's function of -Δ_p - λ with a unit Dirac mass at the center of B_R.

G = Γ + H where Γ = C0 r^{-(N-p)/(p-1)}.  The flux of Γ is the constant
1/(N ω_N), so the Dirac source enters as an exact flux condition at r = 0 and
only the regular part H is ever computed numerically.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .core import (
    ConvergenceError,
    DomainError,
    ProblemParams,
    RadialField,
    RadialGrid,
    compute_constants,
    fundamental_C0,
    log_derivative,
    unit_ball_volume,
)
from .radial_ode import Reference, flux_solve, lambda1_by_shooting


class ExtrapolationError(ConvergenceError):
    pass


class MonotonicityError(RuntimeError):
    pass


@dataclass
class GreenFunction:
    params: ProblemParams
    grid: RadialGrid
    G: RadialField
    H: RadialField
    mass: float
    mass_error: float
    flux_at_zero: float
    iterations: int = 0
    meta: dict = field(default_factory=dict)


@dataclass
class MassCurve:
    lambda_values: list
    masses: list


@dataclass
class LambdaStarResult:
    lambda_star: float
    bracket: tuple
    mass_at_root: float
    lambda1: float
    history: list = field(default_factory=list)


@lru_cache(maxsize=64)
def _lambda1(p: float, N: int, R: float) -> float:
    return lambda1_by_shooting(ProblemParams(p, N, R))


def lambda1(params: ProblemParams) -> float:
    return _lambda1(params.p, params.N, params.R)


def gamma_reference(params: ProblemParams, grid: RadialGrid) -> Reference:
    C0 = fundamental_C0(params)
    r = grid.positive
    beta = params.beta
    vals = np.concatenate([[np.nan], C0 * r**-beta])
    der = np.concatenate([[np.nan], -C0 * beta * r ** (-beta - 1)])
    flux = np.full(grid.M + 1, 1.0 / (params.N * unit_ball_volume(params.N)))
    flux[0] = 0.0
    return Reference(vals, der, flux, singular_at_zero=True)


def _check_params(params: ProblemParams):
    if params.lam != 0.0:
        params.require_small_dimension()
    lam1 = lambda1(params)
    if params.lam >= lam1:
        raise DomainError(f"λ = {params.lam} is not below λ₁ = {lam1:.10g}")
    return lam1


def _picard(params, grid, ref, tol, theta, max_iter):
    p = params.p
    lam = params.lam
    r = grid.positive
    if lam == 0.0:
        v, du, F = flux_solve(params, grid, np.zeros(grid.M), 0.0, ref)
        return v, du, F, 0
    scale = fundamental_C0(params) * params.R ** -params.beta
    H = np.zeros(grid.M)  # Picard start: G⁰ = Γ
    prev_diff = math.inf
    increases = 0
    for k in range(1, max_iter + 1):
        G = ref.values[1:] + H
        v, du, F = flux_solve(params, grid, lam * np.abs(G) ** (p - 1), 0.0, ref)
        H_new = theta * v[1:] + (1 - theta) * H
        diff = np.max(np.abs(H_new - H)) / max(np.max(np.abs(H_new)), scale)
        H = H_new
        if diff < tol:
            v, du, F = flux_solve(params, grid, lam * np.abs(ref.values[1:] + H) ** (p - 1), 0.0, ref)
            return v, du, F, k
        increases = increases + 1 if diff > prev_diff else 0
        prev_diff = diff
        if increases >= 5:
            theta *= 0.5
            increases = 0
            if theta < 1e-3:
                raise ConvergenceError("Picard iteration is not contracting", residual=diff)
    raise ConvergenceError("Picard iteration budget exhausted", residual=diff)


def _extrapolate_center(Hvals: np.ndarray, grid: RadialGrid, stride: int | None = None):
    """Limit of H(r) as r -> 0 from samples at three nested radii r, qr, q²r."""
    if stride is None:
        stride = max(1, int(round(math.log(2.0) / grid.h)))
    scale = max(np.max(np.abs(Hvals)), 1e-300)
    noise = 64 * np.finfo(float).eps * scale

    def level(i0):
        h1, h2, h3 = Hvals[i0], Hvals[i0 + stride], Hvals[i0 + 2 * stride]
        d1, d2 = h2 - h1, h3 - h2
        if abs(d1) <= noise and abs(d2) <= noise:
            return h1, abs(d1), math.nan
        if d1 * d2 <= 0 or abs(d2) <= abs(d1):
            raise ExtrapolationError("regular part is not Cauchy toward the origin")
        q = grid.ratio**stride
        order = math.log(d2 / d1) / math.log(q)
        inc = d1 / (q**order - 1.0)
        return h1 - inc, abs(inc), order

    m0, inc0, order = level(0)
    m1, _, _ = level(stride)
    return m0, max(inc0, abs(m1 - m0)), order


def solve_green(params: ProblemParams, grid: RadialGrid | None = None, *, tol: float = 1e-12,
                theta: float = 0.8, max_iter: int = 200000, estimate_error: bool = True) -> GreenFunction:
    """Green's function of -Δ_p - λ on B_R with unit mass at the center.

    Picard iteration on the flux form: the flux is 1/(Nω_N) + λ∫ s^{N-1} G^{p-1}
    and G is recovered by integrating inward from G(R) = 0.
    """
    _check_params(params)
    grid = grid or RadialGrid.default(params.R)
    ref = gamma_reference(params, grid)
    v, du, F, its = _picard(params, grid, ref, tol, theta, max_iter)
    N, p = params.N, params.p
    r = grid.positive
    Gv = ref.values + v
    Gv[0] = np.nan
    G = RadialField(grid, Gv, du, dirichlet_at_R=True, singular_at_zero=True, meta={"flux": F})
    mass, err, order = _extrapolate_center(v[1:], grid)
    if estimate_error and grid.M >= 33:
        coarse = RadialGrid(grid.R, (grid.M + 1) // 2, grid.rmin_ratio)
        cref = gamma_reference(params, coarse)
        cv = _picard(params, coarse, cref, tol, theta, max_iter)[0]
        cmass = _extrapolate_center(cv[1:], coarse)[0]
        err = max(err, abs(cmass - mass) / 63.0)
    Hv = v.copy()
    Hv[0] = mass
    Hder = np.concatenate([[np.nan], du[1:] - ref.derivative[1:]])
    H = RadialField(grid, Hv, Hder)
    dG = log_derivative(Gv[1:], grid)
    flux0 = float(np.mean(N * unit_ball_volume(N) * r[:3] ** (N - 1) * np.abs(dG[:3]) ** (p - 1)))
    return GreenFunction(params, grid, G, H, float(mass), float(err), flux0, its,
                         meta={"holder_order": order})


def regular_part_at_center(gf: GreenFunction):
    """(H_λ(0,0), error estimate)."""
    return gf.mass, gf.mass_error


def mass_at(params: ProblemParams, grid: RadialGrid | None = None) -> float:
    return solve_green(params, grid, estimate_error=False).mass


def mass_curve(params: ProblemParams, lambda_grid, grid: RadialGrid | None = None,
               workers: int = 1, tol: float = 1e-10) -> MassCurve:
    """Masses H_λ(0,0) along an ascending λ grid; strict monotonicity is checked."""
    lams = sorted(float(x) for x in lambda_grid)
    items = [params.with_lambda(l) for l in lams]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            masses = list(ex.map(mass_at, items, [grid] * len(items)))
    else:
        masses = [mass_at(it, grid) for it in items]
    for (l0, m0), (l1, m1) in zip(zip(lams, masses), zip(lams[1:], masses[1:])):
        if not m1 - m0 > tol:
            raise MonotonicityError(f"mass not increasing between λ={l0} and λ={l1}: {m0} -> {m1}")
    return MassCurve(lams, masses)


def lambda_star_bisection(params: ProblemParams, tol: float = 1e-8,
                          grid: RadialGrid | None = None) -> LambdaStarResult:
    """λ* as the zero of λ -> H_λ(0,0) on (0, λ₁), by bisection."""
    params.require_small_dimension()
    lam1 = lambda1(params)
    lo = 0.0
    m_lo = mass_at(params.with_lambda(0.0), grid)
    if m_lo >= 0:
        raise DomainError("mass at λ = 0 is not negative")
    for frac in (0.99, 0.999, 0.9999):
        hi = frac * lam1
        m_hi = mass_at(params.with_lambda(hi), grid)
        if m_hi > 0:
            break
    else:
        raise DomainError("mass stays negative up to λ₁; no sign change to bracket")
    history = [(lo, m_lo), (hi, m_hi)]
    while hi - lo > tol * lam1:
        mid = 0.5 * (lo + hi)
        m = mass_at(params.with_lambda(mid), grid)
        history.append((mid, m))
        if m < 0:
            lo, m_lo = mid, m
        else:
            hi, m_hi = mid, m
        assert m_lo < 0 <= m_hi
    root = 0.5 * (lo + hi)
    return LambdaStarResult(root, (lo, hi), mass_at(params.with_lambda(root), grid), lam1, history)


def hbar_norm(gf: GreenFunction) -> float:
    """Discrete L^q̄ norm of ∇H with q̄ = N(p-1)/(N-1)."""
    from .core import ball_integral

    p, N = gf.params.p, gf.params.N
    q = N * (p - 1) / (N - 1)
    d = gf.H.derivative[1:]
    return ball_integral(np.abs(d) ** q, gf.grid, N) ** (1 / q)


def approximate_green_via_bubbles(params: ProblemParams, eps_list, grid: RadialGrid | None = None,
                                  green: GreenFunction | None = None):
    """H_ε = G_ε - Γ_ε from projected bubbles, with sup-distance to H_λ.

    Returns a list of (eps, H_eps field, sup distance) in the order given.
    """
    from .bubble import project_bubble

    grid = grid or RadialGrid.default(params.R)
    green = green or solve_green(params, grid, estimate_error=False)
    out = []
    for eps in eps_list:
        pb = project_bubble(params, eps, grid)
        dist = float(np.max(np.abs(pb.H_eps_scaled.values - green.H.values)))
        out.append((eps, pb.H_eps_scaled, dist))
    return out
