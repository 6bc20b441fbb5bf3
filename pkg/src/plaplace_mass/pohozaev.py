"""Pohozaev identities for radial fields on balls, and the mass as a residue.

On D = B_δ the boundary integrals reduce to point values at r = δ times the
sphere area N ω_N δ^{N-1}, so every identity below is a handful of radial
quadratures plus derivative values at one node.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    DomainError,
    ProblemParams,
    RadialField,
    RadialGrid,
    _stencil_weights,
    ball_integral,
    compute_constants,
    cumulative_from_zero,
    radial_quadrature,
    unit_ball_volume,
)


class ConsistencyError(RuntimeError):
    pass


class DifferentiationError(RuntimeError):
    """Finite differences of a field are dominated by noise."""


@dataclass
class PohozaevReport:
    delta_list: list
    residue_values: list
    spread: float
    inferred_mass: float
    C_pz: float
    term_scale: float = 0.0

    @property
    def mean_residue(self) -> float:
        return float(np.mean(self.residue_values))


# inward one-sided 4th-order first derivative in x = log r, offsets -4..0
_ONE_SIDED = _stencil_weights(np.arange(-4, 1), "diff", at=0.0)


def _node(grid: RadialGrid, delta: float) -> int:
    if not 0 < delta < grid.R:
        raise DomainError("δ must lie strictly inside the ball")
    i = grid.index_of(delta)
    if i < 7:
        raise DomainError("δ too close to the origin for the difference stencil")
    return i


def _one_sided_derivative(values: np.ndarray, grid: RadialGrid, i: int) -> float:
    """du/dr at node i from full-grid ``values`` (values[0] unused)."""
    seg = values[i - 6:i + 1]
    d2 = np.diff(seg, 2)
    scale = np.max(np.abs(seg))
    if np.all(np.abs(d2) > 64 * np.finfo(float).eps * scale):
        s = np.sign(d2)
        if np.all(s[1:] * s[:-1] < 0):
            raise DifferentiationError(f"second differences alternate in sign near r = {grid.nodes[i]:.6g}")
    return float(_ONE_SIDED @ values[i - 4:i + 1]) / grid.h / grid.nodes[i]


def pohozaev_residual(params: ProblemParams, u: RadialField, delta: float, c: int = 0,
                      f: RadialField | None = None, *, relative: bool = False,
                      solution_tol: float = 1e-6) -> float:
    """|LHS - RHS| of the Pohozaev identity on B_δ for a radial solution of
    -Δ_p u = λu^{p-1} + c u^{p*-1} + f.

    ∫|∇u|^p is eliminated with the energy identity, so the check couples the
    volume terms to u(δ) and u'(δ).  δ is moved to the nearest grid node.  With
    ``relative`` the result is divided by the largest individual term.
    """
    if c not in (0, 1):
        raise DomainError("c must be 0 or 1")
    p, N, lam, ps = params.p, params.N, params.lam, params.pstar
    grid = u.grid
    i = _node(grid, delta)
    d = grid.nodes[i]
    r = grid.positive
    uv = u.values[1:]
    du = u.derivative_values()[1:]
    fv = np.zeros_like(uv) if f is None else f.values[1:]
    area = N * unit_ball_volume(N) * d ** (N - 1)

    src = lam * np.sign(uv) * np.abs(uv) ** (p - 1) + c * np.sign(uv) * np.abs(uv) ** (ps - 1) + fv
    flux = -(r ** (N - 1)) * np.abs(du) ** (p - 2) * du
    expected = cumulative_from_zero(r ** (N - 1) * src, grid)[1:]
    mismatch = np.max(np.abs(flux[:i] - expected[:i]))
    scale = max(np.max(np.abs(expected[:i])), np.max(np.abs(flux[:i])))
    if mismatch > solution_tol * max(scale, 1e-300) and mismatch > 0:
        raise DomainError(f"u does not solve the equation on B_δ (flux mismatch {mismatch / scale:.2e})")

    Hu = lam * np.abs(uv) ** p / p + c * np.abs(uv) ** ps / ps
    ui, dui = uv[i - 1], du[i - 1]
    vol_H = N * ball_integral(Hu, grid, N, upto=i)
    vol_f = -ball_integral(fv * r * du, grid, N, upto=i)
    energy = (ball_integral(lam * np.abs(uv) ** p + c * np.abs(uv) ** ps + fv * uv, grid, N, upto=i)
              + area * ui * np.abs(dui) ** (p - 2) * dui)
    coef = (N - p) / p
    lhs = vol_H + vol_f - coef * energy
    bdry_grad = area * d * (p - 1) / p * np.abs(dui) ** p
    bdry_H = area * d * Hu[i - 1]
    rhs = bdry_grad + bdry_H
    res = abs(lhs - rhs)
    if relative:
        big = max(abs(vol_H), abs(vol_f), abs(coef * energy), abs(bdry_grad), abs(bdry_H))
        return float(res / big) if big > 0 else 0.0
    return float(res)


def residue_constant(params: ProblemParams) -> float:
    """Constant linking the δ-ball expression for G_λ to H_λ(0,0)."""
    params.require_small_dimension()
    c = compute_constants(params)
    p, N = params.p, params.N
    q = p / (p - 1)
    a = N + 2 - N / p
    profile = radial_quadrature(lambda r: (r**q - (p - 1)) / (1 + r**q) ** a, N,
                                tail_exponent=q * (a - 1))
    val = (params.pstar - 1) * (N - p) / (p * (p - 1)) * c.C0 ** (p - 1) * c.C1 ** (p**2 / (N - p)) * profile
    if not val > 0:
        raise ConsistencyError(f"residue constant is not positive ({val})")
    return float(val)


def reduction_identity_check(params: ProblemParams, rtol: float = 1e-12):
    """(lhs, rhs, lhs/rhs) for the integration-by-parts identity of the profile
    ∫|y|^q (1+|y|^q)^{-a} = N(p-1)/p ∫(1+|y|^q)^{-a}, q = p/(p-1), a = N+2-N/p."""
    params.require_small_dimension()
    p, N = params.p, params.N
    q = p / (p - 1)
    a = N + 2 - N / p
    lhs = radial_quadrature(lambda r: r**q / (1 + r**q) ** a, N, tail_exponent=q * (a - 1), rtol=rtol)
    rhs = N * (p - 1) / p * radial_quadrature(lambda r: (1 + r**q) ** -a, N, tail_exponent=q * a, rtol=rtol)
    return lhs, rhs, lhs / rhs


def _green_residue(gf, i: int):
    params = gf.params
    p, N, lam = params.p, params.N, params.lam
    grid = gf.grid
    d = grid.nodes[i]
    G = gf.G.values
    g = G[i]
    dg = _one_sided_derivative(G, grid, i)
    area = N * unit_ball_volume(N) * d ** (N - 1)
    terms = [
        lam * ball_integral(np.abs(G[1:]) ** p, grid, N, upto=i) if lam != 0 else 0.0,
        -area * d * (p - 1) / p * abs(dg) ** p,
        -area * lam * d * abs(g) ** p / p,
        -area * (N - p) / p * g * abs(dg) ** (p - 2) * dg,
    ]
    return sum(terms), max(abs(t) for t in terms)


def mass_residue(params: ProblemParams, delta_list, grid: RadialGrid | None = None,
                 green=None) -> PohozaevReport:
    """Evaluate the δ-ball identity for G_λ at each δ and infer H_λ(0,0).

    G' at δ comes from one-sided 4th-order differences of the grid values of G,
    with each δ moved to its nearest node.
    """
    from .green import solve_green

    green = green or solve_green(params, grid, estimate_error=False)
    C = residue_constant(params)
    deltas, res, scale = [], [], 0.0
    for delta in delta_list:
        i = _node(green.grid, float(delta))
        val, big = _green_residue(green, i)
        deltas.append(float(green.grid.nodes[i]))
        res.append(float(val))
        scale = max(scale, big)
    spread = float(max(res) - min(res))
    return PohozaevReport(deltas, res, spread, float(np.mean(res)) / C, C, scale)
