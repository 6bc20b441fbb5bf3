"""Problem parameters, model constants, graded radial grids and radial quadrature.

Everything in the package works with radial functions on the ball B_R in R^N.
Radial grids are geometric: r_0 = 0 followed by r_1 < ... < r_M = R with a
constant ratio, so that integrals and derivatives can be taken with uniform
high-order rules in the logarithmic variable x = log r.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable

import mpmath
import numpy as np


class DomainError(ValueError):
    """Input outside the admissible parameter range."""


class ConvergenceError(RuntimeError):
    """An iterative method did not converge.

    ``residual`` carries the last residual norm when one is available.
    """

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class QuadratureError(ConvergenceError):
    """Quadrature did not reach the requested tolerance."""


class InconclusiveError(RuntimeError):
    """A finite computation could not decide the question asked of it.

    ``partial`` optionally carries whatever was computed before giving up.
    """

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class ProblemParams:
    """The ball problem ``-Δ_p u = λ u^{p-1} + ...`` on B_R in R^N."""

    p: float
    N: int
    R: float = 1.0
    lam: float = 0.0

    def __post_init__(self):
        if int(self.N) != self.N:
            raise DomainError(f"dimension must be an integer, got {self.N}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "R", float(self.R))
        object.__setattr__(self, "lam", float(self.lam))
        if not (2.0 <= self.p < self.N):
            raise DomainError(f"need 2 <= p < N, got p={self.p}, N={self.N}")
        if not self.R > 0:
            raise DomainError(f"radius must be positive, got {self.R}")

    @property
    def pstar(self) -> float:
        return self.N * self.p / (self.N - self.p)

    @property
    def beta(self) -> float:
        """Decay exponent of the fundamental solution, (N-p)/(p-1)."""
        return (self.N - self.p) / (self.p - 1.0)

    @property
    def small_dimension(self) -> bool:
        return self.N < 2 * self.p

    def require_small_dimension(self):
        if not self.small_dimension:
            raise DomainError(f"requires N < 2p, got p={self.p}, N={self.N}")

    def with_lambda(self, lam: float) -> "ProblemParams":
        return ProblemParams(self.p, self.N, self.R, lam)

    def with_radius(self, R: float) -> "ProblemParams":
        return ProblemParams(self.p, self.N, R, self.lam)


@dataclass(frozen=True)
class Constants:
    omega_N: float
    C0: float
    C1: float
    Lambda: float
    S0: float
    I_pstar: float
    I_pstar_minus1: float


# --------------------------------------------------------------------------
# closed-form profiles


def _mp_constants(p: float, N: int):
    mpmath.mp.dps = 40
    p_, N_ = mpmath.mpf(p), mpmath.mpf(N)
    omega = mpmath.pi ** (N_ / 2) / mpmath.gamma(N_ / 2 + 1)
    C0 = (p_ - 1) / (N_ - p_) * (N_ * omega) ** (-1 / (p_ - 1))
    C1 = N_ ** ((N_ - p_) / p_**2) * ((N_ - p_) / (p_ - 1)) ** ((p_ - 1) * (N_ - p_) / p_**2)
    Lam = C1 ** (-(p_**2) / ((N_ - p_) * (p_ - 1)))
    return omega, C0, C1, Lam


def unit_ball_volume(N: int) -> float:
    return math.pi ** (N / 2) / math.gamma(N / 2 + 1)


def fundamental_C0(params: ProblemParams) -> float:
    return float(_mp_constants(params.p, params.N)[1])


def gamma_eval(params: ProblemParams, r):
    """Fundamental solution C0 r^{-(N-p)/(p-1)} of -Δ_p Γ = δ_0."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise DomainError("fundamental solution is evaluated at r > 0 only")
    out = fundamental_C0(params) * r ** (-params.beta)
    return out if out.ndim else float(out)


def bubble_eval(params: ProblemParams, eps: float, r, C1: float | None = None):
    """Aubin-Talenti bubble U_eps(r) = C1 (eps / (eps^p + r^{p/(p-1)}))^{(N-p)/p}."""
    if eps <= 0:
        raise DomainError("bubble scale must be positive")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainError("radius must be nonnegative")
    p, N = params.p, params.N
    if C1 is None:
        C1 = float(_mp_constants(p, N)[2])
    out = C1 * (eps / (eps**p + r ** (p / (p - 1)))) ** ((N - p) / p)
    return out if out.ndim else float(out)


def bubble_derivative(params: ProblemParams, eps: float, r, C1: float | None = None):
    """d/dr of the bubble; nonpositive."""
    p, N = params.p, params.N
    if C1 is None:
        C1 = float(_mp_constants(p, N)[2])
    r = np.asarray(r, dtype=float)
    s = p / (p - 1)
    base = eps**p + r**s
    out = -C1 * eps ** ((N - p) / p) * ((N - p) / (p - 1)) * r ** (1 / (p - 1)) * base ** (-N / p)
    return out if out.ndim else float(out)


def profile_limit(params: ProblemParams, y, Lambda: float | None = None):
    """Normalized limit profile (1 + Λ|y|^{p/(p-1)})^{-(N-p)/p}, equal to 1 at y = 0."""
    p, N = params.p, params.N
    if Lambda is None:
        Lambda = float(_mp_constants(p, N)[3])
    y = np.asarray(y, dtype=float)
    out = (1.0 + Lambda * y ** (p / (p - 1))) ** (-(N - p) / p)
    return out if out.ndim else float(out)


# --------------------------------------------------------------------------
# quadrature for analytic radial integrands

_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def _panel_edges(depth: int, split: int) -> np.ndarray:
    """Panels on [0, 1] graded geometrically toward both endpoints."""
    inner = 0.5 * 2.0 ** -np.arange(depth + 1)
    edges = np.unique(np.concatenate([[0.0, 1.0], inner, 1.0 - inner]))
    if split > 1:
        pieces = [np.linspace(a, b, split + 1)[:-1] for a, b in zip(edges[:-1], edges[1:])]
        edges = np.concatenate(pieces + [[1.0]])
    return edges


def _gauss_panels(g: Callable, edges: np.ndarray) -> float:
    a, b = edges[:-1, None], edges[1:, None]
    t = 0.5 * (b - a) * _GL_X[None, :] + 0.5 * (a + b)
    vals = g(t.ravel()).reshape(t.shape)
    return float(np.sum(0.5 * (b - a) * _GL_W[None, :] * vals))


def _radial_quad(f: Callable, dim: int, radius: float | None, tail_exponent: float | None,
                 rtol: float = 1e-10) -> tuple[float, float]:
    area = dim * unit_ball_volume(dim)
    if radius is None:
        if tail_exponent is None or tail_exponent <= dim:
            raise DomainError(
                f"integral over R^{dim} needs decay faster than r^-{dim}, got tail exponent {tail_exponent}")

        def g(t):
            with np.errstate(divide="ignore", invalid="ignore"):
                r = t / (1.0 - t)
                v = f(r) * r ** (dim - 1) / (1.0 - t) ** 2
            return np.where(np.isfinite(v), v, 0.0)
    else:
        def g(t):
            r = radius * t
            with np.errstate(divide="ignore", invalid="ignore"):
                v = f(r) * r ** (dim - 1) * radius
            return np.where(np.isfinite(v), v, 0.0)

    coarse = _gauss_panels(g, _panel_edges(56, 2))
    fine = _gauss_panels(g, _panel_edges(64, 4))
    err = abs(fine - coarse)
    if err > rtol * max(abs(fine), 1e-300) and err > 1e-300:
        raise QuadratureError(f"radial quadrature error {err:.3e} exceeds tolerance", residual=err)
    return area * fine, area * err


def radial_quadrature(integrand: Callable, params: ProblemParams | int,
                      tail_exponent: float | None = None, radius: float | None = None,
                      rtol: float = 1e-10) -> float:
    """N ω_N ∫ f(r) r^{N-1} dr over R^N (``radius=None``) or over B_radius.

    On R^N the substitution r = t/(1-t) maps to [0, 1) and ``tail_exponent``
    (decay rate of f) must exceed N.
    """
    dim = params if isinstance(params, int) else params.N
    return _radial_quad(integrand, dim, radius, tail_exponent, rtol)[0]


def compute_constants(params: ProblemParams) -> Constants:
    return _constants(float(params.p), int(params.N))


@functools.lru_cache(maxsize=None)
def _constants(p: float, N: int) -> Constants:
    omega, C0, C1, Lam = _mp_constants(p, N)
    C0, C1, Lam = float(C0), float(C1), float(Lam)
    params = ProblemParams(p, N, 1.0, 0.0)
    pstar = params.pstar
    U1 = lambda r: bubble_eval(params, 1.0, r, C1)
    I1 = radial_quadrature(lambda r: U1(r) ** pstar, params, tail_exponent=N * p / (p - 1))
    I2 = radial_quadrature(lambda r: U1(r) ** (pstar - 1), params, tail_exponent=N + p / (p - 1))
    return Constants(float(omega), C0, C1, Lam, I1 ** (p / N), I1, I2)


# --------------------------------------------------------------------------
# graded grids and fields


@dataclass(frozen=True)
class RadialGrid:
    """r_0 = 0 followed by M geometric nodes from ``rmin`` to ``R``."""

    R: float
    M: int
    rmin_ratio: float = 1e-6

    def __post_init__(self):
        if self.M < 8:
            raise DomainError("grid needs at least 8 geometric nodes")
        if not 0 < self.rmin_ratio < 1:
            raise DomainError("rmin_ratio must lie in (0, 1)")

    @property
    def h(self) -> float:
        """Uniform spacing in log r."""
        return -math.log(self.rmin_ratio) / (self.M - 1)

    @property
    def ratio(self) -> float:
        return math.exp(self.h)

    @property
    def nodes(self) -> np.ndarray:
        x = np.log(self.R * self.rmin_ratio) + self.h * np.arange(self.M)
        r = np.exp(x)
        r[-1] = self.R
        return np.concatenate([[0.0], r])

    @property
    def positive(self) -> np.ndarray:
        return self.nodes[1:]

    def refine(self) -> "RadialGrid":
        """Nested refinement: geometric midpoints are inserted, old nodes kept."""
        return RadialGrid(self.R, 2 * self.M - 1, self.rmin_ratio)

    def index_of(self, r: float) -> int:
        """Index of the grid node nearest to r (in log distance)."""
        pos = self.positive
        i = int(np.argmin(np.abs(np.log(pos) - math.log(r))))
        return i + 1

    @classmethod
    def default(cls, R: float = 1.0, M: int = 1601, rmin_ratio: float = 1e-6) -> "RadialGrid":
        return cls(R, M, rmin_ratio)


@dataclass
class RadialField:
    """Values of a radial function at grid nodes.

    ``values[0]`` is NaN when the field is singular at the origin
    (``singular_at_zero``).
    """

    grid: RadialGrid
    values: np.ndarray
    derivative: np.ndarray | None = None
    dirichlet_at_R: bool = False
    singular_at_zero: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.M + 1,):
            raise ValueError("field size does not match grid")
        body = self.values[1:] if self.singular_at_zero else self.values
        if not np.all(np.isfinite(body)):
            raise ValueError("non-finite field values")

    @property
    def r(self) -> np.ndarray:
        return self.grid.nodes

    def scaled(self, t: float) -> "RadialField":
        d = None if self.derivative is None else t * self.derivative
        return RadialField(self.grid, t * self.values, d, self.dirichlet_at_R, self.singular_at_zero)

    def derivative_values(self) -> np.ndarray:
        if self.derivative is not None:
            return self.derivative
        d = np.full_like(self.values, np.nan)
        d[1:] = log_derivative(self.values[1:], self.grid)
        if not self.singular_at_zero:
            d[0] = 0.0
        return d


# --------------------------------------------------------------------------
# grid quadrature in x = log r


_ORDER = 6


def _stencil_weights(offsets: np.ndarray, kind: str, at: float = 0.0,
                     interval: tuple[float, float] = (0.0, 1.0)) -> np.ndarray:
    """Weights of the interpolating polynomial through ``offsets`` (unit spacing).

    ``kind='int'`` integrates over ``interval``; ``kind='diff'`` differentiates at ``at``.
    """
    n = offsets.size
    V = np.vander(offsets.astype(float), n, increasing=True).T
    k = np.arange(n)
    if kind == "int":
        a, b = interval
        rhs = (b ** (k + 1) - a ** (k + 1)) / (k + 1)
    else:
        rhs = np.where(k >= 1, k * float(at) ** np.maximum(k - 1, 0), 0.0)
    return np.linalg.solve(V, rhs)


_OFFS = np.arange(_ORDER)
_INT_W = [_stencil_weights(_OFFS, "int", interval=(j, j + 1)) for j in range(_ORDER - 1)]
_DIFF_W = [_stencil_weights(_OFFS, "diff", at=j) for j in range(_ORDER)]
_DIFF_C = _stencil_weights(np.arange(-3, 4), "diff", at=0.0)


def _interval_integrals(G: np.ndarray, h: float) -> np.ndarray:
    """∫ over each interval [x_i, x_{i+1}] of samples G on a uniform grid, 6th order."""
    n = G.size
    half = _ORDER // 2 - 1
    out = np.empty(n - 1)
    w = _INT_W[half]
    m = n - _ORDER + 1
    out[half:half + m] = sum(w[j] * G[j:j + m] for j in range(_ORDER))
    for i in range(half):
        out[i] = _INT_W[i] @ G[:_ORDER]
    for i in range(half + m, n - 1):
        out[i] = _INT_W[i - (n - _ORDER)] @ G[n - _ORDER:]
    return h * out


def _head_integral(g1: float, g2: float, r1: float, ratio: float) -> float:
    """∫_0^{r1} g assuming g ~ g1 (s/r1)^γ below the first node."""
    if g1 == 0.0:
        return 0.0
    if g2 / g1 > 0:
        gam = math.log(g2 / g1) / math.log(ratio)
        if gam <= -1.0:
            raise DomainError(f"integrand not integrable at the origin (local exponent {gam:.3f})")
        return g1 * r1 / (gam + 1.0)
    return g1 * r1


def cumulative_from_zero(g: np.ndarray, grid: RadialGrid) -> np.ndarray:
    """C[i] = ∫_0^{r_i} g(s) ds for ``g`` sampled at the positive nodes."""
    r = grid.positive
    G = g * r
    head = _head_integral(g[0], g[1], r[0], grid.ratio)
    out = np.empty(grid.M + 1)
    out[0] = 0.0
    out[1] = head
    out[2:] = head + np.cumsum(_interval_integrals(G, grid.h))
    return out


def cumulative_to_R(g: np.ndarray, grid: RadialGrid) -> np.ndarray:
    """C[i] = ∫_{r_i}^R g(s) ds; C[0] is the full integral from 0."""
    r = grid.positive
    parts = _interval_integrals(g * r, grid.h)
    out = np.empty(grid.M + 1)
    out[-1] = 0.0
    out[1:-1] = np.cumsum(parts[::-1])[::-1]
    out[0] = out[1] + _head_integral(g[0], g[1], r[0], grid.ratio)
    return out


def ball_integral(f: np.ndarray, grid: RadialGrid, N: int, upto: int | None = None) -> float:
    """N ω_N ∫_0^{r_upto} f(r) r^{N-1} dr for ``f`` at the positive nodes."""
    r = grid.positive
    c = cumulative_from_zero(f * r ** (N - 1), grid)
    i = grid.M if upto is None else upto
    return N * unit_ball_volume(N) * c[i]


def log_derivative(values: np.ndarray, grid: RadialGrid) -> np.ndarray:
    """du/dr at the positive nodes by 6th-order differences in log r."""
    u = np.asarray(values, dtype=float)
    n = u.size
    d = np.empty_like(u)
    d[3:-3] = sum(_DIFF_C[j] * u[j:n - 6 + j] for j in range(7))
    for i in range(3):
        d[i] = _DIFF_W[i] @ u[:_ORDER]
        d[n - 1 - i] = _DIFF_W[_ORDER - 1 - i] @ u[n - _ORDER:]
    return d / (grid.h * grid.positive)
