"""
The mass of the Green function and the threshold λ*
====================================================

On the unit ball in R^3 with p = 2 everything is explicit, which makes it a
good place to watch the numerics agree with hand calculation.
"""

import math

import numpy as np

from plaplace_mass.core import ProblemParams
from plaplace_mass.green import lambda_star_bisection, mass_curve, solve_green
from plaplace_mass.radial_ode import first_eigenvalue

params = ProblemParams(p=2, N=3, R=1.0, lam=0.0)

# The first Dirichlet eigenvalue of the unit ball is π².
lam1, _ = first_eigenvalue(params)
print(f"λ₁ = {lam1:.12f}   (π² = {math.pi**2:.12f})")

# At λ = 0 the regular part of the Green function is the constant -Γ(R).
gf = solve_green(params)
print(f"H_0(0,0) = {gf.mass:.12f}   (-1/(4π) = {-1 / (4 * math.pi):.12f})")

# %%
# Turning on λ makes the mass grow.  For p = 2 it is -√λ cot √λ / (4π).
lams = np.linspace(0.0, 0.9 * lam1, 10)
mc = mass_curve(params, lams)
print("\n   λ        mass        closed form")
for lam, m in zip(mc.lambda_values, mc.masses):
    exact = -1 / (4 * math.pi) if lam == 0 else -math.sqrt(lam) / math.tan(math.sqrt(lam)) / (4 * math.pi)
    print(f"{lam:7.3f}  {m: .9f}  {exact: .9f}")

# %%
# The mass changes sign once, at λ* = λ₁/4 for the ball.
res = lambda_star_bisection(params)
print(f"\nλ* = {res.lambda_star:.10f}   (π²/4 = {math.pi**2 / 4:.10f})")

# The same curve for p = 3 in R^4 has no closed form, but the picture is the same.
p34 = ProblemParams(p=3, N=4, R=1.0, lam=0.0)
res34 = lambda_star_bisection(p34)
print(f"p = 3, N = 4:  λ₁ = {res34.lambda1:.8f},  λ* = {res34.lambda_star:.8f}")
