"""
Ground states, nonexistence and blow-up at λ*
=============================================

Shoot from the center with amplitude a and record where the solution first
vanishes.  A ground state on the unit ball is an amplitude whose first zero
lands exactly at r = 1.  This takes a couple of minutes.
"""

import math

from plaplace_mass.blowup import GroundState, blowup_diagnostics, ground_state_shoot, shoot_bn
from plaplace_mass.core import ProblemParams

params = ProblemParams(p=2, N=3, R=1.0, lam=5.0)

for lam in (9.0, 5.0, 3.0, 2.0, 0.5):
    out = ground_state_shoot(params.with_lambda(lam))
    if isinstance(out, GroundState):
        print(f"λ = {lam:4}: ground state, u(0) = {out.amplitude:.6f}, Q = {out.Q_value:.6f}")
    else:
        print(f"λ = {lam:4}: none, first zero never below {out.min_rho:.6f}")

# %%
# Below λ* the first zero tends to π/(2√λ) > 1 as a grows, so it never reaches 1.
lam = 2.0
for a in (1e1, 1e3, 1e6):
    rho = shoot_bn(params.with_lambda(lam), a, with_profile=False).first_zero
    print(f"a = {a:8.0e}: first zero {rho:.10f}")
print(f"limit π/(2√λ) = {math.pi / (2 * math.sqrt(lam)):.10f}")

# %%
# As λ decreases to λ* the ground states concentrate.  Rescaled by μ they
# approach the bubble, and away from the center they look like the Green function.
lam_star = math.pi**2 / 4
rep = blowup_diagnostics(params, [lam_star + d for d in (0.5, 0.2, 0.1, 0.05)], lambda_star=lam_star)
print("\n  λ - λ*      μ        profile dist   Green ratio at r = 0.5")
for row in rep.rows:
    print(f"{row.lam - lam_star:7.3f}  {row.mu:.3e}  {row.profile_distance:.3e}     {row.green_ratio[0.5]:.5f}")
print(rep.caveat)
