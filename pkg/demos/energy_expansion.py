"""
Bubbles on a ball and the energy below S0
=========================================

Concentrate a Sobolev extremal at the center of the ball, cut it off with the
Dirichlet projection, and evaluate the Rayleigh quotient.  Whether it dips
below S0 depends on the sign of the mass.
"""

from plaplace_mass.bubble import energy_expansion, project_bubble
from plaplace_mass.core import ProblemParams, compute_constants
from plaplace_mass.green import approximate_green_via_bubbles

params = ProblemParams(p=2, N=3, R=1.0, lam=4.0)
S0 = compute_constants(params).S0
print(f"S0 = {S0:.10f}")

pb = project_bubble(params, 0.05)
print(f"PU at the center for ε = 0.05: {pb.PU.values[0]:.6f}, U there: {pb.U.values[0]:.6f}")

# %%
# The gap between PU_ε and U_ε, suitably rescaled, approaches the regular part H_λ.
for eps, _, dist in approximate_green_via_bubbles(params, [0.2, 0.1, 0.05, 0.025]):
    print(f"ε = {eps:<6}  sup |H_ε - H_λ| = {dist:.3e}")

# %%
# λ = 4 lies above λ* = π²/4, so the mass is positive and Q drops below S0 at rate ε.
eps_list = [0.1, 0.05, 0.025, 0.02, 0.0125, 0.01]
ee = energy_expansion(params, eps_list)
print("\n   ε        Q_λ(PU_ε)     S0 - Q")
for eps, q in zip(ee.eps_list, ee.Q_values):
    print(f"{eps:7.4f}  {q:.10f}  {S0 - q: .3e}")
print(f"fitted slope {ee.fitted_slope:.5f}, predicted {ee.predicted_slope:.5f}, gap {ee.relative_gap:.2%}")

# Below λ* the mass is negative and the same test functions stay above S0.
low = energy_expansion(params.with_lambda(1.0), eps_list)
print(f"λ = 1: smallest Q - S0 = {min(low.Q_values) - S0:.3e}")
