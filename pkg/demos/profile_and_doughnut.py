"""Building the bead-chain profile and its doughnut barriers.

Walks through the construction: the smooth step, the curvature bound M that
fixes eps0 in the certified regime, the self-similar profile and its
mean-convexity certificate, and finally the shrinking doughnut that caps how
long each neck can survive.

Run with ``python demos/profile_and_doughnut.py``.
"""

# %%
import math

import numpy as np

from pinchlab import profilekit as pk
from pinchlab import shrinkerlab as sl

# %% [markdown]
# The step phi0 rises from 0 to 1 over [1/6, 1/3].  Its second derivative
# is large (several hundred) because all of the bending is packed into a
# window of width 1/6.

# %%
spec = pk.BumpSpec()
M = pk.sup_abs_phi0_second(spec)
print(f"sup |phi0''| = {M:.6f}")
x = np.linspace(0.15, 0.35, 9)
for xi, (v, d1, d2) in zip(x, zip(*pk.eval_phi0(spec, x))):
    print(f"  x={xi:.3f}  phi0={v:.4f}  phi0'={d1:8.3f}  phi0''={d2:9.3f}")

# %% [markdown]
# Two parameter regimes.  The certified one keeps (1+M) eps0^2 < 1, which
# makes the beads tiny.  The simulation regime uses eps0 = 0.12 so that a
# 1/512 grid resolves several beads, and checks mean convexity by sampling.

# %%
torus = sl.find_torus(2)
cert_params = pk.select_params(M, 2, "certified", torus=torus)
sim_params = pk.select_params(M, 2, "simulation", eps0=0.12, delta0=0.025)
for p in (cert_params, sim_params):
    prof = pk.Profile.full(p)
    c = pk.certify_mean_convex(prof, (2.0**-6, 3.0 - 1e-6))
    print(f"{p.regime:>10}: eps0={p.eps0:.5f} delta0={p.delta0:.5f} (1+M)eps0^2={(1 + M) * p.eps0**2:.3f} "
          f"min H={c.minH:.4g} pass={c.passed}")

# %% [markdown]
# F(2x) = 2 F(x) holds exactly in floating point because the dyadic index is
# read off the binary exponent.

# %%
prof = pk.Profile.full(sim_params)
print("self-similarity residual:", pk.check_self_similarity(prof))
for k in range(4):
    z = 3.0 * 2.0 ** -(k + 1)
    print(f"  neck k={k} at x={z:.4f}: radius {prof(z)[0]:.6f} (delta0 2^-k = {0.025 * 2.0**-k:.6f})")

# %% [markdown]
# The doughnut: shoot from the inner radius a, perpendicular to the axis,
# and adjust a until the curve comes back to the symmetry plane at a right
# angle.

# %%
print(f"a* = {torus.a_star:.12f}, closure residual {torus.residual:.2e}")
print(f"hole {torus.hole_radius:.6f}, thickness {torus.thickness:.6f}, outer radius {torus.outer_radius:.6f}")
a, res = sl.sweep_residuals(2, num=12)
for ai, ri in zip(a, res):
    print(f"  a={ai:.3f}  residual={ri:+.4f}" if math.isfinite(ri) else f"  a={ai:.3f}  no return")

# %% [markdown]
# Scaled by lambda and placed around each neck, the doughnut vanishes at
# lambda^2 4^-k.  Any neck it encircles must pinch before then.

# %%
lam, delta0, bc = sl.scale_and_pick_delta0(torus, 0.12, 2, require_sphere_bound=False)
print(f"lambda = {lam:.5f}; slack in thickness {bc['thickness_slack']:.4f}, hole {bc['hole_slack']:.4f}")
for b in sl.place_barriers(sim_params, torus, 2):
    if b.kind == "doughnut":
        print(f"  level {b.level}: centre {b.center_axial:.4f}, vanishes at t={b.extinction:.3e}")
