"""Green's functions of the dual lattice operator away from resonances.

Builds h_L(Theta) on growing cubes in the first-step regime, prints the
operator norm of G next to the bound 2/delta, and fits the exponential
decay of |G(n, n')| in |n - n'|.  Run with ``python demos/green_decay.py``.
"""
import numpy as np

from qpgl import (BlockStructure, ResonanceSpec, cube, first_step_coupling, first_step_delta,
                  from_named_model, green, in_resonance)

bs = BlockStructure((2,))
omega = np.array([0.7, 0.5])
V = from_named_model("separable-cosine", bs, rho=0.5)
E = 1.0

print(f"{'N':>3} {'delta':>10} {'eps':>10} {'||G||':>10} {'2/delta':>10} {'fit rate':>9}")
for N in (4, 6, 8, 10):
    delta = first_step_delta(N, c1=0.2, b=2)
    eps = first_step_coupling(N, delta, 2)
    # first momentum on a coarse grid that stays out of X_N
    spec = ResonanceSpec(N, delta, E, omega, bs)
    Theta = next(np.array([t]) for t in np.linspace(0.05, 1, 96) if not in_resonance([t], spec)[0])
    rep = green(cube(N, 2), E, Theta, omega, eps, V)
    rate = rep.decay_fit.rate if rep.decay_fit else float("nan")
    print(f"{N:>3} {delta:>10.3e} {eps:>10.3e} {rep.op_norm:>10.3f} {2 / delta:>10.3e} {rate:>9.3f}")

# off-diagonal profile along one row for the largest cube
N = 10
delta = first_step_delta(N, 0.2, 2)
rep = green(cube(N, 2), E, Theta, omega, first_step_coupling(N, delta, 2), V)
row = np.abs(rep.inverse[rep.region.index_of((0, 0))])
dist = np.max(np.abs(rep.region.points), axis=1)
print("\nmax |G(0, n)| per shell |n| = r")
for r in range(0, N + 1, 2):
    print(f"  r={r:>2}  {row[dist == r].max():.3e}")
