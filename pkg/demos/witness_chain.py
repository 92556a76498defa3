"""From lattice solutions to continuum residuals.

1. A polynomially bounded solution of the lattice equation is forced to be
   tiny at the origin once the cube around it is non-resonant; the witness
   bound shrinks fast with the scale.
2. An eigenvector of h_L gives a Floquet-Bloch sum whose continuum residual
   stays inside a budget built from the lattice residual alone.
3. The rescaling between coupling lambda, frequency length K and eps.
"""
import numpy as np

from qpgl import (BlochSample, BlockStructure, LatticeVector, absence_witness, assemble, cube,
                  duality_residual, first_step_coupling, first_step_delta, from_named_model,
                  rescale)
from qpgl.msa_checks import assemble_physical

bs = BlockStructure((2,))
omega = np.array([0.7, 0.5])
V = from_named_model("separable-cosine", bs, rho=0.5)

print("witness bound on |Z_0| (Theta = 0.05, E = 1)")
for N in (8, 12, 16):
    eps = first_step_coupling(N, first_step_delta(N, 0.2, 2), 2)
    w = absence_witness(N, 1.0, [0.05], omega, eps, V)
    print(f"  N={N:>2}  eps={eps:.2e}  rhs={w.rhs_bound:.3e}  threshold={w.threshold:.3f}  pass={w.passed}")

Lam = cube(5, 2)
eps = 0.01
vals, vecs = np.linalg.eigh(assemble(Lam, [0.33], omega, eps, V).matrix)
i = int(np.argmin(np.abs(vals - 1.0)))
x = np.linspace(-4, 4, 81)[:, None]
for shift in (0.0, 0.1):
    s = BlochSample([0.33], [0.4, 1.1], vals[i] + shift, LatticeVector(Lam, vecs[:, i]), x)
    r = duality_residual(s, omega, eps, V)
    print(f"\nenergy shift {shift}: residual {r.residual:.3e}, budget {r.total_budget:.3e}, "
          f"residual / max|Psi| {r.residual / r.psi_max:.3f}")

lam, K = 0.8, 4.0
eps, _, Tt = rescale(lam, K, 0.0, [1.3])
a = np.linalg.eigvalsh(assemble_physical(cube(3, 2), [1.3], omega, lam, K, V))
b = K ** 2 * np.linalg.eigvalsh(assemble(cube(3, 2), Tt, omega, eps, V).matrix)
print(f"\nrescaling lambda={lam}, K={K} -> eps={eps:.4f}; max eigenvalue deviation {np.max(np.abs(a - b)):.2e}")
