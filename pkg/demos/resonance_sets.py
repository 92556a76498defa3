"""Resonance sets: exact section measures and the double-resonance scan.

The section of X_N along one momentum coordinate is a finite union of open
intervals with endpoints +-sqrt(s +- delta); this script compares its exact
measure with the bound 4 (2N+1)^b sqrt(delta), then shows how often a random
frequency admits a resonance-free annulus as delta shrinks.
"""
import numpy as np

from qpgl import BlockStructure, ResonanceSpec, ScaleSchedule, frequency_diagnostic, section_measure
from qpgl.resonance import sample_frequencies, section_bound, section_intervals

bs = BlockStructure((2,))
omega = np.array([0.7, 0.5])

print("section of X_N at E = 2 along Theta (d = 1, b = 2)")
print(f"{'N':>3} {'delta':>8} {'pieces':>7} {'measure':>11} {'bound':>11}")
for N in (1, 2, 4, 8):
    for delta in (1e-2, 1e-4):
        spec = ResonanceSpec(N, delta, 2.0, omega, bs)
        iv = section_intervals(0, [], spec)
        print(f"{N:>3} {delta:>8.0e} {len(iv):>7} {section_measure(0, [], spec):>11.4e} "
              f"{section_bound(spec):>11.4e}")

sched = ScaleSchedule(n1=2)  # desk-scale subordinate scale
omegas = sample_frequencies(bs, 100, seed=1)
print("\nshare of 100 random frequencies with a free annulus (N = 8, Theta = 0.2, E = 1)")
for delta in (1e-1, 1e-2, 1e-3, 1e-4):
    diag = frequency_diagnostic([0.2], 1.0, 8, sched, bs, omegas, delta=delta)
    print(f"  delta={delta:>6.0e}  success rate {diag.success_rate:.2f}")
