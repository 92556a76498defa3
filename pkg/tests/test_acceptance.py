"""Acceptance criteria, each run at its stated tolerance and time budget.

Every test prints one ``PASS``/``FAIL`` line; the lines are repeated in the
pytest terminal summary.  Run just this file with
``pytest tests/test_acceptance.py -v``.
"""
import math
import time
from pathlib import Path

import numpy as np
import pytest

from qpgl import oracles
from qpgl._rng import make_rng
from qpgl.cli import main
from qpgl.dual_green import assemble, green
from qpgl.lattice import BlockStructure, RegionDescriptor, cube, enumerate_region
from qpgl.msa_checks import (BlochSample, LatticeVector, absence_witness, assemble_physical,
                             duality_residual, poisson_residual, rescale, spectral_window_check,
                             window_grid)
from qpgl.potential import from_named_model
from qpgl.resonance import (ResonanceSpec, ScaleSchedule, first_step_coupling, first_step_delta,
                            frequency_diagnostic, in_resonance, sample_frequencies,
                            section_bound, section_intervals, section_measure)
from qpgl.sweep import run_coupling

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # run as a script
    ACCEPTANCE_LINES = []

pytestmark = pytest.mark.acceptance

BS = BlockStructure((2,))
OMEGA = np.array([0.7, 0.5])
CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _report(tag, ok, detail, elapsed, budget):
    within = elapsed < budget
    line = (f"{'PASS' if ok and within else 'FAIL'} {tag}: {detail} "
            f"[{elapsed:.1f}s / {budget:.0f}s]")
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line
    assert within, line


def test_c01_oracle_equivalence():
    t0 = time.perf_counter()
    worst, sizes = 0.0, []
    for i in range(20):
        rng = make_rng(101, i)
        V = from_named_model("random-analytic", BS, rho=0.5, K_cut=2, seed=i)
        N = int(rng.integers(2, 7))
        if i % 2:
            Lam = cube(N, 2)
        else:
            tags = [("neg", "neg"), ("pos", "neg"), ("neg", "pos"), ("pos", "pos")][i // 2 % 4]
            Lam = enumerate_region(RegionDescriptor((0, 0), N, tags))
        T, E, eps = rng.uniform(-1, 1, 1), rng.uniform(0, 3), 10 ** rng.uniform(-3, -0.5)
        rep = green(Lam, E, T, OMEGA, eps, V, strict=True)
        ref = oracles.gauss_jordan_inverse(assemble(Lam, T, OMEGA, eps, V).shifted(E))
        worst = max(worst, float(np.max(np.abs(rep.inverse - ref)) / np.max(np.abs(ref))))
        sizes.append(len(Lam))
    ok = worst <= 1e-9 and max(sizes) <= 200
    _report("C1 oracle equivalence", ok,
            f"20 instances, |L| <= {max(sizes)}, max relative error {worst:.2e} (<= 1e-9)",
            time.perf_counter() - t0, 10)


def test_c02_first_step_ldt():
    t0 = time.perf_counter()
    V = from_named_model("separable-cosine", BS, rho=0.5)
    E, rho = 1.0, 0.5
    total, bad, worst = 0, 0, 0.0
    for N in (4, 6, 8):
        delta = first_step_delta(N, 0.2, 2, 4)
        eps = first_step_coupling(N, delta, 2)
        Lam = cube(N, 2)
        D = Lam.distances()
        spec = ResonanceSpec(N, delta, E, OMEGA, BS)
        rng = make_rng(202, N)
        count = 0
        while count < 100:
            T = rng.uniform(-2, 2, 1)
            if in_resonance(T, spec)[0]:
                continue
            count += 1
            rep = green(Lam, E, T, OMEGA, eps, V, strict=True)
            norm_ok = rep.op_norm <= 2 / delta
            entry_ratio = float(np.max(np.abs(rep.inverse) / ((2 / delta) * np.exp(-rho * D))))
            worst = max(worst, rep.op_norm * delta / 2, entry_ratio)
            bad += not (norm_ok and entry_ratio <= 1.0)
        total += count
    _report("C2 first-step LDT", bad == 0,
            f"{total - bad}/{total} momenta outside X_N satisfy both bounds "
            f"(worst ratio to bound {worst:.3f})", time.perf_counter() - t0, 60)


def test_c03_section_measure():
    t0 = time.perf_counter()
    violations, worst = 0, 0.0
    for i in range(200):
        rng = make_rng(303, i)
        blocks = (2,) if i % 2 else (1, 1)
        bs = BlockStructure(blocks)
        N = int(rng.integers(0, 7))
        delta = 10 ** rng.uniform(-6, -0.5)
        spec = ResonanceSpec(N, delta, rng.uniform(-0.5, 6), rng.uniform(0, 2 * np.pi, 2), bs)
        j = int(rng.integers(0, bs.d))
        rest = rng.uniform(-2, 2, bs.d - 1)
        m = section_measure(j, rest, spec)
        b4 = section_bound(spec)
        violations += not m <= b4
        worst = max(worst, m / b4)
    mc_ok, zmax = 0, 0.0
    for i in range(10):
        rng = make_rng(304, i)
        spec = ResonanceSpec(int(rng.integers(1, 3)), 10 ** rng.uniform(-2, -1), rng.uniform(0.5, 3),
                             rng.uniform(0.3, 2.0, 2), BS)
        iv = section_intervals(0, [], spec)
        lo, hi = float(iv[0, 0]) - 0.5, float(iv[-1, 1]) + 0.5
        est, se = oracles.monte_carlo_section(0, [], spec.E, spec.delta, spec.N, spec.omega, [2],
                                              lo, hi, 1_000_000, make_rng(305, i))
        exact = section_measure(0, [], spec)
        z = abs(est - exact) / se
        zmax = max(zmax, z)
        mc_ok += z <= 3
    _report("C3 section measure", violations == 0 and mc_ok == 10,
            f"{violations} bound violations in 200 specs (max measure/bound {worst:.3f}); "
            f"{mc_ok}/10 within 3 SE of Monte-Carlo (max {zmax:.2f} SE)",
            time.perf_counter() - t0, 60)


_MARGIN_KEYS = {"perturbation": ("norm", "entries"), "coupling-norm": ("margin",), "coupling-decay": ("margin",)}


def test_c04_coupling_checks():
    t0 = time.perf_counter()
    V = from_named_model("separable-cosine", BS, rho=0.5)
    parts, ok = [], True
    for check in ("perturbation", "coupling-norm", "coupling-decay"):
        gated = held = 0
        min_margin = math.inf
        i = 0
        while gated < 50 and i < 200:
            rep = run_coupling(check, make_rng(404, i), V, {})
            i += 1
            if not rep.hypotheses_hold:
                continue
            gated += 1
            m = min(rep.margins[k] for k in _MARGIN_KEYS[check])
            min_margin = min(min_margin, m)
            held += bool(rep.conclusions_hold) and m > 0
        ok &= gated == 50 and held == 50
        parts.append(f"{check} {held}/{gated} (min margin {min_margin:.3g}, {i} drawn)")
    _report("C4 coupling checks", ok, "; ".join(parts), time.perf_counter() - t0, 120)


def test_c05_poisson_identity():
    t0 = time.perf_counter()
    worst, sizes = 0.0, []
    for i in range(20):
        rng = make_rng(505, i)
        V = (from_named_model("separable-cosine", BS, rho=0.5) if i % 2 else
             from_named_model("random-analytic", BS, rho=0.5, K_cut=2, seed=i))
        N = int(rng.integers(3, 9))
        Lam = cube(N, 2)
        Lp = cube(N + V.K_cut, 2)
        T, eps = rng.uniform(-1, 1, 1), 10 ** rng.uniform(-3, -1)
        w, U = np.linalg.eigh(assemble(Lp, T, OMEGA, eps, V).matrix)
        inner = np.linalg.eigvalsh(assemble(Lam, T, OMEGA, eps, V).matrix)
        # energy kept away from spec(h_Lam) so G_Lam is well conditioned
        k = int(np.argmax(np.min(np.abs(w[:, None] - inner[None]), axis=1)))
        Z = LatticeVector(Lp, U[:, k])
        r = poisson_residual(Lam, w[k], T, OMEGA, eps, V, Z)
        worst = max(worst, r / np.linalg.norm(Z.values))
        sizes.append(len(Lp))
    _report("C5 Poisson identity", worst <= 1e-9 and max(sizes) <= 500,
            f"20 eigenvectors, |L+| <= {max(sizes)}, max residual/||Z|| {worst:.2e} (<= 1e-9)",
            time.perf_counter() - t0, 30)


def test_c06_absence_witness():
    t0 = time.perf_counter()
    V = from_named_model("separable-cosine", BS, rho=0.5)
    rows = []
    for N in (8, 12, 16):
        eps = first_step_coupling(N, first_step_delta(N, 0.2, 2, 4), 2)
        rows.append(absence_witness(N, 1.0, [0.05], OMEGA, eps, V))
    passed = all(r.passed for r in rows)
    decreasing = all(a.rhs_bound > b.rhs_bound for a, b in zip(rows, rows[1:]))
    detail = ", ".join(f"N={r.N}: {r.rhs_bound:.2e} <= {r.threshold:.3f}" for r in rows)
    _report("C6 absence witness", passed and decreasing,
            f"{detail}; decreasing={decreasing}", time.perf_counter() - t0, 60)


def test_c07_duality_and_rescaling():
    t0 = time.perf_counter()
    V = from_named_model("separable-cosine", BS, rho=0.5)
    within, worst_frac = 0, 0.0
    for i in range(20):
        rng = make_rng(707, i)
        N = int(rng.integers(3, 7))
        T, eps = rng.uniform(-1, 1, 1), 10 ** rng.uniform(-4, -1)
        Lam = cube(N, 2)
        w, U = np.linalg.eigh(assemble(Lam, T, OMEGA, eps, V).matrix)
        k = int(rng.integers(0, len(w)))
        x = np.linspace(-4, 4, 41)[:, None]
        s = BlochSample(T, rng.uniform(0, 2 * np.pi, 2), w[k], LatticeVector(Lam, U[:, k]), x)
        res = duality_residual(s, OMEGA, eps, V)
        within += res.within_budget
        worst_frac = max(worst_frac, res.residual / res.total_budget)
    worst_err = 0.0
    for i in range(20):
        rng = make_rng(708, i)
        Vr = from_named_model("random-analytic", BS, rho=0.5, K_cut=2, seed=100 + i)
        lam, K, T = rng.uniform(0.1, 3), rng.uniform(1, 8), rng.uniform(-3, 3, 1)
        Lam = cube(int(rng.integers(2, 5)), 2)
        eps, _, Tt = rescale(lam, K, 0.0, T)
        a = np.linalg.eigvalsh(assemble_physical(Lam, T, OMEGA, lam, K, Vr))
        b = K ** 2 * np.linalg.eigvalsh(assemble(Lam, Tt, OMEGA, eps, Vr).matrix)
        worst_err = max(worst_err, float(np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(a)))))
    _report("C7 duality + rescaling", within == 20 and worst_err <= 1e-10,
            f"{within}/20 within budget (max residual/budget {worst_frac:.5f}); "
            f"rescale max relative deviation {worst_err:.1e} (<= 1e-10)",
            time.perf_counter() - t0, 60)


def test_c08_spectral_window():
    t0 = time.perf_counter()
    V = from_named_model("separable-cosine", BS, rho=0.5)
    Lam = cube(10, 2)
    parts, ok = [], True
    for E in (0.0, 1.0, 5.0):
        res = spectral_window_check(E, Lam, OMEGA, 0.3, V, window_grid(E, 1, 0.05), vmax=2.0)
        ok &= res.passed and res.slack < 0.1 and res.min_dist <= 0.3 * 2.0 + res.slack
        parts.append(f"E={E:g}: min_dist {res.min_dist:.3g}, slack {res.slack:.3g}")
    _report("C8 spectral window", ok, "; ".join(parts), time.perf_counter() - t0, 120)


def test_c09_double_resonance_trend():
    t0 = time.perf_counter()
    sched = ScaleSchedule(n1=2)
    omegas = sample_frequencies(BS, 100, seed=909)
    deltas = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5]
    rates = [frequency_diagnostic([0.2], 1.0, 8, sched, BS, omegas, delta=d).success_rate
             for d in deltas]
    ok = all(0 <= r <= 1 for r in rates) and all(a <= b for a, b in zip(rates, rates[1:]))
    detail = ", ".join(f"delta={d:g}: {r:.2f}" for d, r in zip(deltas, rates))
    _report("C9 double-resonance trend", ok, f"success rate {detail}",
            time.perf_counter() - t0, 180)


_C10_RUNS = {
    "green": [],
    "ldt-scan": [],
    "resonance-measure": [],
    "double-resonance": ["grid.omega={samples=16}"],
    "cartan-probe": ["cartan_probe.samples=50"],
    "coupling-verify": ["coupling_verify.instances=4"],
    "witness": [],
    "duality": [],
    "assemble": [],
    "spectrum-window": ["grid.E=[1.0]"],
    "selftest": [],
}


def test_c10_determinism(tmp_path):
    t0 = time.perf_counter()
    same, checked = 0, 0
    for sub, sets in _C10_RUNS.items():
        cfg = CONFIGS / f"{sub.replace('-', '_')}.toml"
        outs = []
        for workers in (1, 8):
            d = tmp_path / f"{sub}-{workers}"
            argv = [sub, "--workers", str(workers), "--out", str(d)]
            if cfg.exists():
                argv += ["--config", str(cfg)]
            for s in sets:
                argv += ["--set", s]
            assert main(argv) == 0
            outs.append({str(p.relative_to(d)): p.read_bytes()
                         for p in sorted(d.rglob("*")) if p.is_file()})
        checked += 1
        same += outs[0] == outs[1]
    _report("C10 determinism", same == checked,
            f"{same}/{checked} subcommands byte-identical at 1 and 8 workers",
            time.perf_counter() - t0, 600)


if __name__ == "__main__":
    import sys
    import tempfile

    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_c"):
            try:
                if name == "test_c10_determinism":
                    with tempfile.TemporaryDirectory() as tmp:
                        fn(Path(tmp))
                else:
                    fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
