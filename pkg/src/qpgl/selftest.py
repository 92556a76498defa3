"""Oracle suites run by ``qpgl selftest``.

Each suite compares a production routine with an independent reference on a
few seeded instances and returns ``(passed, detail)``.
"""
from __future__ import annotations

import math

import numpy as np

from . import oracles
from ._rng import make_rng
from .dual_green import assemble, green
from .lattice import BlockStructure, cube, elementary_regions_at_scale
from .msa_checks import LatticeVector, assemble_physical, poisson_residual, rescale
from .potential import evaluate, from_named_model
from .resonance import (ResonanceSpec, in_resonance, section_intervals, section_measure,
                        section_bound)

_BS = BlockStructure((2,))
_OMEGA = np.array([0.7, 0.5])


def _green_inverse():
    V = from_named_model("separable-cosine", _BS, rho=0.5)
    worst = 0.0
    for i in range(5):
        rng = make_rng(11, i)
        Lam = cube(3, 2)
        T, E, eps = rng.uniform(-1, 1, 1), rng.uniform(0, 2), 10 ** rng.uniform(-3, -1)
        rep = green(Lam, E, T, _OMEGA, eps, V)
        ref = oracles.gauss_jordan_inverse(assemble(Lam, T, _OMEGA, eps, V).shifted(E))
        worst = max(worst, np.max(np.abs(rep.inverse - ref)) / np.max(np.abs(ref)))
    return worst <= 1e-9, f"max relative error {worst:.2e}"


def _resonance_loop():
    rng = make_rng(12, 0)
    spec = ResonanceSpec(4, 0.05, 1.5, _OMEGA, _BS)
    mism = 0
    for T in rng.uniform(-4, 4, 200):
        mism += in_resonance([T], spec)[1] != oracles.resonance_loop([T], 1.5, 0.05, 4, _OMEGA, [2])
    return mism == 0, f"{mism} mismatches in 200 points"


def _section_monte_carlo():
    spec = ResonanceSpec(2, 0.02, 1.0, _OMEGA, _BS)
    iv = section_intervals(0, [], spec)
    lo, hi = float(iv[0, 0]) - 0.1, float(iv[-1, 1]) + 0.1
    est, se = oracles.monte_carlo_section(0, [], 1.0, 0.02, 2, _OMEGA, [2], lo, hi, 200_000,
                                          make_rng(13, 0))
    exact = section_measure(0, [], spec)
    ok = abs(est - exact) <= 3 * se + 1e-12 and exact <= section_bound(spec)
    return ok, f"exact {exact:.6g}, Monte-Carlo {est:.6g} +- {se:.2g}"


def _evaluate_trig():
    V = from_named_model("random-analytic", _BS, rho=0.5, K_cut=3, seed=5)
    rng = make_rng(14, 0)
    th = rng.uniform(0, 2 * np.pi, size=(50, 2))
    worst = max(abs(evaluate(V, t) - oracles.trig_evaluate(V.coefficients, t)) for t in th)
    return worst <= 1e-10, f"max deviation {worst:.2e}"


def _region_counts():
    ok = all(len(elementary_regions_at_scale(1, b)) == 3 ** b - 2 * b for b in (1, 2, 3, 4))
    return ok, "3^b - 2b descriptors for b = 1..4"


def _poisson():
    V = from_named_model("separable-cosine", _BS, rho=0.5)
    Lp, Lam = cube(5, 2), cube(4, 2)
    h = assemble(Lp, [0.21], _OMEGA, 0.05, V)
    w, U = np.linalg.eigh(h.matrix)
    # eigenpair whose energy keeps G_Lam well conditioned
    inner = np.linalg.eigvalsh(assemble(Lam, [0.21], _OMEGA, 0.05, V).matrix)
    gaps = np.min(np.abs(w[:, None] - inner[None, :]), axis=1)
    i = int(np.argmax(gaps))
    r = poisson_residual(Lam, w[i], [0.21], _OMEGA, 0.05, V, LatticeVector(Lp, U[:, i]))
    return r <= 1e-9, f"residual {r:.2e}"


def _rescale():
    V = from_named_model("separable-cosine", _BS, rho=0.5)
    Lam = cube(3, 2)
    lam, K, T = 0.7, 3.0, np.array([1.2])
    eps, _, Tt = rescale(lam, K, 0.0, T)
    a = np.linalg.eigvalsh(assemble_physical(Lam, T, _OMEGA, lam, K, V))
    b = K ** 2 * np.linalg.eigvalsh(assemble(Lam, Tt, _OMEGA, eps, V).matrix)
    err = float(np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(a))))
    return err <= 1e-10, f"relative eigenvalue deviation {err:.2e}"


SUITES = {
    "green-inverse": _green_inverse,
    "resonance-loop": _resonance_loop,
    "section-monte-carlo": _section_monte_carlo,
    "evaluate-trig": _evaluate_trig,
    "region-counts": _region_counts,
    "poisson": _poisson,
    "rescale": _rescale,
}


def run_suite(name: str) -> tuple[bool, str]:
    ok, detail = SUITES[name]()
    return bool(ok), detail


def run_all() -> dict[str, tuple[bool, str]]:
    return {name: run_suite(name) for name in SUITES}
