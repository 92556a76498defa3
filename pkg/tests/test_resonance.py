import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qpgl import oracles
from qpgl._rng import make_rng
from qpgl.lattice import BlockStructure, cube
from qpgl.potential import ConfigurationError, PotentialModel, from_named_model
from qpgl.resonance import (PreconditionError, ResonanceSpec, ScaleSchedule, cartan_probe,
                            double_resonance_scan, first_step_coupling, first_step_delta,
                            frequency_diagnostic, in_intervals, in_resonance,
                            no_resonance_far_field, resonance_mask, sample_frequencies,
                            section_bound, section_intervals, section_measure, verify_annulus,
                            wilson_interval)

BS = BlockStructure((2,))
OMEGA = np.array([0.7, 0.5])


def test_in_resonance_examples():
    assert in_resonance([1.0], ResonanceSpec(0, 0.01, 1.0, OMEGA, BS)) == (True, (0, 0))
    assert in_resonance([2.0], ResonanceSpec(0, 0.01, 1.0, OMEGA, BS)) == (False, None)


def test_in_resonance_matches_loop():
    spec = ResonanceSpec(6, 0.05, 1.3, OMEGA, BS)
    for T in make_rng(1, 0).uniform(-5, 5, 1000):
        assert in_resonance([T], spec)[1] == oracles.resonance_loop([T], 1.3, 0.05, 6, OMEGA, [2])


def test_section_measure_closed_form():
    spec = ResonanceSpec(0, 0.01, 1.0, OMEGA, BS)
    assert section_measure(0, [], spec) == pytest.approx(2 * (math.sqrt(1.01) - math.sqrt(0.99)),
                                                         rel=1e-13)
    assert section_measure(0, [], ResonanceSpec(3, 0.01, -5.0, OMEGA, BS)) == 0.0


def test_section_measure_two_blocks():
    bs = BlockStructure((1, 1))
    spec = ResonanceSpec(1, 0.02, 1.0, [0.9, 0.4], bs)
    iv = section_intervals(1, [0.3], spec)
    assert np.all(iv[1:, 0] >= iv[:-1, 1])
    # brute force on a fine grid
    x = np.linspace(iv[0, 0] - 0.5, iv[-1, 1] + 0.5, 400_001)
    mask = resonance_mask(np.column_stack([np.full_like(x, 0.3), x]), spec)
    step = x[1] - x[0]
    # each interval endpoint can be misplaced by one grid step
    assert mask.mean() * (x[-1] - x[0]) == pytest.approx(section_measure(1, [0.3], spec),
                                                         abs=2 * len(iv) * step)


def test_first_step_delta_value():
    direct = 4.0 ** -2 * 11.0 ** -4 * math.exp(-2 * 5 ** 0.2)
    via_logs = math.exp(-2 * math.log(4) - 4 * math.log(11) - 2 * math.exp(0.2 * math.log(5)))
    assert first_step_delta(5, 0.2, 2, 4) == pytest.approx(direct, rel=1e-14)
    assert first_step_delta(5, 0.2, 2, 4) == pytest.approx(via_logs, rel=1e-12)
    assert first_step_coupling(5, direct, 2) == pytest.approx(direct / (2 * 121), rel=1e-15)


def test_first_step_delta_monotone():
    d = [first_step_delta(N, 0.2, 2) for N in range(1, 40)]
    assert all(a > b for a, b in zip(d, d[1:]))
    assert all(first_step_delta(6, 0.2, b) > first_step_delta(6, 0.2, b + 1) for b in range(1, 5))
    with pytest.raises(ValueError):
        first_step_delta(5, 0.3, 2)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 6), st.floats(1e-6, 0.5), st.floats(-1.0, 6.0), st.floats(0.05, 6.2),
       st.floats(0.05, 6.2), st.integers(0, 1), st.floats(-2, 2))
def test_section_measure_properties(N, delta, E, w1, w2, j, rest):
    bs = BlockStructure((1, 1))
    spec = ResonanceSpec(N, delta, E, [w1, w2], bs)
    m = section_measure(j, [rest], spec)
    assert 0 <= m <= section_bound(spec)
    assert section_bound(spec) == 4 * (2 * N + 1) ** 2 * math.sqrt(delta)
    assert section_measure(j, [rest], ResonanceSpec(N, 2 * delta, E, [w1, w2], bs)) >= m
    assert section_measure(j, [rest], ResonanceSpec(N + 1, delta, E, [w1, w2], bs)) >= m


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 5), st.floats(1e-4, 0.3), st.floats(0.0, 4.0), st.integers(0, 10_000))
def test_intervals_agree_with_membership(N, delta, E, seed):
    spec = ResonanceSpec(N, delta, E, OMEGA, BS)
    iv = section_intervals(0, [], spec)
    T = make_rng(seed, 0).uniform(-3, 3, 1000)
    assert np.array_equal(in_intervals(T, iv), resonance_mask(T[:, None], spec))


def test_section_measure_monte_carlo():
    spec = ResonanceSpec(3, 0.01, 2.0, OMEGA, BS)
    iv = section_intervals(0, [], spec)
    lo, hi = iv[0, 0] - 0.2, iv[-1, 1] + 0.2
    est, se = oracles.monte_carlo_section(0, [], 2.0, 0.01, 3, OMEGA, [2], lo, hi, 200_000,
                                          make_rng(5, 0))
    assert abs(est - section_measure(0, [], spec)) <= 3 * se


def test_schedule_validation_and_scales():
    with pytest.raises(ConfigurationError):
        ScaleSchedule(c1=0.3)
    with pytest.raises(ConfigurationError):
        ScaleSchedule(c2=0.7)
    s = ScaleSchedule()
    with pytest.raises(ConfigurationError):
        s.check_scales([10])
    ScaleSchedule(n1=2).check_scales([4, 8, 16])
    assert ScaleSchedule(n1={"8": 3}).N1(8) == 3
    assert s.flags()["c1_below_c3_over_10"] is False
    assert list(s.candidate_range(8)) == list(range(1, 65))


def test_scan_with_empty_resonance_set():
    sched = ScaleSchedule(n1=2)
    res = double_resonance_scan([0.3], 1.1, OMEGA, 8, sched, BS, delta=1e-300)
    assert res.success and res.M == 2 and res.records[0].annulus_size == 0
    assert all(r.failures == 0 for r in res.records)


def test_scan_degenerate_frequency():
    sched = ScaleSchedule(n1=2)
    omega = [0.0, 0.5]
    # Theta^2 = E, so every shift k = (m, 0) stays resonant
    res = double_resonance_scan([1.0], 1.0, omega, 8, sched, BS, delta=1e-3)
    assert not res.success
    for rec in res.records:
        assert rec.failures > 0 or rec.annulus_size == 0
        assert not verify_annulus([1.0], 1.0, omega, BS, rec.M, 2, 1e-3)


def test_scan_answer_is_reverified():
    sched = ScaleSchedule(n1=2)
    hits = 0
    for w in sample_frequencies(BS, 20, seed=3):
        res = double_resonance_scan([0.2], 1.0, w, 8, sched, BS)
        for rec in res.records:
            free = rec.failures == 0 and rec.annulus_size > 0
            assert free == verify_annulus([0.2], 1.0, w, BS, rec.M, res.N1, res.delta)
        hits += res.success
    assert hits > 0


def test_scan_preconditions():
    sched = ScaleSchedule(n1=2)
    with pytest.raises(PreconditionError):
        double_resonance_scan([1e6], 1.0, OMEGA, 4, sched, BS)
    with pytest.raises(PreconditionError):
        double_resonance_scan([0.1], 1e6, OMEGA, 4, sched, BS, eps=0.5)


def test_frequency_diagnostic_rate():
    sched = ScaleSchedule(n1=2)
    diag = frequency_diagnostic([0.2], 1.0, 6, sched, BS, sample_frequencies(BS, 10, seed=1))
    assert 0.0 <= diag.success_rate <= 1.0
    assert len(diag.results) == 10


def test_far_field():
    assert not no_resonance_far_field([0.0], 0.0, OMEGA, 3, [0.0], [0], BS)["applicable"]
    N = 3
    out = no_resonance_far_field([0.0], 0.0, OMEGA, N, [300 * 2 * N * N], [0], BS)
    assert out["applicable"] and out["holds"]
    rng = make_rng(2, 0)
    for _ in range(100):
        y = rng.choice([-1, 1]) * rng.uniform(200 * 2 * N * N + 1, 1e4)
        T, E = rng.uniform(-5, 5), rng.uniform(-N, N)
        out = no_resonance_far_field([T], E, OMEGA, N, [y], [0], BS)
        loop = min(oracles.symbol_loop([T + y], k, OMEGA, [2]) - E
                   for k in np.ndindex(*(2 * N + 1,) * 2)
                   for k in [tuple(np.array(k) - N)])
        assert out["holds"] and loop >= N ** 4


def test_cartan_probe_diagonal_case():
    V = PotentialModel.zero(BS)
    Lam = cube(2, 2)
    est = cartan_probe(Lam, cube(0, 2), [8.0], 0, 0.0, OMEGA, 0.0, V, N_tilde=16, samples=200,
                       seed=3, N1=1)
    assert est.estimate == 0.0 and est.bad == 0
    assert 0.0 <= est.ci[0] <= est.ci[1] <= est.interval_length
    assert est.interval_length == pytest.approx(2 * math.exp(-10 * 0.5 * 1))


def test_cartan_probe_bounds():
    V = from_named_model("separable-cosine", BS, rho=0.5)
    Lam = cube(2, 2)
    # Theta_0 chosen on a resonance so many probes are bad
    est = cartan_probe(Lam, cube(0, 2), [1.0], 0, 1.0, OMEGA, 1e-3, V, N_tilde=16, samples=300,
                       seed=4, N1=0)
    assert 0.0 <= est.estimate <= est.interval_length
    assert est.bad > 0


def test_wilson_interval():
    lo, hi = wilson_interval(0, 100)
    assert lo == 0.0 and 0 < hi < 0.05
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi
