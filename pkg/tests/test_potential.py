import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qpgl import oracles
from qpgl.lattice import BlockStructure
from qpgl.potential import (InvariantError, PotentialModel, decay_tail_bound, evaluate,
                            from_named_model, verify_decay)

BS = BlockStructure((2,))


def test_separable_cosine_coefficients():
    V = from_named_model("separable-cosine", BS, rho=0.5)
    assert V.coefficients == {(1, 0): 0.5, (0, 1): 0.5, (-1, 0): 0.5, (0, -1): 0.5}
    assert V.coefficient((1, 1)) == 0


def test_decay_violation_is_rejected():
    assert 0.5 > math.exp(-0.8)
    with pytest.raises(InvariantError):
        from_named_model("separable-cosine", BS, rho=0.8)


def test_random_model_is_deterministic():
    a = from_named_model("random-analytic", BS, rho=0.5, K_cut=3, seed=17)
    b = from_named_model("random-analytic", BS, rho=0.5, K_cut=3, seed=17)
    c = from_named_model("random-analytic", BS, rho=0.5, K_cut=3, seed=18)
    assert np.array_equal(a.indices, b.indices) and np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_evaluate_examples():
    V = from_named_model("separable-cosine", BS, rho=0.5)
    assert evaluate(V, (0.0, 0.0)) == pytest.approx(2.0, abs=1e-15)
    assert evaluate(V, (math.pi, math.pi / 2)) == pytest.approx(-1.0, abs=1e-15)


@pytest.mark.parametrize("name,kw", [("separable-cosine", {}),
                                     ("random-analytic", {"K_cut": 3, "seed": 4}),
                                     ("two-cosine-surace", {})])
def test_zero_mean_on_full_grid(name, kw):
    V = from_named_model(name, BS, rho=0.5, **kw)
    n = 4 * V.K_cut
    ax = 2 * np.pi * np.arange(n) / n
    grid = np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1)
    assert abs(float(np.mean(evaluate(V, grid)))) <= 1e-10


def test_verify_decay_examples():
    V = from_named_model("separable-cosine", BS, rho=0.5)
    assert verify_decay(V, 0.5)[0]
    ok, offender = verify_decay(V, 0.7)
    assert not ok and offender == (1, 0)
    assert verify_decay(PotentialModel.zero(BS), 3.0) == (True, None)


def test_invariants_rejected():
    with pytest.raises(InvariantError):
        PotentialModel.from_dict(BS, {(0, 0): 0.1}, rho=0.5)
    with pytest.raises(InvariantError):
        PotentialModel.from_dict(BS, {(1, 0): 0.2}, rho=0.5)
    with pytest.raises(InvariantError):
        PotentialModel.from_dict(BS, {(1, 0): 0.2j, (-1, 0): 0.2j}, rho=0.5)


def test_text_round_trip(tmp_path):
    V = from_named_model("random-analytic", BS, rho=0.5, K_cut=2, seed=3)
    V.save(tmp_path / "v.txt")
    W = PotentialModel.load(tmp_path / "v.txt")
    assert np.array_equal(V.indices, W.indices)
    assert np.array_equal(V.values, W.values)


def test_tail_bound_matches_direct_sum():
    direct = sum(((2 * m + 1) ** 2 - (2 * m - 1) ** 2) * math.exp(-0.5 * m) for m in range(4, 400))
    assert decay_tail_bound(0.5, 3, 2) == pytest.approx(direct, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3), st.floats(0.2, 0.9))
def test_evaluate_matches_trig_oracle(seed, K_cut, rho):
    V = from_named_model("random-analytic", BS, rho=rho, K_cut=K_cut, seed=seed)
    th = np.random.default_rng(seed).uniform(0, 2 * np.pi, size=(100, 2))
    fast = evaluate(V, th)
    slow = np.array([oracles.trig_evaluate(V.coefficients, t) for t in th])
    assert np.max(np.abs(fast - slow)) <= 1e-10
    # imaginary part is cancelled by conjugate symmetry
    raw = np.exp(1j * th @ V.indices.T) @ V.values
    assert np.max(np.abs(raw.imag)) <= 1e-12 * len(V)
    # triangle inequality bound on a dense grid
    ax = np.linspace(0, 2 * np.pi, 61)
    grid = np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1)
    assert np.max(np.abs(evaluate(V, grid))) <= V.l1_norm + 1e-12
