import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qpgl import oracles
from qpgl.dual_green import (NearSingular, assemble, diagonal_symbol, dump_matrix, green,
                             ldt_check, load_matrix)
from qpgl.lattice import BlockStructure, Region, cube
from qpgl.potential import PotentialModel, from_named_model

BS = BlockStructure((2,))
OMEGA = np.array([0.7, 0.5])


def test_diagonal_symbol_examples():
    assert diagonal_symbol([0.3], (2, -1), OMEGA, BS) == pytest.approx(1.44, abs=1e-14)
    bs11 = BlockStructure((1, 1))
    assert diagonal_symbol([0.1, 0.2], ((1,), (1,)), [0.5, 0.25], bs11) == pytest.approx(0.5625, abs=1e-14)
    assert diagonal_symbol([0.3, -0.4], ((0,), (0,)), [0.5, 0.25], bs11) == pytest.approx(0.25, abs=1e-15)


def test_zero_coupling_is_diagonal(cosine):
    Lam = cube(2, 2)
    h = assemble(Lam, [0.3], OMEGA, 0.0, cosine)
    assert np.array_equal(h.matrix, np.diag(diagonal_symbol([0.3], Lam.points, OMEGA, BS)))


def test_hopping_support(cosine):
    Lam = cube(2, 2)
    M = assemble(Lam, [0.3], OMEGA, 0.1, cosine).matrix
    P = Lam.points
    for i in range(len(Lam)):
        for j in range(len(Lam)):
            if i != j:
                unit = int(np.sum(np.abs(P[i] - P[j]))) == 1
                assert M[i, j] == (0.05 if unit else 0.0)


def test_single_point_region(cosine):
    Lam = Region.from_points([(2, -1)])
    h = assemble(Lam, [0.3], OMEGA, 0.0, cosine)
    assert h.matrix.shape == (1, 1)
    rep = green(Lam, 0.0, [0.3], OMEGA, 0.0, cosine)
    assert rep.inverse[0, 0] == pytest.approx(1 / 1.44, rel=1e-15)


def test_resonant_energy_is_near_singular(cosine):
    Lam = cube(2, 2)
    E = diagonal_symbol([0.3], (1, 1), OMEGA, BS)
    rep = green(Lam, E, [0.3], OMEGA, 0.0, cosine)
    assert rep.near_singular and rep.inverse is None and not ldt_check(rep, 2, 0.5)
    with pytest.raises(NearSingular):
        green(Lam, E, [0.3], OMEGA, 0.0, cosine, strict=True)


def test_small_cube_matches_gauss_jordan(cosine):
    Lam = cube(2, 2)
    rep = green(Lam, 0.1, [0.3], OMEGA, 1e-3, cosine)
    ref = oracles.gauss_jordan_inverse(assemble(Lam, [0.3], OMEGA, 1e-3, cosine).shifted(0.1))
    assert np.max(np.abs(rep.inverse - ref)) <= 1e-10


def test_assembly_matches_entrywise_oracle():
    V = from_named_model("random-analytic", BS, rho=0.5, K_cut=2, seed=9)
    Lam = cube(2, 2)
    fast = assemble(Lam, [0.4], OMEGA, 0.2, V).matrix
    slow = oracles.dense_dual_matrix(Lam.points, [0.4], OMEGA, [2], 0.2, V.coefficients)
    assert np.max(np.abs(fast - slow)) <= 1e-15
    assert np.array_equal(fast, fast.conj().T)


def test_ldt_pass_in_diagonal_case():
    V = PotentialModel.zero(BS)
    Lam = cube(4, 2)
    # Theta large: every diagonal entry is at least E + 1
    rep = green(Lam, 0.0, [10.0], OMEGA, 0.0, V)
    assert np.min(rep.region.points @ OMEGA + 10.0) ** 2 >= 1
    assert rep.op_norm <= 1 <= math.exp(2)
    assert rep.ldt_pass and ldt_check(rep, 4, 0.5)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.floats(-1.5, 1.5), st.floats(0.0, 3.0), st.floats(0.0, 0.3),
       st.integers(0, 2 ** 31))
def test_green_identities(N, T, E, eps, seed):
    V = from_named_model("random-analytic", BS, rho=0.5, K_cut=2, seed=seed % 1000)
    Lam = cube(N, 2)
    rep = green(Lam, E, [T], OMEGA, eps, V)
    if rep.near_singular:
        return
    A = assemble(Lam, [T], OMEGA, eps, V).shifted(E)
    G = rep.inverse
    assert np.max(np.abs(A @ G - np.eye(len(Lam)))) <= 1e-10 * max(1.0, rep.op_norm)
    assert np.max(np.abs(G - G.conj().T)) <= 1e-12 * max(1.0, rep.op_norm)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 4), st.floats(-2.0, 2.0), st.floats(0.0, 3.0))
def test_zero_coupling_green_is_reciprocal(N, T, E):
    V = from_named_model("separable-cosine", BS, rho=0.5)
    Lam = cube(N, 2)
    diag = diagonal_symbol([T], Lam.points, OMEGA, BS)
    if np.min(np.abs(diag - E)) < 1e-6:
        return
    G = green(Lam, E, [T], OMEGA, 0.0, V).inverse
    assert np.array_equal(G, np.diag(np.diag(G)))
    assert np.allclose(np.diag(G), 1.0 / (diag - E), rtol=1e-14, atol=0)


def test_first_order_perturbation(cosine):
    Lam = cube(3, 2)
    G0 = green(Lam, 0.9, [0.37], OMEGA, 0.0, cosine).inverse
    diffs = [np.linalg.norm(green(Lam, 0.9, [0.37], OMEGA, e, cosine).inverse - G0, 2)
             for e in (1e-2, 1e-4, 1e-6)]
    for a, b in zip(diffs, diffs[1:]):
        assert 100 / 3 <= a / b <= 100 * 3


def test_matrix_text_round_trip(tmp_path, cosine):
    M = assemble(cube(2, 2), [0.3], OMEGA, 0.1, cosine).matrix
    dump_matrix(tmp_path / "h.txt", M)
    assert np.array_equal(load_matrix(tmp_path / "h.txt"), M)
    C = M + 1j * np.triu(M, 1) - 1j * np.tril(M, -1)
    dump_matrix(tmp_path / "c.txt", C)
    assert np.array_equal(load_matrix(tmp_path / "c.txt"), C)
