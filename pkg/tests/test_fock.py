"""Tests for the truncated Fock layer: grids, bases, ladders, field and
Weyl operators.

Expected values are either hand-derivable (ladder matrices, multiset
counts) or frozen from independent closed forms (coherent overlaps,
vacuum amplitudes) before the implementation was written.
"""

import itertools
import math

import numpy as np
import pytest

from nelsonlab.fock import (
    FockBasis,
    ModeGrid,
    annihilation,
    annihilator_slice,
    build_mode_grid,
    cutoff_leakage,
    displace_truncated,
    enumerate_basis,
    exponential_vector,
    field_operator,
    project_total,
    second_quantize,
    weyl_operator,
)


# ---------------------------------------------------------------- grids


def test_grid_1d_cell_centers():
    grid = build_mode_grid(d=1, k_max=1.0, m=4)
    assert np.allclose(np.sort(grid.modes[:, 0]), [-0.75, -0.25, 0.25, 0.75])
    assert np.allclose(grid.weights, 0.5)
    assert grid.h == pytest.approx(0.5)


def test_grid_1d_two_modes():
    grid = build_mode_grid(d=1, k_max=2.0, m=2)
    assert np.allclose(np.sort(grid.modes[:, 0]), [-1.0, 1.0])
    assert np.allclose(grid.weights, 2.0)


def test_grid_2d():
    grid = build_mode_grid(d=2, k_max=1.0, m=2)
    assert grid.n_modes == 4
    pts = {tuple(row) for row in grid.modes}
    assert pts == {(-0.5, -0.5), (-0.5, 0.5), (0.5, -0.5), (0.5, 0.5)}
    assert np.allclose(grid.weights, 1.0)


def test_grid_excludes_origin_and_is_symmetric():
    for m in (2, 4, 8, 16):
        grid = build_mode_grid(d=1, k_max=1.0, m=m)
        assert np.min(np.abs(grid.modes[:, 0])) > 0
        neg = grid.negation_index()
        assert neg is not None
        assert np.allclose(grid.modes[neg], -grid.modes)


def test_grid_rejects_odd_m():
    with pytest.raises(ValueError):
        build_mode_grid(d=1, k_max=1.0, m=3)
    with pytest.raises(ValueError):
        build_mode_grid(d=1, k_max=-1.0, m=4)


# ---------------------------------------------------------------- basis


def _toy_grid(n_modes):
    """Hand-built grid with unit weights for combinatorial tests."""
    ks = np.arange(1, n_modes + 1, dtype=float).reshape(-1, 1)
    return ModeGrid(d=1, modes=ks, weights=np.ones(n_modes), h=1.0)


def test_basis_counts():
    assert enumerate_basis(_toy_grid(2), 2).size == 6
    assert enumerate_basis(_toy_grid(1), 3).size == 4
    assert enumerate_basis(_toy_grid(4), 4).size == 70


def test_basis_graded_lex_order():
    basis = enumerate_basis(_toy_grid(2), 2)
    occs = [tuple(row) for row in basis.occupations]
    assert occs == [(0, 0), (0, 1), (1, 0), (0, 2), (1, 1), (2, 0)]
    # totals nondecreasing, sectors contiguous
    assert list(basis.totals) == [0, 1, 1, 2, 2, 2]
    for s, occ in enumerate(basis.occupations):
        assert basis.index_of(occ) == s


def test_basis_hard_limit():
    with pytest.raises(ValueError):
        enumerate_basis(_toy_grid(30), 6, hard_limit=1000)


def test_sector_slices():
    basis = enumerate_basis(_toy_grid(3), 3)
    sizes = [basis.sector_slice(n).stop - basis.sector_slice(n).start
             for n in range(4)]
    assert sizes == [1, 3, 6, 10]
    assert basis.cumulative_size(1) == 4


# --------------------------------------------------------------- ladders


def test_single_mode_ladder_matrix():
    basis = enumerate_basis(_toy_grid(1), 2)
    a, adag = annihilation(basis, 0)
    expected = np.array([[0, 1, 0], [0, 0, math.sqrt(2)], [0, 0, 0]])
    assert np.allclose(a.toarray(), expected)
    assert np.allclose(adag.toarray(), expected.T)


def test_ccr_below_cutoff():
    basis = enumerate_basis(_toy_grid(3), 3)
    guard = basis.cumulative_size(basis.n_max - 1)
    ops = [annihilation(basis, i) for i in range(3)]
    for i, (ai, ai_dag) in enumerate(ops):
        for j, (aj, aj_dag) in enumerate(ops):
            comm = (ai @ aj_dag - aj_dag @ ai).toarray()
            want = np.eye(basis.size) if i == j else np.zeros((basis.size,) * 2)
            assert np.allclose(comm[:guard, :guard], want[:guard, :guard],
                               atol=1e-14)
    # [a_i, a_j] always vanishes
    a0, _ = ops[0]
    a1, _ = ops[1]
    assert abs((a0 @ a1 - a1 @ a0)).max() == 0


def test_number_matrix_element():
    basis = enumerate_basis(_toy_grid(2), 3)
    a, adag = annihilation(basis, 1)
    num = (adag @ a).toarray()
    for s, occ in enumerate(basis.occupations):
        assert num[s, s] == pytest.approx(occ[1])


# ------------------------------------------------- second quantization


def test_dgamma_diagonal_and_additive():
    basis = enumerate_basis(_toy_grid(3), 2)
    f = np.array([1.0, 2.0, -0.5])
    g = np.array([0.25, -1.0, 3.0])
    df = second_quantize(basis, f)
    dg = second_quantize(basis, g)
    dfg = second_quantize(basis, f + g)
    assert np.allclose((df + dg).toarray(), dfg.toarray())
    # explicit entries
    for s, occ in enumerate(basis.occupations):
        assert df.toarray()[s, s] == pytest.approx(np.dot(occ, f))
    # vacuum
    assert df.toarray()[0, 0] == 0.0


def test_field_momentum_symmetric_state():
    # two modes k = {-1, 1}: occupation (1,1) has total field momentum 0
    ks = np.array([[-1.0], [1.0]])
    grid = ModeGrid(d=1, modes=ks, weights=np.ones(2), h=2.0)
    basis = enumerate_basis(grid, 2)
    pf = second_quantize(basis, grid.modes[:, 0])
    s = basis.index_of(np.array([1, 1]))
    assert pf.toarray()[s, s] == pytest.approx(0.0)


# -------------------------------------------------------- field operator


def test_field_operator_single_mode():
    grid = ModeGrid(d=1, modes=np.array([[1.0]]), weights=np.array([0.49]),
                    h=1.0)
    basis = enumerate_basis(grid, 1)
    c = 1.3
    phi = field_operator(basis, np.array([c]))
    root = c * math.sqrt(0.49)
    assert np.allclose(phi.toarray(), [[0.0, root], [root, 0.0]])


def test_field_vacuum_second_moment():
    grid = build_mode_grid(d=1, k_max=1.0, m=4)
    basis = enumerate_basis(grid, 2)
    f = np.array([0.3, -1.1, 0.7, 0.2])
    phi = field_operator(basis, f)
    vac = np.zeros(basis.size)
    vac[0] = 1.0
    moment = vac @ (phi @ (phi @ vac))
    assert moment == pytest.approx(np.sum(grid.weights * f**2), abs=1e-14)


def test_field_operator_zero():
    basis = enumerate_basis(_toy_grid(2), 2)
    assert field_operator(basis, np.zeros(2)).nnz == 0


# ------------------------------------------------------- Weyl operators


def _small_weyl_basis(n_max=10):
    grid = build_mode_grid(d=1, k_max=1.0, m=2)
    return grid, enumerate_basis(grid, n_max)


def test_weyl_zero_is_identity():
    _, basis = _small_weyl_basis(4)
    W = weyl_operator(basis, np.zeros(2))
    assert np.allclose(W, np.eye(basis.size), atol=1e-14)


def test_weyl_vacuum_amplitude():
    grid, basis = _small_weyl_basis()
    f = np.array([0.25, -0.15])
    W = weyl_operator(basis, f)
    vac = np.zeros(basis.size)
    vac[0] = 1.0
    norm_sq = np.sum(grid.weights * f**2)
    assert (W @ vac)[0] == pytest.approx(math.exp(-norm_sq / 2), abs=1e-10)


def test_weyl_orthogonal_and_group_inverse():
    _, basis = _small_weyl_basis()
    f = np.array([0.3, 0.2])
    W = weyl_operator(basis, f)
    Wm = weyl_operator(basis, -f)
    assert np.max(np.abs(W.T @ W - np.eye(basis.size))) < 1e-8
    assert np.max(np.abs(W @ Wm - np.eye(basis.size))) < 1e-8


def test_weyl_field_shift_law():
    # W(f) phi(g) W(f)^T = phi(g) - 2 s(f,g) on low sectors
    grid, basis = _small_weyl_basis()
    f = np.array([0.2, -0.1])
    g = np.array([0.5, 0.3])
    W = weyl_operator(basis, f)
    phi = field_operator(basis, g).toarray()
    shift = 2 * np.sum(grid.weights * f * g)
    lhs = W @ phi @ W.T
    rhs = phi - shift * np.eye(basis.size)
    low = basis.cumulative_size(4)
    assert np.max(np.abs((lhs - rhs)[:low, :low])) < 1e-8


def test_weyl_dgamma_law():
    # W(f) dG(A) W(f)^T = dG(A) - phi(Af) + s(f, Af) on low sectors
    grid, basis = _small_weyl_basis()
    f = np.array([0.2, 0.25])
    avals = np.array([0.7, 1.9])
    W = weyl_operator(basis, f)
    dg = second_quantize(basis, avals).toarray()
    lhs = W @ dg @ W.T
    rhs = (dg - field_operator(basis, avals * f).toarray()
           + np.sum(grid.weights * f * avals * f) * np.eye(basis.size))
    low = basis.cumulative_size(4)
    assert np.max(np.abs((lhs - rhs)[:low, :low])) < 1e-7


def test_weyl_leakage_signal():
    _, basis = _small_weyl_basis(3)
    with pytest.raises(ValueError):
        weyl_operator(basis, np.array([3.0, 3.0]), max_leakage=1e-10)


# -------------------------------------------------- exponential vectors


def test_exponential_vector_vacuum():
    basis = enumerate_basis(_toy_grid(2), 3)
    eps = exponential_vector(basis, np.zeros(2))
    want = np.zeros(basis.size)
    want[0] = 1.0
    assert np.allclose(eps, want)


def test_exponential_vector_single_mode_amplitudes():
    grid = ModeGrid(d=1, modes=np.array([[1.0]]), weights=np.array([0.25]),
                    h=1.0)
    basis = enumerate_basis(grid, 5)
    g = 1.4
    c = math.sqrt(0.25) * g
    eps = exponential_vector(basis, np.array([g]))
    for n in range(6):
        assert eps[n] == pytest.approx(c**n / math.sqrt(math.factorial(n)))


def test_exponential_vector_overlap_convergence():
    grid = build_mode_grid(d=1, k_max=1.0, m=2)
    f = np.array([0.45, -0.2])
    g = np.array([0.3, 0.5])
    s_fg = np.sum(grid.weights * f * g)
    errors = []
    for n_max in (4, 6, 8):
        basis = enumerate_basis(grid, n_max)
        ov = np.dot(exponential_vector(basis, f), exponential_vector(basis, g))
        errors.append(abs(ov - math.exp(s_fg)) / math.exp(s_fg))
    assert errors[1] <= errors[0] / 2
    assert errors[2] <= errors[1] / 2


# ------------------------------------------------------------- slices


def test_slice_vacuum_and_single_boson():
    grid = build_mode_grid(d=1, k_max=1.0, m=4)
    basis = enumerate_basis(grid, 2)
    vac = np.zeros(basis.size)
    vac[0] = 1.0
    for i in range(4):
        assert np.allclose(annihilator_slice(basis, vac, i), 0.0)
    # one boson in mode j
    j = 2
    occ = np.zeros(4, dtype=int)
    occ[j] = 1
    psi = np.zeros(basis.size)
    psi[basis.index_of(occ)] = 1.0
    for i in range(4):
        sl = annihilator_slice(basis, psi, i)
        if i == j:
            assert sl[0] == pytest.approx(1 / math.sqrt(grid.weights[j]))
            assert np.linalg.norm(sl[1:]) == 0
        else:
            assert np.allclose(sl, 0.0)


def test_slice_number_identity_random_states():
    grid = build_mode_grid(d=1, k_max=1.0, m=4)
    basis = enumerate_basis(grid, 3)
    rng = np.random.default_rng(7)
    num = second_quantize(basis, np.ones(4))
    for _ in range(5):
        psi = rng.standard_normal(basis.size)
        psi /= np.linalg.norm(psi)
        total = sum(grid.weights[i]
                    * np.sum(annihilator_slice(basis, psi, i) ** 2)
                    for i in range(4))
        assert total == pytest.approx(psi @ (num @ psi), abs=1e-10)


# ------------------------------------------- truncated displacement


def test_displace_matches_dense_weyl():
    grid, basis = _small_weyl_basis(8)
    f = np.array([0.3, -0.2])
    rng = np.random.default_rng(3)
    psi = np.zeros(basis.size)
    low_in = basis.cumulative_size(2)
    psi[:low_in] = rng.standard_normal(low_in)
    psi /= np.linalg.norm(psi)
    W = weyl_operator(basis, f)
    phi, leak = displace_truncated(basis, f, psi)
    # far below the cutoff the two routes agree; near it only the
    # normal-ordered route is exact
    dense = W @ psi
    low = basis.cumulative_size(4)
    assert np.linalg.norm((phi - dense)[:low]) < 1e-6
    assert leak < 1e-4


def test_displace_leakage_exact():
    grid, basis = _small_weyl_basis(6)
    f = np.array([0.4, 0.1])
    psi = np.zeros(basis.size)
    psi[0] = 1.0
    phi, leak = displace_truncated(basis, f, psi)
    assert leak == pytest.approx(math.sqrt(max(0.0, 1 - phi @ phi)), abs=1e-14)
    # exactness against a larger-cutoff ground truth
    big = enumerate_basis(grid, basis.n_max + 4)
    phi_big, _ = displace_truncated(big, f, np.eye(big.size)[0])
    assert np.allclose(phi, phi_big[: basis.size], atol=1e-12)


def test_displace_inverse_roundtrip():
    grid, basis = _small_weyl_basis(10)
    f = np.array([0.2, -0.25])
    psi = np.zeros(basis.size)
    psi[0] = 1.0
    mid, _ = displace_truncated(basis, f, psi)
    back, _ = displace_truncated(basis, -f, mid)
    assert np.linalg.norm(back - psi) < 1e-8


def test_cutoff_leakage_matches_enlarged_basis():
    grid = build_mode_grid(d=1, k_max=1.0, m=2)
    basis = enumerate_basis(grid, 3)
    big = enumerate_basis(grid, 4)
    f = np.array([0.7, -0.4])
    rng = np.random.default_rng(11)
    x = rng.standard_normal(basis.size)
    # apply the generator once on the big basis, collect the overflow part
    coef = np.sqrt(grid.weights) * f
    xs_big = np.zeros(big.size)
    xs_big[: basis.size] = x
    overflow = np.zeros(big.size)
    for i in range(2):
        src, dst, amp = big.ladder(i)
        inc = np.zeros(big.size)
        np.add.at(inc, dst, coef[i] * amp * xs_big[src])
        overflow += np.where(big.totals == 4, inc, 0.0)
    assert cutoff_leakage(basis, f, x) == pytest.approx(
        np.linalg.norm(overflow), abs=1e-12)


def test_project_total():
    basis = enumerate_basis(_toy_grid(2), 3)
    x = np.ones(basis.size)
    y = project_total(basis, x, 1)
    assert np.sum(y) == basis.cumulative_size(1)
    assert np.all(y[basis.cumulative_size(1):] == 0)
