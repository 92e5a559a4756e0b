import itertools

import numpy as np
import pytest

from etmpc.csc import SparseCSC, DimensionError
from etmpc.ordering import amd_order, Permutation

from oracles import symbolic_fill_count


def arrow_pattern(n):
    a = np.eye(n, dtype=bool)
    a[0, :] = True
    a[:, 0] = True
    return a


def grid_laplacian_pattern(nw, nh):
    n = nw * nh
    a = np.eye(n, dtype=bool)
    for r in range(nh):
        for c in range(nw):
            i = r * nw + c
            if c + 1 < nw:
                a[i, i + 1] = a[i + 1, i] = True
            if r + 1 < nh:
                a[i, i + nw] = a[i + nw, i] = True
    return a


def test_diagonal_matrix_returns_identity():
    p = amd_order(SparseCSC.diag(np.ones(6)))
    np.testing.assert_array_equal(p.perm, np.arange(6))
    p.validate()


def test_arrow_matrix_is_fill_free():
    pat = arrow_pattern(5)
    p = amd_order(SparseCSC.from_dense(pat.astype(float)))
    p.validate()
    # brute force: the best achievable fill over all 120 orders is 0
    best = min(symbolic_fill_count(pat, order)
               for order in itertools.permutations(range(5)))
    assert best == 0
    assert symbolic_fill_count(pat, p.perm.tolist()) == 0
    # the dense node is deferred until its degree has collapsed
    assert int(np.where(p.perm == 0)[0][0]) >= 3
    # natural order fills the lower-right block completely: C(4,2) = 6
    assert symbolic_fill_count(pat, list(range(5))) == 6


def test_grid_laplacian_fill_not_worse_than_natural():
    pat = grid_laplacian_pattern(4, 4)
    p = amd_order(SparseCSC.from_dense(pat.astype(float)))
    fill_amd = symbolic_fill_count(pat, p.perm.tolist())
    fill_nat = symbolic_fill_count(pat, list(range(16)))
    assert fill_amd <= fill_nat


def test_deterministic():
    rng = np.random.default_rng(7)
    a = rng.random((30, 30)) < 0.1
    a = a | a.T | np.eye(30, dtype=bool)
    m = SparseCSC.from_dense(a.astype(float))
    p1 = amd_order(m)
    p2 = amd_order(m)
    np.testing.assert_array_equal(p1.perm, p2.perm)


def test_rejects_non_square():
    with pytest.raises(DimensionError):
        amd_order(SparseCSC.from_dense(np.ones((2, 3))))


def test_unsymmetric_input_symmetrized():
    a = np.zeros((4, 4))
    a[0, 3] = 1.0
    np.fill_diagonal(a, 1.0)
    p = amd_order(SparseCSC.from_dense(a))
    p.validate()


def test_permutation_validate_catches_corruption():
    p = Permutation(np.array([0, 0], dtype=np.int32), np.array([0, 1], dtype=np.int32))
    with pytest.raises(ValueError):
        p.validate()
