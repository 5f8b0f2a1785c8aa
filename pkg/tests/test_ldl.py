"""Factorization checks against hand-computed values and dense oracles.

Frozen values for the 3-by-3 matrix [[4,1,0],[1,3,1],[0,1,2]] under the
identity order, worked by hand: D = (4, 11/4, 18/11), L entries 1/4 and
4/11, elimination-tree parents (1, 2, root).
"""

import io

import numpy as np
import pytest
from numpy.testing import assert_allclose

from augsolve.ldl import (ZeroPivot, closure, dump_factor, factorize,
                          partial_backward_solve, partial_forward_solve,
                          solve, symbolic_analyze)
from augsolve.ordering import fill_reducing_order
from augsolve.selftest import random_index_set, random_sparse_spd
from augsolve.sparse import Permutation, SparseMatrix

A3 = SparseMatrix.from_triplets(
    [(0, 0, 4.0), (0, 1, 1.0), (1, 1, 3.0), (1, 2, 1.0), (2, 2, 2.0)], 3)
IDENT3 = Permutation.identity(3)


def factor_a3():
    return factorize(A3, IDENT3)


def test_a3_pivots_and_entries():
    F = factor_a3()
    assert_allclose(F.D, [4.0, 11.0 / 4.0, 18.0 / 11.0], rtol=1e-15)
    L = F.l_dense()
    assert_allclose(L[1, 0], 0.25, rtol=0)
    assert_allclose(L[2, 1], 4.0 / 11.0, rtol=1e-15)
    assert L[2, 0] == 0.0
    assert F.nnz_L == 2


def test_a3_etree():
    F = factor_a3()
    assert F.etree.parent.tolist() == [1, 2, -1]


def test_a3_solve_frozen():
    x = solve(factor_a3(), np.array([1.0, 2.0, 3.0]))
    assert_allclose(x, [2.0 / 9.0, 1.0 / 9.0, 13.0 / 9.0], rtol=1e-14)


def test_reconstruction_property():
    rng = np.random.default_rng(23)
    for _ in range(30):
        n = int(rng.integers(2, 80))
        A = random_sparse_spd(rng, n)
        for p in (Permutation.identity(n), fill_reducing_order(A)):
            F = factorize(A, p)
            L = F.l_dense()
            Aperm = A.permute_symmetric(F.perm).to_dense()
            err = np.linalg.norm(L @ np.diag(F.D) @ L.T - Aperm)
            assert err <= 1e-12 * np.linalg.norm(Aperm)


def test_solve_matches_dense():
    rng = np.random.default_rng(29)
    for _ in range(30):
        n = int(rng.integers(1, 90))
        A = random_sparse_spd(rng, n)
        b = rng.standard_normal(n)
        x = solve(factorize(A), b)
        assert_allclose(x, np.linalg.solve(A.to_dense(), b), rtol=1e-9, atol=1e-11)


def test_zero_pivot():
    A = SparseMatrix.from_triplets([(0, 0, 1.0), (1, 0, 1.0), (1, 1, 1.0)], 2)
    with pytest.raises(ZeroPivot) as exc:
        factorize(A, Permutation.identity(2))
    assert exc.value.column == 1


def test_etree_is_column_minimum_row():
    # parent[j] equals the smallest below-diagonal row of column j of L,
    # which makes the tree the transitive reduction of the factor graph
    rng = np.random.default_rng(31)
    for _ in range(20):
        n = int(rng.integers(2, 60))
        F = factorize(random_sparse_spd(rng, n))
        for j in range(n):
            col = F.Li[F.Lp[j]:F.Lp[j + 1]]
            expect = int(col.min()) if col.size else -1
            assert F.etree.parent[j] == expect


def test_postorder_is_topological():
    rng = np.random.default_rng(37)
    for _ in range(15):
        n = int(rng.integers(2, 60))
        F = factorize(random_sparse_spd(rng, n))
        post = F.etree.postorder
        assert sorted(post.tolist()) == list(range(n))
        pos = np.empty(n, dtype=int)
        pos[post] = np.arange(n)
        for v in range(n):
            p = F.etree.parent[v]
            if p != -1:
                assert pos[v] < pos[p]
                assert p > v


def test_symbolic_counts_match_numeric():
    rng = np.random.default_rng(41)
    for _ in range(15):
        n = int(rng.integers(2, 70))
        A = random_sparse_spd(rng, n)
        p = fill_reducing_order(A)
        tree, counts = symbolic_analyze(A, p)
        F = factorize(A, p)
        assert np.array_equal(counts, np.diff(F.Lp))
        assert np.array_equal(tree.parent, F.etree.parent)


def test_tridiagonal_no_fill():
    n = 12
    ents = [(i, i, 2.0) for i in range(n)] + [(i + 1, i, -1.0) for i in range(n - 1)]
    A = SparseMatrix.from_triplets(ents, n)
    _, counts = symbolic_analyze(A, Permutation.identity(n))
    assert counts.sum() == n - 1


def test_arrow_matrix_ordering():
    # dense first row/column; eliminating the hub first fills everything,
    # a fill-reducing order leaves it last and produces no fill
    n = 10
    ents = [(i, i, float(n)) for i in range(n)] + [(i, 0, 1.0) for i in range(1, n)]
    A = SparseMatrix.from_triplets(ents, n)
    _, natural = symbolic_analyze(A, Permutation.identity(n))
    assert natural.sum() == 45
    p = fill_reducing_order(A)
    assert p.perm[-1] == 0
    _, reduced = symbolic_analyze(A, p)
    assert reduced.sum() == 9


def test_ordering_is_deterministic():
    rng = np.random.default_rng(43)
    A = random_sparse_spd(rng, 50)
    assert fill_reducing_order(A) == fill_reducing_order(A)


def brute_closure(F, original_indices):
    """Reachability on reversed G(L): climb from the seeds through every
    stored entry, collecting rows of visited columns."""
    seeds = F.perm.inv[np.asarray(original_indices)]
    seen = set(seeds.tolist())
    stack = list(seen)
    while stack:
        j = stack.pop()
        for i in F.Li[F.Lp[j]:F.Lp[j + 1]].tolist():
            if i not in seen:
                seen.add(i)
                stack.append(i)
    return np.array(sorted(seen), dtype=np.int64)


def test_a3_closure_of_first_index():
    F = factor_a3()
    clo = closure(F, np.array([0]))
    assert clo.nodes.tolist() == [0, 1, 2]
    assert clo.rho == 5  # columns carry 2, 2, 1 entries with the diagonal


def test_closure_equals_brute_reachability():
    rng = np.random.default_rng(47)
    for _ in range(40):
        n = int(rng.integers(2, 70))
        A = random_sparse_spd(rng, n)
        F = factorize(A)
        m = int(rng.integers(1, min(n, 6) + 1))
        S = random_index_set(rng, n, m)
        clo = closure(F, S)
        assert np.array_equal(clo.nodes, brute_closure(F, S))
        assert clo.rho == clo.nodes.size + int(F.colcount[clo.nodes].sum())
        assert clo.rho <= F.nnz_L + F.n


def test_forward_substitution_stays_in_closure():
    # sparse right-hand side: the forward solve never creates a nonzero
    # outside the closure of its support (checked exactly, zeros stay 0.0)
    rng = np.random.default_rng(53)
    for _ in range(30):
        n = int(rng.integers(3, 70))
        A = random_sparse_spd(rng, n)
        F = factorize(A)
        m = int(rng.integers(1, 4))
        S = random_index_set(rng, n, m)
        clo = closure(F, S)
        L = F.l_dense()
        c = np.zeros(n)
        c[F.perm.inv[S]] = rng.standard_normal(m)
        y = np.linalg.solve(L, c)
        outside = np.setdiff1d(np.arange(n), clo.nodes)
        assert np.all(y[outside] == 0.0)


def test_partial_forward_solve_matches_dense():
    rng = np.random.default_rng(59)
    for _ in range(30):
        n = int(rng.integers(2, 80))
        A = random_sparse_spd(rng, n)
        F = factorize(A)
        m = int(rng.integers(1, min(n, 5) + 1))
        S = random_index_set(rng, n, m)
        V = rng.standard_normal((m, 2))
        clo = closure(F, S)
        X = partial_forward_solve(F, S, V, clo)
        c = np.zeros((n, 2))
        c[F.perm.inv[S]] = V
        y = np.linalg.solve(F.l_dense(), c)
        assert_allclose(X, y[clo.nodes], rtol=1e-11, atol=1e-13)


def test_partial_backward_solve_matches_dense():
    rng = np.random.default_rng(61)
    for _ in range(30):
        n = int(rng.integers(2, 80))
        A = random_sparse_spd(rng, n)
        F = factorize(A)
        m = int(rng.integers(1, min(n, 5) + 1))
        S = random_index_set(rng, n, m)
        clo = closure(F, S)
        Z = rng.standard_normal((clo.nodes.size, 3))
        got = partial_backward_solve(F, clo, Z, S)
        c = np.zeros((n, 3))
        c[clo.nodes] = Z
        y = np.linalg.solve(F.l_dense().T, c)
        assert_allclose(got, y[F.perm.inv[S]], rtol=1e-11, atol=1e-13)


def test_partial_forward_rejects_rows_outside_closure():
    F = factorize(random_sparse_spd(np.random.default_rng(3), 20))
    S = np.array([4, 9])
    clo = closure(F, S)
    bad = np.setdiff1d(np.arange(20), F.perm.perm[clo.nodes])
    if bad.size:
        with pytest.raises(ValueError):
            partial_forward_solve(F, np.array([bad[0]]), np.ones(1), clo)


def test_closure_input_validation():
    F = factor_a3()
    with pytest.raises(ValueError):
        closure(F, np.array([0, 0]))
    with pytest.raises(ValueError):
        closure(F, np.array([3]))
    with pytest.raises(ValueError):
        closure(F, np.array([], dtype=np.int64))


def test_dump_factor_one_line_per_column():
    F = factor_a3()
    buf = io.StringIO()
    dump_factor(F, buf)
    lines = buf.getvalue().strip().splitlines()
    assert len(lines) == 3
    assert lines[0].startswith("col 0")
