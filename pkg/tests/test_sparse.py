"""Storage-layer checks: construction, products, permutation, extraction,
and the Matrix Market round trip."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from augsolve.sparse import (Permutation, SparseFormatError, SparseMatrix,
                             as_lower, mm_read, mm_write, permute_vector)

A3_TRIPLETS = [(0, 0, 4.0), (0, 1, 1.0), (1, 1, 3.0), (1, 2, 1.0), (2, 2, 2.0)]
A3_DENSE = np.array([[4.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 2.0]])


def a3() -> SparseMatrix:
    return SparseMatrix.from_triplets(A3_TRIPLETS, 3)


def random_symmetric(rng, n, avg=3.0):
    k = max(1, int(avg * n))
    i = rng.integers(0, n, size=k)
    j = rng.integers(0, n, size=k)
    keep = i >= j
    ents = [(int(a), int(b), float(v)) for a, b, v in
            zip(i[keep], j[keep], rng.standard_normal(keep.sum()))]
    ents += [(d, d, float(rng.uniform(1, 2))) for d in range(n)]
    return SparseMatrix.from_triplets(ents, n)


def test_from_triplets_symmetrizes_and_orders():
    A = a3()
    assert A.n == 3 and A.mode == "lower"
    assert_allclose(A.to_dense(), A3_DENSE, rtol=0, atol=0)
    # upper-orientation input landed in the lower triangle
    assert A.nnz == 5


def test_from_triplets_sums_duplicates():
    A = SparseMatrix.from_triplets([(0, 0, 2.0), (0, 0, 2.0)], 1)
    assert A.to_dense()[0, 0] == 4.0


def test_from_triplets_rejects_out_of_range():
    with pytest.raises(SparseFormatError):
        SparseMatrix.from_triplets([(0, 3, 1.0)], 3)
    with pytest.raises(SparseFormatError):
        SparseMatrix.from_triplets([(-1, 0, 1.0)], 3)


def test_csc_validation():
    with pytest.raises(SparseFormatError):
        SparseMatrix(2, [0, 1, 1], [1], [np.nan])
    with pytest.raises(SparseFormatError):
        SparseMatrix(2, [0, 2, 2], [1, 1], [1.0, 2.0])  # duplicate rows in col
    with pytest.raises(SparseFormatError):
        SparseMatrix(2, [0, 1, 2], [0, 0], [1.0, 1.0])  # upper entry in lower mode


def test_arrays_are_read_only():
    A = a3()
    with pytest.raises(ValueError):
        A.values[0] = 7.0


def test_matvec_frozen_value():
    x = np.array([2.0 / 9.0, 1.0 / 9.0, 13.0 / 9.0])
    assert_allclose(a3().matvec(x), [1.0, 2.0, 3.0], rtol=1e-14)


def test_matvec_matches_dense():
    rng = np.random.default_rng(7)
    for n in (1, 2, 5, 17, 60):
        A = random_symmetric(rng, n)
        x = rng.standard_normal(n)
        assert_allclose(A.matvec(x), A.to_dense() @ x, rtol=1e-12, atol=1e-12)


def test_matvec_full_mode_matches():
    rng = np.random.default_rng(11)
    A = random_symmetric(rng, 12)
    dense = A.to_dense()
    ents = [(i, j, dense[i, j]) for i in range(12) for j in range(12)
            if dense[i, j] != 0.0]
    B = SparseMatrix.from_triplets(ents, 12, mode="full")
    x = rng.standard_normal(12)
    assert_allclose(B.matvec(x), dense @ x, rtol=1e-12, atol=1e-12)


def test_permute_symmetric_dense_agreement():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = int(rng.integers(2, 40))
        A = random_symmetric(rng, n)
        p = Permutation(rng.permutation(n))
        P = np.zeros((n, n))
        P[p.perm, np.arange(n)] = 1.0  # P[old, new]
        assert_allclose(A.permute_symmetric(p).to_dense(),
                        P.T @ A.to_dense() @ P, rtol=0, atol=0)


def test_permute_matvec_commutes():
    rng = np.random.default_rng(5)
    for _ in range(20):
        n = int(rng.integers(2, 40))
        A = random_symmetric(rng, n)
        p = Permutation(rng.permutation(n))
        x = rng.standard_normal(n)
        lhs = A.permute_symmetric(p).matvec(permute_vector(p, x))
        assert_allclose(lhs, permute_vector(p, A.matvec(x)), rtol=1e-12, atol=1e-12)


def test_permutation_rejects_non_bijection():
    with pytest.raises(SparseFormatError):
        Permutation(np.array([0, 0, 2]))


def test_extract_principal_submatrix():
    rng = np.random.default_rng(13)
    for _ in range(25):
        n = int(rng.integers(2, 50))
        m = int(rng.integers(1, min(n, 8) + 1))
        A = random_symmetric(rng, n)
        ix = np.sort(rng.choice(n, size=m, replace=False))
        assert_allclose(A.extract_principal_submatrix(ix),
                        A.to_dense()[np.ix_(ix, ix)], rtol=0, atol=0)


def test_extract_rejects_bad_index_sets():
    A = a3()
    with pytest.raises(ValueError):
        A.extract_principal_submatrix(np.array([1, 0]))
    with pytest.raises(ValueError):
        A.extract_principal_submatrix(np.array([1, 1]))
    with pytest.raises(ValueError):
        A.extract_principal_submatrix(np.array([3]))


def test_diagonal():
    assert_allclose(a3().diagonal(), [4.0, 3.0, 2.0])


def test_as_lower_from_full():
    dense = A3_DENSE
    ents = [(i, j, dense[i, j]) for i in range(3) for j in range(3)
            if dense[i, j] != 0.0]
    B = as_lower(SparseMatrix.from_triplets(ents, 3, mode="full"))
    assert B.mode == "lower"
    assert_allclose(B.to_dense(), dense, rtol=0, atol=0)


def test_matrix_market_round_trip(tmp_path):
    rng = np.random.default_rng(17)
    A = random_symmetric(rng, 23)
    path = tmp_path / "m.mtx"
    mm_write(A, path)
    text = path.read_text().splitlines()
    assert text[0] == "%%MatrixMarket matrix coordinate real symmetric"
    B = mm_read(path)
    assert B.mode == "lower"
    assert_allclose(B.to_dense(), A.to_dense(), rtol=0, atol=0)


def test_matrix_market_one_based(tmp_path):
    path = tmp_path / "a3.mtx"
    mm_write(a3(), path)
    lines = path.read_text().splitlines()
    assert lines[1].split() == ["3", "3", "5"]
    first = lines[2].split()
    assert first[0] == "1" and first[1] == "1"


def test_matrix_market_rejects_bad_input(tmp_path):
    bad = tmp_path / "bad.mtx"
    bad.write_text("%%MatrixMarket matrix array real general\n2 2 1\n1 1 1.0\n")
    with pytest.raises(SparseFormatError):
        mm_read(bad)
    bad.write_text("%%MatrixMarket matrix coordinate real symmetric\n2 3 1\n1 1 1.0\n")
    with pytest.raises(SparseFormatError):
        mm_read(bad)
    bad.write_text("%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 1.0\n")
    with pytest.raises(SparseFormatError):
        mm_read(bad)
    bad.write_text("%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n1 2 5.0\n")
    with pytest.raises(SparseFormatError):
        mm_read(bad)
