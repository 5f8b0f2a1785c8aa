"""Sparse LDL^T factorization with elimination-tree machinery.

Factorizes P^T A P = L D L^T with L unit lower triangular and D diagonal
(static 1-by-1 pivots, no numerical pivoting).  The factorization is
up-looking: row k of L is produced by a sparse triangular solve whose
nonzero pattern is read off the elimination tree, so both the symbolic
and numeric phases run in time proportional to the entries they touch.

The elimination tree also answers reachability questions: the closure of
an index set S is the union of tree paths from S to the root, and the
sparse triangular solves needed by the update engine act only on rows in
that closure.  ``partial_forward_solve`` / ``partial_backward_solve``
exploit this by operating on a compact copy of the closure rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ordering import fill_reducing_order
from .sparse import Permutation, SparseMatrix, as_lower


class ZeroPivot(ArithmeticError):
    """Pivot magnitude at or below tolerance; the matrix is numerically
    singular or needs pivoting this factorization does not do."""

    def __init__(self, column: int, original: int, value: float):
        self.column = int(column)
        self.original = int(original)
        self.value = float(value)
        super().__init__(
            f"zero pivot at factor column {column} (original index {original}), "
            f"d = {value:.3e}")


@dataclass(frozen=True)
class EliminationTree:
    """Forest over factor columns: ``parent[j]`` is the first row below the
    diagonal in column j of L, or -1 at a root.  ``postorder`` lists every
    node after all of its children."""

    parent: np.ndarray
    postorder: np.ndarray

    @property
    def n(self) -> int:
        return self.parent.shape[0]


@dataclass(frozen=True)
class ClosureSet:
    """Rows reachable from an index set through the elimination tree.

    ``nodes`` are factor-order indices, ascending.  ``rho`` is the total
    factor weight of the closure: for each node, the column entry count
    of L including the unit diagonal.
    """

    nodes: np.ndarray
    rho: int


class LdlFactorization:
    """Result of :func:`factorize`.

    Attributes
    ----------
    perm : Permutation
        Fill-reducing order used; ``perm.perm[new] = old``.
    Lp, Li, Lx : ndarray
        CSC arrays of the strictly lower triangle of L (unit diagonal
        implicit), in factor order.
    D : ndarray
        Pivots.
    etree : EliminationTree
    nnz_L : int
        Stored entry count of L (strictly lower part).
    """

    __slots__ = ("n", "perm", "Lp", "Li", "Lx", "D", "etree", "nnz_L", "colcount")

    def __init__(self, n, perm, Lp, Li, Lx, D, etree):
        self.n = n
        self.perm = perm
        self.Lp = Lp
        self.Li = Li
        self.Lx = Lx
        self.D = D
        self.etree = etree
        self.nnz_L = int(Lp[-1])
        self.colcount = np.diff(Lp)

    def l_dense(self) -> np.ndarray:
        """Dense unit lower L, for small-scale checks."""
        L = np.eye(self.n)
        for j in range(self.n):
            sl = slice(self.Lp[j], self.Lp[j + 1])
            L[self.Li[sl], j] = self.Lx[sl]
        return L


# -- symbolic phase --------------------------------------------------------


def _upper_csc(A: SparseMatrix, p: Permutation):
    """Permuted matrix stored as upper triangle by columns (row <= col)."""
    A = as_lower(A)
    cols = A._col_of_entry()
    ri = p.inv[A.row_idx]
    ci = p.inv[cols]
    lo = np.minimum(ri, ci)
    hi = np.maximum(ri, ci)
    order = np.lexsort((lo, hi))
    rows = lo[order]
    ucols = hi[order]
    vals = A.values[order]
    n = A.n
    Up = np.zeros(n + 1, dtype=np.int64)
    np.add.at(Up, ucols + 1, 1)
    np.cumsum(Up, out=Up)
    return Up, rows, vals


def _etree_from_upper(n: int, Up, Ui) -> np.ndarray:
    parent = np.full(n, -1, dtype=np.int64)
    ancestor = np.full(n, -1, dtype=np.int64)
    Upl = Up.tolist()
    Uil = Ui.tolist()
    for j in range(n):
        for t in range(Upl[j], Upl[j + 1]):
            i = Uil[t]
            while i != -1 and i < j:
                nxt = ancestor[i]
                ancestor[i] = j
                if nxt == -1:
                    parent[i] = j
                i = nxt
    return parent


def _postorder(parent: np.ndarray) -> np.ndarray:
    n = parent.shape[0]
    children: list[list[int]] = [[] for _ in range(n)]
    roots = []
    for v in range(n):
        p = parent[v]
        if p == -1:
            roots.append(v)
        else:
            children[p].append(v)
    out = np.empty(n, dtype=np.int64)
    k = 0
    for r in roots:
        stack = [(r, 0)]
        while stack:
            v, ci = stack.pop()
            if ci < len(children[v]):
                stack.append((v, ci + 1))
                stack.append((children[v][ci], 0))
            else:
                out[k] = v
                k += 1
    return out


def _row_patterns(n: int, Up, Ui, parent):
    """Nonzero pattern of each row of L below the diagonal.

    Returns (pat, pat_ptr): row k's pattern is pat[pat_ptr[k]:pat_ptr[k+1]],
    listed so that within the row every tree descendant precedes its
    ancestors, which is the order the numeric solve consumes.
    """
    mark = np.zeros(n, dtype=np.int64)
    parentl = parent.tolist()
    Upl = Up.tolist()
    Uil = Ui.tolist()
    chunks: list[list[int]] = []
    lens = np.zeros(n + 1, dtype=np.int64)
    stack = [0] * n
    for k in range(n):
        mk = k + 1
        mark[k] = mk
        top = n
        for t in range(Upl[k], Upl[k + 1]):
            i = Uil[t]
            if i == k:
                continue
            path = []
            while mark[i] != mk:
                path.append(i)
                mark[i] = mk
                i = parentl[i]
            for q in reversed(path):
                top -= 1
                stack[top] = q
        row = stack[top:n]
        chunks.append(list(row))
        lens[k + 1] = len(row)
    pat_ptr = np.cumsum(lens)
    pat = np.fromiter((j for row in chunks for j in row), dtype=np.int64,
                      count=int(pat_ptr[-1]))
    return pat, pat_ptr


def symbolic_analyze(A: SparseMatrix, p: Permutation):
    """Elimination tree and per-column fill counts of L under order p.

    Returns
    -------
    (EliminationTree, ndarray)
        Counts are strictly-lower entries per factor column.
    """
    Up, Ui, _ = _upper_csc(A, p)
    parent = _etree_from_upper(A.n, Up, Ui)
    pat, pat_ptr = _row_patterns(A.n, Up, Ui, parent)
    counts = np.bincount(pat, minlength=A.n).astype(np.int64)
    tree = EliminationTree(parent=parent, postorder=_postorder(parent))
    return tree, counts


# -- numeric phase ---------------------------------------------------------


def factorize(A: SparseMatrix, p: Permutation | None = None) -> LdlFactorization:
    """Compute P^T A P = L D L^T.

    Parameters
    ----------
    A : SparseMatrix
        Symmetric matrix.
    p : Permutation, optional
        Elimination order; a fill-reducing one is computed when omitted.

    Raises
    ------
    ZeroPivot
        When a pivot magnitude falls at or below 1e-12 * max|diag|.
    """
    n = A.n
    if p is None:
        p = fill_reducing_order(A)
    if p.n != n:
        raise ValueError("permutation size mismatch")
    Up, Ui, Ux = _upper_csc(A, p)
    parent = _etree_from_upper(n, Up, Ui)
    pat, pat_ptr = _row_patterns(n, Up, Ui, parent)
    counts = np.bincount(pat, minlength=n).astype(np.int64)

    Lp = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=Lp[1:])
    nnz = int(Lp[-1])
    Li = np.empty(nnz, dtype=np.int64)
    Lx = np.empty(nnz, dtype=np.float64)
    Lnz = np.zeros(n, dtype=np.int64)
    D = np.zeros(n)
    Y = np.zeros(n)

    diag = np.abs(A.diagonal())
    pivot_tol = 1e-12 * (diag.max() if n else 0.0)

    Upl = Up.tolist()
    Uil = Ui.tolist()
    Uxl = Ux.tolist()
    patl = pat.tolist()
    pptr = pat_ptr.tolist()
    Lpl = Lp.tolist()
    for k in range(n):
        # scatter upper column k of P^T A P, diagonal separate
        dk = 0.0
        for t in range(Upl[k], Upl[k + 1]):
            i = Uil[t]
            if i == k:
                dk = Uxl[t]
            else:
                Y[i] = Uxl[t]
        # sparse row solve along the pattern, descendants first
        for j in patl[pptr[k]:pptr[k + 1]]:
            yj = Y[j]
            Y[j] = 0.0
            lkj = yj / D[j]
            q0 = Lpl[j]
            q1 = q0 + Lnz[j]
            if q1 - q0 >= 32:
                Y[Li[q0:q1]] -= Lx[q0:q1] * yj
            else:
                for q in range(q0, q1):
                    Y[Li[q]] -= Lx[q] * yj
            dk -= lkj * yj
            Li[q1] = k
            Lx[q1] = lkj
            Lnz[j] = q1 + 1 - q0
        if not np.isfinite(dk) or abs(dk) <= pivot_tol:
            raise ZeroPivot(k, p.perm[k], dk)
        D[k] = dk

    tree = EliminationTree(parent=parent, postorder=_postorder(parent))
    for a in (Lp, Li, Lx, D):
        a.setflags(write=False)
    return LdlFactorization(n, p, Lp, Li, Lx, D, tree)


# -- full solves ------------------------------------------------------------


def _forward_inplace(F: LdlFactorization, x: np.ndarray) -> None:
    """x <- L^{-1} x in factor order."""
    Lp, Li, Lx = F.Lp, F.Li, F.Lx
    for j in range(F.n):
        xj = x[j]
        if xj != 0.0:
            q0, q1 = Lp[j], Lp[j + 1]
            if q1 > q0:
                x[Li[q0:q1]] -= Lx[q0:q1] * xj


def _backward_inplace(F: LdlFactorization, x: np.ndarray) -> None:
    """x <- L^{-T} x in factor order."""
    Lp, Li, Lx = F.Lp, F.Li, F.Lx
    for j in range(F.n - 1, -1, -1):
        q0, q1 = Lp[j], Lp[j + 1]
        if q1 > q0:
            x[j] -= np.dot(Lx[q0:q1], x[Li[q0:q1]])


def solve(F: LdlFactorization, b: np.ndarray) -> np.ndarray:
    """Solve A x = b using the factorization of A."""
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (F.n,):
        raise ValueError("right-hand side has wrong length")
    x = b[F.perm.perm].copy()
    _forward_inplace(F, x)
    x /= F.D
    _backward_inplace(F, x)
    return x[F.perm.inv]


# -- closures and partial solves --------------------------------------------


def closure(F: LdlFactorization, indices: np.ndarray) -> ClosureSet:
    """Union of elimination-tree paths from the given original indices to
    their roots, as factor-order nodes.

    ``rho`` counts, over closure nodes, the L column entries including the
    unit diagonal; it is the work unit of the partial solves.
    """
    ix = np.asarray(indices, dtype=np.int64)
    if ix.ndim != 1 or ix.size == 0:
        raise ValueError("index set must be a nonempty 1-D array")
    if np.unique(ix).size != ix.size:
        raise ValueError("index set must not contain duplicates")
    if ix.min() < 0 or ix.max() >= F.n:
        raise ValueError("index out of range")
    parent = F.etree.parent
    seen = set()
    for s in F.perm.inv[ix].tolist():
        j = s
        while j != -1 and j not in seen:
            seen.add(j)
            j = parent[j]
    nodes = np.array(sorted(seen), dtype=np.int64)
    rho = int(nodes.size + F.colcount[nodes].sum())
    return ClosureSet(nodes=nodes, rho=rho)


class _ClosureFactor:
    """Rows and columns of L restricted to a closure, with local indices.

    Valid because every L column whose index lies in a closure has its
    entire below-diagonal pattern inside that closure (column patterns
    climb the elimination tree).
    """

    __slots__ = ("nodes", "q", "Lp", "Li", "Lx", "D")

    def __init__(self, F: LdlFactorization, clo: ClosureSet):
        nodes = clo.nodes
        q = nodes.size
        counts = F.colcount[nodes]
        Lp = np.zeros(q + 1, dtype=np.int64)
        np.cumsum(counts, out=Lp[1:])
        Li = np.empty(int(Lp[-1]), dtype=np.int64)
        Lx = np.empty(int(Lp[-1]), dtype=np.float64)
        for t in range(q):
            j = nodes[t]
            s0, s1 = F.Lp[j], F.Lp[j + 1]
            rows = F.Li[s0:s1]
            loc = np.searchsorted(nodes, rows)
            if loc.size and (loc[-1] >= q or np.any(nodes[loc] != rows)):
                raise RuntimeError("closure is not closed under column patterns")
            Li[Lp[t]:Lp[t + 1]] = loc
            Lx[Lp[t]:Lp[t + 1]] = F.Lx[s0:s1]
        self.nodes = nodes
        self.q = q
        self.Lp = Lp
        self.Li = Li
        self.Lx = Lx
        self.D = F.D[nodes]

    def positions(self, factor_idx: np.ndarray) -> np.ndarray:
        pos = np.searchsorted(self.nodes, factor_idx)
        if np.any(pos >= self.q) or np.any(self.nodes[np.minimum(pos, self.q - 1)]
                                           != factor_idx):
            raise ValueError("index outside closure")
        return pos

    def forward(self, X: np.ndarray) -> None:
        """X <- L_local^{-1} X, X is (q, m)."""
        Lp, Li, Lx = self.Lp, self.Li, self.Lx
        for t in range(self.q):
            xt = X[t]
            q0, q1 = Lp[t], Lp[t + 1]
            if q1 > q0:
                X[Li[q0:q1]] -= Lx[q0:q1, None] * xt
    def backward(self, X: np.ndarray) -> None:
        """X <- L_local^{-T} X, X is (q, m)."""
        Lp, Li, Lx = self.Lp, self.Li, self.Lx
        for t in range(self.q - 1, -1, -1):
            q0, q1 = Lp[t], Lp[t + 1]
            if q1 > q0:
                X[t] -= Lx[q0:q1] @ X[Li[q0:q1]]


def _closure_factor(F: LdlFactorization, clo: ClosureSet) -> _ClosureFactor:
    return _ClosureFactor(F, clo)


def partial_forward_solve(F: LdlFactorization, rows: np.ndarray,
                          values: np.ndarray, clo: ClosureSet | None = None,
                          local: _ClosureFactor | None = None) -> np.ndarray:
    """Solve L y = c for c supported on ``rows`` (original indices).

    Returns y restricted to the closure of ``rows``, shape (q, m); y is
    zero outside the closure.  ``values`` is (len(rows),) or (len(rows), m).
    """
    rows = np.asarray(rows, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    if values.shape[0] != rows.shape[0]:
        raise ValueError("rows and values disagree in length")
    if clo is None:
        clo = closure(F, rows)
    if local is None:
        local = _ClosureFactor(F, clo)
    X = np.zeros((local.q, values.shape[1]))
    X[local.positions(F.perm.inv[rows])] = values
    local.forward(X)
    return X


def partial_backward_solve(F: LdlFactorization, clo: ClosureSet,
                           values_on_closure: np.ndarray,
                           wanted: np.ndarray,
                           local: _ClosureFactor | None = None) -> np.ndarray:
    """Solve L^T y = c for c supported on the closure; return y[wanted].

    ``wanted`` holds original indices and must lie inside the closure.
    Rows of y inside the closure depend only on closure rows of c, so the
    computation never leaves the compact local factor.
    """
    if local is None:
        local = _ClosureFactor(F, clo)
    X = np.array(values_on_closure, dtype=np.float64)
    squeeze = X.ndim == 1
    if squeeze:
        X = X[:, None]
    if X.shape[0] != local.q:
        raise ValueError("values must cover the closure")
    local.backward(X)
    out = X[local.positions(F.perm.inv[np.asarray(wanted, dtype=np.int64)])]
    return out[:, 0] if squeeze else out


# -- diagnostics -------------------------------------------------------------


def estimate_condition(A: SparseMatrix, F: LdlFactorization,
                       iters: int = 30) -> float:
    """2-norm condition estimate by power iteration on A and on A^{-1}.

    Deterministic (fixed internal seed), cheap, and only an estimate; it
    is reported for diagnostics, never asserted against.
    """
    n = A.n
    if n == 0:
        return 1.0
    rng = np.random.default_rng(12345)
    v = rng.standard_normal(n)
    hi = 0.0
    for _ in range(iters):
        v = A.matvec(v)
        hi = np.linalg.norm(v)
        if hi == 0.0:
            return np.inf
        v /= hi
    w = rng.standard_normal(n)
    inv_hi = 0.0
    for _ in range(iters):
        w = solve(F, w)
        inv_hi = np.linalg.norm(w)
        if inv_hi == 0.0:
            break
        w /= inv_hi
    return float(hi * inv_hi)


def dump_factor(F: LdlFactorization, fh) -> None:
    """Text dump, one line per factor column: pivot, parent, L entries."""
    parent = F.etree.parent
    for j in range(F.n):
        sl = slice(F.Lp[j], F.Lp[j + 1])
        ents = " ".join(f"{i}:{v:.17g}" for i, v in zip(F.Li[sl], F.Lx[sl]))
        fh.write(f"col {j} orig {F.perm.perm[j]} parent {parent[j]} "
                 f"d {F.D[j]:.17g} | {ents}\n")
