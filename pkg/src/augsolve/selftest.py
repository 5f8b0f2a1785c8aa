"""Built-in property suites and the random instance generators they use.

The suites run the same invariants the test suite checks, sized to finish
in seconds, so a deployment can verify its numerics in place.  Every case
is driven by a recorded seed; a failure report carries the seed that
reproduces it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sparse import SparseMatrix

# -- random instances --------------------------------------------------------


def random_sparse_spd(rng: np.random.Generator, n: int,
                      avg_offdiag: float = 2.0) -> SparseMatrix:
    """Random sparse symmetric positive definite matrix, lower storage.

    Off-diagonal entries are placed uniformly at random; diagonals are set
    to the absolute row sum plus a positive margin, which forces strict
    diagonal dominance and hence definiteness.
    """
    target = int(avg_offdiag * n)
    i = rng.integers(0, n, size=target)
    j = rng.integers(0, n, size=target)
    keep = i > j
    i, j = i[keep], j[keep]
    v = rng.uniform(-1.0, 1.0, size=i.size)
    rowsum = np.zeros(n)
    np.add.at(rowsum, i, np.abs(v))
    np.add.at(rowsum, j, np.abs(v))
    # duplicates sum in from_triplets; dominance still holds since
    # |sum of dups| <= sum of |dups| which is what rowsum accumulated
    diag = rowsum + rng.uniform(0.5, 2.0, size=n)
    entries = [(int(a), int(b), float(x)) for a, b, x in zip(i, j, v)]
    entries += [(k, k, float(diag[k])) for k in range(n)]
    return SparseMatrix.from_triplets(entries, n)


def random_index_set(rng: np.random.Generator, n: int, m: int) -> np.ndarray:
    """m distinct indices in [0, n), ascending."""
    return np.sort(rng.choice(n, size=m, replace=False)).astype(np.int64)


@dataclass
class SuiteResult:
    name: str
    cases: int
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


@dataclass
class SelftestReport:
    seed: int
    suites: list[SuiteResult]

    @property
    def ok(self) -> bool:
        return all(s.ok for s in self.suites)

    def to_json(self) -> dict:
        return {"seed": self.seed, "ok": self.ok,
                "suites": [{"name": s.name, "cases": s.cases,
                            "failures": s.failures} for s in self.suites]}


# -- property suites ----------------------------------------------------------


def _case_sparse_roundtrip(rng: np.random.Generator, n_max: int) -> str | None:
    import os
    import tempfile

    from .sparse import Permutation, mm_read, mm_write
    n = int(rng.integers(5, max(6, n_max + 1)))
    A = random_sparse_spd(rng, n)
    dense = A.to_dense()
    v = rng.standard_normal(n)
    if np.linalg.norm(A.matvec(v) - dense @ v) > 1e-12 * np.linalg.norm(dense @ v):
        return "matvec disagrees with the dense product"
    fd, path = tempfile.mkstemp(suffix=".mtx")
    os.close(fd)
    try:
        mm_write(A, path)
        B = mm_read(path)
    finally:
        os.unlink(path)
    if not np.array_equal(B.to_dense(), dense):
        return "matrix market round trip is not exact"
    p = Permutation(rng.permutation(n))
    P = A.permute_symmetric(p).to_dense()
    if not np.array_equal(P, dense[np.ix_(p.perm, p.perm)]):
        return "symmetric permutation disagrees with dense reindexing"
    return None


def _case_factor_reconstruction(rng: np.random.Generator, n_max: int) -> str | None:
    from .ldl import factorize, solve
    from .ordering import fill_reducing_order
    n = int(rng.integers(8, max(9, n_max + 1)))
    A = random_sparse_spd(rng, n)
    F = factorize(A, fill_reducing_order(A))
    dense = A.to_dense()
    L = F.l_dense()
    rebuilt = L @ np.diag(F.D) @ L.T
    target = dense[np.ix_(F.perm.perm, F.perm.perm)]
    err = np.linalg.norm(rebuilt - target) / np.linalg.norm(target)
    if err > 1e-12:
        return f"factor reconstruction error {err:.3e}"
    b = rng.standard_normal(n)
    x = solve(F, b)
    ref = np.linalg.solve(dense, b)
    rel = np.linalg.norm(x - ref) / np.linalg.norm(ref)
    if rel > 1e-10:
        return f"solve disagrees with the dense reference by {rel:.3e}"
    return None


def _case_closure_containment(rng: np.random.Generator, n_max: int) -> str | None:
    import scipy.linalg

    from .ldl import closure, factorize, partial_forward_solve
    from .ordering import fill_reducing_order
    n = int(rng.integers(8, max(9, n_max + 1)))
    A = random_sparse_spd(rng, n)
    F = factorize(A, fill_reducing_order(A))
    m = int(rng.integers(1, min(6, n)))
    S = random_index_set(rng, n, m)
    clo = closure(F, S)
    node_set = set(clo.nodes.tolist())
    for j in clo.nodes.tolist():
        parent = int(F.etree.parent[j])
        if parent != -1 and parent not in node_set:
            return f"closure is not closed under the elimination tree at {j}"
    if clo.rho != clo.nodes.size + int(F.colcount[clo.nodes].sum()):
        return "rho does not match the closure column counts"
    vals = rng.standard_normal(m)
    X = partial_forward_solve(F, S, vals, clo=clo)
    c = np.zeros(n)
    c[F.perm.inv[S]] = vals
    y = scipy.linalg.solve_triangular(F.l_dense(), c, lower=True,
                                      unit_diagonal=True)
    outside = np.setdiff1d(np.arange(n), clo.nodes)
    if outside.size and np.any(y[outside] != 0.0):
        return "forward substitution left the closure"
    err = np.linalg.norm(X[:, 0] - y[clo.nodes])
    if err > 1e-11 * max(1.0, np.linalg.norm(y)):
        return f"partial forward solve disagrees with the dense one by {err:.3e}"
    return None


def _case_method_agreement(rng: np.random.Generator, n_max: int) -> str | None:
    from .engine import UpdateSpec, solve_direct, solve_iterative
    from .ldl import factorize, solve
    from .oracles import assemble_augmented, smw_solve
    from .ordering import fill_reducing_order
    n = int(rng.integers(10, max(11, n_max + 1)))
    A = random_sparse_spd(rng, n)
    m = int(rng.integers(1, min(6, n // 3 + 1)))  # keep 2m < n, no size warning
    S = random_index_set(rng, n, m)
    G = rng.uniform(-1.0, 1.0, size=(m, m))
    u = UpdateSpec(S, -(G @ G.T))  # subtracting a negative term keeps Ahat definite
    b = rng.standard_normal(n)
    b_hat = b.copy()
    b_hat[S] += rng.standard_normal(m)
    dense = A.to_dense()
    Ahat = dense.copy()
    Ahat[np.ix_(S, S)] -= u.E
    ref = np.linalg.solve(Ahat, b_hat)
    scale = np.linalg.norm(ref)
    F = factorize(A, fill_reducing_order(A))
    x_orig = solve(F, b)
    candidates = {
        "direct": solve_direct(F, x_orig, u, b, b_hat)[0],
        "gmres": solve_iterative(F, x_orig, u, b, b_hat)[0],
        "dense_restricted_update": smw_solve(dense, u, b, b_hat),
        "augmented": assemble_augmented(dense, u, b, b_hat).solve().xhat,
    }
    for name, x in candidates.items():
        err = np.linalg.norm(x - ref)
        if err > 1e-8 * scale:
            return f"{name} disagrees with the dense reference by {err:.3e}"
    resid = np.linalg.norm(Ahat @ candidates["direct"] - b_hat)
    if resid > 1e-9 * max(1.0, np.linalg.norm(b_hat)):
        return f"direct-method residual {resid:.3e}"
    return None


def _case_laplacian_update(rng: np.random.Generator, n_max: int) -> str | None:
    from .grid import (Contingency, build_dc, contingency_update,
                       reduced_system, synthetic_grid)
    n = int(rng.integers(20, max(21, 3 * n_max)))
    case = synthetic_grid(n, avg_degree=3.0, seed=int(rng.integers(2 ** 31)))
    model = build_dc(case)
    live = case.in_service_branches()
    k = int(rng.integers(1, 4))
    c = Contingency(tuple(int(x) for x in
                          rng.choice(live, size=k, replace=False)))
    u = contingency_update(model, c)
    Bhat = model.B.to_dense()
    Bhat[np.ix_(u.indices, u.indices)] -= u.E
    B2, _, _, _, _ = reduced_system(case, exclude_branches=c.branch_ids)
    err = np.abs(Bhat - B2.to_dense()).max()
    if err > 1e-14 * np.abs(Bhat).max():
        return f"updated and rebuilt matrices differ by {err:.3e}"
    return None


def _case_block_factorization(rng: np.random.Generator, n_max: int) -> str | None:
    from .engine import UpdateSpec
    from .ldl import factorize
    from .oracles import block_factor_check
    from .ordering import fill_reducing_order
    n = int(rng.integers(8, max(9, min(40, n_max) + 1)))
    A = random_sparse_spd(rng, n)
    F = factorize(A, fill_reducing_order(A))
    m = int(rng.integers(1, min(5, n // 2 + 1)))
    S = random_index_set(rng, n, m)
    E = rng.uniform(-1.0, 1.0, size=(m, m))
    u = UpdateSpec(S, E + E.T)
    err = block_factor_check(F, u)
    if err > 1e-11:
        return f"block factorization identity violated by {err:.3e}"
    return None


_SUITES = (
    ("sparse_roundtrip", 10, _case_sparse_roundtrip),
    ("factor_reconstruction", 10, _case_factor_reconstruction),
    ("closure_containment", 10, _case_closure_containment),
    ("method_agreement", 8, _case_method_agreement),
    ("laplacian_update", 6, _case_laplacian_update),
    ("block_factorization", 8, _case_block_factorization),
)


def run_selftest(n_max: int = 60, seed: int = 0) -> SelftestReport:
    """Run every property suite; failures carry the seed that reproduces them."""
    if n_max < 12:
        raise ValueError("n_max must be at least 12")
    master = np.random.default_rng(seed)
    suites = []
    for name, count, fn in _SUITES:
        result = SuiteResult(name=name, cases=count)
        for _ in range(count):
            case_seed = int(master.integers(0, 2 ** 63 - 1))
            try:
                detail = fn(np.random.default_rng(case_seed), n_max)
            except Exception as exc:  # a crash is a failure, not an abort
                detail = f"{type(exc).__name__}: {exc}"
            if detail:
                result.failures.append(f"seed {case_seed}: {detail}")
        suites.append(result)
    return SelftestReport(seed=seed, suites=suites)
