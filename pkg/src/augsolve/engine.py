"""Solution updates for A-hat = A - H E H^T without refactorization.

Given a factorization A = L D L^T and an update confined to a principal
submatrix (index set S of size m, symmetric E), the updated solution is
obtained from a small Schur-complement system instead of a new
factorization.  Two routes are provided:

* direct: form W = E (H^T A^{-1} H) by partial triangular solves over the
  elimination-tree closure of S, then solve the unsymmetric m-by-m system
  (W - I) x3 = E H^T x - H^T (b - b_hat) by dense LU;
* iterative: run full GMRES on the symmetric 2m-by-2m operator
  S1 = [[E, I], [I, H^T A^{-1} H]] applied matrix-free, never forming W.

Either way the update is finished by x_hat = x_base - A^{-1} H x3, one
partial forward solve plus one full backward solve.

b_hat may differ from b anywhere; when the difference leaves S the engine
solves A x_base = b_hat once instead of reusing the cached base solution,
which keeps the returned x_hat a solution of A-hat x = b_hat in all cases.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .ldl import ClosureSet, LdlFactorization, _closure_factor, closure, solve


class SingularSchur(ArithmeticError):
    """The m-by-m Schur system is numerically singular, i.e. the updated
    matrix A - HEH^T is singular (islanding produces exactly this)."""


class SingularOperator(ArithmeticError):
    """GMRES breakdown: the operator is singular on the Krylov subspace."""


class NoConvergence(RuntimeError):
    """GMRES missed the tolerance within max_it; carries the best iterate."""

    def __init__(self, iterations: int, residual: float, xhat: np.ndarray | None):
        self.iterations = int(iterations)
        self.residual = float(residual)
        self.xhat = xhat
        super().__init__(
            f"no convergence after {iterations} iterations, residual {residual:.3e}")


class UpdateSpec:
    """Principal-submatrix update: subtract E on the index set S.

    ``indices`` are sorted ascending with duplicates rejected; ``E`` is
    symmetrized on construction so downstream code can rely on E = E^T
    exactly.
    """

    __slots__ = ("indices", "E")

    def __init__(self, indices, E):
        ix = np.asarray(indices, dtype=np.int64).ravel()
        if ix.size == 0:
            raise ValueError("index set must be nonempty")
        ix = np.sort(ix)
        if np.any(np.diff(ix) == 0):
            raise ValueError("index set contains duplicates")
        E = np.asarray(E, dtype=np.float64)
        if E.shape != (ix.size, ix.size):
            raise ValueError(f"E must be {ix.size}x{ix.size}, got {E.shape}")
        if not np.all(np.isfinite(E)):
            raise ValueError("E contains nonfinite entries")
        ix.setflags(write=False)
        E = (E + E.T) / 2.0
        E.setflags(write=False)
        self.indices = ix
        self.E = E

    @property
    def m(self) -> int:
        return self.indices.size

    def __repr__(self) -> str:
        return f"UpdateSpec(m={self.m}, indices={self.indices.tolist()})"


@dataclass
class SolveReport:
    method: str
    iterations: int
    rho: int
    residual_s1_or_s2: float
    wall_time: float

    def to_json(self) -> dict:
        return {"method": self.method, "iterations": self.iterations,
                "rho": self.rho, "residual_s1_or_s2": self.residual_s1_or_s2,
                "wall_time": self.wall_time}


class _UpdateContext:
    """Closure machinery shared by both solve routes: the compact local
    factor over the closure of S and the local positions of S."""

    __slots__ = ("u", "clo", "local", "posS")

    def __init__(self, F: LdlFactorization, u: UpdateSpec):
        if u.indices[-1] >= F.n:
            raise ValueError("update index out of range")
        if u.m > F.n:
            raise ValueError(f"update size m={u.m} exceeds n={F.n}")
        if 2 * u.m >= F.n and F.n >= 8:
            warnings.warn(
                f"update touches m={u.m} of n={F.n} rows; the closure-based "
                "update has no advantage over refactorization here",
                RuntimeWarning, stacklevel=3)
        self.u = u
        self.clo = closure(F, u.indices)
        self.local = _closure_factor(F, self.clo)
        self.posS = self.local.positions(F.perm.inv[u.indices])

    def apply_hath(self, v3: np.ndarray) -> np.ndarray:
        """(H^T A^{-1} H) v3 via partial forward, scale, partial backward."""
        X = np.zeros((self.local.q, 1))
        X[self.posS, 0] = v3
        self.local.forward(X)
        X /= self.local.D[:, None]
        self.local.backward(X)
        return X[self.posS, 0]


class SchurSystem(_UpdateContext):
    """Direct-route data: X = L^{-1}(HE), Y = L^{-1}H (both stored compactly
    on the closure), W = E H^T A^{-1} H, S2 = W - I and its LU."""

    __slots__ = ("X", "Y", "W", "S2", "lu")

    def __init__(self, F: LdlFactorization, u: UpdateSpec):
        super().__init__(F, u)
        m = u.m
        B = np.zeros((self.local.q, 2 * m))
        B[self.posS, :m] = u.E
        B[self.posS, m:] = np.eye(m)
        self.local.forward(B)
        self.X = B[:, :m]
        self.Y = B[:, m:]
        # W^T = Y^T D^{-1} X, so W = X^T D^{-1} Y transposed back
        Wt = self.Y.T @ (self.X / self.local.D[:, None])
        self.W = Wt.T
        self.S2 = self.W - np.eye(m)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # scipy warns on exact singularity
            self.lu = lu_factor(self.S2)
        piv = np.abs(np.diag(self.lu[0]))
        tol = 1e-12 * np.abs(self.S2).sum(axis=1).max()
        if piv.min() <= tol:
            raise SingularSchur(
                f"Schur pivot {piv.min():.3e} at or below {tol:.3e}; "
                "the updated matrix is singular")


def build_schur(F: LdlFactorization, u: UpdateSpec) -> SchurSystem:
    """Prepare the direct route: partial solves for X and Y, W = (Y^T D^{-1} X)^T,
    S2 = W - I, dense LU of S2.

    Raises
    ------
    SingularSchur
        When the LU of S2 meets a pivot at or below 1e-12 * ||S2||_inf,
        meaning the updated matrix is singular (e.g. the update islands
        part of a grid).
    """
    return SchurSystem(F, u)


def s1_apply(F: LdlFactorization, u: UpdateSpec, v: np.ndarray,
             ctx: _UpdateContext | None = None) -> np.ndarray:
    """Apply S1 = [[E, I], [I, H^T A^{-1} H]] to v = [v2; v3] matrix-free."""
    v = np.asarray(v, dtype=np.float64)
    m = u.m
    if v.shape != (2 * m,):
        raise ValueError(f"expected vector of length {2 * m}, got {v.shape}")
    if ctx is None:
        ctx = _UpdateContext(F, u)
    v2, v3 = v[:m], v[m:]
    return np.concatenate([u.E @ v2 + v3, v2 + ctx.apply_hath(v3)])


def recover_solution(F: LdlFactorization, x_base: np.ndarray, x3: np.ndarray,
                     S: np.ndarray, ctx: _UpdateContext | None = None) -> np.ndarray:
    """x_hat = x_base - A^{-1} H x3 without forming A^{-1}.

    One partial forward solve over the closure of S, a diagonal scale, a
    full backward solve, and a subtraction.
    """
    x3 = np.asarray(x3, dtype=np.float64)
    S = np.asarray(S, dtype=np.int64)
    if x3.shape != (S.size,):
        raise ValueError("x3 length must match the index set")
    z = np.zeros(F.n)
    if ctx is not None:
        local = ctx.local
        Xl = np.zeros((local.q, 1))
        Xl[ctx.posS, 0] = x3
        local.forward(Xl)
        z[ctx.clo.nodes] = Xl[:, 0] / local.D
    else:
        clo = closure(F, S)
        local = _closure_factor(F, clo)
        Xl = np.zeros((local.q, 1))
        Xl[local.positions(F.perm.inv[S]), 0] = x3
        local.forward(Xl)
        z[clo.nodes] = Xl[:, 0] / local.D
    # full backward solve: the correction is dense in general
    Lp, Li, Lx = F.Lp, F.Li, F.Lx
    for j in range(F.n - 1, -1, -1):
        q0, q1 = Lp[j], Lp[j + 1]
        if q1 > q0:
            z[j] -= np.dot(Lx[q0:q1], z[Li[q0:q1]])
    return x_base - z[F.perm.inv]


def _split_rhs(F, x_orig, u, b, b_hat):
    """Fast path reuses x_orig when b_hat - b lives on S; otherwise one
    full solve for A x_base = b_hat replaces it (r1 then vanishes)."""
    delta = np.asarray(b_hat, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    outside = delta.copy()
    outside[u.indices] = 0.0
    if np.any(outside != 0.0):
        x_base = solve(F, b_hat)
        r1 = np.zeros(u.m)
    else:
        x_base = np.asarray(x_orig, dtype=np.float64)
        r1 = -delta[u.indices]
    return x_base, r1


def solve_direct(F: LdlFactorization, x_orig: np.ndarray, u: UpdateSpec,
                 b: np.ndarray, b_hat: np.ndarray,
                 schur: SchurSystem | None = None) -> tuple[np.ndarray, SolveReport]:
    """Direct route: S2 x3 = E H^T x_base - H^T (b - b_hat), then recovery.

    Pass a prebuilt ``schur`` to amortize preparation over many right-hand
    sides; otherwise one is built here (and its cost is included in
    ``wall_time``).
    """
    t0 = time.perf_counter()
    if schur is None:
        schur = build_schur(F, u)
    x_base, r1 = _split_rhs(F, x_orig, u, b, b_hat)
    rhs = u.E @ x_base[u.indices] - r1
    x3 = lu_solve(schur.lu, rhs)
    xhat = recover_solution(F, x_base, x3, u.indices, ctx=schur)
    wall = time.perf_counter() - t0
    denom = np.linalg.norm(rhs)
    res = float(np.linalg.norm(schur.S2 @ x3 - rhs) / denom) if denom else 0.0
    return xhat, SolveReport("direct", 0, schur.clo.rho, res, wall)


def _gmres(apply_fn, rhs: np.ndarray, tol: float, max_it: int):
    """Full GMRES, modified Gram-Schmidt, Givens-rotation least squares.

    Returns (y, iterations, relative_residual).  Raises SingularOperator
    on breakdown with a stagnant subspace and _GmresFailure past max_it.
    """
    nb = np.linalg.norm(rhs)
    if nb == 0.0:
        return np.zeros_like(rhs), 0, 0.0
    dim = rhs.shape[0]
    V = [rhs / nb]
    Hcols: list[np.ndarray] = []
    cs: list[float] = []
    sn: list[float] = []
    g = [nb]

    def assemble(k):
        # upper triangular R (k x k) from rotated Hessenberg columns
        R = np.zeros((k, k))
        for c in range(k):
            R[:c + 1, c] = Hcols[c][:c + 1]
        y = np.linalg.solve(R, np.array(g[:k]))
        return np.column_stack(V[:k]) @ y

    for k in range(1, max_it + 1):
        w = apply_fn(V[-1])
        h = np.zeros(k + 1)
        for i in range(k):
            h[i] = np.dot(V[i], w)
            w = w - h[i] * V[i]
        wnorm = float(np.linalg.norm(w))
        h[k] = wnorm
        for i in range(k - 1):
            t = cs[i] * h[i] + sn[i] * h[i + 1]
            h[i + 1] = -sn[i] * h[i] + cs[i] * h[i + 1]
            h[i] = t
        r = float(np.hypot(h[k - 1], h[k]))
        if r == 0.0:
            raise SingularOperator("GMRES breakdown: stagnant Krylov subspace")
        c, s = h[k - 1] / r, h[k] / r
        cs.append(c)
        sn.append(s)
        h[k - 1] = r
        h[k] = 0.0
        Hcols.append(h[:k].copy())
        g.append(-s * g[k - 1])
        g[k - 1] = c * g[k - 1]
        relres = abs(g[k]) / nb
        if relres <= tol:
            return assemble(k), k, relres
        if k < max_it:
            if wnorm == 0.0:
                # exhausted Krylov subspace with residual above tol: for a
                # nonsingular operator this cannot happen
                raise SingularOperator("GMRES breakdown before convergence")
            V.append(w / wnorm)
    raise _GmresFailure(assemble(max_it), max_it, abs(g[max_it]) / nb)


class _GmresFailure(Exception):
    def __init__(self, y_best, iterations, residual):
        self.y_best = y_best
        self.iterations = iterations
        self.residual = residual
        super().__init__("gmres did not converge")


def solve_iterative(F: LdlFactorization, x_orig: np.ndarray, u: UpdateSpec,
                    b: np.ndarray, b_hat: np.ndarray, tol: float = 1e-12,
                    max_it: int | None = None,
                    ctx: _UpdateContext | None = None) -> tuple[np.ndarray, SolveReport]:
    """Iterative route: full GMRES on S1 [x2; x3] = [H^T(b - b_hat); H^T x_base].

    The operator is applied matrix-free through partial solves, so W and
    S2 are never formed.  Defaults: tol 1e-12, max_it = 4m.

    Raises
    ------
    NoConvergence
        Past max_it; the exception carries the best iterate's x_hat.
    SingularOperator
        On Krylov breakdown (singular updated matrix).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    t0 = time.perf_counter()
    m = u.m
    if max_it is None:
        max_it = 4 * m
    if ctx is None:
        ctx = _UpdateContext(F, u)
    x_base, r1 = _split_rhs(F, x_orig, u, b, b_hat)
    rhs = np.concatenate([r1, x_base[u.indices]])

    def op(v):
        v2, v3 = v[:m], v[m:]
        return np.concatenate([u.E @ v2 + v3, v2 + ctx.apply_hath(v3)])

    try:
        y, it, relres = _gmres(op, rhs, tol, max_it)
    except _GmresFailure as fail:
        xh = recover_solution(F, x_base, fail.y_best[m:], u.indices, ctx=ctx)
        raise NoConvergence(fail.iterations, fail.residual, xh) from None
    xhat = recover_solution(F, x_base, y[m:], u.indices, ctx=ctx)
    wall = time.perf_counter() - t0
    return xhat, SolveReport("iterative", it, ctx.clo.rho, float(relres), wall)
