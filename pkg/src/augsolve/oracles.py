"""Dense reference solvers for validating the update engine.

Everything here is O(n^3) and meant for small instances only: the
Sherman-Morrison-Woodbury single-equation form, the full augmented
system with a free J1 block, and the block-factorization identity that
ties the augmented matrix to the LDL^T factors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np

from .engine import UpdateSpec
from .ldl import LdlFactorization
from .sparse import SparseMatrix


def _dense(A) -> np.ndarray:
    if isinstance(A, SparseMatrix):
        return A.to_dense()
    return np.asarray(A, dtype=np.float64)


def smw_solve(A, u: UpdateSpec, b: np.ndarray, b_hat: np.ndarray) -> np.ndarray:
    """Single-equation Woodbury form for (A - HEH^T) x = b-effective.

    Evaluates x = A^{-1}b - A^{-1}H (E H^T A^{-1} H - I)^{-1}
    [E H^T A^{-1} b - H^T (b - b_hat)] densely.  Note the b on the first
    term: entries of b_hat outside S do not enter, so the equation solved
    is the one with right-hand side b off S and b_hat on S.
    """
    Ad = _dense(A)
    n = Ad.shape[0]
    S = u.indices
    H = np.zeros((n, u.m))
    H[S, np.arange(u.m)] = 1.0
    AinvH = np.linalg.solve(Ad, H)
    Ainvb = np.linalg.solve(Ad, np.asarray(b, dtype=np.float64))
    inner = u.E @ AinvH[S] - np.eye(u.m)
    rhs = u.E @ Ainvb[S] - (np.asarray(b) - np.asarray(b_hat))[S]
    return Ainvb - AinvH @ np.linalg.solve(inner, rhs)


@dataclass
class AugmentedOracle:
    """Dense augmented system [A J H; J^T C 0; H^T 0 0] with rhs [b; b_hat[S]; 0].

    J is fixed to A's columns off S (J2 = A21); the J1 block on S is a
    free choice and, by the independence lemma, does not affect x2 or the
    off-S part of x1.
    """

    n: int
    m: int
    J1: np.ndarray
    assembled: np.ndarray
    rhs: np.ndarray
    indices: np.ndarray = field(repr=False)

    def solve(self) -> SimpleNamespace:
        z = np.linalg.solve(self.assembled, self.rhs)
        n, m = self.n, self.m
        x1 = z[:n]
        x2 = z[n:n + m]
        x3 = z[n + m:]
        rest = np.setdiff1d(np.arange(n), self.indices)
        x12 = x1[rest]
        xhat = np.empty(n)
        xhat[self.indices] = x2
        xhat[rest] = x12
        return SimpleNamespace(xhat=xhat, x1=x1, x2=x2, x3=x3, x12=x12)


def assemble_augmented(A, u: UpdateSpec, b: np.ndarray, b_hat: np.ndarray,
                       j1_choice: str = "A11", seed: int = 0) -> AugmentedOracle:
    """Build the dense augmented system for the update.

    ``j1_choice`` is one of ``"A11"`` (canonical, making J = A H),
    ``"zero"``, or ``"random"`` (seeded standard normal).
    """
    Ad = _dense(A)
    n = Ad.shape[0]
    S = u.indices
    m = u.m
    if j1_choice == "A11":
        J1 = Ad[np.ix_(S, S)].copy()
    elif j1_choice == "zero":
        J1 = np.zeros((m, m))
    elif j1_choice == "random":
        J1 = np.random.default_rng(seed).standard_normal((m, m))
    else:
        raise ValueError(f"unknown j1_choice {j1_choice!r}")
    J = Ad[:, S].copy()
    J[S] = J1
    H = np.zeros((n, m))
    H[S, np.arange(m)] = 1.0
    C = Ad[np.ix_(S, S)] - u.E
    aug = np.zeros((n + 2 * m, n + 2 * m))
    aug[:n, :n] = Ad
    aug[:n, n:n + m] = J
    aug[:n, n + m:] = H
    aug[n:n + m, :n] = J.T
    aug[n:n + m, n:n + m] = C
    aug[n + m:, :n] = H.T
    rhs = np.concatenate([np.asarray(b, dtype=np.float64),
                          np.asarray(b_hat, dtype=np.float64)[S],
                          np.zeros(m)])
    return AugmentedOracle(n=n, m=m, J1=J1, assembled=aug, rhs=rhs, indices=S)


def block_factor_check(F: LdlFactorization, u: UpdateSpec) -> float:
    """Relative error of the augmented-matrix block factorization.

    Assembles Lhat = [L 0 0; H^T L I 0; H^T L^{-T} D^{-1} 0 I] and
    Dhat = blkdiag(D, -S1) in factor order and returns
    ||Lhat Dhat Lhat^T - Aug||_F / ||Aug||_F for the canonical J = A H.
    """
    n, m = F.n, u.m
    L = F.l_dense()
    D = F.D
    A = L @ np.diag(D) @ L.T  # permuted-order A
    Sp = F.perm.inv[u.indices]
    H = np.zeros((n, m))
    H[Sp, np.arange(m)] = 1.0
    J = A[:, Sp].copy()
    C = A[np.ix_(Sp, Sp)] - u.E
    aug = np.zeros((n + 2 * m, n + 2 * m))
    aug[:n, :n] = A
    aug[:n, n:n + m] = J
    aug[:n, n + m:] = H
    aug[n:n + m, :n] = J.T
    aug[n:n + m, n:n + m] = C
    aug[n + m:, :n] = H.T

    G = np.linalg.solve(L, H)  # L^{-1} H
    M = (G / D[:, None]).T @ G  # H^T A^{-1} H
    S1 = np.block([[u.E, np.eye(m)], [np.eye(m), M]])
    Lhat = np.zeros((n + 2 * m, n + 2 * m))
    Lhat[:n, :n] = L
    Lhat[n:n + m, :n] = H.T @ L
    Lhat[n:n + m, n:n + m] = np.eye(m)
    Lhat[n + m:, :n] = (G / D[:, None]).T  # H^T L^{-T} D^{-1}
    Lhat[n + m:, n + m:] = np.eye(m)
    Dhat = np.zeros((n + 2 * m, n + 2 * m))
    Dhat[:n, :n] = np.diag(D)
    Dhat[n:, n:] = -S1
    recon = Lhat @ Dhat @ Lhat.T
    return float(np.linalg.norm(recon - aug) / np.linalg.norm(aug))
