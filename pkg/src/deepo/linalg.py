"""Dense linear-algebra kernels: Lyapunov/Riccati solvers, pseudoinverses,
projectors and a few spectral helpers.

Everything here works on plain ``numpy`` arrays. Symmetric results are
symmetrized before they are returned so downstream code can rely on exact
symmetry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    EigenFailure,
    NoConvergence,
    NotPSD,
    RankDeficient,
    SolveFailure,
    Unstable,
)

STABILITY_MARGIN = 1e-9
RANK_TOL = 1e-8


def sym(M: np.ndarray) -> np.ndarray:
    """Return the symmetric part of ``M``."""
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class Projector:
    """Orthogonal projector onto the nullspace of some matrix."""

    matrix: np.ndarray
    source: str = ""

    def __matmul__(self, other):
        return self.matrix @ other

    @property
    def rank(self) -> int:
        return int(round(np.trace(self.matrix)))


def spectral_radius(M: np.ndarray) -> float:
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0.0
    try:
        eig = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc
    return float(np.max(np.abs(eig)))


def _check_stable(A_cl: np.ndarray, margin: float) -> None:
    rho = spectral_radius(A_cl)
    if not rho < 1.0 - margin:
        raise Unstable(rho, margin)


def solve_discrete_lyapunov_obs(
    A_cl: np.ndarray, W: np.ndarray, stability_margin: float = STABILITY_MARGIN
) -> np.ndarray:
    """Solve ``P = W + A_cl^T P A_cl``.

    Uses the vectorized form ``(I - A_cl^T kron A_cl^T) vec(P) = vec(W)``,
    which costs O(n^6) and is meant for small n (n <= 50).
    """
    A_cl = np.asarray(A_cl, dtype=float)
    W = sym(W)
    n = A_cl.shape[0]
    if A_cl.shape != (n, n) or W.shape != (n, n):
        raise ValueError(f"shape mismatch: A_cl {A_cl.shape}, W {W.shape}")
    _check_stable(A_cl, stability_margin)
    # row-major vec: vec(X P Y) = kron(X, Y^T) vec(P)
    lhs = np.eye(n * n) - np.kron(A_cl.T, A_cl.T)
    try:
        p = np.linalg.solve(lhs, W.reshape(-1))
    except np.linalg.LinAlgError as exc:
        raise SolveFailure(str(exc)) from exc
    return sym(p.reshape(n, n))


def solve_discrete_lyapunov_ctrl(
    A_cl: np.ndarray, W: np.ndarray, stability_margin: float = STABILITY_MARGIN
) -> np.ndarray:
    """Solve ``S = W + A_cl S A_cl^T``."""
    return solve_discrete_lyapunov_obs(np.asarray(A_cl, dtype=float).T, W, stability_margin)


def dare_residual(A, B, Q, R, P) -> float:
    BtP = B.T @ P
    rhs = A.T @ P @ A + Q - A.T @ P @ B @ np.linalg.solve(R + BtP @ B, BtP @ A)
    return float(np.linalg.norm(P - rhs))


def solve_dare(
    A: np.ndarray,
    B: np.ndarray,
    Q: np.ndarray,
    R: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 100_000,
) -> tuple[np.ndarray, np.ndarray]:
    """Stabilizing solution of the discrete algebraic Riccati equation.

    Runs the Riccati value iteration from ``P_0 = Q`` until successive iterates
    differ by at most ``tol * (1 + ||P||_F)``.

    Returns ``(P_star, K_star)`` with ``K_star = -(R + B^T P B)^{-1} B^T P A``,
    i.e. the optimal law is ``u = K_star x``.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    Q = sym(Q)
    R = sym(R)
    P = Q.copy()
    step = np.inf
    for it in range(1, max_iter + 1):
        BtP = B.T @ P
        P_next = sym(A.T @ P @ A + Q - A.T @ P @ B @ np.linalg.solve(R + BtP @ B, BtP @ A))
        step = np.linalg.norm(P_next - P)
        P = P_next
        if not np.isfinite(step):
            break
        if step <= tol * (1.0 + np.linalg.norm(P)):
            break
    else:
        raise NoConvergence(max_iter, step)
    if not np.isfinite(step):
        raise NoConvergence(it, step)
    K = -np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    return P, K


def right_pseudoinverse(M: np.ndarray, rank_tol: float = RANK_TOL) -> np.ndarray:
    """``M^T (M M^T)^{-1}`` for a full-row-rank ``M`` (p <= q)."""
    M = np.asarray(M, dtype=float)
    p, q = M.shape
    if p > q:
        raise RankDeficient(0.0, f"{p}x{q} matrix (more rows than columns)")
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[-1] <= rank_tol * max(1.0, s[0]):
        raise RankDeficient(s[-1] if s.size else 0.0)
    return M.T @ np.linalg.solve(M @ M.T, np.eye(p))


def nullspace_projector(M: np.ndarray, source: str = "", rank_tol: float = RANK_TOL) -> Projector:
    """Projector ``I - M^dagger M`` onto the nullspace of a full-row-rank ``M``."""
    M = np.asarray(M, dtype=float)
    Pi = np.eye(M.shape[1]) - right_pseudoinverse(M, rank_tol) @ M
    return Projector(sym(Pi), source)


def sym_sqrt(M: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Symmetric PSD square root; eigenvalues in ``[-tol, 0)`` are clamped to 0."""
    w, V = np.linalg.eigh(sym(M))
    if w.size and w[0] < -tol:
        raise NotPSD(w[0])
    return sym((V * np.sqrt(np.clip(w, 0.0, None))) @ V.T)


def min_eig(M: np.ndarray) -> float:
    """Smallest eigenvalue of the symmetric part of ``M``."""
    return float(np.linalg.eigvalsh(sym(M))[0])


def controllability_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def matrix_rank(M: np.ndarray, rank_tol: float = RANK_TOL) -> int:
    s = np.linalg.svd(np.asarray(M, dtype=float), compute_uv=False)
    if s.size == 0:
        return 0
    return int(np.sum(s > rank_tol * max(1.0, s[0])))
