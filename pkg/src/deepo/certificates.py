"""Numerical certificates for the theory behind DeePO.

* the convex reparameterization ``(L, Sigma) = (G Sigma_G, Sigma_G)`` with
  objective ``f(L, Sigma) = Tr{Q Sigma} + Tr{L Sigma^-1 L^T U^T R U}``,
* Monte-Carlo estimates of the strong-convexity and gradient-dominance
  constants over a sublevel set (sample statistics, not the true constants),
* the model-based Riccati oracle and the flat solution set ``G* + N(D_-)``,
* central finite differences used as independent derivative oracles.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import core, linalg
from .data import DataMatrices, SystemModel
from .errors import InfeasiblePerturbation, SingularSigma, Unstable


@dataclass(frozen=True)
class ConvexPoint:
    L: np.ndarray
    Sigma: np.ndarray


def from_policy(G, data: DataMatrices, stability_margin: float = linalg.STABILITY_MARGIN) -> ConvexPoint:
    core.check_feasible(G, data, stability_margin)
    Sigma = linalg.solve_discrete_lyapunov_ctrl(data.X_plus @ G, np.eye(data.n), stability_margin)
    return ConvexPoint(np.asarray(G, dtype=float) @ Sigma, Sigma)


def _check_sigma(Sigma, tol=1e-10):
    lam = linalg.min_eig(Sigma)
    if lam <= tol:
        raise SingularSigma(lam)


def to_policy(point: ConvexPoint) -> np.ndarray:
    """``G = L Sigma^-1``. Feasibility of the result is not checked here."""
    _check_sigma(point.Sigma)
    return np.linalg.solve(point.Sigma.T, point.L.T).T


def lmi_matrix(point: ConvexPoint, data: DataMatrices) -> np.ndarray:
    n = data.n
    XL = data.X_plus @ point.L
    return linalg.sym(np.block([[point.Sigma - np.eye(n), XL], [XL.T, point.Sigma]]))


def lmi_min_eig(point: ConvexPoint, data: DataMatrices) -> float:
    return linalg.min_eig(lmi_matrix(point, data))


def linear_residual(point: ConvexPoint, data: DataMatrices) -> float:
    return float(np.linalg.norm(point.Sigma - data.X_minus @ point.L))


def evaluate_f(point: ConvexPoint, data: DataMatrices, Q, R) -> float:
    _check_sigma(point.Sigma)
    L, S = point.L, point.Sigma
    quad = L @ np.linalg.solve(S, L.T)
    return float(np.trace(np.asarray(Q) @ S) + np.trace(quad @ data.input_weight(R)))


def convex_hessian_action(point: ConvexPoint, L_dir, S_dir, data: DataMatrices, R) -> float:
    """``2 ||R^{1/2} (U L~ - U L Sigma^-1 Sigma~) Sigma^{-1/2}||_F^2``."""
    _check_sigma(point.Sigma)
    S_inv = np.linalg.inv(point.Sigma)
    U = data.U_minus
    inner = U @ np.asarray(L_dir) - U @ point.L @ S_inv @ np.asarray(S_dir)
    M = linalg.sym_sqrt(np.asarray(R, dtype=float)) @ inner @ linalg.sym_sqrt(linalg.sym(S_inv))
    return float(2.0 * np.linalg.norm(M, "fro") ** 2)


def random_feasible_direction(data: DataMatrices, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Unit-norm ``(L~, Sigma~)`` with ``Sigma~`` symmetric and ``X_- L~ = Sigma~``."""
    S = linalg.sym(rng.standard_normal((data.n, data.n)))
    L = data.X_pinv @ S + data.Pi_Xminus.matrix @ rng.standard_normal((data.T, data.n))
    nrm = np.sqrt(np.linalg.norm(L) ** 2 + np.linalg.norm(S) ** 2)
    return L / nrm, S / nrm


@dataclass(frozen=True)
class ConvexityEstimate:
    alpha_hat: float
    argmin: int
    samples: int
    min_hessian: float


def estimate_strong_convexity(points, dirs, data: DataMatrices, R) -> ConvexityEstimate:
    """Half the smallest sampled Hessian value over (point, direction) pairs."""
    vals = np.array(
        [convex_hessian_action(p, Ld, Sd, data, R) for p, (Ld, Sd) in zip(points, dirs)]
    )
    i = int(np.argmin(vals))
    return ConvexityEstimate(float(vals[i] / 2.0), i, len(vals), float(vals.min()))


@dataclass(frozen=True)
class DominanceEstimate:
    """``mu_hat = max(sampled ratio, local bound)``; ``argmax`` is -1 when the
    local bound dominates or no sample was usable."""

    mu_hat: float
    argmax: int
    samples: int
    used: int
    sampled: float = 0.0
    local: float = 0.0


def dominance_ratio(G, data, Q, R, J_star) -> tuple[float, float]:
    """``(J(G) - J*, ||Pi_{X_-} grad J(G)||_F^2)``."""
    ev = core.evaluate(G, data, Q, R)
    pg = data.Pi_Xminus.matrix @ ev.grad
    return ev.cost - J_star, float(np.linalg.norm(pg) ** 2)


def gain_directions(data: DataMatrices) -> np.ndarray:
    """Orthonormal basis (columns, row-major vec) of ``{D_-^dagger [dK; 0]}``,
    the directions that change the gain while keeping ``X_- G = I``."""
    m, n = data.m, data.n
    cols = []
    for i in range(m * n):
        dK = np.zeros(m * n)
        dK[i] = 1.0
        cols.append((data.D_pinv @ np.vstack([dK.reshape(m, n), np.zeros((n, n))])).ravel())
    basis, _ = np.linalg.qr(np.array(cols).T)
    return basis


def local_dominance_bound(G_star, data: DataMatrices, Q, R) -> float:
    """Limit of the dominance ratio at the optimum, ``1 / (2 lambda_min)`` of the
    Hessian restricted to gain-changing feasible directions.

    For ``Z`` in that subspace ``<Z, Pi_X H Z> = <Z, H Z>``, so to second order
    ``gap / ||Pi_X grad||^2 <= ||Z||^2 / (2 <Z, H Z>)``. Directions in the
    nullspace of ``D_-`` are excluded since ``J`` is flat along them.
    """
    ev = core.evaluate(G_star, data, Q, R)
    W = data.input_weight(R)
    basis = gain_directions(data)
    shape = np.asarray(G_star).shape
    q = lambda z: core.hessian_quadratic_form(ev, z.reshape(shape), data, W)
    k = basis.shape[1]
    H = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            bi, bj = basis[:, i], basis[:, j]
            H[i, j] = H[j, i] = (q(bi + bj) - q(bi - bj)) / 4.0
    lam = float(np.linalg.eigvalsh(H)[0])
    return np.inf if lam <= 0 else 1.0 / (2.0 * lam)


def estimate_gradient_dominance(
    points,
    data: DataMatrices,
    Q,
    R,
    J_star: float,
    gap_floor: float | None = None,
    G_star=None,
) -> DominanceEstimate:
    """Largest sampled ``(J(G) - J*) / ||Pi_{X_-} grad J(G)||_F^2``.

    Random samples rarely land close to the optimum along its softest
    direction, where the ratio peaks, so when ``G_star`` is given the local
    bound from :func:`local_dominance_bound` is folded in. Samples with gap
    below ``gap_floor`` (default ``1e-10 * J*``, where rounding in ``J`` and
    ``J*`` starts to move the ratio) or projected gradient below 1e-12 are
    skipped.
    """
    if gap_floor is None:
        gap_floor = 1e-10 * abs(J_star)
    best, arg, used = 0.0, -1, 0
    for i, G in enumerate(points):
        gap, g2 = dominance_ratio(G, data, Q, R, J_star)
        if gap <= gap_floor or g2 <= 1e-24:
            continue
        used += 1
        if gap / g2 > best:
            best, arg = gap / g2, i
    local = 0.0 if G_star is None else local_dominance_bound(G_star, data, Q, R)
    if local > best:
        return DominanceEstimate(local, -1, len(points), used, best, local)
    return DominanceEstimate(best, arg, len(points), used, best, local)


def sample_sublevel(
    anchors,
    a: float,
    data: DataMatrices,
    Q,
    R,
    count: int,
    seed: int = 0,
    max_attempts: int | None = None,
) -> list[np.ndarray]:
    """Feasible policies with ``J <= a`` built around ``anchors``.

    Each draw takes a random convex combination of two anchors (which keeps
    ``X_- G = I``) and adds a nullspace perturbation of log-uniform size; draws
    that are unstable or exceed ``a`` are rejected.
    """
    rng = np.random.default_rng(seed)
    anchors = [np.asarray(G, dtype=float) for G in anchors]
    Pi_X = data.Pi_Xminus.matrix
    max_attempts = max_attempts or 50 * count
    out = []
    for _ in range(max_attempts):
        if len(out) >= count:
            break
        i, j = rng.integers(len(anchors), size=2)
        th = rng.uniform()
        G = th * anchors[i] + (1 - th) * anchors[j]
        D = Pi_X @ rng.standard_normal(G.shape)
        G = G + 10 ** rng.uniform(-4, 0) * np.linalg.norm(G) * D / np.linalg.norm(D)
        try:
            if core.cost(G, data, Q, R) <= a:
                out.append(G)
        except Unstable:
            continue
    if len(out) < count:
        raise RuntimeError(f"only {len(out)} of {count} sublevel samples accepted")
    return out


# --- model-based oracle ----------------------------------------------------


@dataclass(frozen=True)
class OracleSolution:
    K_star: np.ndarray
    P_star: np.ndarray
    J_star: float
    G_star: np.ndarray | None = None


def riccati_oracle(system: SystemModel, data: DataMatrices | None = None) -> OracleSolution:
    """Optimal LQR gain for the true model; ``J* = Tr P*`` since the initial
    state has identity covariance. With ``data``, also the minimum-norm
    optimal policy ``G* = D_-^dagger [K*; I]``."""
    P, K = linalg.solve_dare(system.A, system.B, system.Q, system.R)
    G = None
    if data is not None:
        G = data.D_pinv @ np.vstack([K, np.eye(system.n)])
    return OracleSolution(K, P, float(np.trace(P)), G)


def solution_set_probe(G_star, data: DataMatrices, count: int, seed: int = 0, scale: float = 1.0):
    """``G* + Delta`` for ``count`` random ``Delta`` in the nullspace of ``D_-``."""
    rng = np.random.default_rng(seed)
    Pi_D = data.Pi_Dminus.matrix
    G_star = np.asarray(G_star, dtype=float)
    return [G_star + scale * Pi_D @ rng.standard_normal(G_star.shape) for _ in range(count)]


# --- finite-difference oracles --------------------------------------------


def _guarded(costfn, G):
    try:
        return costfn(G)
    except Unstable as exc:
        raise InfeasiblePerturbation(str(exc)) from exc


def finite_difference_gradient(costfn: Callable, G, h: float = 1e-6) -> np.ndarray:
    """Entrywise central differences. If a probe leaves the domain the whole
    pass is retried once with ``h / 2``."""
    G = np.asarray(G, dtype=float)
    for attempt in range(2):
        try:
            out = np.empty_like(G)
            for idx in np.ndindex(G.shape):
                E = np.zeros_like(G)
                E[idx] = h
                out[idx] = (_guarded(costfn, G + E) - _guarded(costfn, G - E)) / (2 * h)
            return out
        except InfeasiblePerturbation:
            if attempt:
                raise
            h /= 2
    raise AssertionError("unreachable")


def finite_difference_directional(costfn: Callable, G, Z, h: float = 1e-6) -> float:
    G, Z = np.asarray(G, dtype=float), np.asarray(Z, dtype=float)
    for attempt in range(2):
        try:
            return (_guarded(costfn, G + h * Z) - _guarded(costfn, G - h * Z)) / (2 * h)
        except InfeasiblePerturbation:
            if attempt:
                raise
            h /= 2


def finite_difference_second(costfn: Callable, G, Z, h: float = 1e-4) -> float:
    """``(c(G + hZ) - 2 c(G) + c(G - hZ)) / h^2``."""
    G, Z = np.asarray(G, dtype=float), np.asarray(Z, dtype=float)
    for attempt in range(2):
        try:
            c0 = _guarded(costfn, G)
            return (_guarded(costfn, G + h * Z) - 2 * c0 + _guarded(costfn, G - h * Z)) / h**2
        except InfeasiblePerturbation:
            if attempt:
                raise
            h /= 2
