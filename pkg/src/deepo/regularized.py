"""Certainty-equivalence and robustness regularization.

Both penalties are input-side weights: with
``R_eff = U_-^T R U_- + lam * Pi_{D_-} + gamma * I_T`` the regularized cost is
``Tr{(Q + G^T R_eff G) Sigma_G}``, which equals

    J(G) + lam * ||Pi_{D_-} G Sigma_G^{1/2}||_F^2 + gamma * Tr{G Sigma_G G^T}.

So evaluation, gradient and descent reuse :func:`deepo.core.closed_loop`
with ``W = R_eff``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import core, linalg
from .data import DataMatrices


@dataclass(frozen=True)
class Regularization:
    lam: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        if self.lam < 0 or self.gamma < 0:
            raise ValueError("regularization weights must be nonnegative")

    @property
    def is_zero(self) -> bool:
        return self.lam == 0 and self.gamma == 0


@dataclass(frozen=True)
class GeneralizedCostSpec:
    """Objective ``Tr{(Q + G^T R_eff G) Sigma_G}``."""

    R_eff: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    reg: Regularization


def cost_spec(data: DataMatrices, Q, R, reg: Regularization = Regularization()) -> GeneralizedCostSpec:
    R_eff = data.input_weight(R)
    if reg.lam:
        R_eff = R_eff + reg.lam * data.Pi_Dminus.matrix
    if reg.gamma:
        R_eff = R_eff + reg.gamma * np.eye(data.T)
    return GeneralizedCostSpec(
        linalg.sym(R_eff), linalg.sym(Q), linalg.sym(np.asarray(R, dtype=float)), reg
    )


def evaluate_regularized(G, data: DataMatrices, spec: GeneralizedCostSpec, **kw) -> float:
    return core.closed_loop(G, data, spec.Q, spec.R_eff, **kw).cost


def regularizer_terms(G, data: DataMatrices, Sigma) -> tuple[float, float]:
    """Unweighted ``(||Pi_{D_-} G Sigma^{1/2}||_F^2, Tr{G Sigma G^T})`` computed
    directly from their definitions."""
    S_half = linalg.sym_sqrt(Sigma)
    ce = np.linalg.norm(data.Pi_Dminus.matrix @ G @ S_half, "fro") ** 2
    rob = np.trace(G @ Sigma @ G.T)
    return float(ce), float(rob)


def gradient_regularized(G, data: DataMatrices, spec: GeneralizedCostSpec, **kw) -> np.ndarray:
    """``2 (R_eff + X_+^T P~ X_+) G Sigma_G`` where ``P~`` solves
    ``P~ = Q + G^T R_eff G + A_cl^T P~ A_cl``."""
    return core.closed_loop(G, data, spec.Q, spec.R_eff, **kw).grad


def hessian_action_regularized(G, Z, data, spec: GeneralizedCostSpec, **kw) -> float:
    ev = core.closed_loop(G, data, spec.Q, spec.R_eff, **kw)
    return core.hessian_quadratic_form(ev, Z, data, spec.R_eff)


def run_regularized(G0, cfg: core.OptimizerConfig, data: DataMatrices, spec: GeneralizedCostSpec):
    trace = core.descend(G0, cfg, data, spec.Q, spec.R_eff, R=spec.R)
    trace.lam = spec.reg.lam
    trace.gamma = spec.reg.gamma
    return trace


def perturbed_initial_policy(data: DataMatrices, K0=None, std: float = 0.1, seed: int = 0):
    """``D_-^dagger [K0; I] + Pi_{D_-} M`` with i.i.d. ``N(0, std^2)`` entries in M."""
    if K0 is None:
        K0 = np.zeros((data.m, data.n))
    rng = np.random.default_rng(seed)
    M = std * rng.standard_normal((data.T, data.n))
    return data.D_pinv @ np.vstack([K0, np.eye(data.n)]) + data.Pi_Dminus.matrix @ M


@dataclass(frozen=True)
class AuditReport:
    null_norms: np.ndarray
    max_null_norm: float
    max_drift: float  # max_k ||Pi_D G^k - Pi_D G^0||_F
    max_step_drift: float  # max_k ||Pi_D G^{k+1} - Pi_D G^k||_F
    tol: float

    @property
    def violated(self) -> bool:
        return self.max_null_norm > self.tol


def implicit_regularization_audit(trace: core.OptimizerTrace, data: DataMatrices, tol: float = 1e-8) -> AuditReport:
    """Track the ``N(D_-)`` component of every stored iterate."""
    if not trace.iterates:
        raise ValueError("trace holds no iterates")
    Pi_D = data.Pi_Dminus.matrix
    comps = [Pi_D @ G for G in trace.iterates]
    norms = np.array([np.linalg.norm(c) for c in comps])
    drift = max(float(np.linalg.norm(c - comps[0])) for c in comps)
    steps = [float(np.linalg.norm(b - a)) for a, b in zip(comps, comps[1:])]
    return AuditReport(norms, float(norms.max()), drift, max(steps, default=0.0), tol)


def orthogonality_identity_check(G, data: DataMatrices, Q, R) -> float:
    """``||Pi_{D_-} Pi_{X_-} grad J(G)||_F``, identically zero in exact arithmetic."""
    g = core.gradient(G, data, Q, R)
    return float(np.linalg.norm(data.Pi_Dminus.matrix @ data.Pi_Xminus.matrix @ g))
