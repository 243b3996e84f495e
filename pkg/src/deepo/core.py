"""Data-driven LQR cost, its exact derivatives, and projected gradient descent
on the decision matrix ``G`` (T x n).

A policy is a plain ``(T, n)`` array ``G``. It is feasible when
``X_- G = I_n`` and ``X_+ G`` is Schur stable; the gain it encodes is
``K = U_- G`` and the closed loop is ``A + B K = X_+ G``.

Every evaluation goes through :func:`closed_loop`, which takes a general
T x T input-side weight ``W``. The plain LQR cost uses ``W = U_-^T R U_-``;
the regularized costs in :mod:`deepo.regularized` only change ``W``.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .data import DataMatrices
from .errors import Infeasible, InfeasibleStart, StepUnstable, Unstable

FEASIBILITY_TOL = 1e-8


@dataclass(frozen=True)
class ClosedLoopEval:
    """Everything the cost and its derivatives need at one ``G``.

    ``P`` solves ``P = Q + G^T W G + A_cl^T P A_cl`` and ``Sigma`` solves
    ``Sigma = I + A_cl Sigma A_cl^T`` with ``A_cl = X_+ G``;
    ``E = (W + X_+^T P X_+) G`` and ``cost = Tr P``.
    """

    G: np.ndarray
    A_cl: np.ndarray
    P: np.ndarray
    Sigma: np.ndarray
    E: np.ndarray
    cost: float

    @property
    def grad(self) -> np.ndarray:
        return 2.0 * self.E @ self.Sigma


def constraint_violation(G: np.ndarray, data: DataMatrices) -> float:
    return float(np.linalg.norm(data.X_minus @ G - np.eye(data.n)))


def check_feasible(
    G: np.ndarray,
    data: DataMatrices,
    stability_margin: float = linalg.STABILITY_MARGIN,
    tol: float = FEASIBILITY_TOL,
) -> None:
    """Raise ``Infeasible`` or ``Unstable`` unless ``G`` lies in the feasible set."""
    viol = constraint_violation(G, data)
    if viol > tol:
        raise Infeasible(viol)
    rho = linalg.spectral_radius(data.X_plus @ G)
    if not rho < 1.0 - stability_margin:
        raise Unstable(rho, stability_margin)


def is_feasible(G, data, stability_margin=linalg.STABILITY_MARGIN) -> bool:
    try:
        check_feasible(G, data, stability_margin)
    except (Infeasible, Unstable):
        return False
    return True


def closed_loop(
    G: np.ndarray,
    data: DataMatrices,
    Q: np.ndarray,
    W: np.ndarray,
    *,
    stability_margin: float = linalg.STABILITY_MARGIN,
    check_constraint: bool = True,
) -> ClosedLoopEval:
    """Evaluate ``Tr{(Q + G^T W G) Sigma_G}`` and its Lyapunov pieces.

    With ``check_constraint=False`` only stability of ``X_+ G`` is required,
    which lets finite-difference oracles probe directions off the affine set.
    """
    G = np.asarray(G, dtype=float)
    if check_constraint:
        viol = constraint_violation(G, data)
        if viol > FEASIBILITY_TOL:
            raise Infeasible(viol)
    A_cl = data.X_plus @ G
    P = linalg.solve_discrete_lyapunov_obs(A_cl, Q + G.T @ W @ G, stability_margin)
    Sigma = linalg.solve_discrete_lyapunov_ctrl(A_cl, np.eye(data.n), stability_margin)
    E = (W + data.X_plus.T @ P @ data.X_plus) @ G
    return ClosedLoopEval(G, A_cl, P, Sigma, E, float(np.trace(P)))


def evaluate(G, data: DataMatrices, Q, R, **kw) -> ClosedLoopEval:
    """Closed-loop LQR quantities for policy ``G``; ``cost`` is ``J(G)``."""
    return closed_loop(G, data, Q, data.input_weight(R), **kw)


def cost(G, data, Q, R, **kw) -> float:
    return evaluate(G, data, Q, R, **kw).cost


def gradient(G, data: DataMatrices, Q, R, **kw) -> np.ndarray:
    """``grad J(G) = 2 (U_-^T R U_- + X_+^T P_G X_+) G Sigma_G``."""
    return evaluate(G, data, Q, R, **kw).grad


def projected_gradient(G, data, Q, R, **kw) -> np.ndarray:
    return data.Pi_Xminus.matrix @ gradient(G, data, Q, R, **kw)


def projected_gradient_step(
    G, eta: float, data: DataMatrices, Q, R, stability_margin: float = linalg.STABILITY_MARGIN
) -> np.ndarray:
    """One step ``G - eta * Pi_{X_-} grad J(G)``; raises ``StepUnstable`` if the
    new closed loop is not stable."""
    if eta < 0:
        raise ValueError("stepsize must be nonnegative")
    ev = evaluate(G, data, Q, R, stability_margin=stability_margin)
    G_next = ev.G - eta * (data.Pi_Xminus.matrix @ ev.grad)
    rho = linalg.spectral_radius(data.X_plus @ G_next)
    if not rho < 1.0 - stability_margin:
        raise StepUnstable(rho, stability_margin)
    return G_next


def hessian_quadratic_form(ev: ClosedLoopEval, Z: np.ndarray, data: DataMatrices, W: np.ndarray) -> float:
    """Second directional derivative of ``Tr P_G`` along ``Z`` for weight ``W``.

    ``P'[Z]`` is obtained from the Lyapunov equation
    ``P' = Z^T E + E^T Z + A_cl^T P' A_cl`` instead of summing the series.
    """
    Z = np.asarray(Z, dtype=float)
    Xp = data.X_plus
    dP = linalg.solve_discrete_lyapunov_obs(ev.A_cl, Z.T @ ev.E + ev.E.T @ Z, stability_margin=0.0)
    term1 = 2.0 * np.trace(Z.T @ (W + Xp.T @ ev.P @ Xp) @ Z @ ev.Sigma)
    term2 = 4.0 * np.trace(Z.T @ Xp.T @ dP @ ev.A_cl @ ev.Sigma)
    return float(term1 + term2)


def hessian_action(G, Z, data: DataMatrices, Q, R, **kw) -> float:
    """``d^2/dt^2 J(G + tZ)`` at ``t = 0``."""
    W = data.input_weight(R)
    return hessian_quadratic_form(closed_loop(G, data, Q, W, **kw), Z, data, W)


def smoothness_bound(a: float, data: DataMatrices, Q, R) -> float:
    """Closed-form bound on ``sup_{||Z||_F=1} |Hessian[Z, Z]|`` over the sublevel
    set ``{J <= a}``::

        xi   = (||U||^2 ||R|| + ||X+||^2 a + a) / s - 1
        l(a) = 2 ||U||^2 ||R|| a / s + (xi + 2) ||X+||_F^2 a^2 / s

    with ``s = sigma_min(Q)`` and spectral norms unless marked ``_F``.
    """
    if not a > 0:
        raise ValueError("a must be positive")
    s = float(np.linalg.svd(np.asarray(Q, dtype=float), compute_uv=False)[-1])
    u2 = np.linalg.norm(data.U_minus, 2) ** 2
    r = np.linalg.norm(np.asarray(R, dtype=float), 2)
    xp2 = np.linalg.norm(data.X_plus, 2) ** 2
    xpf2 = np.linalg.norm(data.X_plus, "fro") ** 2
    xi = (u2 * r + xp2 * a + a) / s - 1.0
    return float(2.0 * u2 * r * a / s + (xi + 2.0) * xpf2 * a * a / s)


def initial_policy_from_gain(
    K0, data: DataMatrices, stability_margin: float = linalg.STABILITY_MARGIN
) -> np.ndarray:
    """``G0 = D_-^dagger [K0; I_n]``, the minimum-norm policy encoding ``K0``."""
    K0 = np.asarray(K0, dtype=float).reshape(data.m, data.n)
    G0 = data.D_pinv @ np.vstack([K0, np.eye(data.n)])
    rho = linalg.spectral_radius(data.X_plus @ G0)
    if not rho < 1.0 - stability_margin:
        raise Unstable(rho, stability_margin)
    return G0


def recover_gain(G, data: DataMatrices) -> np.ndarray:
    return data.U_minus @ np.asarray(G, dtype=float)


# --- optimizer -------------------------------------------------------------


@dataclass(frozen=True)
class OptimizerConfig:
    """Settings for projected gradient descent.

    ``stepsize`` is the fixed step, or the initial trial step when
    ``line_search`` is on (backtracking by halving with Armijo parameter
    ``armijo``). The line search only sees ``J``, so it cannot certify
    decrease once ``eta * ||grad||^2`` is at rounding level in ``J``; pair it
    with a ``grad_tol`` well above ``sqrt(eps * J)``. ``max_iter`` counts steps, so a run records at most
    ``max_iter + 1`` iterates.
    """

    stepsize: float = 2e-3
    max_iter: int = 100_000
    grad_tol: float = 1e-8
    stability_margin: float = linalg.STABILITY_MARGIN
    line_search: bool = False
    armijo: float = 1e-4
    max_halvings: int = 60
    keep_iterates: bool = True

    def __post_init__(self):
        if not self.stepsize > 0:
            raise ValueError("stepsize must be positive")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if self.max_iter < 0:
            raise ValueError("max_iter must be nonnegative")
        if not 0 <= self.stability_margin < 1:
            raise ValueError("stability_margin must lie in [0, 1)")


@dataclass
class OptimizerTrace:
    """Per-iteration record of a run. ``cost`` is the minimized objective;
    ``lqr_cost`` is the plain LQR cost of the same iterate (they coincide for
    unregularized runs)."""

    cost: list = field(default_factory=list)
    lqr_cost: list = field(default_factory=list)
    proj_grad_norm: list = field(default_factory=list)
    null_norm: list = field(default_factory=list)
    stepsize: list = field(default_factory=list)
    constraint_violation: list = field(default_factory=list)
    iterates: list = field(default_factory=list)
    status: str = "running"
    lam: float | None = None
    gamma: float | None = None
    wall_time: float = 0.0

    def __len__(self):
        return len(self.cost)

    @property
    def iterations(self) -> int:
        return max(len(self.cost) - 1, 0)

    @property
    def final_G(self) -> np.ndarray:
        return self.iterates[-1]

    @property
    def regularized(self) -> bool:
        return self.lam is not None or self.gamma is not None

    def is_monotone(self, slack: float | None = None) -> bool:
        c = np.asarray(self.cost)
        if slack is None:
            slack = 1e-12 * (1.0 + abs(c[0]))
        return bool(np.all(np.diff(c) <= slack))

    def columns(self) -> list[str]:
        cols = ["k", "cost", "proj_grad_norm", "null_norm", "stepsize"]
        if self.regularized:
            cols += ["lambda", "gamma", "lqr_cost"]
        return cols

    def rows(self):
        for k in range(len(self.cost)):
            row = [k, self.cost[k], self.proj_grad_norm[k], self.null_norm[k], self.stepsize[k]]
            if self.regularized:
                row += [self.lam or 0.0, self.gamma or 0.0, self.lqr_cost[k]]
            yield row

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns())
            for row in self.rows():
                w.writerow([r if isinstance(r, int) else repr(float(r)) for r in row])


def descend(
    G0,
    cfg: OptimizerConfig,
    data: DataMatrices,
    Q,
    W,
    R=None,
) -> OptimizerTrace:
    """Projected gradient descent on ``Tr{(Q + G^T W G) Sigma_G}``.

    ``R``, when given, is used to also record the plain LQR cost of each
    iterate. Stops once ``||Pi_{X_-} grad||_F <= grad_tol`` or after
    ``max_iter`` steps. A fixed step that destabilizes the loop raises
    ``StepUnstable`` with the partial trace attached.
    """
    t_start = time.perf_counter()
    Q = linalg.sym(Q)
    W = linalg.sym(W)
    Pi_X = data.Pi_Xminus.matrix
    Pi_D = data.Pi_Dminus.matrix
    W_lqr = data.input_weight(R) if R is not None else None
    margin = cfg.stability_margin
    I_n = np.eye(data.n)

    G = np.array(G0, dtype=float)
    try:
        check_feasible(G, data, margin)
    except (Infeasible, Unstable) as exc:
        raise InfeasibleStart(getattr(exc, "violation", getattr(exc, "rho", np.nan))) from exc

    trace = OptimizerTrace()
    ev = closed_loop(G, data, Q, W, stability_margin=margin)
    eta = cfg.stepsize
    k = 0
    while True:
        pg = Pi_X @ ev.grad
        pg_norm = float(np.linalg.norm(pg))
        trace.cost.append(ev.cost)
        if W_lqr is None:
            trace.lqr_cost.append(ev.cost)
        else:
            trace.lqr_cost.append(float(np.trace((Q + G.T @ W_lqr @ G) @ ev.Sigma)))
        trace.proj_grad_norm.append(pg_norm)
        trace.null_norm.append(float(np.linalg.norm(Pi_D @ G)))
        trace.constraint_violation.append(float(np.linalg.norm(data.X_minus @ G - I_n)))
        if cfg.keep_iterates or k == 0:
            trace.iterates.append(G)
        if pg_norm <= cfg.grad_tol:
            trace.status = "converged"
            trace.stepsize.append(0.0)
            break
        if k >= cfg.max_iter:
            trace.status = "max_iter"
            trace.stepsize.append(0.0)
            break

        if cfg.line_search:
            eta = cfg.stepsize
            # a few ulps of slack so the test is not decided by rounding in J
            slack = 8 * np.finfo(float).eps * abs(ev.cost)
            for _ in range(cfg.max_halvings):
                G_try = G - eta * pg
                try:
                    ev_try = closed_loop(G_try, data, Q, W, stability_margin=margin, check_constraint=False)
                except Unstable:
                    eta *= 0.5
                    continue
                if ev_try.cost <= ev.cost - cfg.armijo * eta * pg_norm**2 + slack:
                    break
                eta *= 0.5
            else:
                trace.status = "line_search_failed"
                trace.stepsize.append(0.0)
                break
        else:
            G_try = G - eta * pg
            try:
                ev_try = closed_loop(G_try, data, Q, W, stability_margin=margin, check_constraint=False)
            except Unstable as exc:
                trace.status = "step_unstable"
                trace.stepsize.append(eta)
                trace.wall_time = time.perf_counter() - t_start
                if not cfg.keep_iterates:
                    trace.iterates.append(G)
                err = StepUnstable(exc.rho, margin, iteration=k)
                err.trace = trace
                raise err from exc

        trace.stepsize.append(eta)
        G, ev = G_try, ev_try
        k += 1

    if not cfg.keep_iterates and trace.iterates[-1] is not G:
        trace.iterates.append(G)
    trace.wall_time = time.perf_counter() - t_start
    return trace


def run_deepo(G0, cfg: OptimizerConfig, data: DataMatrices, Q, R) -> OptimizerTrace:
    """Plain DeePO: projected gradient descent on the LQR cost ``J(G)``."""
    return descend(G0, cfg, data, Q, data.input_weight(R))
