"""Experiment configuration, the three benchmark algorithms, trace files,
run comparison and the certificate suite used by ``deepo verify``."""

from __future__ import annotations

import csv
import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import certificates as cert
from . import core, linalg
from . import data as dm
from . import regularized as reg

ALGORITHMS = ("deepo", "deepo-ce", "deepo-rob")
INITS = ("auto", "zero-gain", "given-gain", "perturbed")
# relative errors below this are rounding noise and are left out of rate fits
REL_ERR_FLOOR = 1e-12
# below this relative gap, rounding in J and J* visibly moves the dominance ratio
DOMINANCE_GAP_FLOOR = 1e-10


@dataclass(frozen=True)
class ExperimentConfig:
    system: str = "benchmark"  # "benchmark" or "random"
    n: int = 4
    m: int = 2
    rho: float = 0.8
    system_seed: int = 0
    T: int = 10
    seed: int = 0  # data excitation and every other random draw
    eta: float = 2e-3
    max_iter: int = 1000
    grad_tol: float = 1e-14
    ref_grad_tol: float = 1e-11
    ref_max_iter: int = 100_000
    line_search: bool = False
    lambda_ce: float = 10.0
    gamma_rob: float = 10.0
    init: str = "auto"
    gain: list | None = None
    perturb_std: float = 0.1  # N(0, 0.01) entries
    out_dir: str = "runs"

    def __post_init__(self):
        errs = []
        if self.system not in ("benchmark", "random"):
            errs.append(f"system must be 'benchmark' or 'random', got {self.system!r}")
        if self.system == "benchmark" and (self.n, self.m) != (4, 2):
            errs.append("the benchmark system has n=4, m=2")
        if self.n < 1 or self.m < 1:
            errs.append("n and m must be positive")
        if not self.eta > 0:
            errs.append("eta must be positive")
        if not (self.grad_tol > 0 and self.ref_grad_tol > 0):
            errs.append("gradient tolerances must be positive")
        if self.max_iter < 0 or self.ref_max_iter < 0:
            errs.append("iteration limits must be nonnegative")
        if self.lambda_ce < 0 or self.gamma_rob < 0:
            errs.append("regularization weights must be nonnegative")
        if self.init not in INITS:
            errs.append(f"init must be one of {INITS}")
        if self.init == "given-gain" and self.gain is None:
            errs.append("init 'given-gain' needs a gain")
        if not self.rho > 0 or self.perturb_std < 0:
            errs.append("rho must be positive and perturb_std nonnegative")
        if errs:
            raise ValueError("; ".join(errs))
        if self.T < self.n + self.m:
            raise dm.InsufficientData(self.T, self.n + self.m)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    def optimizer(self, grad_tol=None, max_iter=None) -> core.OptimizerConfig:
        return core.OptimizerConfig(
            stepsize=self.eta,
            max_iter=self.max_iter if max_iter is None else max_iter,
            grad_tol=self.grad_tol if grad_tol is None else grad_tol,
            line_search=self.line_search,
        )


def build_system(cfg: ExperimentConfig) -> dm.SystemModel:
    if cfg.system == "benchmark":
        return dm.benchmark_system()
    return dm.random_system(cfg.n, cfg.m, cfg.rho, cfg.system_seed)


def build_data(cfg: ExperimentConfig, system: dm.SystemModel | None = None) -> dm.DataMatrices:
    return dm.gaussian_batch(system or build_system(cfg), cfg.T, cfg.seed)


def regularization_for(cfg: ExperimentConfig, algorithm: str) -> reg.Regularization:
    if algorithm == "deepo":
        return reg.Regularization()
    if algorithm == "deepo-ce":
        return reg.Regularization(lam=cfg.lambda_ce)
    if algorithm == "deepo-rob":
        return reg.Regularization(gamma=cfg.gamma_rob)
    raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")


def initial_policy(cfg: ExperimentConfig, data: dm.DataMatrices, algorithm: str) -> np.ndarray:
    init = cfg.init
    if init == "auto":
        init = "perturbed" if algorithm == "deepo-ce" else "zero-gain"
    K0 = np.zeros((data.m, data.n))
    if init == "given-gain" or (init == "perturbed" and cfg.gain is not None):
        K0 = np.asarray(cfg.gain, dtype=float).reshape(data.m, data.n)
    if init == "perturbed":
        G0 = reg.perturbed_initial_policy(data, K0, cfg.perturb_std, cfg.seed)
        core.check_feasible(G0, data)
        return G0
    return core.initial_policy_from_gain(K0, data)


def log_linear_fit(rel_err, floor: float = REL_ERR_FLOOR) -> dict:
    """Least-squares fit of ``log(rel_err)`` against k over the tail half of the
    iterations that are still above ``floor``."""
    e = np.asarray(rel_err, dtype=float)
    above = np.nonzero(e > floor)[0]
    K = int(above[-1]) + 1 if above.size else 0
    k = np.arange(K // 2, K)
    if k.size < 3 or np.any(e[k] <= 0):
        return {"slope": float("nan"), "r2": float("nan"), "start": int(K // 2), "stop": K}
    y = np.log(e[k])
    c = np.polyfit(k, y, 1)
    ss_res = float(np.sum((y - np.polyval(c, k)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else float("nan")
    return {"slope": float(c[0]), "r2": r2, "start": int(K // 2), "stop": K}


@dataclass
class RunResult:
    algorithm: str
    trace: core.OptimizerTrace
    rel_err: np.ndarray
    J_ref: float
    J_star: float
    K_star: np.ndarray
    K_final: np.ndarray
    G0: np.ndarray

    def report(self) -> dict:
        fit = log_linear_fit(self.rel_err)
        t = self.trace
        return {
            "algorithm": self.algorithm,
            "status": t.status,
            "iterations": t.iterations,
            "final_K": self.K_final.tolist(),
            "K_star": self.K_star.tolist(),
            "K_error_fro": float(np.linalg.norm(self.K_final - self.K_star)),
            "J_ref": self.J_ref,
            "J_star": self.J_star,
            "final_cost": t.cost[-1],
            "final_lqr_cost": t.lqr_cost[-1],
            "final_rel_err": float(self.rel_err[-1]),
            "wall_time": t.wall_time,
            "certificates": {
                "monotone": t.is_monotone(),
                "max_constraint_violation": float(max(t.constraint_violation)),
                "max_null_norm": float(max(t.null_norm)),
                "rate_slope": fit["slope"],
                "rate_r2": fit["r2"],
                "rate_window": [fit["start"], fit["stop"]],
            },
        }


def run_algorithm(
    cfg: ExperimentConfig,
    algorithm: str,
    data: dm.DataMatrices | None = None,
    system: dm.SystemModel | None = None,
) -> RunResult:
    """Run one of the three benchmark algorithms.

    The relative-error reference is the Riccati optimum ``J*`` for plain DeePO
    and, for the regularized runs, the regularized cost reached by a long
    reference run to ``cfg.ref_grad_tol`` from the same start.
    """
    system = system or build_system(cfg)
    data = data or build_data(cfg, system)
    Q, R = system.Q, system.R
    oracle = cert.riccati_oracle(system, data)
    G0 = initial_policy(cfg, data, algorithm)
    regz = regularization_for(cfg, algorithm)
    if algorithm == "deepo":
        trace = core.run_deepo(G0, cfg.optimizer(), data, Q, R)
        J_ref = oracle.J_star
    else:
        spec = reg.cost_spec(data, Q, R, regz)
        ref = reg.run_regularized(
            G0,
            dataclasses.replace(
                cfg.optimizer(cfg.ref_grad_tol, cfg.ref_max_iter), keep_iterates=False
            ),
            data,
            spec,
        )
        J_ref = min(ref.cost)
        trace = reg.run_regularized(G0, cfg.optimizer(), data, spec)
    rel = (np.asarray(trace.cost) - J_ref) / J_ref
    K = core.recover_gain(trace.final_G, data)
    return RunResult(algorithm, trace, rel, J_ref, oracle.J_star, oracle.K_star, K, G0)


# --- trace files -----------------------------------------------------------

TRACE_BASE = ["k", "rel_err", "cost", "proj_grad_norm", "null_norm", "stepsize"]
TRACE_REG = ["lambda", "gamma", "lqr_cost"]


def write_run_trace(result: RunResult, path) -> None:
    t = result.trace
    cols = TRACE_BASE + (TRACE_REG if t.regularized else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for k in range(len(t)):
            row = [k] + [
                repr(float(v))
                for v in (result.rel_err[k], t.cost[k], t.proj_grad_norm[k], t.null_norm[k], t.stepsize[k])
            ]
            if t.regularized:
                row += [repr(float(t.lam or 0.0)), repr(float(t.gamma or 0.0)), repr(float(t.lqr_cost[k]))]
            w.writerow(row)


def read_run_trace(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][: len(TRACE_BASE)] != TRACE_BASE:
        raise dm.ParseError(f"{path}: unexpected trace header {rows[0] if rows else None}")
    header = rows[0]
    if header[len(TRACE_BASE):] not in ([], TRACE_REG):
        raise dm.ParseError(f"{path}: unexpected trace header {header}")
    try:
        body = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(header))
    except ValueError as exc:
        raise dm.ParseError(f"{path}: {exc}") from exc
    if body.shape[0] and not np.array_equal(body[:, 0], np.arange(body.shape[0])):
        raise dm.ParseError(f"{path}: iteration column is not 0..K")
    return {c: body[:, i] for i, c in enumerate(header)}


def compare_traces(paths, labels=None) -> tuple[list[str], list[list], dict]:
    """Align relative-error columns by iteration; shorter runs are padded with
    blanks. Returns ``(header, rows, rates)``."""
    from .errors import MissingTrace

    paths = list(paths)
    if len(paths) < 2:
        raise MissingTrace("compare needs at least two traces")
    labels = list(labels) if labels else [Path(p).stem for p in paths]
    traces = []
    for p in paths:
        if not Path(p).exists():
            raise MissingTrace(str(p))
        traces.append(read_run_trace(p))
    K = max(len(t["k"]) for t in traces)
    rows = []
    for k in range(K):
        rows.append([k] + [repr(float(t["rel_err"][k])) if k < len(t["k"]) else "" for t in traces])
    rates = {lab: log_linear_fit(t["rel_err"]) for lab, t in zip(labels, traces)}
    return ["k"] + labels, rows, rates


# --- certificate suite -----------------------------------------------------


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""


@dataclass
class CertificateReport:
    seed: int
    checks: list = field(default_factory=list)
    estimates: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, value, threshold, ok, detail=""):
        self.checks.append(Check(name, bool(ok), float(value), float(threshold), detail))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "passed": self.passed,
            "failures": sum(not c.passed for c in self.checks),
            "checks": [dataclasses.asdict(c) for c in self.checks],
            "estimates": self.estimates,
            "wall_time": self.wall_time,
        }

    def lines(self) -> list[str]:
        out = [
            f"{'PASS' if c.passed else 'FAIL'}  {c.name:<40s} value={c.value:.3e}  bound={c.threshold:.3e}  {c.detail}"
            for c in self.checks
        ]
        out += [f"      {k} = {v}" for k, v in self.estimates.items()]
        return out


def _unit(Z):
    return Z / np.linalg.norm(Z)


def run_certificates(cfg: ExperimentConfig, data=None, system=None) -> CertificateReport:
    """Run every numerical certificate on one data batch; deterministic in
    ``cfg.seed``."""
    t0 = time.perf_counter()
    rep = CertificateReport(cfg.seed)
    system = system or build_system(cfg)
    if data is None:
        data = build_data(cfg, system)
    Q, R = system.Q, system.R
    rng = np.random.default_rng([cfg.seed, 7])
    Pi_X, Pi_D = data.Pi_Xminus.matrix, data.Pi_Dminus.matrix

    # rank certificate
    tol = linalg.RANK_TOL * max(1.0, float(np.linalg.norm(data.D_minus, 2)))
    rep.add("rank_certificate(sigma_min D_-)", data.sigma_min_D, tol, data.sigma_min_D > tol)

    oracle = cert.riccati_oracle(system, data)
    J_star = oracle.J_star
    J_Gstar = core.cost(oracle.G_star, data, Q, R)
    rep.add("oracle J(G*) = J*", abs(J_Gstar - J_star) / J_star, 1e-8, abs(J_Gstar - J_star) <= 1e-8 * J_star)

    # plain DeePO run (fixed budget) and a converged run
    G0 = core.initial_policy_from_gain(np.zeros((data.m, data.n)), data)
    trace = core.run_deepo(G0, cfg.optimizer(), data, Q, R)
    rel = (np.asarray(trace.cost) - J_star) / J_star
    drel = float(np.max(np.diff(rel), initial=-np.inf))
    rep.add("deepo relative error non-increasing", drel, 1e-12, drel <= 1e-12)
    fit = log_linear_fit(rel)
    rep.add("deepo log-linear tail fit R^2", fit["r2"], 0.99, fit["r2"] >= 0.99,
            f"slope={fit['slope']:.4g} window={fit['start']}..{fit['stop']}")
    cviol = max(trace.constraint_violation)
    rep.add("deepo constraint preservation", cviol, 1e-8, cviol <= 1e-8)
    conv = core.run_deepo(G0, cfg.optimizer(grad_tol=1e-9, max_iter=100_000), data, Q, R)
    kerr = float(np.linalg.norm(core.recover_gain(conv.final_G, data) - oracle.K_star))
    rep.add("deepo gain ||U G - K*||_F", kerr, 1e-4, kerr <= 1e-4 and conv.status == "converged")

    a = trace.cost[0]
    samples = cert.sample_sublevel(trace.iterates, a, data, Q, R, 200, seed=cfg.seed)

    # gradient vs finite differences
    worst = 0.0
    for G in samples[:20]:
        g = core.gradient(G, data, Q, R)
        fd = cert.finite_difference_gradient(
            lambda H: core.cost(H, data, Q, R, check_constraint=False), G, 1e-6
        )
        worst = max(worst, np.linalg.norm(fd - g) / np.linalg.norm(g))
    rep.add("gradient vs finite differences", worst, 1e-5, worst <= 1e-5)

    # regularized gradients
    for name, rz in (("lambda=10", reg.Regularization(lam=10.0)), ("gamma=10", reg.Regularization(gamma=10.0))):
        spec = reg.cost_spec(data, Q, R, rz)
        worst = 0.0
        for G in samples[20:25]:
            g = reg.gradient_regularized(G, data, spec)
            fd = cert.finite_difference_gradient(
                lambda H: reg.evaluate_regularized(H, data, spec, check_constraint=False), G, 1e-6
            )
            worst = max(worst, np.linalg.norm(fd - g) / np.linalg.norm(g))
        rep.add(f"regularized gradient ({name})", worst, 1e-5, worst <= 1e-5)

    # Hessian vs second differences, homogeneity
    worst = worst_h = 0.0
    for i, G in enumerate(samples[:20]):
        Z = rng.standard_normal(G.shape)
        Z = _unit(Pi_X @ Z if i % 2 else Z)
        h = core.hessian_action(G, Z, data, Q, R)
        fd = cert.finite_difference_second(lambda H: core.cost(H, data, Q, R, check_constraint=False), G, Z, 1e-4)
        worst = max(worst, abs(fd - h) / abs(h))
        h2 = core.hessian_action(G, 3.7 * Z, data, Q, R)
        worst_h = max(worst_h, abs(h2 - 3.7**2 * h) / abs(3.7**2 * h))
    rep.add("hessian vs second differences", worst, 1e-4, worst <= 1e-4)
    rep.add("hessian homogeneity", worst_h, 1e-10, worst_h <= 1e-10)

    # smoothness bound and auxiliary bounds
    l0 = core.smoothness_bound(a, data, Q, R)
    sq = float(np.linalg.svd(Q, compute_uv=False)[-1])
    viol = 0
    worst_ratio = aux_viol = 0.0
    for G in samples[:100]:
        ev = core.evaluate(G, data, Q, R)
        Z = _unit(Pi_X @ rng.standard_normal(G.shape))
        h = abs(core.hessian_quadratic_form(ev, Z, data, data.input_weight(R)))
        viol += h > l0
        worst_ratio = max(worst_ratio, h / l0)
        aux_viol = max(
            aux_viol,
            np.trace(ev.Sigma) - ev.cost / sq,
            np.linalg.norm(ev.P, 2) - ev.cost,
        )
    rep.add("smoothness bound violations", viol, 0, viol == 0, f"max |H|/l0={worst_ratio:.3e}")
    rep.add("aux bounds Tr(Sigma)<=J/s, ||P||<=J", aux_viol, 1e-9 * (1 + a), aux_viol <= 1e-9 * (1 + a))
    rep.estimates["l0"] = l0

    # convex parameterization identity
    wf = wl = wr = wlin = 0.0
    for G in samples[:20]:
        p = cert.from_policy(G, data)
        J = core.cost(G, data, Q, R)
        wf = max(wf, abs(cert.evaluate_f(p, data, Q, R) - J) / (1 + J))
        wl = min(wl, cert.lmi_min_eig(p, data))
        wr = max(wr, np.linalg.norm(cert.to_policy(p) - G))
        wlin = max(wlin, cert.linear_residual(p, data))
    rep.add("f(G Sigma, Sigma) = J(G)", wf, 1e-8, wf <= 1e-8)
    rep.add("LMI lambda_min", wl, -1e-8, wl >= -1e-8)
    rep.add("round trip to_policy(from_policy(G))", wr, 1e-10, wr <= 1e-10)
    rep.add("linear constraint Sigma = X_- L", wlin, 1e-8, wlin <= 1e-8)

    # convexity and dominance
    points = [cert.from_policy(G, data) for G in samples]
    dirs = [cert.random_feasible_direction(data, rng) for _ in samples]
    hv = [cert.convex_hessian_action(p, Ld, Sd, data, R) for p, (Ld, Sd) in zip(points, dirs)]
    rep.add("convex hessian >= 0", min(hv), -1e-10, min(hv) >= -1e-10)
    conv_est = cert.estimate_strong_convexity(points, dirs, data, R)
    rep.add("alpha_hat > 0", conv_est.alpha_hat, 0.0, conv_est.alpha_hat > 0)
    worst = 0.0
    for p, (Ld, Sd) in list(zip(points, dirs))[:10]:
        f = lambda s: cert.evaluate_f(cert.ConvexPoint(p.L + s * Ld, p.Sigma + s * Sd), data, Q, R)
        eps = 1e-4
        fd = (f(eps) - 2 * f(0.0) + f(-eps)) / eps**2
        h = cert.convex_hessian_action(p, Ld, Sd, data, R)
        worst = max(worst, abs(fd - h) / max(abs(h), 1e-12))
    rep.add("convex hessian vs second differences", worst, 1e-4, worst <= 1e-4)
    floor = DOMINANCE_GAP_FLOOR * J_star
    dom = cert.estimate_gradient_dominance(samples, data, Q, R, J_star, gap_floor=floor, G_star=oracle.G_star)
    rep.add("mu_hat finite", dom.mu_hat, np.inf, np.isfinite(dom.mu_hat) and dom.used > 0,
            f"sampled={dom.sampled:.4e} local={dom.local:.4e}")
    bad = checked = 0
    for G in trace.iterates:
        gap, g2 = cert.dominance_ratio(G, data, Q, R, J_star)
        if gap > floor:
            checked += 1
            bad += gap > dom.mu_hat * g2
    rep.add("dominance along DeePO iterates", bad, 0, bad == 0 and checked > 0, f"iterates checked={checked}")
    rep.estimates.update(alpha_hat=conv_est.alpha_hat, mu_hat=dom.mu_hat, mu_sampled=dom.sampled,
                         mu_local=dom.local, samples=len(samples))

    # implicit regularization
    audit = reg.implicit_regularization_audit(trace, data)
    rep.add("implicit regularization max ||Pi_D G^k||", audit.max_null_norm, 1e-8, audit.max_null_norm <= 1e-8)
    worst = 0.0
    for G in samples[:50]:
        g = core.gradient(G, data, Q, R)
        worst = max(worst, reg.orthogonality_identity_check(G, data, Q, R) / np.linalg.norm(g))
    rep.add("||Pi_D Pi_X grad J|| / ||grad J||", worst, 1e-9, worst <= 1e-9)
    Gp = reg.perturbed_initial_policy(data, std=cfg.perturb_std, seed=cfg.seed)
    tr_p = core.run_deepo(Gp, cfg.optimizer(), data, Q, R)
    aud_p = reg.implicit_regularization_audit(tr_p, data)
    rep.add("nullspace component frozen (lambda=0)", aud_p.max_drift, 1e-8, aud_p.max_drift <= 1e-8)

    # regularizer contracts
    spec_ce = reg.cost_spec(data, Q, R, reg.Regularization(lam=cfg.lambda_ce))
    tr_ce = reg.run_regularized(Gp, cfg.optimizer(), data, spec_ce)
    ref_ce = reg.run_regularized(Gp, cfg.optimizer(1e-11, 100_000), data, spec_ce)
    rel_ce = (np.asarray(tr_ce.cost) - min(ref_ce.cost)) / min(ref_ce.cost)
    d_ce = float(np.max(np.diff(rel_ce), initial=-np.inf))
    rep.add("ce regularized error non-increasing", d_ce, 1e-12, d_ce <= 1e-12)
    k_ce = float(np.linalg.norm(core.recover_gain(ref_ce.final_G, data) - oracle.K_star))
    rep.add("ce gain ||U G_lambda - K*||_F", k_ce, 1e-4, k_ce <= 1e-4 and ref_ce.status == "converged")
    spec_rob = reg.cost_spec(data, Q, R, reg.Regularization(gamma=cfg.gamma_rob))
    ref_rob = reg.run_regularized(G0, cfg.optimizer(1e-11, 100_000), data, spec_rob)
    gap_rob = ref_rob.lqr_cost[-1] - J_star
    rep.add("rob bias J(G_gamma) >= J* - 1e-9", gap_rob, -1e-9, gap_rob >= -1e-9 and ref_rob.status == "converged")
    spec0 = reg.cost_spec(data, Q, R, reg.Regularization())
    tr0 = reg.run_regularized(G0, cfg.optimizer(), data, spec0)
    diff0 = max(float(np.linalg.norm(a_ - b_)) for a_, b_ in zip(tr0.iterates, trace.iterates))
    same_len = len(tr0) == len(trace)
    rep.add("zero regularization matches plain DeePO", diff0, 1e-12, diff0 <= 1e-12 and same_len)

    # flat solution set
    probes = cert.solution_set_probe(oracle.G_star, data, 10, seed=cfg.seed)
    wj = wk = 0.0
    for G in probes:
        wj = max(wj, abs(core.cost(G, data, Q, R) - J_star) / J_star)
        wk = max(wk, np.linalg.norm(core.recover_gain(G, data) - core.recover_gain(oracle.G_star, data)))
    rep.add("solution set |J - J*|/J*", wj, 1e-8, wj <= 1e-8)
    rep.add("solution set gain invariance", wk, 1e-10, wk <= 1e-10)

    rep.wall_time = time.perf_counter() - t0
    return rep
