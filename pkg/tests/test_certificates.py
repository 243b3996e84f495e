import numpy as np
import pytest

from deepo import certificates as cert
from deepo import core
from deepo.errors import InfeasiblePerturbation, SingularSigma, Unstable
from reference_values import J_STAR


def test_round_trip_and_identity(system, data, feasible_samples):
    for G in feasible_samples[:20]:
        p = cert.from_policy(G, data)
        assert np.linalg.norm(cert.to_policy(p) - G) <= 1e-10
        J = core.cost(G, data, system.Q, system.R)
        assert abs(cert.evaluate_f(p, data, system.Q, system.R) - J) <= 1e-8 * (1 + J)
        assert cert.lmi_min_eig(p, data) >= -1e-8
        assert cert.linear_residual(p, data) <= 1e-8


def test_from_policy_rejects_infeasible(data, G0):
    with pytest.raises(Exception):
        cert.from_policy(3.0 * G0, data)


def test_to_policy_singular_sigma():
    with pytest.raises(SingularSigma):
        cert.to_policy(cert.ConvexPoint(np.ones((10, 4)), np.zeros((4, 4))))


def test_scaled_L_is_not_a_feasible_policy(system, data, oracle):
    p = cert.from_policy(oracle.G_star, data)
    bad = cert.ConvexPoint(25.0 * p.L, p.Sigma)
    assert cert.lmi_min_eig(bad, data) < 0
    with pytest.raises(Exception):
        core.evaluate(cert.to_policy(bad), data, system.Q, system.R)


def test_convex_hessian_examples(system, data, feasible_samples):
    rng = np.random.default_rng(0)
    p = cert.from_policy(feasible_samples[0], data)
    # direction along which U L Sigma^-1 is unchanged: L~ = L Sigma^-1 S~
    S = np.eye(4)
    L = p.L @ np.linalg.solve(p.Sigma, S)
    assert cert.convex_hessian_action(p, L, S, data, system.R) <= 1e-20
    for G in feasible_samples[:20]:
        p = cert.from_policy(G, data)
        Ld, Sd = cert.random_feasible_direction(data, rng)
        assert np.linalg.norm(data.X_minus @ Ld - Sd) <= 1e-10
        assert cert.convex_hessian_action(p, Ld, Sd, data, system.R) >= -1e-10


def test_convex_hessian_vs_second_differences(system, data, feasible_samples):
    rng = np.random.default_rng(1)
    for G in feasible_samples[:10]:
        p = cert.from_policy(G, data)
        Ld, Sd = cert.random_feasible_direction(data, rng)
        f = lambda s: cert.evaluate_f(cert.ConvexPoint(p.L + s * Ld, p.Sigma + s * Sd), data, system.Q, system.R)
        h = 1e-4
        fd = (f(h) - 2 * f(0.0) + f(-h)) / h**2
        assert fd == pytest.approx(cert.convex_hessian_action(p, Ld, Sd, data, system.R), rel=1e-4)


def test_estimates(system, data, feasible_samples, oracle, plain_trace):
    rng = np.random.default_rng(2)
    points = [cert.from_policy(G, data) for G in feasible_samples]
    dirs = [cert.random_feasible_direction(data, rng) for _ in points]
    est = cert.estimate_strong_convexity(points, dirs, data, system.R)
    assert est.alpha_hat > 0 and est.samples == 200
    dom = cert.estimate_gradient_dominance(feasible_samples, data, system.Q, system.R, oracle.J_star)
    assert 0 < dom.mu_hat < np.inf and dom.used > 0
    # the ratio is scale-free in the sense that more samples can only raise it
    dom_more = cert.estimate_gradient_dominance(feasible_samples + plain_trace.iterates[:200], data, system.Q, system.R, oracle.J_star)
    assert dom_more.mu_hat >= dom.mu_hat


def test_dominance_skips_optimum(system, data, oracle):
    dom = cert.estimate_gradient_dominance([oracle.G_star], data, system.Q, system.R, oracle.J_star)
    assert dom.used == 0 and dom.mu_hat == 0.0


def test_sample_sublevel(system, data, plain_trace):
    a = plain_trace.cost[0]
    S = cert.sample_sublevel(plain_trace.iterates[:50], a, data, system.Q, system.R, 20, seed=5)
    assert len(S) == 20
    for G in S:
        assert np.linalg.norm(data.X_minus @ G - np.eye(4)) <= 1e-9
        assert core.cost(G, data, system.Q, system.R) <= a
    S2 = cert.sample_sublevel(plain_trace.iterates[:50], a, data, system.Q, system.R, 20, seed=5)
    assert all(np.array_equal(x, y) for x, y in zip(S, S2))
    with pytest.raises(RuntimeError):
        cert.sample_sublevel(plain_trace.iterates[:5], 0.5 * J_STAR, data, system.Q, system.R, 3, max_attempts=20)


def test_riccati_oracle(system, data, oracle):
    assert oracle.J_star == pytest.approx(J_STAR, rel=1e-10)
    assert np.allclose(data.X_minus @ oracle.G_star, np.eye(4), atol=1e-10)
    assert np.allclose(data.U_minus @ oracle.G_star, oracle.K_star, atol=1e-10)
    assert cert.riccati_oracle(system).G_star is None


def test_solution_set_probe(system, data, oracle):
    for G in cert.solution_set_probe(oracle.G_star, data, 10, seed=0):
        assert np.linalg.norm(core.recover_gain(G, data) - oracle.K_star) <= 1e-10
        J = core.cost(G, data, system.Q, system.R)
        assert abs(J - oracle.J_star) <= 1e-8 * oracle.J_star


def test_finite_differences_on_quadratic():
    M = np.array([[2.0, 1.0], [1.0, 3.0]])
    f = lambda G: float(np.sum(G * (M @ G)))
    G = np.array([[0.3, -1.0], [2.0, 0.5]])
    assert np.allclose(cert.finite_difference_gradient(f, G), 2 * M @ G, atol=1e-7)
    Z = np.ones_like(G)
    assert cert.finite_difference_directional(f, G, Z) == pytest.approx(np.sum(2 * M @ G * Z), rel=1e-8)
    assert cert.finite_difference_second(f, G, Z) == pytest.approx(2 * np.sum(Z * (M @ Z)), rel=1e-6)


def test_finite_differences_leave_domain():
    def f(G):
        if abs(G[0, 0]) > 1e-9:
            raise Unstable(2.0, 0.0)
        return 0.0
    with pytest.raises(InfeasiblePerturbation):
        cert.finite_difference_gradient(f, np.zeros((1, 1)))


def test_local_dominance_bound_is_the_limit_at_the_optimum(system, data, oracle):
    mu = cert.local_dominance_bound(oracle.G_star, data, system.Q, system.R)
    basis = cert.gain_directions(data)
    assert np.allclose(basis.T @ basis, np.eye(8), atol=1e-12)
    rng = np.random.default_rng(9)
    for _ in range(20):
        Z = (basis @ rng.standard_normal(8)).reshape(10, 4)
        assert np.allclose(data.X_minus @ Z, 0, atol=1e-12)
        gap, g2 = cert.dominance_ratio(oracle.G_star + 1e-3 * Z, data, system.Q, system.R, oracle.J_star)
        assert gap / g2 <= mu * (1 + 1e-3)
    dom = cert.estimate_gradient_dominance([], data, system.Q, system.R, oracle.J_star, G_star=oracle.G_star)
    assert dom.mu_hat == mu and dom.argmax == -1
