import numpy as np
import pytest

from deepo import certificates as cert
from deepo import core
from deepo import data as dm
from deepo import regularized as reg


@pytest.fixture(scope="module")
def specs(system, data):
    Q, R = system.Q, system.R
    return {
        "zero": reg.cost_spec(data, Q, R, reg.Regularization()),
        "ce": reg.cost_spec(data, Q, R, reg.Regularization(lam=10.0)),
        "rob": reg.cost_spec(data, Q, R, reg.Regularization(gamma=10.0)),
    }


def test_regularization_validation():
    with pytest.raises(ValueError):
        reg.Regularization(lam=-1.0)
    assert reg.Regularization().is_zero


def test_R_eff_dominates_input_weight(data, specs):
    W = data.input_weight(np.eye(2))
    for s in specs.values():
        assert np.array_equal(s.R_eff, s.R_eff.T)
        assert np.linalg.eigvalsh(s.R_eff - W)[0] >= -1e-12


def test_zero_regularization_reduces_to_J(system, data, specs, feasible_samples):
    for G in feasible_samples[:10]:
        J = core.cost(G, data, system.Q, system.R)
        assert reg.evaluate_regularized(G, data, specs["zero"]) == pytest.approx(J, rel=1e-12)
        g = core.gradient(G, data, system.Q, system.R)
        assert np.linalg.norm(reg.gradient_regularized(G, data, specs["zero"]) - g) <= 1e-12 * np.linalg.norm(g)


def test_ce_penalty_vanishes_in_range_of_pinv(system, data, G0):
    for lam in (0.1, 10.0, 1e3):
        spec = reg.cost_spec(data, system.Q, system.R, reg.Regularization(lam=lam))
        assert reg.evaluate_regularized(G0, data, spec) == pytest.approx(core.cost(G0, data, system.Q, system.R), rel=1e-12)


def test_penalties_match_their_definitions(system, data, specs, feasible_samples):
    for G in feasible_samples[:10]:
        ev = core.evaluate(G, data, system.Q, system.R)
        ce, rob = reg.regularizer_terms(G, data, ev.Sigma)
        assert reg.evaluate_regularized(G, data, specs["ce"]) - ev.cost == pytest.approx(10 * ce, rel=1e-9)
        assert reg.evaluate_regularized(G, data, specs["rob"]) - ev.cost == pytest.approx(10 * rob, rel=1e-9)


@pytest.mark.parametrize("which", ["ce", "rob"])
def test_regularized_gradient_vs_finite_differences(data, specs, feasible_samples, which):
    spec = specs[which]
    f = lambda H: reg.evaluate_regularized(H, data, spec, check_constraint=False)
    for G in feasible_samples[:5]:
        g = reg.gradient_regularized(G, data, spec)
        fd = cert.finite_difference_gradient(f, G, 1e-6)
        assert np.linalg.norm(fd - g) <= 1e-5 * np.linalg.norm(g)


@pytest.mark.parametrize("which", ["ce", "rob"])
def test_regularized_hessian_vs_second_differences(data, specs, feasible_samples, which):
    spec = specs[which]
    f = lambda H: reg.evaluate_regularized(H, data, spec, check_constraint=False)
    rng = np.random.default_rng(8)
    for G in feasible_samples[:5]:
        Z = rng.standard_normal(G.shape)
        Z /= np.linalg.norm(Z)
        h = reg.hessian_action_regularized(G, Z, data, spec)
        assert cert.finite_difference_second(f, G, Z, 1e-4) == pytest.approx(h, rel=1e-4)


def test_zero_regularization_trace_identical(system, data, G0, specs, plain_trace):
    t = reg.run_regularized(G0, core.OptimizerConfig(max_iter=1000, grad_tol=1e-14), data, specs["zero"])
    assert len(t) == len(plain_trace)
    for a, b in zip(t.iterates, plain_trace.iterates):
        assert np.linalg.norm(a - b) <= 1e-12
    assert np.allclose(t.cost, plain_trace.cost, rtol=1e-12, atol=0)


def test_ce_run(system, data, specs, oracle):
    Gp = reg.perturbed_initial_policy(data, std=0.1, seed=0)
    assert np.linalg.norm(data.Pi_Dminus.matrix @ Gp) > 1e-3
    t = reg.run_regularized(Gp, core.OptimizerConfig(max_iter=1000, grad_tol=1e-14), data, specs["ce"])
    assert t.is_monotone()
    ref = reg.run_regularized(Gp, core.OptimizerConfig(grad_tol=1e-11), data, specs["ce"])
    assert ref.status == "converged"
    assert np.linalg.norm(core.recover_gain(ref.final_G, data) - oracle.K_star) <= 1e-4
    # the certainty-equivalence optimum has the unregularized optimal value
    assert min(ref.cost) == pytest.approx(oracle.J_star, rel=1e-10)
    audit = reg.implicit_regularization_audit(t, data)
    norms = audit.null_norms
    assert norms[-1] < 1e-6 * norms[0]
    assert np.all(np.diff(norms) <= 1e-12)


def test_rob_run_is_biased(system, data, G0, specs, oracle):
    t = reg.run_regularized(G0, core.OptimizerConfig(grad_tol=1e-11), data, specs["rob"])
    assert t.status == "converged"
    assert t.is_monotone()
    assert t.lqr_cost[-1] >= oracle.J_star - 1e-9
    assert np.linalg.norm(core.recover_gain(t.final_G, data) - oracle.K_star) > 1e-3


def test_implicit_regularization_from_range(system, data, plain_trace):
    audit = reg.implicit_regularization_audit(plain_trace, data)
    assert audit.max_null_norm <= 1e-8
    assert audit.max_step_drift <= 1e-10
    assert not audit.violated


def test_nullspace_component_frozen_without_regularization(system, data):
    Gp = reg.perturbed_initial_policy(data, std=0.1, seed=1)
    t = core.run_deepo(Gp, core.OptimizerConfig(max_iter=500, grad_tol=1e-14), data, system.Q, system.R)
    audit = reg.implicit_regularization_audit(t, data)
    assert audit.max_drift <= 1e-8
    assert audit.max_step_drift <= 1e-10
    assert audit.violated  # component is nonzero, only frozen


def test_orthogonality_identity(system, data, feasible_samples, oracle):
    for G in feasible_samples[:50]:
        g = core.gradient(G, data, system.Q, system.R)
        assert reg.orthogonality_identity_check(G, data, system.Q, system.R) <= 1e-9 * np.linalg.norm(g)
    assert reg.orthogonality_identity_check(oracle.G_star, data, system.Q, system.R) <= 1e-9


def test_orthogonality_identity_square_data(system):
    sq = dm.gaussian_batch(system, 6, seed=2)
    assert np.allclose(sq.Pi_Dminus.matrix, 0, atol=1e-10)
    G = core.initial_policy_from_gain(np.zeros((2, 4)), sq)
    assert reg.orthogonality_identity_check(G, sq, system.Q, system.R) <= 1e-9
