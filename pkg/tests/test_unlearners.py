import math

import numpy as np
import pytest

from unlearning_game.data import SyntheticSpec, generate_synthetic
from unlearning_game.errors import InvalidParameter, UnsupportedModel
from unlearning_game.learners import LearnerSpec, TrainConfig, final_layer_slice, loss_gradient, train
from unlearning_game.unlearners import (
    UnlearnerSpec,
    budget_constant,
    newton_removal_step,
    residual_to_budget,
    unlearn,
)

DATA = generate_synthetic(SyntheticSpec(40, 3, 2, 3.0, 1.0, 9))
RETAIN, FORGET = DATA.subset(range(30)), DATA.subset(range(30, 40))
LOGISTIC = LearnerSpec(l2_lambda=0.05)
MLP = LearnerSpec("mlp1", 1e-3, 4)
CFG = TrainConfig(epochs=200, seed=1)


@pytest.fixture(scope="module")
def originals():
    return {s.kind: train(s, DATA.points, CFG) for s in (LOGISTIC, MLP)}


@pytest.mark.parametrize("spec", [
    UnlearnerSpec("none"),
    UnlearnerSpec("neg_grad", steps=0, learning_rate=0.1),
    UnlearnerSpec("ft_final", steps=0, learning_rate=0.1),
    UnlearnerSpec("fisher", noise_sigma=0.0),
])
def test_identity_cases(originals, spec):
    learner = MLP
    orig = originals[learner.kind]
    out, ledger = unlearn(spec, orig, RETAIN, FORGET, learner, CFG, seed=5)
    assert ledger is None
    assert np.array_equal(out.params, orig.params)


def test_retrain_ignores_original_and_forget(originals):
    spec = UnlearnerSpec("retrain")
    a, _ = unlearn(spec, originals["mlp1"], RETAIN, FORGET, MLP, CFG, seed=3)
    other = train(MLP, DATA.subset(range(5, 35)), CFG)
    b, _ = unlearn(spec, other, RETAIN, DATA.subset(range(35, 40)), MLP, CFG, seed=3)
    ref = train(MLP, RETAIN, TrainConfig(epochs=200, seed=3))
    assert np.array_equal(a.params, b.params) and np.array_equal(a.params, ref.params)


def test_neg_grad_increases_forget_loss(originals):
    orig = originals["logistic_regression"]
    out, _ = unlearn(UnlearnerSpec("neg_grad", steps=5, learning_rate=0.1), orig, RETAIN, FORGET, LOGISTIC, CFG, 0)
    from unlearning_game.learners import objective_value
    assert objective_value(out, FORGET, perturbed=False) > objective_value(orig, FORGET, perturbed=False)


@pytest.mark.parametrize("kind", ["ft_final", "retr_final"])
def test_final_layer_methods_freeze_earlier_layers(originals, kind):
    orig = originals["mlp1"]
    out, _ = unlearn(UnlearnerSpec(kind, steps=20, learning_rate=0.1), orig, RETAIN, FORGET, MLP, CFG, 2)
    sl = final_layer_slice(orig)
    assert np.array_equal(out.params[:sl.start], orig.params[:sl.start])
    assert not np.array_equal(out.params[sl], orig.params[sl])


def test_retr_final_zero_steps_only_reinitializes(originals):
    orig = originals["mlp1"]
    a, _ = unlearn(UnlearnerSpec("retr_final", steps=0, learning_rate=0.1), orig, RETAIN, FORGET, MLP, CFG, 2)
    b, _ = unlearn(UnlearnerSpec("retr_final", steps=0, learning_rate=0.1), orig, RETAIN, FORGET, MLP, CFG, 2)
    assert np.array_equal(a.params, b.params)
    assert not np.array_equal(a.params, orig.params)


@pytest.mark.parametrize("kind", ["ft_final", "retr_final"])
def test_final_layer_methods_reject_logistic(originals, kind):
    with pytest.raises(UnsupportedModel):
        unlearn(UnlearnerSpec(kind, steps=1, learning_rate=0.1), originals["logistic_regression"],
                RETAIN, FORGET, LOGISTIC, CFG, 0)


def test_cr_newton_rejects_mlp(originals):
    with pytest.raises(UnsupportedModel):
        unlearn(UnlearnerSpec("cr_newton", epsilon_budget=1.0, delta=1e-4), originals["mlp1"],
                RETAIN, FORGET, MLP, CFG, 0)


def test_fisher_noise_is_seeded_and_scaled(originals):
    orig = originals["logistic_regression"]
    spec = UnlearnerSpec("fisher", noise_sigma=1e-3)
    a, _ = unlearn(spec, orig, RETAIN, FORGET, LOGISTIC, CFG, 1)
    b, _ = unlearn(spec, orig, RETAIN, FORGET, LOGISTIC, CFG, 1)
    c, _ = unlearn(spec, orig, RETAIN, FORGET, LOGISTIC, CFG, 2)
    assert np.array_equal(a.params, b.params) and not np.array_equal(a.params, c.params)
    big, _ = unlearn(UnlearnerSpec("fisher", noise_sigma=1e-1), orig, RETAIN, FORGET, LOGISTIC, CFG, 1)
    assert np.allclose(big.params - orig.params, 100 * (a.params - orig.params))


@pytest.mark.parametrize("bad", [
    dict(kind="neg_grad"), dict(kind="neg_grad", steps=-1, learning_rate=0.1),
    dict(kind="neg_grad", steps=1, learning_rate=0.0), dict(kind="fisher", noise_sigma=-1.0),
    dict(kind="cr_newton", epsilon_budget=0.0, delta=0.1), dict(kind="cr_newton", epsilon_budget=1.0, delta=1.0),
    dict(kind="retrain", steps=3), dict(kind="bogus"),
])
def test_spec_validation(bad):
    with pytest.raises(InvalidParameter):
        UnlearnerSpec(**bad)


def test_newton_step_exact_on_quadratic():
    # f(x) = 1/2 x'Ax - b'x; one step from any x lands on A^-1 b
    rng = np.random.default_rng(0)
    for _ in range(50):
        k = int(rng.integers(1, 12))
        M = rng.normal(size=(k, k))
        A = M @ M.T + k * np.eye(k)
        b = rng.normal(size=k)
        x = rng.normal(size=k)
        new = newton_removal_step(x, A, -(A @ x - b))
        assert np.linalg.norm(A @ new - b) <= 1e-8


def test_budget_constant_grid():
    for delta in (1e-6, 1e-4, 1e-2, 0.5, 0.9):
        assert budget_constant(delta) == pytest.approx(math.sqrt(2 * math.log(1.5 / delta)), rel=1e-15)
    grid = [budget_constant(d) for d in (1e-5, 1e-4, 1e-3, 1e-2, 1e-1)]
    assert all(a > b for a, b in zip(grid, grid[1:]))
    assert residual_to_budget(0.0, 1.0, 0.1) == 0.0
    assert residual_to_budget(2.4, 1.5, 1e-3) == pytest.approx(2 * residual_to_budget(1.2, 1.5, 1e-3))
    assert residual_to_budget(2.0, 4.0, 0.1) == pytest.approx(budget_constant(0.1) / 2)
    with pytest.raises(InvalidParameter):
        residual_to_budget(1.0, 0.0, 0.1)


def _perturbed(sigma):
    learner = LearnerSpec(l2_lambda=0.05, objective_perturbation_sigma=sigma)
    cfg = TrainConfig(epochs=500, optimizer="lbfgs", tolerance=1e-10, seed=4)
    return learner, cfg, train(learner, DATA.points, cfg)


def test_cr_newton_small_residual_and_ledger():
    learner, cfg, orig = _perturbed(10.0)
    out, ledger = unlearn(UnlearnerSpec("cr_newton", epsilon_budget=10.0, delta=1e-4), orig,
                          RETAIN, FORGET, learner, cfg, 7)
    residual = len(RETAIN) * np.linalg.norm(loss_gradient(out, RETAIN))
    assert not ledger.retrain_triggered
    assert ledger.accumulated_residual_norm == pytest.approx(residual)
    assert ledger.epsilon_consumed == pytest.approx(residual_to_budget(residual, 10.0, 1e-4))
    assert ledger.budget == pytest.approx(10.0 * 10.0 / budget_constant(1e-4))
    # a Newton step shrinks the retain gradient far below the starting point's
    assert residual < 0.1 * len(RETAIN) * np.linalg.norm(loss_gradient(orig, RETAIN))


def test_cr_newton_quadratic_limit():
    """With huge regularization the objective is nearly quadratic: the step is nearly exact."""
    learner = LearnerSpec(l2_lambda=50.0, objective_perturbation_sigma=1.0)
    cfg = TrainConfig(epochs=500, optimizer="lbfgs", tolerance=1e-12, seed=4)
    orig = train(learner, DATA.points, cfg)
    out, ledger = unlearn(UnlearnerSpec("cr_newton", epsilon_budget=1e6, delta=1e-4), orig,
                          RETAIN, FORGET, learner, cfg, 7)
    assert ledger.accumulated_residual_norm <= 1e-8 * len(RETAIN) * 100


def test_cr_newton_triggers_retrain():
    learner, cfg, orig = _perturbed(1e-3)
    out, ledger = unlearn(UnlearnerSpec("cr_newton", epsilon_budget=1e-3, delta=1e-4), orig,
                          RETAIN, FORGET, learner, cfg, 7)
    assert ledger.retrain_triggered
    from dataclasses import replace
    ref = train(learner, RETAIN, replace(cfg, seed=7))
    assert np.array_equal(out.params, ref.params)


def test_cr_newton_ledger_accumulates():
    learner, cfg, orig = _perturbed(10.0)
    spec = UnlearnerSpec("cr_newton", epsilon_budget=10.0, delta=1e-4)
    first, l1 = unlearn(spec, orig, DATA.subset(range(35)), DATA.subset(range(35, 40)), learner, cfg, 1)
    second, l2 = unlearn(spec, first, RETAIN, DATA.subset(range(30, 35)), learner, cfg, 1, ledger=l1)
    assert l2.accumulated_residual_norm > l1.accumulated_residual_norm
