"""Unlearning methods: map a model trained on retain+forget to one that forgot ``forget``."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import InvalidParameter, UnsupportedModel
from .game import DataPoint
from .learners import (
    LearnerSpec,
    Model,
    TrainConfig,
    _arrays,
    data_gradient,
    descend,
    final_layer_slice,
    fisher_diagonal,
    hessian,
    init_final_layer,
    loss_gradient,
    train,
)

KINDS = ("retrain", "none", "neg_grad", "ft_final", "retr_final", "fisher", "cr_newton")
_STEPPED = ("neg_grad", "ft_final", "retr_final")
FISHER_FLOOR = 1e-8


@dataclass(frozen=True)
class UnlearnerSpec:
    kind: str
    steps: int | None = None
    learning_rate: float | None = None
    noise_sigma: float | None = None
    epsilon_budget: float | None = None
    delta: float | None = None

    def __post_init__(self):
        k = self.kind
        if k not in KINDS:
            raise InvalidParameter(f"unknown unlearner {k!r}", "kind")
        want = {
            "steps": k in _STEPPED, "learning_rate": k in _STEPPED,
            "noise_sigma": k == "fisher",
            "epsilon_budget": k == "cr_newton", "delta": k == "cr_newton",
        }
        for name, needed in want.items():
            if (getattr(self, name) is not None) != needed:
                raise InvalidParameter(
                    f"{name} is {'required' if needed else 'not allowed'} for {k}", name)
        if k in _STEPPED and (self.steps < 0 or not self.learning_rate > 0):
            raise InvalidParameter("steps must be >= 0 and learning_rate > 0", "steps")
        if k == "fisher" and not self.noise_sigma >= 0:
            raise InvalidParameter("noise_sigma must be >= 0", "noise_sigma")
        if k == "cr_newton":
            if not self.epsilon_budget > 0:
                raise InvalidParameter("epsilon_budget must be > 0", "epsilon_budget")
            if not 0 < self.delta < 1:
                raise InvalidParameter("delta must lie in (0, 1)", "delta")

    @property
    def tag(self) -> str:
        """Short label used in seeds and reports, e.g. ``neg_grad(steps=10,lr=0.01)``."""
        extras = [f"{k}={v}" for k, v in (
            ("steps", self.steps), ("lr", self.learning_rate), ("sigma", self.noise_sigma),
            ("eps", self.epsilon_budget), ("delta", self.delta)) if v is not None]
        return self.kind + (f"({','.join(extras)})" if extras else "")

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


@dataclass(frozen=True)
class RemovalLedger:
    """Gradient-residual accounting for certified Newton removal.

    ``budget`` is expressed in residual-norm units
    (``epsilon_budget * sigma / c(delta)``); ``epsilon_consumed`` is the
    same quantity converted back to privacy-loss units.
    """

    accumulated_residual_norm: float
    budget: float
    retrain_triggered: bool
    epsilon_consumed: float = 0.0


def budget_constant(delta: float) -> float:
    if not 0 < delta < 1:
        raise InvalidParameter("delta must lie in (0, 1)", "delta")
    return math.sqrt(2.0 * math.log(1.5 / delta))


def residual_to_budget(residual_norm: float, sigma: float, delta: float) -> float:
    """Privacy loss consumed by a gradient residual under Gaussian objective perturbation."""
    if not sigma > 0:
        raise InvalidParameter("sigma must be > 0", "sigma")
    if residual_norm < 0:
        raise InvalidParameter("residual norm must be >= 0", "residual_norm")
    return budget_constant(delta) * residual_norm / sigma


def newton_removal_step(params: np.ndarray, retain_hessian: np.ndarray, correction: np.ndarray) -> np.ndarray:
    """``params + H^-1 correction`` via a symmetric positive-definite solve."""
    from scipy.linalg import solve
    return params + solve(retain_hessian, correction, assume_a="pos")


def _cr_newton(spec, original, retain, forget, learner, train_config, seed, prior):
    if learner.kind != "logistic_regression":
        raise UnsupportedModel("certified Newton removal needs a convex (logistic) model", "kind")
    theta = original.params
    n_r, n_f = len(retain), len(forget)
    lam = learner.l2_lambda
    correction = (n_f * data_gradient(original, forget) + n_f * lam * theta) / n_r
    new = original.with_params(newton_removal_step(theta, hessian(original, retain), correction))
    # residual of the summed (not averaged) retain objective
    residual = n_r * float(np.linalg.norm(loss_gradient(new, retain)))
    sigma = learner.objective_perturbation_sigma
    c = budget_constant(spec.delta)
    budget = spec.epsilon_budget * sigma / c
    accumulated = residual + (prior.accumulated_residual_norm if prior else 0.0)
    consumed = c * accumulated / sigma if sigma > 0 else math.inf
    triggered = accumulated > budget or (prior is not None and prior.retrain_triggered)
    ledger = RemovalLedger(accumulated, budget, triggered, consumed)
    if triggered:
        return train(learner, retain, replace(train_config, seed=seed), original.num_classes), ledger
    return new, ledger


def unlearn(spec: UnlearnerSpec, original: Model, retain: Sequence[DataPoint], forget: Sequence[DataPoint],
            learner: LearnerSpec, train_config: TrainConfig, seed: int,
            ledger: RemovalLedger | None = None) -> tuple[Model, RemovalLedger | None]:
    """Apply one unlearning request. Returns the model and, for ``cr_newton``, its ledger."""
    k = spec.kind
    C = original.num_classes
    if k == "retrain":
        return train(learner, retain, replace(train_config, seed=seed), C), None
    if k == "none":
        return original, None
    if k == "cr_newton":
        return _cr_newton(spec, original, retain, forget, learner, train_config, seed, ledger)
    if k in ("ft_final", "retr_final") and learner.kind != "mlp1":
        raise UnsupportedModel(f"{k} needs a model with a distinct final layer", "kind")

    theta = np.array(original.params)
    if k == "fisher":
        if spec.noise_sigma == 0:
            return original, None
        F = np.maximum(fisher_diagonal(original, retain), FISHER_FLOOR)
        noise = np.random.default_rng(seed).standard_normal(theta.shape)
        return original.with_params(theta + spec.noise_sigma * F ** -0.25 * noise), None

    if spec.steps == 0 and k != "retr_final":
        return original, None
    cfg = replace(train_config, learning_rate=spec.learning_rate, batch_size=0, seed=seed)
    if k == "neg_grad":
        X, y = _arrays(forget, original.dim)
        params, meta = descend(learner, theta, X, y, C, cfg, epochs=spec.steps, sign=-1.0, regularized=False)
        return original.with_params(params, meta), None

    sl = final_layer_slice(original)
    if k == "retr_final":
        theta[sl] = init_final_layer(original, seed)
    mask = np.zeros_like(theta)
    mask[sl] = 1.0
    X, y = _arrays(retain, original.dim)
    params, meta = descend(learner, theta, X, y, C, cfg, epochs=spec.steps, mask=mask)
    return original.with_params(params, meta), None
