"""Small differentiable models and the deterministic training routine.

Two model kinds are supported:

``logistic_regression``
    multinomial (softmax) regression; ``params = [W.ravel(), b]`` with
    ``W`` of shape ``(C, d)`` and ``b`` of shape ``(C,)``.
``mlp1``
    one tanh hidden layer of width ``h``;
    ``params = [W1.ravel(), b1, W2.ravel(), b2]`` with shapes
    ``(h, d), (h,), (C, h), (C,)``. ``W2, b2`` form the final layer.

The training objective is the mean cross-entropy plus
``(l2_lambda / 2) * ||params||**2`` plus, when objective perturbation is
enabled, ``noise . params / n`` with ``noise ~ N(0, sigma**2 I)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np
from scipy import optimize

from .errors import DimensionMismatch, DivergedTraining, InvalidParameter, UnsupportedModel
from .game import DataPoint, derive_seed

MODEL_FORMAT_VERSION = 1
FULL_BATCH = 0

Subset = Union[Sequence[DataPoint], tuple]


@dataclass(frozen=True)
class LearnerSpec:
    kind: str = "logistic_regression"
    l2_lambda: float = 1e-2
    hidden_width: int | None = None
    objective_perturbation_sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in ("logistic_regression", "mlp1"):
            raise InvalidParameter(f"unknown learner kind {self.kind!r}", "kind")
        if not self.l2_lambda >= 0:
            raise InvalidParameter("l2_lambda must be >= 0", "l2_lambda")
        if self.kind == "mlp1":
            if self.hidden_width is None or self.hidden_width < 1:
                raise InvalidParameter("mlp1 needs hidden_width >= 1", "hidden_width")
            if self.objective_perturbation_sigma != 0:
                raise InvalidParameter("objective perturbation is for logistic regression only",
                                       "objective_perturbation_sigma")
        elif self.hidden_width is not None:
            raise InvalidParameter("hidden_width is only meaningful for mlp1", "hidden_width")
        if not self.objective_perturbation_sigma >= 0:
            raise InvalidParameter("perturbation sigma must be >= 0", "objective_perturbation_sigma")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.5
    epochs: int = 1000
    batch_size: int = FULL_BATCH
    seed: int = 0
    tolerance: float = 1e-8
    optimizer: str = "gd"  # "gd" or "lbfgs"

    def __post_init__(self):
        if not self.learning_rate > 0 or self.epochs < 1 or self.batch_size < 0 or not self.tolerance > 0:
            raise InvalidParameter("learning_rate, epochs, tolerance must be positive; batch_size >= 0")
        if self.optimizer not in ("gd", "lbfgs"):
            raise InvalidParameter(f"unknown optimizer {self.optimizer!r}", "optimizer")


@dataclass(frozen=True)
class TrainMeta:
    seed: int
    grad_norm: float
    epochs_run: int


@dataclass(frozen=True, eq=False)
class Model:
    spec: LearnerSpec
    params: np.ndarray
    num_classes: int
    dim: int
    perturbation: np.ndarray | None = None
    train_meta: TrainMeta | None = field(default=None, compare=False)

    def __post_init__(self):
        p = np.array(self.params, dtype=np.float64)
        if p.shape != (num_params(self.spec, self.dim, self.num_classes),):
            raise DimensionMismatch("parameter vector has the wrong length", "params")
        if not np.all(np.isfinite(p)):
            raise DivergedTraining("non-finite parameters", "params")
        p.setflags(write=False)
        object.__setattr__(self, "params", p)
        if (self.perturbation is not None) != (self.spec.objective_perturbation_sigma > 0):
            raise InvalidParameter("perturbation vector present iff sigma > 0", "perturbation")

    def with_params(self, params: np.ndarray, train_meta: TrainMeta | None = None) -> "Model":
        return replace(self, params=params, train_meta=train_meta)


def num_params(spec: LearnerSpec, d: int, C: int) -> int:
    if spec.kind == "logistic_regression":
        return C * (d + 1)
    h = spec.hidden_width
    return h * d + h + C * h + C


def final_layer_slice(model: Model) -> slice:
    if model.spec.kind != "mlp1":
        raise UnsupportedModel("only mlp1 has a distinct final layer", "kind")
    C, h = model.num_classes, model.spec.hidden_width
    return slice(len(model.params) - (C * h + C), len(model.params))


def _arrays(subset: Subset, d: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(subset, tuple) and len(subset) == 2 and isinstance(subset[0], np.ndarray):
        X, y = subset
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        y = np.asarray(y, dtype=np.int64)
    else:
        if len(subset) == 0:
            raise InvalidParameter("empty subset", "subset")
        X = np.array([p.features for p in subset], dtype=np.float64)
        y = np.array([p.label for p in subset], dtype=np.int64)
    if X.shape[0] == 0:
        raise InvalidParameter("empty subset", "subset")
    if d is not None and X.shape[1] != d:
        raise DimensionMismatch(f"expected {d} features, got {X.shape[1]}", "features")
    return X, y


def _unpack(spec: LearnerSpec, params: np.ndarray, d: int, C: int):
    if spec.kind == "logistic_regression":
        return params[:C * d].reshape(C, d), params[C * d:]
    h = spec.hidden_width
    i = 0
    W1 = params[i:i + h * d].reshape(h, d); i += h * d
    b1 = params[i:i + h]; i += h
    W2 = params[i:i + C * h].reshape(C, h); i += C * h
    return W1, b1, W2, params[i:]


def _softmax(Z: np.ndarray) -> np.ndarray:
    Z = Z - Z.max(axis=-1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=-1, keepdims=True)


def _forward(spec, params, X, C):
    """Logits and the hidden activations (None for logistic regression)."""
    d = X.shape[1]
    if spec.kind == "logistic_regression":
        W, b = _unpack(spec, params, d, C)
        return X @ W.T + b, None
    W1, b1, W2, b2 = _unpack(spec, params, d, C)
    H = np.tanh(X @ W1.T + b1)
    return H @ W2.T + b2, H


def _per_example_grads(spec, params, X, y, C) -> np.ndarray:
    """Row i is the gradient of the cross-entropy of example i, shape (n, P)."""
    n, d = X.shape
    Z, H = _forward(spec, params, X, C)
    G = _softmax(Z)
    G[np.arange(n), y] -= 1.0
    if spec.kind == "logistic_regression":
        return np.concatenate([np.einsum("nc,nd->ncd", G, X).reshape(n, -1), G], axis=1)
    _, _, W2, _ = _unpack(spec, params, d, C)
    dZ1 = (G @ W2) * (1.0 - H ** 2)
    return np.concatenate([
        np.einsum("nh,nd->nhd", dZ1, X).reshape(n, -1), dZ1,
        np.einsum("nc,nh->nch", G, H).reshape(n, -1), G,
    ], axis=1)


def _data_loss_grad(spec, params, X, y, C) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient (no regularizer, no perturbation)."""
    n, d = X.shape
    Z, H = _forward(spec, params, X, C)
    Zs = Z - Z.max(axis=1, keepdims=True)
    logZ = np.log(np.exp(Zs).sum(axis=1))
    loss = float(np.mean(logZ - Zs[np.arange(n), y]))
    G = np.exp(Zs - logZ[:, None])
    G[np.arange(n), y] -= 1.0
    G /= n
    if spec.kind == "logistic_regression":
        return loss, np.concatenate([(G.T @ X).ravel(), G.sum(axis=0)])
    _, _, W2, _ = _unpack(spec, params, d, C)
    dZ1 = (G @ W2) * (1.0 - H ** 2)
    return loss, np.concatenate([(dZ1.T @ X).ravel(), dZ1.sum(axis=0), (G.T @ H).ravel(), G.sum(axis=0)])


def _objective(spec, params, X, y, C, perturbation) -> tuple[float, np.ndarray]:
    loss, grad = _data_loss_grad(spec, params, X, y, C)
    lam = spec.l2_lambda
    loss += 0.5 * lam * float(params @ params)
    grad = grad + lam * params
    if perturbation is not None:
        n = X.shape[0]
        loss += float(perturbation @ params) / n
        grad = grad + perturbation / n
    return loss, grad


def _init_params(spec: LearnerSpec, d: int, C: int, rng: np.random.Generator) -> np.ndarray:
    if spec.kind == "logistic_regression":
        return np.zeros(C * (d + 1))
    h = spec.hidden_width
    a, b = 1 / np.sqrt(d), 1 / np.sqrt(h)
    return np.concatenate([
        rng.uniform(-a, a, h * d), rng.uniform(-a, a, h),
        rng.uniform(-b, b, C * h), rng.uniform(-b, b, C),
    ])


def init_final_layer(model: Model, seed: int) -> np.ndarray:
    """Fresh seeded final-layer weights with the standard fan-in scaling."""
    sl = final_layer_slice(model)
    h = model.spec.hidden_width
    bound = 1 / np.sqrt(h)
    return np.random.default_rng(seed).uniform(-bound, bound, sl.stop - sl.start)


def descend(spec: LearnerSpec, params: np.ndarray, X, y, C, config: TrainConfig, *,
            perturbation=None, mask: np.ndarray | None = None, epochs: int | None = None,
            sign: float = 1.0, regularized: bool = True) -> tuple[np.ndarray, TrainMeta]:
    """Gradient descent from ``params``; the workhorse behind training and fine-tuning.

    ``mask`` restricts updates to a subset of coordinates, ``sign=-1``
    turns descent into ascent on the unregularized data loss.
    """
    params = np.array(params, dtype=np.float64)
    epochs = config.epochs if epochs is None else epochs
    n = X.shape[0]
    rng = np.random.default_rng(derive_seed(config.seed, "batches"))
    bs = n if config.batch_size in (FULL_BATCH, None) or config.batch_size >= n else config.batch_size

    def obj(p, Xb, yb):
        if regularized:
            return _objective(spec, p, Xb, yb, C, perturbation)
        return _data_loss_grad(spec, p, Xb, yb, C)

    grad_norm = np.inf
    run = 0
    for run in range(1, epochs + 1):
        if bs == n:
            loss, g = obj(params, X, y)
            if mask is not None:
                g = g * mask
            grad_norm = float(np.linalg.norm(g))
            if not np.isfinite(loss) or not np.isfinite(grad_norm):
                raise DivergedTraining(f"loss became non-finite at epoch {run}")
            if sign > 0 and grad_norm <= config.tolerance:
                run -= 1
                break
            params -= sign * config.learning_rate * g
        else:
            order = rng.permutation(n)
            for start in range(0, n, bs):
                idx = order[start:start + bs]
                loss, g = obj(params, X[idx], y[idx])
                if mask is not None:
                    g = g * mask
                if not np.isfinite(loss):
                    raise DivergedTraining(f"loss became non-finite at epoch {run}")
                params -= sign * config.learning_rate * g
    if not np.all(np.isfinite(params)):
        raise DivergedTraining("parameters became non-finite")
    _, g = obj(params, X, y)
    if mask is not None:
        g = g * mask
    return params, TrainMeta(config.seed, float(np.linalg.norm(g)), run)


def train(spec: LearnerSpec, subset: Subset, config: TrainConfig, num_classes: int | None = None) -> Model:
    """Fit a model on ``subset``; a pure function of its arguments."""
    X, y = _arrays(subset)
    C = int(y.max()) + 1 if num_classes is None else num_classes
    C = max(C, 2)
    if y.min() < 0 or y.max() >= C:
        raise InvalidParameter("label out of range", "labels")
    d = X.shape[1]
    rng = np.random.default_rng(derive_seed(config.seed, "init"))
    params = _init_params(spec, d, C, rng)
    perturbation = None
    if spec.objective_perturbation_sigma > 0:
        prng = np.random.default_rng(derive_seed(config.seed, "perturbation"))
        perturbation = prng.normal(0.0, spec.objective_perturbation_sigma, params.shape)
        perturbation.setflags(write=False)

    if config.optimizer == "lbfgs":
        res = optimize.minimize(
            lambda p: _objective(spec, p, X, y, C, perturbation), params, jac=True, method="L-BFGS-B",
            options={"maxiter": config.epochs, "gtol": config.tolerance, "ftol": 0.0, "maxcor": 20},
        )
        if not np.all(np.isfinite(res.x)) or not np.isfinite(res.fun):
            raise DivergedTraining("L-BFGS produced non-finite values")
        _, g = _objective(spec, res.x, X, y, C, perturbation)
        params, meta = res.x, TrainMeta(config.seed, float(np.linalg.norm(g)), int(res.nit))
    else:
        params, meta = descend(spec, params, X, y, C, config, perturbation=perturbation)
    return Model(spec, params, C, d, perturbation, meta)


def predict_proba(model: Model, features) -> np.ndarray:
    """Class probabilities for one feature vector (shape (C,)) or a batch (n, C)."""
    x = np.asarray(features, dtype=np.float64)
    X = np.atleast_2d(x)
    if X.shape[1] != model.dim:
        raise DimensionMismatch(f"model expects {model.dim} features, got {X.shape[1]}", "features")
    P = _softmax(_forward(model.spec, model.params, X, model.num_classes)[0])
    return P[0] if x.ndim == 1 else P


def objective_value(model: Model, subset: Subset, perturbed: bool = True) -> float:
    X, y = _arrays(subset, model.dim)
    pert = model.perturbation if perturbed else None
    return _objective(model.spec, model.params, X, y, model.num_classes, pert)[0]


def loss_gradient(model: Model, subset: Subset, perturbed: bool = True) -> np.ndarray:
    """Gradient of the regularized (and, if the model carries one, perturbed) objective."""
    X, y = _arrays(subset, model.dim)
    pert = model.perturbation if perturbed else None
    return _objective(model.spec, model.params, X, y, model.num_classes, pert)[1]


def data_gradient(model: Model, subset: Subset) -> np.ndarray:
    """Gradient of the mean cross-entropy alone."""
    X, y = _arrays(subset, model.dim)
    return _data_loss_grad(model.spec, model.params, X, y, model.num_classes)[1]


def per_example_gradients(model: Model, subset: Subset) -> np.ndarray:
    X, y = _arrays(subset, model.dim)
    return _per_example_grads(model.spec, model.params, X, y, model.num_classes)


def hessian(model: Model, subset: Subset) -> np.ndarray:
    """Exact Hessian of the regularized objective (logistic regression only)."""
    if model.spec.kind != "logistic_regression":
        raise UnsupportedModel("closed-form Hessian is available for logistic regression only", "kind")
    X, y = _arrays(subset, model.dim)
    n, d = X.shape
    C = model.num_classes
    P = _softmax(_forward(model.spec, model.params, X, C)[0])
    Xt = np.hstack([X, np.ones((n, 1))])
    # blocks indexed by (class, augmented feature); bias sits in column d
    Hb = np.empty((C, d + 1, C, d + 1))
    for c in range(C):
        for k in range(c, C):
            a = (P[:, c] * ((c == k) - P[:, k])) / n
            block = (Xt * a[:, None]).T @ Xt
            Hb[c, :, k, :] = block
            Hb[k, :, c, :] = block.T
    Hb = Hb.reshape(C * (d + 1), C * (d + 1))
    order = np.concatenate([
        (np.arange(C)[:, None] * (d + 1) + np.arange(d)[None, :]).ravel(),
        np.arange(C) * (d + 1) + d,
    ])
    H = Hb[np.ix_(order, order)]
    H = 0.5 * (H + H.T)
    H[np.diag_indices_from(H)] += model.spec.l2_lambda
    return H


def fisher_diagonal(model: Model, subset: Subset) -> np.ndarray:
    """Empirical Fisher diagonal: mean of squared per-example log-likelihood gradients."""
    return np.mean(per_example_gradients(model, subset) ** 2, axis=0)


def model_to_json(model: Model) -> str:
    meta = model.train_meta
    record = {
        "version": MODEL_FORMAT_VERSION,
        "spec": {
            "kind": model.spec.kind, "l2_lambda": model.spec.l2_lambda,
            "hidden_width": model.spec.hidden_width,
            "objective_perturbation_sigma": model.spec.objective_perturbation_sigma,
        },
        "num_classes": model.num_classes,
        "dim": model.dim,
        "params": model.params.tolist(),
        "perturbation": None if model.perturbation is None else model.perturbation.tolist(),
        "train_meta": None if meta is None else {
            "seed": meta.seed, "grad_norm": meta.grad_norm, "epochs_run": meta.epochs_run},
    }
    return json.dumps(record, sort_keys=True)


def model_from_json(text: str) -> Model:
    rec = json.loads(text)
    if rec.get("version") != MODEL_FORMAT_VERSION:
        raise InvalidParameter(f"unsupported model format version {rec.get('version')!r}", "version")
    meta = rec["train_meta"]
    pert = rec["perturbation"]
    return Model(
        LearnerSpec(**rec["spec"]), np.array(rec["params"]), rec["num_classes"], rec["dim"],
        None if pert is None else np.array(pert),
        None if meta is None else TrainMeta(**meta),
    )
