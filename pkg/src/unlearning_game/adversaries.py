"""Membership-inference adversaries.

Weak adversaries see a single oracle point and answer with a fitted
per-point classifier. Each built-in attack comes in two forms: a
``fit_*`` function producing a :class:`WeakAdversary` against one model,
and an attack family object whose ``fit(model)`` does the same with its
calibration already bound, which is what the advantage engine consumes.

Calibration data always comes from shadow models trained on the shadow
half of the data, never from the split under evaluation.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DegenerateCalibration, InvalidParameter, NonOverlappingSplits, QueryBudgetExceeded
from .game import DataPoint, Dataset, Split, derive_seed
from .learners import LearnerSpec, Model, TrainConfig, predict_proba, train

LOG_CLAMP = 1e-12

# (X, y) -> scores, higher = more member-like
BatchScore = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class WeakAdversary:
    """A fitted membership classifier: member iff ``score >= threshold``.

    ``threshold`` is a scalar or a per-class vector indexed by label.
    """

    name: str
    batch_score: BatchScore
    threshold: float | np.ndarray
    fit_meta: dict = field(default_factory=dict)

    def scores(self, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.asarray(self.batch_score(np.atleast_2d(X), np.asarray(y)), dtype=np.float64)

    def decisions(self, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y)
        thr = self.threshold if np.isscalar(self.threshold) else np.asarray(self.threshold)[y]
        return (self.scores(X, y) >= thr).astype(np.int8)

    def score(self, x: DataPoint) -> float:
        return float(self.scores(x.features, [x.label])[0])

    def classifier(self, x: DataPoint) -> int:
        return int(self.decisions(x.features, [x.label])[0])

    __call__ = classifier


@dataclass(frozen=True, eq=False)
class StrongAdversary:
    """Oracle-interacting adversary ``decide(model, oracle, max_queries) -> bit``.

    ``region`` optionally declares the decision table (id -> bit) for
    adversaries whose answer is the first defined table entry they draw;
    the engine then computes accept rates exactly instead of by play.
    """

    name: str
    decide: Callable
    region: dict[int, int] | None = None


def _true_label_prob(P: np.ndarray, y: np.ndarray) -> np.ndarray:
    return P[np.arange(len(y)), y]


def correctness_scores(model, X, y) -> np.ndarray:
    return (np.argmax(predict_proba(model, X), axis=1) == y).astype(np.float64)


def confidence_scores(model, X, y) -> np.ndarray:
    return _true_label_prob(predict_proba(model, X), np.asarray(y))


def mentr(P: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Modified prediction entropy, vectorized over rows of ``P``."""
    P = np.atleast_2d(P)
    y = np.asarray(y)
    rows = np.arange(len(y))
    py = P[rows, y]
    log_p = np.log(np.maximum(P, LOG_CLAMP))
    log_1mp = np.log(np.maximum(1.0 - P, LOG_CLAMP))
    others = -(P * log_1mp)
    others[rows, y] = 0.0
    return -(1.0 - py) * log_p[rows, y] + others.sum(axis=1)


def mentropy_scores(model, X, y) -> np.ndarray:
    return -mentr(predict_proba(model, X), y)


def best_threshold(scores: np.ndarray, members: np.ndarray) -> tuple[float, float]:
    """Threshold maximizing member rate minus non-member rate; ties go to the smaller threshold.

    Returns ``(threshold, fitted_advantage)``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    members = np.asarray(members, dtype=bool)
    n_in, n_out = members.sum(), (~members).sum()
    if n_in == 0 or n_out == 0:
        raise DegenerateCalibration("calibration needs both members and non-members")
    cands = np.append(np.unique(scores), np.inf)
    s_in = np.sort(scores[members])
    s_out = np.sort(scores[~members])
    # fraction with score >= c, for each candidate c
    tpr = 1.0 - np.searchsorted(s_in, cands, side="left") / n_in
    fpr = 1.0 - np.searchsorted(s_out, cands, side="left") / n_out
    gain = tpr - fpr
    i = int(np.argmax(gain))  # first maximum = smallest threshold
    return float(cands[i]), float(gain[i])


def _calibration_scores(calibration, default_model, scorer) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Score calibration entries ``(point, bit)`` or ``(point, bit, scoring_model)``."""
    if len(calibration) == 0:
        raise DegenerateCalibration("empty calibration set")
    groups: dict[int, list] = {}
    for idx, entry in enumerate(calibration):
        m = entry[2] if len(entry) > 2 else default_model
        groups.setdefault(id(m), [m, []])[1].append(idx)
    scores = np.empty(len(calibration))
    for m, idxs in groups.values():
        X = np.array([calibration[i][0].features for i in idxs])
        y = np.array([calibration[i][0].label for i in idxs])
        scores[idxs] = scorer(m, X, y)
    bits = np.array([entry[1] for entry in calibration], dtype=bool)
    labels = np.array([entry[0].label for entry in calibration])
    return scores, bits, labels


def fit_correctness(model) -> WeakAdversary:
    return WeakAdversary("correctness", lambda X, y: correctness_scores(model, X, y), 0.5,
                         {"calibration": "none"})


def fit_confidence(model, calibration: Sequence[tuple], reference=None) -> WeakAdversary:
    """Threshold the true-label probability.

    Calibration entries are ``(point, membership_bit)``, scored with
    ``reference`` (default ``model``), or ``(point, bit, scoring_model)``.
    """
    scores, bits, _ = _calibration_scores(calibration, reference or model, confidence_scores)
    thr, adv = best_threshold(scores, bits)
    return WeakAdversary("confidence", lambda X, y: confidence_scores(model, X, y), thr,
                         {"calibration_size": len(calibration), "calibration_advantage": adv})


def fit_mentropy(model, calibration: Sequence[tuple], reference=None) -> WeakAdversary:
    """Threshold negated modified entropy, one threshold per true class.

    A class whose calibration rows lack members or non-members falls back
    to the pooled threshold.
    """
    scores, bits, labels = _calibration_scores(calibration, reference or model, mentropy_scores)
    pooled, pooled_adv = best_threshold(scores, bits)
    C = getattr(model, "num_classes", int(labels.max()) + 1)
    thresholds = np.full(C, pooled)
    fallback = []
    for c in range(C):
        sel = labels == c
        if bits[sel].any() and (~bits[sel]).any():
            thresholds[c] = best_threshold(scores[sel], bits[sel])[0]
        else:
            fallback.append(c)
    return WeakAdversary("mentropy", lambda X, y: mentropy_scores(model, X, y), thresholds,
                         {"calibration_size": len(calibration), "pooled_advantage": pooled_adv,
                          "pooled_threshold_classes": fallback})


def shadow_features(P: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Descending-sorted probability vector plus the true-label probability."""
    P = np.atleast_2d(P)
    return np.hstack([-np.sort(-P, axis=1), _true_label_prob(P, np.asarray(y))[:, None]])


@dataclass(frozen=True, eq=False)
class ShadowConfig:
    shadow_dataset: Dataset
    num_shadow: int
    learner: LearnerSpec
    train_config: TrainConfig
    attack_l2: float = 1e-3

    def __post_init__(self):
        if self.num_shadow < 1:
            raise InvalidParameter("num_shadow must be >= 1", "num_shadow")
        if len(self.shadow_dataset) < 2:
            raise InvalidParameter("shadow dataset needs at least two points", "shadow_dataset")


@dataclass(frozen=True, eq=False)
class ShadowModel:
    model: Model
    members: tuple[int, ...]
    non_members: tuple[int, ...]


class ShadowPool:
    """Shadow models trained on seeded halves of the shadow dataset.

    Training is lazy and happens once; models are kept in index order so
    everything derived from the pool is independent of evaluation order.
    """

    def __init__(self, config: ShadowConfig):
        self.config = config

    @cached_property
    def shadows(self) -> list[ShadowModel]:
        cfg = self.config
        data = cfg.shadow_dataset
        n = len(data)
        out = []
        for k in range(cfg.num_shadow):
            base = derive_seed(cfg.train_config.seed, "shadow", k)
            perm = np.random.default_rng(base).permutation(n)
            inside, outside = np.sort(perm[: n // 2]), np.sort(perm[n // 2:])
            model = train(cfg.learner, data.subset(inside), replace(cfg.train_config, seed=base),
                          data.num_classes)
            out.append(ShadowModel(model, tuple(inside.tolist()), tuple(outside.tolist())))
        return out

    def calibration(self) -> list[tuple[DataPoint, int, Model]]:
        data = self.config.shadow_dataset
        rows = []
        for sm in self.shadows:
            rows += [(data.point(i), 1, sm.model) for i in sm.members]
            rows += [(data.point(i), 0, sm.model) for i in sm.non_members]
        return rows

    def attack_examples(self, shadows: Iterable[ShadowModel] | None = None):
        """Stacked (features, labels, membership) over the given shadow models."""
        data = self.config.shadow_dataset
        feats, labels, bits = [], [], []
        for sm in self.shadows if shadows is None else shadows:
            for ids, bit in ((sm.members, 1), (sm.non_members, 0)):
                ids = np.asarray(ids)
                y = data.labels[ids]
                feats.append(shadow_features(predict_proba(sm.model, data.features[ids]), y))
                labels.append(y)
                bits.append(np.full(len(ids), bit))
        return np.vstack(feats), np.concatenate(labels), np.concatenate(bits)

    @cached_property
    def attack_models(self) -> list[Model]:
        return self.fit_attack_models()

    def fit_attack_models(self, shadows: Iterable[ShadowModel] | None = None) -> list[Model]:
        """One binary logistic attack model per true class."""
        F, labels, bits = self.attack_examples(shadows)
        spec = LearnerSpec("logistic_regression", l2_lambda=self.config.attack_l2)
        cfg = TrainConfig(epochs=2000, optimizer="lbfgs", tolerance=1e-10,
                          seed=derive_seed(self.config.train_config.seed, "attack"))
        models = []
        for c in range(self.config.shadow_dataset.num_classes):
            sel = labels == c
            if not (bits[sel] == 1).any() or not (bits[sel] == 0).any():
                raise DegenerateCalibration(f"class {c} lacks in or out shadow examples", "shadow_dataset")
            models.append(train(spec, (F[sel], bits[sel]), cfg, 2))
        return models


def attack_member_prob(attack_models: Sequence[Model], P: np.ndarray, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y)
    F = shadow_features(P, y)
    out = np.empty(len(y))
    for c in np.unique(y):
        sel = y == c
        out[sel] = predict_proba(attack_models[c], F[sel])[:, 1]
    return out


def fit_shadow(shadow_config: ShadowConfig | ShadowPool, target_model) -> WeakAdversary:
    pool = shadow_config if isinstance(shadow_config, ShadowPool) else ShadowPool(shadow_config)
    attack = pool.attack_models
    return WeakAdversary(
        "shadow", lambda X, y: attack_member_prob(attack, predict_proba(target_model, X), y), 0.5,
        {"num_shadow": pool.config.num_shadow, "shadow_size": len(pool.config.shadow_dataset)})


class Attack:
    """An attack family: ``fit(model)`` returns the adversary fitted against ``model``."""

    name = "attack"

    def fit(self, model) -> WeakAdversary:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"


class CorrectnessAttack(Attack):
    name = "correctness"

    def fit(self, model):
        return fit_correctness(model)


class ConfidenceAttack(Attack):
    name = "confidence"

    def __init__(self, pool: ShadowPool):
        self.pool = pool

    @cached_property
    def _threshold(self):
        scores, bits, _ = _calibration_scores(self.pool.calibration(), None, confidence_scores)
        return best_threshold(scores, bits)

    def fit(self, model):
        thr, adv = self._threshold
        return WeakAdversary(self.name, lambda X, y: confidence_scores(model, X, y), thr,
                             {"calibration": "shadow", "calibration_advantage": adv})


class MentropyAttack(Attack):
    name = "mentropy"

    def __init__(self, pool: ShadowPool):
        self.pool = pool

    @cached_property
    def _template(self) -> WeakAdversary:
        cal = self.pool.calibration()
        return fit_mentropy(cal[0][2], cal)

    def fit(self, model):
        t = self._template
        return WeakAdversary(self.name, lambda X, y: mentropy_scores(model, X, y), t.threshold,
                             {"calibration": "shadow", **t.fit_meta})


class ShadowAttack(Attack):
    name = "shadow"

    def __init__(self, pool: ShadowPool):
        self.pool = pool

    def fit(self, model):
        return fit_shadow(self.pool, model)


class FixedAttack(Attack):
    """Wraps an already-fitted adversary; ignores the model."""

    def __init__(self, adversary: WeakAdversary):
        self.adversary = adversary
        self.name = adversary.name

    def fit(self, model):
        return self.adversary


def constant_adversary(bit: int) -> WeakAdversary:
    return WeakAdversary(f"constant-{bit}", lambda X, y: np.full(len(y), float(bit)), 0.5,
                         {"calibration": "none"})


def builtin_roster(shadow: ShadowConfig | ShadowPool) -> list[Attack]:
    """Correctness, confidence, modified-entropy and shadow-model attacks sharing one shadow pool."""
    pool = shadow if isinstance(shadow, ShadowPool) else ShadowPool(shadow)
    return [CorrectnessAttack(), ConfidenceAttack(pool), MentropyAttack(pool), ShadowAttack(pool)]


def default_max_queries(split: Split) -> int:
    return 10 * 2 * len(split.forget)


def lookup_adversary(s1: Split, s2: Split) -> StrongAdversary:
    """Hard-coded table adversary for a known pair of splits.

    Answers 1 on points in both test sets, 0 on points in both forget
    sets, and keeps drawing otherwise. It never looks at the model.
    """
    t_both = set(s1.test) & set(s2.test)
    f_both = set(s1.forget) & set(s2.forget)
    if not t_both or not f_both:
        raise NonOverlappingSplits("forget and test intersections must both be nonempty")
    table = {**{i: 1 for i in t_both}, **{i: 0 for i in f_both}}
    default_budget = 10 * len(set(s1.forget) | set(s1.test))

    def decide(model, oracle, max_queries: int | None = None) -> int:
        budget = default_budget if max_queries is None else max_queries
        for _ in range(budget):
            answer = table.get(oracle().id)
            if answer is not None:
                return answer
        raise QueryBudgetExceeded(f"no table hit in {budget} draws")

    return StrongAdversary("lookup", decide, table)


def weak_to_strong(weak: WeakAdversary) -> StrongAdversary:
    """Single-query strong adversary: draw one point, return ``classifier(x)``."""

    def decide(model, oracle, max_queries: int | None = None) -> int:
        return weak.classifier(oracle())

    return StrongAdversary(f"strong[{weak.name}]", decide)
