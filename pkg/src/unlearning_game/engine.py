"""Advantage estimation.

Per-split signed advantage, the SWAP test, exact enumeration over the
whole split space, Monte-Carlo estimation, Unlearning Quality, the
certified-removal bound and the MIA-AUC comparison score.

Two places for the absolute value appear below and they are not
interchangeable: the full advantage takes ``|mean of signed values|``
over splits, while each SWAP pair takes ``|Adv_s + Adv_s'| / 2``. In
general ``|mean| <= mean of |.|``.
"""
from __future__ import annotations

import hashlib
import json
import math
import weakref
from dataclasses import dataclass, field, replace
from typing import Protocol, Sequence

import numpy as np
from scipy.stats import rankdata

from .adversaries import Attack, FixedAttack, StrongAdversary, WeakAdversary
from .errors import EnumerationTooLarge, InvalidParameter, QueryBudgetExceeded
from .game import (
    Dataset,
    Oracle,
    OracleSpec,
    SensitivityDistribution,
    Split,
    conditional_mass,
    derive_seed,
    enumerate_splits,
    num_splits,
    sample_split,
    swap,
)
from .learners import LearnerSpec, Model, TrainConfig, train
from .unlearners import RemovalLedger, UnlearnerSpec, unlearn

REPORT_VERSION = 1
ENUMERATION_CAP = 10 ** 5


@dataclass(frozen=True, eq=False)
class GameContext:
    dataset: Dataset
    learner: LearnerSpec
    train_config: TrainConfig
    sensitivity: SensitivityDistribution | None = None
    models_per_split: int = 3
    master_seed: int = 0

    def __post_init__(self):
        if self.sensitivity is None:
            object.__setattr__(self, "sensitivity", SensitivityDistribution.uniform(len(self.dataset)))
        if len(self.sensitivity) != len(self.dataset):
            raise InvalidParameter("sensitivity must weight every dataset id", "sensitivity")
        if self.models_per_split < 1:
            raise InvalidParameter("models_per_split must be >= 1", "models_per_split")


class ChallengerLike(Protocol):
    dataset: Dataset
    sensitivity: SensitivityDistribution
    method: str

    def models(self, split: Split) -> Sequence: ...


class Challenger:
    """Produces and caches ``Unlearn(Learn(R u F), F)`` samples for each split.

    Seeds are derived from the master seed and the split contents. The
    original model's seed depends only on the retain set and model index,
    and ``retrain`` models are cached by retain set, so a split and its
    swap partner receive the very same retrained models.
    """

    def __init__(self, context: GameContext, unlearner: UnlearnerSpec):
        self.context = context
        self.unlearner = unlearner
        self._cache: dict[tuple[str, int], Model] = {}
        self.ledgers: dict[str, list[RemovalLedger]] = {}
        self.trainings = 0

    @property
    def dataset(self) -> Dataset:
        return self.context.dataset

    @property
    def sensitivity(self) -> SensitivityDistribution:
        return self.context.sensitivity

    @property
    def method(self) -> str:
        return self.unlearner.tag

    def seeds(self, split: Split, k: int) -> dict[str, int]:
        m = self.context.master_seed
        return {
            "learn": derive_seed(m, "learn", split.retain_key(), k),
            "retrain": derive_seed(m, "retrain", split.retain_key(), k),
            "unlearn": derive_seed(m, "unlearn", self.unlearner.tag, split.key(), k),
        }

    def _one(self, split: Split, k: int) -> Model:
        ctx = self.context
        seeds = self.seeds(split, k)
        data = ctx.dataset
        retain = data.subset(split.retain)
        if self.unlearner.kind == "retrain":
            key = (split.retain_key(), k)
            if key not in self._cache:
                self.trainings += 1
                self._cache[key] = train(ctx.learner, retain, replace(ctx.train_config, seed=seeds["retrain"]),
                                         data.num_classes)
            return self._cache[key]
        key = (split.key(), k)
        if key not in self._cache:
            forget = data.subset(split.forget)
            self.trainings += 1
            original = train(ctx.learner, retain + forget, replace(ctx.train_config, seed=seeds["learn"]),
                             data.num_classes)
            seed = seeds["retrain"] if self.unlearner.kind == "cr_newton" else seeds["unlearn"]
            model, ledger = unlearn(self.unlearner, original, retain, forget, ctx.learner, ctx.train_config, seed)
            if ledger is not None:
                self.ledgers.setdefault(split.key(), []).append(ledger)
            self._cache[key] = model
        return self._cache[key]

    def models(self, split: Split) -> list[Model]:
        return [self._one(split, k) for k in range(self.context.models_per_split)]

    def clear(self) -> None:
        self._cache.clear()


# model -> {(attack, dataset): decision bits over all ids}
_decisions: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def _as_attack(adversary) -> Attack:
    return FixedAttack(adversary) if isinstance(adversary, WeakAdversary) else adversary


def model_decisions(attack, model, dataset: Dataset) -> np.ndarray:
    """Membership decisions of ``attack`` fitted against ``model``, for every dataset id."""
    attack = _as_attack(attack)
    try:
        per_model = _decisions.setdefault(model, {})
    except TypeError:
        per_model = {}
    key = (attack, id(dataset))
    if key not in per_model:
        fitted = attack.fit(model)
        per_model[key] = (fitted.decisions(dataset.features, dataset.labels), dataset)
    return per_model[key][0]


def weak_accept_rate(adversary, split: Split, bit: int, sensitivity: SensitivityDistribution,
                     models: Sequence, dataset: Dataset) -> float:
    """Mean over models of ``sum_x mass(x) * [f_m(x) = 1]``; exact in ``x``."""
    if len(models) == 0:
        raise InvalidParameter("need at least one model", "models")
    ids = np.asarray(split.selected(bit))
    p = conditional_mass(sensitivity, ids)
    rates = [float(p @ model_decisions(adversary, m, dataset)[ids]) for m in models]
    return _clamp(math.fsum(rates) / len(rates))


def region_accept_rate(region: dict[int, int], split: Split, bit: int, sensitivity: SensitivityDistribution) -> float:
    """Probability a table adversary answers 1, conditioned on it answering at all."""
    ids = split.selected(bit)
    p = conditional_mass(sensitivity, ids)
    defined = np.array([region.get(i) is not None for i in ids])
    ones = np.array([region.get(i) == 1 for i in ids])
    total = p[defined].sum()
    if total == 0:
        raise QueryBudgetExceeded("oracle never reaches the adversary's decision region")
    return _clamp(float(p[ones].sum() / total))


def _strong_accept_rate(adv: StrongAdversary, split, bit, sensitivity, models, dataset, plays, seed,
                        max_queries) -> tuple[float, int]:
    ones = aborted = 0
    spec = OracleSpec(split, bit, sensitivity)
    for j in range(plays):
        # one model and one oracle per play
        model = models[j % len(models)]
        oracle = Oracle(spec, dataset, derive_seed(seed, split.key(), bit, j))
        try:
            ones += adv.decide(model, oracle, max_queries)
        except QueryBudgetExceeded:
            aborted += 1
            ones += int(np.random.default_rng(derive_seed(seed, "coin", split.key(), bit, j)).integers(2))
    return ones / plays, aborted


@dataclass(frozen=True)
class SplitAdvantage:
    split: Split
    signed_value: float
    accept_rate_b0: float
    accept_rate_b1: float
    num_models: int
    num_plays: int | None = None
    aborted_plays: int = 0

    def __post_init__(self):
        if not (0 <= self.accept_rate_b0 <= 1 and 0 <= self.accept_rate_b1 <= 1):
            raise InvalidParameter("accept rates must lie in [0, 1]")


def split_advantage(adversary, challenger: ChallengerLike, split: Split, *, plays: int = 10_000,
                    seed: int = 0, analytic: bool = True, max_queries: int | None = None) -> SplitAdvantage:
    """Signed advantage ``Pr[A=1 | b=0] - Pr[A=1 | b=1]`` on one split.

    Weak adversaries (attack families or fitted classifiers) are evaluated
    exactly over the oracle mass. Strong adversaries use their declared
    decision region when ``analytic`` is set, otherwise ``plays``
    independent seeded plays per bit.
    """
    models = challenger.models(split)
    data, sens = challenger.dataset, challenger.sensitivity
    if isinstance(adversary, StrongAdversary):
        if analytic and adversary.region is not None:
            r0 = region_accept_rate(adversary.region, split, 0, sens)
            r1 = region_accept_rate(adversary.region, split, 1, sens)
            return SplitAdvantage(split, r0 - r1, r0, r1, len(models))
        r0, a0 = _strong_accept_rate(adversary, split, 0, sens, models, data, plays, seed, max_queries)
        r1, a1 = _strong_accept_rate(adversary, split, 1, sens, models, data, plays, seed, max_queries)
        return SplitAdvantage(split, r0 - r1, r0, r1, len(models), plays, a0 + a1)
    r0 = weak_accept_rate(adversary, split, 0, sens, models, data)
    r1 = weak_accept_rate(adversary, split, 1, sens, models, data)
    return SplitAdvantage(split, r0 - r1, r0, r1, len(models))


def pair_advantage(adversary, challenger: ChallengerLike, s1: Split, s2: Split, **kw) -> float:
    """``|Adv_s1 + Adv_s2| / 2``."""
    a = split_advantage(adversary, challenger, s1, **kw).signed_value
    b = split_advantage(adversary, challenger, s2, **kw).signed_value
    return abs(a + b) / 2


def swap_advantage(adversary, challenger: ChallengerLike, split: Split, **kw) -> float:
    return pair_advantage(adversary, challenger, split, swap(split), **kw)


@dataclass
class Estimate:
    """One adversary's advantage under one estimator, with per-split rows."""

    adversary: str
    estimator: str
    value: float
    raw_value: float
    standard_error: float | None
    rows: list[dict] = field(default_factory=list)


def _row(sa: SplitAdvantage, **extra) -> dict:
    return {"split": sa.split.key(), "signed_value": sa.signed_value,
            "accept_rate_b0": sa.accept_rate_b0, "accept_rate_b1": sa.accept_rate_b1,
            "num_models": sa.num_models, **extra}


def _clamp(v: float) -> float:
    return min(1.0, max(0.0, v))


def _name(adversary) -> str:
    return getattr(adversary, "name", type(adversary).__name__)


def exact_estimate(adversary, challenger: ChallengerLike, alpha, cap: int = ENUMERATION_CAP, **kw) -> Estimate:
    n = len(challenger.dataset)
    if num_splits(n, alpha) > cap:
        raise EnumerationTooLarge(f"{num_splits(n, alpha)} splits exceed cap {cap}", "alpha")
    rows, vals = [], []
    for i, s in enumerate(enumerate_splits(n, alpha)):
        sa = split_advantage(adversary, challenger, s, **kw)
        vals.append(sa.signed_value)
        rows.append(_row(sa, index=i))
    raw = abs(math.fsum(vals) / len(vals))
    return Estimate(_name(adversary), "exact", _clamp(raw), raw, None, rows)


def exact_advantage(adversary, challenger: ChallengerLike, alpha, cap: int = ENUMERATION_CAP, **kw) -> float:
    """``|mean over every split of the signed advantage|``."""
    return exact_estimate(adversary, challenger, alpha, cap, **kw).value


def mc_estimate(adversary, challenger: ChallengerLike, alpha, num_splits: int, seed: int = 0, **kw) -> Estimate:
    if num_splits < 2:
        raise InvalidParameter("num_splits must be >= 2", "num_splits")
    n = len(challenger.dataset)
    rows, vals = [], []
    for i in range(num_splits):
        sa = split_advantage(adversary, challenger, sample_split(n, alpha, derive_seed(seed, "mc", i)), **kw)
        vals.append(sa.signed_value)
        rows.append(_row(sa, index=i))
    v = np.array(vals)
    raw = abs(float(v.mean()))
    return Estimate(_name(adversary), "monte_carlo", _clamp(raw), raw, float(v.std(ddof=1) / math.sqrt(len(v))), rows)


def mc_advantage(adversary, challenger: ChallengerLike, alpha, num_splits: int, seed: int = 0,
                 **kw) -> tuple[float, float]:
    """Absolute mean signed advantage over uniformly sampled splits, and its standard error.

    Biased upward near zero: ``E|mean|`` exceeds ``|E mean|`` by about
    one standard error when the true advantage vanishes.
    """
    est = mc_estimate(adversary, challenger, alpha, num_splits, seed, **kw)
    return est.raw_value, est.standard_error


def swap_estimate(adversary, challenger: ChallengerLike, alpha, num_pairs: int, seed: int = 0, **kw) -> Estimate:
    """Mean SWAP advantage over ``num_pairs`` sampled splits and their swap partners."""
    if num_pairs < 1:
        raise InvalidParameter("num_pairs must be >= 1", "num_pairs")
    n = len(challenger.dataset)
    rows, vals = [], []
    for i in range(num_pairs):
        s = sample_split(n, alpha, derive_seed(seed, "swap", i))
        a = split_advantage(adversary, challenger, s, **kw)
        b = split_advantage(adversary, challenger, swap(s), **kw)
        v = abs(a.signed_value + b.signed_value) / 2
        vals.append(v)
        rows.append(_row(a, index=i, role="split", pair_value=v))
        rows.append(_row(b, index=i, role="swap", pair_value=v))
    v = np.array(vals)
    se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else None
    raw = float(v.mean())
    return Estimate(_name(adversary), "swap", _clamp(raw), raw, se, rows)


@dataclass(frozen=True)
class Estimator:
    kind: str  # "exact" | "swap" | "monte_carlo"
    count: int | None = None

    def __post_init__(self):
        if self.kind not in ("exact", "swap", "monte_carlo"):
            raise InvalidParameter(f"unknown estimator {self.kind!r}", "estimator")
        if self.kind != "exact" and (self.count is None or self.count < 1):
            raise InvalidParameter("swap / monte_carlo estimators need a positive count", "estimator")

    @classmethod
    def parse(cls, text: str) -> "Estimator":
        """``exact``, ``swap:N`` or ``mc:N``."""
        kind, _, count = text.partition(":")
        kind = {"mc": "monte_carlo"}.get(kind, kind)
        return cls(kind, int(count) if count else None)

    def __str__(self):
        short = {"monte_carlo": "mc"}.get(self.kind, self.kind)
        return short if self.count is None else f"{short}:{self.count}"

    def run(self, adversary, challenger, alpha, seed: int = 0, **kw) -> Estimate:
        if self.kind == "exact":
            return exact_estimate(adversary, challenger, alpha, **kw)
        if self.kind == "swap":
            return swap_estimate(adversary, challenger, alpha, self.count, seed, **kw)
        return mc_estimate(adversary, challenger, alpha, self.count, seed, **kw)


@dataclass(frozen=True)
class BoundParams:
    epsilon: float
    delta: float

    def __post_init__(self):
        if not self.epsilon >= 0 or not 0 <= self.delta < 1:
            raise InvalidParameter("need epsilon >= 0 and delta in [0, 1)", "bound")


def certified_bound(params: BoundParams) -> float:
    """Largest advantage any adversary can reach against an (epsilon, delta) certified remover."""
    return min(1.0, 2.0 * (1.0 - (2.0 - 2.0 * params.delta) / (math.exp(params.epsilon) + 1.0)))


def quality_lower_bound(params: BoundParams) -> float:
    """Unclamped ``(4 - 4 delta) / (e^eps + 1) - 1``."""
    return (4.0 - 4.0 * params.delta) / (math.exp(params.epsilon) + 1.0) - 1.0


@dataclass
class AdvantageReport:
    method: dict
    estimator: str
    results: list[Estimate]
    unlearning_quality: float
    certified_bound: float | None = None
    quality_lower_bound: float | None = None
    ledger: dict | None = None
    seeds: dict = field(default_factory=dict)
    config_digest: str | None = None

    @property
    def max_advantage(self) -> float:
        return max(r.value for r in self.results)

    def to_dict(self) -> dict:
        return {
            "version": REPORT_VERSION,
            "method": self.method,
            "estimator": self.estimator,
            "unlearning_quality": self.unlearning_quality,
            "certified_bound": self.certified_bound,
            "quality_lower_bound": self.quality_lower_bound,
            "ledger": self.ledger,
            "seeds": self.seeds,
            "config_digest": self.config_digest,
            "adversaries": [
                {"name": r.adversary, "estimator": r.estimator, "value": r.value,
                 "raw_value": r.raw_value, "standard_error": r.standard_error}
                for r in self.results
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def csv_rows(self) -> list[dict]:
        method = self.method.get("tag", self.method.get("kind"))
        return [{"method": method, "adversary": r.adversary, "estimator": r.estimator, **row}
                for r in self.results for row in r.rows]


def ledger_summary(ledgers: dict[str, list[RemovalLedger]]) -> dict | None:
    flat = [l for ls in ledgers.values() for l in ls]
    if not flat:
        return None
    return {
        "requests": len(flat),
        "retrain_triggered": sum(l.retrain_triggered for l in flat),
        "max_residual_norm": max(l.accumulated_residual_norm for l in flat),
        "budget": flat[0].budget,
        "max_epsilon_consumed": max(l.epsilon_consumed for l in flat),
    }


def unlearning_quality(roster: Sequence, challenger: ChallengerLike, estimator: Estimator | str, alpha,
                       seed: int = 0, bound: BoundParams | None = None, **kw) -> AdvantageReport:
    """``1 - max advantage`` over the roster, clamped to [0, 1]."""
    if not roster:
        raise InvalidParameter("roster must not be empty", "roster")
    if isinstance(estimator, str):
        estimator = Estimator.parse(estimator)
    results = [estimator.run(a, challenger, alpha, seed, **kw) for a in roster]
    q = _clamp(1.0 - max(r.value for r in results))
    unl = getattr(challenger, "unlearner", None)
    method = {"tag": challenger.method, **(unl.to_dict() if unl else {})}
    report = AdvantageReport(method, str(estimator), results, q, seeds={"estimator_seed": seed})
    if bound is not None:
        report.certified_bound = certified_bound(bound)
        report.quality_lower_bound = quality_lower_bound(bound)
    if hasattr(challenger, "ledgers"):
        report.ledger = ledger_summary(challenger.ledgers)
    return report


def rank_auc(member_scores, nonmember_scores) -> float:
    """Mann-Whitney AUC; tied pairs count one half."""
    pos = np.asarray(member_scores, dtype=np.float64)
    neg = np.asarray(nonmember_scores, dtype=np.float64)
    if len(pos) == 0 or len(neg) == 0:
        raise InvalidParameter("AUC needs both members and non-members")
    ranks = rankdata(np.concatenate([pos, neg]))
    return float((ranks[:len(pos)].sum() - len(pos) * (len(pos) + 1) / 2) / (len(pos) * len(neg)))


def mia_auc_score(adversary, split: Split, models: Sequence, dataset: Dataset) -> float:
    """``1 - AUC`` of forget-set (member) versus test-set scores, averaged over models."""
    attack = _as_attack(adversary)
    F, T = np.asarray(split.forget), np.asarray(split.test)
    aucs = []
    for m in models:
        fitted = attack.fit(m)
        aucs.append(rank_auc(fitted.scores(dataset.features[F], dataset.labels[F]),
                             fitted.scores(dataset.features[T], dataset.labels[T])))
    return 1.0 - math.fsum(aucs) / len(aucs)


def config_digest(config: dict) -> str:
    """SHA-256 over the canonical JSON form (sorted keys, no whitespace)."""
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode()).hexdigest()
