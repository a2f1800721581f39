import json
import math
from fractions import Fraction

import numpy as np
import pytest

from conftest import ThresholdAttack, ToyChallenger
from unlearning_game.adversaries import (
    CorrectnessAttack,
    ShadowConfig,
    ShadowPool,
    WeakAdversary,
    builtin_roster,
    constant_adversary,
    lookup_adversary,
)
from unlearning_game.engine import (
    BoundParams,
    Challenger,
    Estimator,
    GameContext,
    certified_bound,
    exact_advantage,
    exact_estimate,
    mc_advantage,
    mia_auc_score,
    pair_advantage,
    quality_lower_bound,
    rank_auc,
    split_advantage,
    swap_advantage,
    swap_estimate,
    unlearning_quality,
    weak_accept_rate,
)
from unlearning_game.errors import EnumerationTooLarge, InvalidParameter
from unlearning_game.game import SensitivityDistribution, Split, enumerate_splits, sample_split, swap
from unlearning_game.learners import LearnerSpec, TrainConfig
from unlearning_game.unlearners import UnlearnerSpec

HALF = Fraction(1, 2)


def toy_split():
    # F = {A, B, C}, T = {D, E, F}; the empty retain set makes alpha = 1
    return Split((), (0, 1, 2), (3, 4, 5), Fraction(1))


# ---- toy score tables (hand-evaluated probability tables) ----

def test_toy_accept_rate(toy):
    ch = toy["retrain"]
    s = toy_split()
    assert weak_accept_rate(ThresholdAttack(), s, 0, ch.sensitivity, ch.models(s), ch.dataset) == pytest.approx(1 / 3)


@pytest.mark.parametrize("which,orig,swapped,swap_value", [
    ("retrain", -1 / 3, 1 / 3, 0.0),
    ("unlearn1", 0.0, 1 / 3, 1 / 6),
    ("unlearn2", 1 / 3, 1 / 3, 1 / 3),
])
def test_toy_split_and_swap_values(toy, which, orig, swapped, swap_value):
    ch = toy[which]
    s = toy_split()
    a = split_advantage(ThresholdAttack(), ch, s)
    b = split_advantage(ThresholdAttack(), ch, swap(s))
    assert a.signed_value == pytest.approx(orig, abs=1e-12)
    assert b.signed_value == pytest.approx(swapped, abs=1e-12)
    assert a.signed_value == pytest.approx(a.accept_rate_b0 - a.accept_rate_b1, abs=1e-12)
    assert swap_advantage(ThresholdAttack(), ch, s) == pytest.approx(swap_value, abs=1e-12)


def test_constant_adversaries(toy):
    s = toy_split()
    for bit in (0, 1):
        sa = split_advantage(constant_adversary(bit), toy["unlearn2"], s)
        assert sa.accept_rate_b0 == sa.accept_rate_b1 == bit
    assert unlearning_quality([constant_adversary(1)], toy["unlearn2"], "swap:3", HALF
                              ).unlearning_quality == 1.0


# ---- bounds ----

def test_bound_values():
    assert certified_bound(BoundParams(0.0, 0.0)) == 0.0
    assert quality_lower_bound(BoundParams(0.0, 0.0)) == 1.0
    assert certified_bound(BoundParams(50.0, 0.0)) == 1.0
    e = math.e
    assert certified_bound(BoundParams(1.0, 0.01)) == pytest.approx(2 * (1 - 1.98 / (e + 1)))
    for eps, delta in [(0.3, 1e-4), (1.0, 0.05)]:
        # Q lower bound and advantage bound are complementary
        assert quality_lower_bound(BoundParams(eps, delta)) == pytest.approx(1 - certified_bound(BoundParams(eps, delta)))
    with pytest.raises(InvalidParameter):
        BoundParams(-1.0, 0.0)
    with pytest.raises(InvalidParameter):
        BoundParams(1.0, 1.0)


def test_bound_monotone_grid():
    eps = np.linspace(0, 5, 51)
    deltas = np.linspace(0, 0.1, 21)
    grid = np.array([[certified_bound(BoundParams(e, d)) for d in deltas] for e in eps])
    assert np.all(np.diff(grid, axis=0) >= 0) and np.all(np.diff(grid, axis=1) >= 0)
    assert np.all((grid >= 0) & (grid <= 1))


# ---- AUC ----

def naive_auc(pos, neg):
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


def test_rank_auc_matches_pair_count():
    rng = np.random.default_rng(0)
    for _ in range(200):
        pos = rng.integers(0, 5, int(rng.integers(1, 15))) / 4
        neg = rng.integers(0, 5, int(rng.integers(1, 15))) / 4
        if rng.random() < 0.5:
            pos, neg = rng.normal(size=len(pos)), rng.normal(size=len(neg))
        assert rank_auc(pos, neg) == pytest.approx(naive_auc(pos, neg), abs=1e-12)


def test_mia_auc_extremes(toy):
    ch = toy["retrain"]
    s = toy_split()
    sep = WeakAdversary("sep", lambda X, y: (X[:, 0] < 3).astype(float), 0.5)
    flat = WeakAdversary("flat", lambda X, y: np.zeros(len(y)), 0.5)
    assert mia_auc_score(sep, s, ch.models(s), ch.dataset) == 0.0
    assert mia_auc_score(flat, s, ch.models(s), ch.dataset) == 0.5


# ---- real models ----

@pytest.fixture(scope="module")
def small_game():
    from unlearning_game.data import SyntheticSpec, generate_synthetic, partition_target_shadow
    target, shadow = partition_target_shadow(generate_synthetic(SyntheticSpec(24, 2, 2, 3.0, 1.0, 1)), HALF, 0)
    target = target.take(np.arange(6))
    learner = LearnerSpec(l2_lambda=0.01)
    cfg = TrainConfig(epochs=300, optimizer="lbfgs")
    ctx = GameContext(target, learner, cfg, models_per_split=2, master_seed=3)
    pool = ShadowPool(ShadowConfig(shadow, 2, learner, cfg))
    return ctx, pool


def test_exact_zero_for_retrain(small_game):
    ctx, pool = small_game
    ch = Challenger(ctx, UnlearnerSpec("retrain"))
    for attack in builtin_roster(pool):
        assert exact_advantage(attack, ch, HALF) <= 1e-12
        for s in list(enumerate_splits(6, HALF))[:10]:
            assert swap_advantage(attack, ch, s) <= 1e-12


def test_averaging_consistency(small_game):
    ctx, pool = small_game
    ch = Challenger(ctx, UnlearnerSpec("neg_grad", steps=5, learning_rate=0.5))
    attack = builtin_roster(pool)[1]
    splits = list(enumerate_splits(6, HALF))
    signed = {s: split_advantage(attack, ch, s).signed_value for s in splits}
    # pair every split with its swap partner and sum over pairs
    seen, pair_sums = set(), []
    for s in splits:
        if s not in seen:
            seen |= {s, swap(s)}
            pair_sums.append(signed[s] + signed[swap(s)])
    assert len(pair_sums) == 45
    est = exact_estimate(attack, ch, HALF)
    assert est.raw_value == pytest.approx(abs(math.fsum(signed.values()) / 90), abs=1e-12)
    assert est.raw_value == pytest.approx(abs(math.fsum(pair_sums)) / 90, abs=1e-12)
    assert est.value > 0


def test_mc_and_swap_estimators(small_game):
    ctx, pool = small_game
    ch = Challenger(ctx, UnlearnerSpec("retrain"))
    with pytest.raises(InvalidParameter):
        mc_advantage(CorrectnessAttack(), ch, HALF, 1)
    value, se = mc_advantage(CorrectnessAttack(), ch, HALF, 40, seed=1)
    assert value <= 3 * se + 1e-12
    est = swap_estimate(CorrectnessAttack(), ch, HALF, 5, seed=1)
    assert est.value <= 1e-12 and len(est.rows) == 10


def test_exact_cap():
    class Big:
        dataset = list(range(60))
    with pytest.raises(EnumerationTooLarge):
        exact_advantage(CorrectnessAttack(), Big(), Fraction(1, 2))


def test_roster_monotonicity(small_game):
    ctx, pool = small_game
    ch = Challenger(ctx, UnlearnerSpec("none"))
    roster = builtin_roster(pool)
    qs = [unlearning_quality(roster[:k], ch, "swap:4", HALF).unlearning_quality for k in range(1, 5)]
    assert all(b <= a for a, b in zip(qs, qs[1:]))


def test_retrain_quality_one(small_game):
    ctx, pool = small_game
    rep = unlearning_quality(builtin_roster(pool), Challenger(ctx, UnlearnerSpec("retrain")), "swap:6", HALF)
    assert rep.unlearning_quality == pytest.approx(1.0, abs=1e-12)


def test_retrain_shares_models_across_swap(small_game):
    ctx, _ = small_game
    ch = Challenger(ctx, UnlearnerSpec("retrain"))
    s = sample_split(6, HALF, 4)
    assert all(a is b for a, b in zip(ch.models(s), ch.models(swap(s))))
    other = Challenger(ctx, UnlearnerSpec("neg_grad", steps=1, learning_rate=0.1))
    assert not any(a is b for a, b in zip(other.models(s), other.models(swap(s))))


def test_lookup_pair_property(small_game):
    ctx, _ = small_game
    ch = Challenger(ctx, UnlearnerSpec("none"))
    s1 = Split.from_sets([4, 5], [0, 1], [2, 3])
    s2 = Split.from_sets([1, 3], [0, 4], [2, 5])
    adv = lookup_adversary(s1, s2)
    assert pair_advantage(adv, ch, s1, s2) == 1.0
    assert pair_advantage(adv, ch, s1, s2, analytic=False, plays=2000, seed=1) >= 0.99


def test_report_serialization(small_game):
    ctx, pool = small_game
    rep = unlearning_quality([CorrectnessAttack()], Challenger(ctx, UnlearnerSpec("none")), "exact", HALF,
                             bound=BoundParams(1.0, 1e-4))
    doc = json.loads(rep.to_json())
    assert doc["version"] == 1 and doc["estimator"] == "exact"
    assert doc["unlearning_quality"] == pytest.approx(1 - doc["adversaries"][0]["value"])
    assert list(doc) == sorted(doc)
    rows = rep.csv_rows()
    assert len(rows) == 90 and {"method", "adversary", "split", "signed_value"} <= set(rows[0])
    assert rep.to_json() == rep.to_json()


def test_estimator_parse():
    assert str(Estimator.parse("swap:20")) == "swap:20"
    assert Estimator.parse("mc:7").kind == "monte_carlo"
    assert Estimator.parse("exact").count is None
    with pytest.raises(InvalidParameter):
        Estimator.parse("swap")
    with pytest.raises(InvalidParameter):
        Estimator.parse("bootstrap:3")


def test_weighted_sensitivity_changes_rates(toy):
    ch = ToyChallenger(0.0)
    ch.sensitivity = SensitivityDistribution(np.array([0.0, 0.5, 0.5, 0.2, 0.4, 0.4]) / 2)
    s = toy_split()
    assert weak_accept_rate(ThresholdAttack(), s, 0, ch.sensitivity, ch.models(s), ch.dataset) == 0.0
    assert weak_accept_rate(ThresholdAttack(), s, 1, ch.sensitivity, ch.models(s), ch.dataset) == pytest.approx(0.8)
