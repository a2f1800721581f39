"""Why random splits need the SWAP pairing.

If the evaluator draws two unrelated random splits, an adversary that
memorized both can answer from a lookup table without ever querying the
model: points in both test sets mean b = 1, points in both forget sets
mean b = 0. That scores a perfect advantage even against Retrain.
"""
from fractions import Fraction

from unlearning_game import (
    Challenger, GameContext, LearnerSpec, SyntheticSpec, TrainConfig, UnlearnerSpec, generate_synthetic,
    lookup_adversary, pair_advantage, sample_split, swap, swap_advantage,
)
from unlearning_game.adversaries import CorrectnessAttack

data = generate_synthetic(SyntheticSpec(20, 2, 2, 3.0, 1.0, 0))
ctx = GameContext(data, LearnerSpec(l2_lambda=0.01), TrainConfig(epochs=200, optimizer="lbfgs"),
                  models_per_split=1)
retrain = Challenger(ctx, UnlearnerSpec("retrain"))
alpha = Fraction(1, 3)

seed = 0
while True:
    s1, s2 = sample_split(20, alpha, 2 * seed), sample_split(20, alpha, 2 * seed + 1)
    if set(s1.forget) & set(s2.forget) and set(s1.test) & set(s2.test):
        break
    seed += 1

table = lookup_adversary(s1, s2)
print("lookup table:", table.region)
print("pair advantage vs retrain, analytic :", pair_advantage(table, retrain, s1, s2))
print("pair advantage vs retrain, 10^4 plays:", pair_advantage(table, retrain, s1, s2, analytic=False,
                                                               plays=10_000, seed=1))
print("swap pairing of s1, honest attack   :", swap_advantage(CorrectnessAttack(), retrain, s1))
print("s1 and swap(s1) share no F or T point, so no table can be built:",
      not (set(s1.forget) & set(swap(s1).forget)))
