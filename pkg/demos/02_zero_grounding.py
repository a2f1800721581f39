"""Retraining is invisible to every attack.

Twelve target points, alpha = 1/5: all 2970 splits are enumerated and each
built-in attack is scored against Retrain and against doing nothing. The
retrain models depend only on the retain set, so a split and its swap
partner share them and the signed terms cancel to the last bit.
"""
from fractions import Fraction

from unlearning_game import (
    Challenger, GameContext, LearnerSpec, ShadowConfig, SyntheticSpec, TrainConfig, UnlearnerSpec,
    builtin_roster, exact_advantage, generate_synthetic, partition_target_shadow,
)

target, shadow = partition_target_shadow(generate_synthetic(SyntheticSpec(24, 2, 2, 3.0, 1.0, 1)))
learner = LearnerSpec(l2_lambda=0.01)
cfg = TrainConfig(epochs=500, optimizer="lbfgs")
ctx = GameContext(target, learner, cfg, models_per_split=3, master_seed=7)
roster = builtin_roster(ShadowConfig(shadow, 4, learner, cfg))

for kind in ("retrain", "none"):
    ch = Challenger(ctx, UnlearnerSpec(kind))
    row = {a.name: exact_advantage(a, ch, Fraction(1, 5)) for a in roster}
    print(f"{kind:8s}", "  ".join(f"{n}={v:.4f}" for n, v in row.items()), f"  ({ch.trainings} trainings)")
