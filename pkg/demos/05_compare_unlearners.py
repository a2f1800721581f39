"""Unlearning Quality of every method on a small overfit network.

A one-hidden-layer network memorizes 60 points; each unlearner then tries
to forget a sixth of them. Q = 1 - (strongest attack's advantage).
"""
from fractions import Fraction

from unlearning_game import (
    Challenger, GameContext, LearnerSpec, ShadowConfig, SyntheticSpec, TrainConfig, UnlearnerSpec,
    builtin_roster, generate_synthetic, partition_target_shadow, unlearning_quality,
)

target, shadow = partition_target_shadow(generate_synthetic(SyntheticSpec(120, 10, 2, 1.5, 1.0, 2)))
learner = LearnerSpec("mlp1", 0.0, hidden_width=16)
cfg = TrainConfig(learning_rate=0.5, epochs=400, seed=1)
ctx = GameContext(target, learner, cfg, models_per_split=2, master_seed=2)
roster = builtin_roster(ShadowConfig(shadow, 2, learner, cfg))
methods = [
    UnlearnerSpec("retrain"), UnlearnerSpec("none"),
    UnlearnerSpec("neg_grad", steps=20, learning_rate=0.05),
    UnlearnerSpec("ft_final", steps=100, learning_rate=0.5),
    UnlearnerSpec("retr_final", steps=100, learning_rate=0.5),
    UnlearnerSpec("fisher", noise_sigma=0.05),
]
for spec in methods:
    rep = unlearning_quality(roster, Challenger(ctx, spec), "swap:10", Fraction(1, 5), seed=3)
    print(f"{spec.tag:32s} Q = {rep.unlearning_quality:.3f}   "
          + "  ".join(f"{r.adversary}={r.value:.3f}" for r in rep.results))
