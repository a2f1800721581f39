"""Evaluate machine-unlearning methods with the unlearning sample inference game."""
from .adversaries import (
    Attack,
    ConfidenceAttack,
    CorrectnessAttack,
    MentropyAttack,
    ShadowAttack,
    ShadowConfig,
    ShadowPool,
    StrongAdversary,
    WeakAdversary,
    builtin_roster,
    constant_adversary,
    fit_confidence,
    fit_correctness,
    fit_mentropy,
    fit_shadow,
    lookup_adversary,
    weak_to_strong,
)
from .data import SyntheticSpec, generate_synthetic, load_idx_pair, partition_target_shadow
from .engine import (
    AdvantageReport,
    BoundParams,
    Challenger,
    Estimator,
    GameContext,
    SplitAdvantage,
    certified_bound,
    exact_advantage,
    mc_advantage,
    mia_auc_score,
    pair_advantage,
    quality_lower_bound,
    split_advantage,
    swap_advantage,
    swap_estimate,
    unlearning_quality,
    weak_accept_rate,
)
from .errors import GameError
from .game import (
    DataPoint,
    Dataset,
    OracleSpec,
    SensitivityDistribution,
    Split,
    derive_seed,
    enumerate_splits,
    num_splits,
    oracle_draw,
    oracle_mass,
    sample_split,
    split_sizes,
    swap,
)
from .learners import LearnerSpec, Model, TrainConfig, fisher_diagonal, hessian, loss_gradient, predict_proba, train
from .unlearners import RemovalLedger, UnlearnerSpec, residual_to_budget, unlearn

from .harness import RunConfig, calibrate_perturbation, load_config, run

__version__ = "0.1.0"

__all__ = [
    "AdvantageReport",
    "Attack",
    "BoundParams",
    "Challenger",
    "ConfidenceAttack",
    "CorrectnessAttack",
    "DataPoint",
    "Dataset",
    "Estimator",
    "GameContext",
    "GameError",
    "LearnerSpec",
    "MentropyAttack",
    "Model",
    "OracleSpec",
    "RemovalLedger",
    "RunConfig",
    "SensitivityDistribution",
    "ShadowAttack",
    "ShadowConfig",
    "ShadowPool",
    "Split",
    "SplitAdvantage",
    "StrongAdversary",
    "SyntheticSpec",
    "TrainConfig",
    "UnlearnerSpec",
    "WeakAdversary",
    "builtin_roster",
    "calibrate_perturbation",
    "certified_bound",
    "constant_adversary",
    "derive_seed",
    "enumerate_splits",
    "exact_advantage",
    "fisher_diagonal",
    "fit_confidence",
    "fit_correctness",
    "fit_mentropy",
    "fit_shadow",
    "generate_synthetic",
    "hessian",
    "load_config",
    "load_idx_pair",
    "lookup_adversary",
    "loss_gradient",
    "mc_advantage",
    "mia_auc_score",
    "num_splits",
    "oracle_draw",
    "oracle_mass",
    "pair_advantage",
    "partition_target_shadow",
    "predict_proba",
    "quality_lower_bound",
    "residual_to_budget",
    "run",
    "sample_split",
    "split_advantage",
    "split_sizes",
    "swap",
    "swap_advantage",
    "swap_estimate",
    "train",
    "unlearn",
    "unlearning_quality",
    "weak_accept_rate",
    "weak_to_strong",
]
