"""Run configuration and end-to-end orchestration.

A run is a pure function of its :class:`RunConfig`: every random choice
derives from ``master_seed`` (and the dataset seeds inside the config).
"""
from __future__ import annotations

import csv
import io
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

from .adversaries import (
    ConfidenceAttack,
    CorrectnessAttack,
    MentropyAttack,
    ShadowAttack,
    ShadowConfig,
    ShadowPool,
)
from .data import SyntheticSpec, generate_synthetic, load_idx_pair, partition_target_shadow, subsample
from .engine import BoundParams, Challenger, Estimator, GameContext, config_digest, unlearning_quality
from .errors import ConfigError
from .game import Dataset, derive_seed, load_csv, load_sensitivity, split_sizes
from .learners import LearnerSpec, TrainConfig
from .unlearners import UnlearnerSpec

log = logging.getLogger(__name__)

OUTPUT_ENV = "UNLEARNING_GAME_OUTPUT_DIR"
ADVERSARIES = ("correctness", "confidence", "mentropy", "shadow")
NEG_GRAD_DEFAULTS = {"steps": 10, "learning_rate": 0.01}

_TOP_KEYS = {
    "dataset", "target_fraction", "partition_seed", "alpha", "sensitivity", "learner", "train",
    "unlearners", "adversaries", "num_shadow", "estimator", "models_per_split", "master_seed", "output_dir",
}


@dataclass(frozen=True)
class RunConfig:
    dataset: dict
    alpha: Fraction = Fraction(1, 10)
    target_fraction: Fraction = Fraction(1, 2)
    partition_seed: int = 0
    sensitivity: str = "uniform"
    learner: LearnerSpec = field(default_factory=LearnerSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    unlearners: tuple[UnlearnerSpec, ...] = (UnlearnerSpec("retrain"),)
    adversaries: tuple[str, ...] = ADVERSARIES
    num_shadow: int = 4
    estimator: Estimator = Estimator("swap", 20)
    models_per_split: int = 3
    master_seed: int = 0
    output_dir: str = "unlearning-report"

    def semantic_dict(self) -> dict:
        """Canonical form of every field that affects results (output_dir excluded)."""
        return {
            "dataset": self.dataset,
            "alpha": str(self.alpha),
            "target_fraction": str(self.target_fraction),
            "partition_seed": self.partition_seed,
            "sensitivity": self.sensitivity,
            "learner": asdict(self.learner),
            "train": asdict(self.train),
            "unlearners": [u.to_dict() for u in self.unlearners],
            "adversaries": list(self.adversaries),
            "num_shadow": self.num_shadow,
            "estimator": str(self.estimator),
            "models_per_split": self.models_per_split,
            "master_seed": self.master_seed,
        }

    @property
    def digest(self) -> str:
        return config_digest(self.semantic_dict())


def _build(cls, raw, name):
    if not isinstance(raw, dict):
        raise ConfigError(f"{name} must be an object", name)
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"{name}: {exc}", name) from None


def _with_defaults(unlearner):
    if isinstance(unlearner, dict) and unlearner.get("kind") == "neg_grad":
        return {**NEG_GRAD_DEFAULTS, **unlearner}
    return unlearner


def parse_config(raw: dict, base_dir: str | Path = ".") -> RunConfig:
    """Validate a decoded config document. Unknown keys are errors."""
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}", sorted(unknown)[0])
    if "dataset" not in raw:
        raise ConfigError("dataset is required", "dataset")
    ds = dict(raw["dataset"])
    base = Path(base_dir)
    for key in ("csv", "images", "labels"):
        if key in ds:
            p = Path(ds[key])
            ds[key] = str(p if p.is_absolute() else base / p)
            if not Path(ds[key]).exists():
                raise ConfigError(f"{ds[key]} does not exist", f"dataset.{key}")
    if sum(k in ds for k in ("synthetic", "csv", "images")) != 1:
        raise ConfigError("dataset needs exactly one of synthetic / csv / images", "dataset")
    sens = raw.get("sensitivity", "uniform")
    if sens != "uniform":
        p = Path(sens)
        sens = str(p if p.is_absolute() else base / p)
        if not Path(sens).exists():
            raise ConfigError(f"{sens} does not exist", "sensitivity")
    adversaries = tuple(raw.get("adversaries", ADVERSARIES))
    bad = [a for a in adversaries if a not in ADVERSARIES]
    if bad or not adversaries:
        raise ConfigError(f"unknown or empty adversary roster {bad}", "adversaries")
    try:
        cfg = RunConfig(
            dataset=ds,
            alpha=Fraction(str(raw.get("alpha", "1/10"))),
            target_fraction=Fraction(str(raw.get("target_fraction", "1/2"))),
            partition_seed=int(raw.get("partition_seed", 0)),
            sensitivity=sens,
            learner=_build(LearnerSpec, raw.get("learner", {}), "learner"),
            train=_build(TrainConfig, raw.get("train", {}), "train"),
            unlearners=tuple(_build(UnlearnerSpec, _with_defaults(u), "unlearners")
                             for u in raw.get("unlearners", [{"kind": "retrain"}])),
            adversaries=adversaries,
            num_shadow=int(raw.get("num_shadow", 4)),
            estimator=Estimator.parse(str(raw.get("estimator", "swap:20"))),
            models_per_split=int(raw.get("models_per_split", 3)),
            master_seed=int(raw.get("master_seed", 0)),
            output_dir=str(raw.get("output_dir", "unlearning-report")),
        )
    except (ValueError, ZeroDivisionError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), getattr(exc, "field", None)) from None
    if not cfg.unlearners:
        raise ConfigError("at least one unlearner is required", "unlearners")
    if cfg.models_per_split < 1 or cfg.num_shadow < 1:
        raise ConfigError("models_per_split and num_shadow must be positive", "models_per_split")
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}", "config") from None
    return parse_config(raw, path.parent)


def load_dataset(spec: dict, master_seed: int = 0) -> Dataset:
    if "synthetic" in spec:
        data = generate_synthetic(_build(SyntheticSpec, spec["synthetic"], "dataset.synthetic"))
    elif "csv" in spec:
        data = load_csv(spec["csv"], spec.get("num_classes"))
    else:
        data = load_idx_pair(spec["images"], spec["labels"], spec.get("keep_labels", [3, 8]))
    if "subsample" in spec:
        seed = spec.get("subsample_seed", derive_seed(master_seed, "subsample"))
        data = subsample(data, int(spec["subsample"]), int(seed))
    return data


def prepare(config: RunConfig) -> tuple[Dataset, Dataset]:
    """Target and shadow datasets; checks that alpha gives an integral split of the target."""
    target, shadow = partition_target_shadow(load_dataset(config.dataset, config.master_seed), config.target_fraction,
                                             config.partition_seed)
    split_sizes(len(target), config.alpha)
    return target, shadow


def build_roster(names, shadow: Dataset, config: RunConfig):
    pool = ShadowPool(ShadowConfig(shadow, config.num_shadow, config.learner,
                                   TrainConfig(**{**asdict(config.train),
                                                  "seed": derive_seed(config.master_seed, "shadow")})))
    make = {
        "correctness": CorrectnessAttack,
        "confidence": lambda: ConfidenceAttack(pool),
        "mentropy": lambda: MentropyAttack(pool),
        "shadow": lambda: ShadowAttack(pool),
    }
    return [make[n]() for n in names]


def execute(config: RunConfig) -> dict:
    """Run the game for every configured unlearner; returns the report document."""
    target, shadow = prepare(config)
    ctx = GameContext(target, config.learner, config.train, load_sensitivity(config.sensitivity, len(target)),
                      config.models_per_split, config.master_seed)
    roster = build_roster(config.adversaries, shadow, config)
    estimator_seed = derive_seed(config.master_seed, "estimator")
    reports = []
    for spec in config.unlearners:
        log.info("evaluating %s with %s", spec.tag, config.estimator)
        bound = BoundParams(spec.epsilon_budget, spec.delta) if spec.kind == "cr_newton" else None
        rep = unlearning_quality(roster, Challenger(ctx, spec), config.estimator, config.alpha,
                                 seed=estimator_seed, bound=bound)
        rep.config_digest = config.digest
        rep.seeds.update(master_seed=config.master_seed, partition_seed=config.partition_seed)
        reports.append(rep)
    return {
        "version": 1,
        "config_digest": config.digest,
        "config": config.semantic_dict(),
        "dataset": {"target_size": len(target), "shadow_size": len(shadow), "dim": target.dim,
                    "num_classes": target.num_classes},
        "reports": [r.to_dict() for r in reports],
        "_rows": [row for r in reports for row in r.csv_rows()],
    }


def render_summary(document: dict) -> str:
    """Methods as rows, one advantage column per adversary, then Q and the certified bound."""
    reports = document["reports"]
    advs = [a["name"] for a in reports[0]["adversaries"]] if reports else []
    head = ["method"] + advs + ["Q", "bound", "ledger"]
    lines = []
    for r in reports:
        vals = {a["name"]: a for a in r["adversaries"]}
        cells = [r["method"]["tag"]]
        for name in advs:
            a = vals[name]
            se = a["standard_error"]
            cells.append(f"{a['value']:.3f}" + (f" ± {se:.3f}" if se is not None else ""))
        cells.append(f"{r['unlearning_quality']:.3f}")
        cells.append("-" if r["certified_bound"] is None else f"{r['certified_bound']:.3f}")
        led = r.get("ledger")
        cells.append("-" if not led else
                     f"eps_used<={led['max_epsilon_consumed']:.3g}, retrain {led['retrain_triggered']}/{led['requests']}")
        lines.append(cells)
    widths = [max(len(str(row[i])) for row in [head] + lines) for i in range(len(head))]
    fmt = lambda row: "  ".join(str(c).ljust(w) for c, w in zip(row, widths)).rstrip()
    out = [f"estimator: {reports[0]['estimator'] if reports else '-'}   config: {document['config_digest'][:12]}",
           fmt(head), fmt(["-" * w for w in widths])] + [fmt(l) for l in lines]
    return "\n".join(out) + "\n"


def _csv_text(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        keys = list(dict.fromkeys(k for row in rows for k in row))
        w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return buf.getvalue()


def output_dir(config: RunConfig) -> Path:
    return Path(os.environ.get(OUTPUT_ENV) or config.output_dir)


def run(config: RunConfig) -> Path:
    """Execute and write ``report.json``, ``splits.csv`` and ``summary.txt``; returns the directory."""
    doc = execute(config)
    rows = doc.pop("_rows")
    out = output_dir(config)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    (out / "splits.csv").write_text(_csv_text(rows))
    (out / "summary.txt").write_text(render_summary(doc))
    return out


def calibrate_perturbation(dataset: Dataset, learner: LearnerSpec, train_config: TrainConfig, epsilon: float,
                           delta: float, splits, models_per_split: int = 3, master_seed: int = 0,
                           step: float = 1.1, max_rounds: int = 60) -> float:
    """Perturbation scale at which certified Newton removal just fits in ``epsilon``.

    The Newton residual grows with sigma through the trained model, so
    sigma is found by a geometric walk: up by ``step`` until every request
    on ``splits`` consumes at most ``epsilon``, or down while that still
    holds. The returned sigma never triggers a retrain on ``splits``.
    """
    from dataclasses import replace
    from .unlearners import budget_constant

    c = budget_constant(delta)
    spec = UnlearnerSpec("cr_newton", epsilon_budget=epsilon, delta=delta)

    def consumed(sigma: float) -> float:
        ctx = GameContext(dataset, replace(learner, objective_perturbation_sigma=sigma), train_config,
                          models_per_split=models_per_split, master_seed=master_seed)
        ch = Challenger(ctx, spec)
        for s in splits:
            ch.models(s)
        return c * max(l.accumulated_residual_norm for ls in ch.ledgers.values() for l in ls) / sigma

    # at sigma = 1 the consumed budget equals c * residual, so this solves c * residual / sigma = epsilon
    sigma = consumed(1.0) / epsilon
    ok = consumed(sigma) <= epsilon
    for _ in range(max_rounds):
        nxt = sigma / step if ok else sigma * step
        nxt_ok = consumed(nxt) <= epsilon
        if ok and not nxt_ok:
            return sigma
        if not ok and nxt_ok:
            return nxt
        sigma, ok = nxt, nxt_ok
    raise ConfigError(f"could not fit a perturbation scale for epsilon={epsilon}", "epsilon_budget")
