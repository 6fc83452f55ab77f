"""Experiment configuration: fail-closed parsing and round-trip writing.

Configs are YAML documents with a fixed schema; any key outside the
schema is an error, so a typo in an epsilon grid cannot pass silently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import yaml

from .attacks import AttackFamily, AttackSpec, Norm, attack_preset
from .data import GaussianSpec
from .nn import TrainConfig
from .objectives import ObjectiveKind


class ConfigError(ValueError):
    pass


@dataclass
class DatasetConfig:
    kind: str = "gaussian"                    # "gaussian" | "idx"
    gaussian: GaussianSpec = field(default_factory=GaussianSpec)
    images: str | None = None
    labels: str | None = None
    limit: int | None = None
    image_shape: tuple[int, int] | None = None


@dataclass
class ExperimentConfig:
    seed: int = 0
    output_dir: str = "out"
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    arch: list[int] = field(default_factory=lambda: [2, 64, 2])
    dropout: list[float] = field(default_factory=list)
    train: TrainConfig = field(default_factory=TrainConfig)
    detectors: list[dict] = field(default_factory=lambda: [{"kind": "rbf_svm"}])
    attacks: list[AttackSpec] = field(default_factory=list)
    attack_preset_name: str | None = None
    eps_limit: int | None = None
    clip_domain: bool = False
    attack_only_correct: bool = False

    def resolved_attacks(self) -> list[AttackSpec]:
        if self.attack_preset_name:
            return attack_preset(self.attack_preset_name, self.eps_limit)
        return list(self.attacks)


_DATASET_KEYS = {"kind", "n_per_class", "mu0", "mu1", "sigma",
                 "train_fraction", "seed", "images", "labels", "limit",
                 "image_shape"}
_TRAIN_KEYS = {"epochs", "learning_rate", "momentum", "weight_decay",
               "batch_size", "seed"}
_DETECTOR_KEYS = {"kind", "gamma", "c_reg", "k", "noise_sigma", "bandwidth",
                  "dropout_passes", "bit_depths", "median_window",
                  "temperature", "ae_arch", "seed"}
_ATTACK_KEYS = {"family", "objective", "norm", "epsilon", "steps", "step_size",
                "random_init", "seed", "max_rot_deg", "max_trans_px",
                "grid_steps"}
_TOP_KEYS = {"seed", "output_dir", "dataset", "arch", "dropout", "train",
             "detectors", "attacks", "attack_preset", "eps_limit",
             "clip_domain", "attack_only_correct"}


def _check_keys(mapping: dict, allowed: set, where: str) -> None:
    for key in mapping:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where}")


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise ConfigError(f"missing required key {key!r} in {where}")
    return mapping[key]


def _parse_attack(rec: dict) -> AttackSpec:
    _check_keys(rec, _ATTACK_KEYS, "attack spec")
    kwargs = dict(rec)
    kwargs["family"] = AttackFamily(_require(rec, "family", "attack spec"))
    if rec.get("objective") is not None:
        kwargs["objective"] = ObjectiveKind(rec["objective"])
    if "norm" in rec:
        kwargs["norm"] = Norm(rec["norm"])
    return AttackSpec(**kwargs)


def _attack_to_dict(spec: AttackSpec) -> dict:
    return {
        "family": spec.family.value,
        "objective": spec.objective.value if spec.objective else None,
        "norm": spec.norm.value,
        "epsilon": spec.epsilon,
        "steps": spec.steps,
        "step_size": spec.step_size,
        "random_init": spec.random_init,
        "seed": spec.seed,
        "max_rot_deg": spec.max_rot_deg,
        "max_trans_px": spec.max_trans_px,
        "grid_steps": spec.grid_steps,
    }


def config_from_mapping(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping")
    _check_keys(doc, _TOP_KEYS, "config")
    cfg = ExperimentConfig()
    cfg.seed = int(doc.get("seed", 0))
    cfg.output_dir = str(doc.get("output_dir", "out"))

    ds = doc.get("dataset", {})
    _check_keys(ds, _DATASET_KEYS, "dataset")
    dcfg = DatasetConfig(kind=ds.get("kind", "gaussian"))
    if dcfg.kind == "gaussian":
        dcfg.gaussian = GaussianSpec(
            n_per_class=ds.get("n_per_class", 300),
            mu0=tuple(ds.get("mu0", (1.0, 1.0))),
            mu1=tuple(ds.get("mu1", (-1.0, -1.0))),
            sigma=ds.get("sigma", 1.0),
            train_fraction=ds.get("train_fraction", 0.7),
            seed=ds.get("seed", 0))
    elif dcfg.kind == "idx":
        dcfg.images = _require(ds, "images", "dataset")
        dcfg.labels = _require(ds, "labels", "dataset")
        dcfg.limit = ds.get("limit")
        if ds.get("image_shape") is not None:
            dcfg.image_shape = tuple(ds["image_shape"])
    else:
        raise ConfigError(f"unknown dataset kind {dcfg.kind!r}")
    cfg.dataset = dcfg

    cfg.arch = [int(v) for v in doc.get("arch", [2, 64, 2])]
    cfg.dropout = [float(v) for v in doc.get("dropout", [])]

    tr = doc.get("train", {})
    _check_keys(tr, _TRAIN_KEYS, "train")
    cfg.train = TrainConfig(**tr)

    cfg.detectors = []
    for rec in doc.get("detectors", [{"kind": "rbf_svm"}]):
        _check_keys(rec, _DETECTOR_KEYS, "detector")
        _require(rec, "kind", "detector")
        cfg.detectors.append(dict(rec))

    atk = doc.get("attacks", [])
    cfg.attack_preset_name = doc.get("attack_preset")
    cfg.eps_limit = doc.get("eps_limit")
    cfg.attacks = [_parse_attack(rec) for rec in atk]
    cfg.clip_domain = bool(doc.get("clip_domain", False))
    cfg.attack_only_correct = bool(doc.get("attack_only_correct", False))
    return cfg


def config_to_mapping(cfg: ExperimentConfig) -> dict:
    ds: dict = {"kind": cfg.dataset.kind}
    if cfg.dataset.kind == "gaussian":
        g = cfg.dataset.gaussian
        ds.update(n_per_class=g.n_per_class, mu0=list(g.mu0), mu1=list(g.mu1),
                  sigma=g.sigma, train_fraction=g.train_fraction, seed=g.seed)
    else:
        ds.update(images=cfg.dataset.images, labels=cfg.dataset.labels,
                  limit=cfg.dataset.limit,
                  image_shape=(list(cfg.dataset.image_shape)
                               if cfg.dataset.image_shape else None))
    doc = {
        "seed": cfg.seed,
        "output_dir": cfg.output_dir,
        "dataset": ds,
        "arch": list(cfg.arch),
        "dropout": list(cfg.dropout),
        "train": {
            "epochs": cfg.train.epochs,
            "learning_rate": cfg.train.learning_rate,
            "momentum": cfg.train.momentum,
            "weight_decay": cfg.train.weight_decay,
            "batch_size": cfg.train.batch_size,
            "seed": cfg.train.seed,
        },
        "detectors": [dict(rec) for rec in cfg.detectors],
        "attacks": [_attack_to_dict(s) for s in cfg.attacks],
        "clip_domain": cfg.clip_domain,
        "attack_only_correct": cfg.attack_only_correct,
    }
    if cfg.attack_preset_name:
        doc["attack_preset"] = cfg.attack_preset_name
    if cfg.eps_limit is not None:
        doc["eps_limit"] = cfg.eps_limit
    return doc


def parse_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as f:
        doc = yaml.safe_load(f) or {}
    return config_from_mapping(doc)


def write_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(config_to_mapping(cfg), f, sort_keys=False)


def write_report_csv(rows: list[dict], path) -> None:
    """Report CSV with the fixed column order, UTF-8, LF line endings."""
    cols = ["norm", "epsilon", "setting", "detector", "auroc",
            "fpr_at_95_tpr", "n_naturals", "n_adversarials"]
    with open(path, "w", newline="\n", encoding="utf-8") as f:
        f.write(",".join(cols) + "\n")
        for row in rows:
            f.write(",".join(str(row[c]) for c in cols) + "\n")
