"""End-to-end orchestration: dataset -> model -> detectors -> evaluation.

Also hosts the synthetic two-Gaussian case study comparing cross-entropy
and Gini-style attacks against an RBF-SVM detector.
"""

from __future__ import annotations

import os

import numpy as np

from . import detectors as det_mod
from . import nn
from .attacks import AttackFamily, AttackSpec, Norm, pgd, run_attack, with_seed
from .config import ExperimentConfig
from .data import gen_gaussian_dataset, load_idx
from .evaluation import evaluate_group, group_arms, report_rows
from .objectives import ObjectiveKind

# supervised detectors are fitted on positives from this attack
TRAIN_ATTACK = AttackSpec(AttackFamily.PGD, ObjectiveKind.ACE, Norm.LINF,
                          0.03125, random_init=True)


def load_dataset(cfg: ExperimentConfig):
    """Returns (train, test, image_shape)."""
    if cfg.dataset.kind == "gaussian":
        train, test = gen_gaussian_dataset(cfg.dataset.gaussian)
        return train, test, None
    data_dir = os.environ.get("MEAD_DATA_DIR")
    images, labels = cfg.dataset.images, cfg.dataset.labels
    if data_dir:
        images = os.path.join(data_dir, os.path.basename(images))
        labels = os.path.join(data_dir, os.path.basename(labels))
    full = load_idx(images, labels, cfg.dataset.limit)
    n_train = int(round(0.7 * len(full)))
    train = nn.LabeledDataset(full.inputs[:n_train], full.labels[:n_train])
    test = nn.LabeledDataset(full.inputs[n_train:], full.labels[n_train:])
    return train, test, cfg.dataset.image_shape


def train_model(cfg: ExperimentConfig, train: nn.LabeledDataset) -> nn.ModelParams:
    return nn.train_classifier(train, cfg.arch, cfg.train,
                               dropout=cfg.dropout or None)


def generate_train_positives(model: nn.ModelParams, train: nn.LabeledDataset,
                             clip: bool, train_attack: AttackSpec = TRAIN_ATTACK,
                             limit: int | None = None,
                             base_seed: int = 0) -> np.ndarray:
    """Adversarial positives for supervised detector fitting."""
    X, y = train.inputs, train.labels
    if limit is not None:
        X, y = X[:limit], y[:limit]
    advs = []
    for i, (x, label) in enumerate(zip(X, y)):
        spec = with_seed(train_attack, base_seed + i)
        out = run_attack(model, x, int(label), spec, clip=clip)
        advs.append(out.x_adv)
    return np.asarray(advs)


def build_detectors(cfg: ExperimentConfig, model: nn.ModelParams,
                    train: nn.LabeledDataset,
                    image_shape: tuple[int, int] | None = None,
                    fit_limit: int = 200) -> list:
    """Instantiate and fit every configured detector.

    Supervised kinds get positives from the fixed training attack;
    unsupervised kinds only see natural training samples.
    """
    clip = cfg.clip_domain
    X = train.inputs[:fit_limit]
    y = train.labels[:fit_limit]
    fit_naturals = nn.LabeledDataset(X, y)
    positives = None
    detectors = []
    for rec in cfg.detectors:
        kind = rec["kind"]
        opts = {k: v for k, v in rec.items() if k != "kind"}
        if kind in ("rbf_svm", "lid", "kd_bu") and positives is None:
            positives = generate_train_positives(model, fit_naturals, clip,
                                                 base_seed=cfg.seed)
        manifest = {"train_attack": TRAIN_ATTACK.label()} \
            if kind in ("rbf_svm", "lid", "kd_bu") else {}
        if kind == "rbf_svm":
            det = det_mod.RbfSvmDetector(**opts).fit(X, positives)
        elif kind == "lid":
            det = det_mod.LidDetector(**opts).fit(model, X, positives)
        elif kind == "kd_bu":
            det = det_mod.KdBuDetector(**opts).fit(model, X, y, positives)
        elif kind == "fs":
            if image_shape is not None:
                opts.setdefault("image_shape", image_shape)
                opts.setdefault("bit_depths", tuple(range(1, 8)))
            det = det_mod.FsDetector(**opts).fit()
        elif kind == "magnet":
            ae_arch = opts.pop("ae_arch", None) or \
                [model.in_dim, max(model.in_dim // 2, 1), model.in_dim]
            temperature = opts.pop("temperature", 10.0)
            ae = nn.train_autoencoder(
                nn.LabeledDataset(X, y), ae_arch,
                nn.TrainConfig(epochs=50, learning_rate=0.05, momentum=0.9,
                               batch_size=32, seed=cfg.seed))
            det = det_mod.MagnetDetector(ae, temperature=temperature).fit(model, X)
        else:
            raise ValueError(f"unknown detector kind {kind!r}")
        det.training_manifest = manifest
        detectors.append(det)
    return detectors


def run_evaluation(cfg: ExperimentConfig, model: nn.ModelParams,
                   detectors: list, test: nn.LabeledDataset,
                   image_shape: tuple[int, int] | None = None,
                   eval_limit: int | None = None,
                   warn=lambda msg: None) -> list[dict]:
    """Every arm group against every detector; returns report rows."""
    if eval_limit is not None:
        test = nn.LabeledDataset(test.inputs[:eval_limit],
                                 test.labels[:eval_limit])
    groups = group_arms(cfg.resolved_attacks())
    results = []
    for det in detectors:
        for group in groups:
            try:
                results.append(evaluate_group(
                    model, det, test, group, clip=cfg.clip_domain,
                    image_shape=image_shape,
                    attack_only_correct=cfg.attack_only_correct,
                    base_seed=cfg.seed))
            except Exception as exc:    # no positives in this group
                warn(f"group ({group.norm.value}, {group.epsilon}) "
                     f"x {det.kind} skipped: {exc}")
    return report_rows(results)


# ---------------------------------------------------------------------------
# synthetic case study

CASE_STUDY_EPS = {ObjectiveKind.ACE: 1.2, ObjectiveKind.GINI: 5.0}


def _attack_points(model, data: nn.LabeledDataset, objective: ObjectiveKind,
                   eps: float, seed: int = 0) -> np.ndarray:
    advs = []
    for i, (x, y) in enumerate(zip(data.inputs, data.labels)):
        out = pgd(model, x, int(y), objective, eps, Norm.LINF,
                  steps=40, random_init=True, seed=seed + i, clip=False)
        advs.append(out.x_adv)
    return np.asarray(advs)


def _detector_accuracy(det: det_mod.RbfSvmDetector, naturals: np.ndarray,
                       adversarials: np.ndarray) -> float:
    preds_nat = det.predict(naturals)
    preds_adv = det.predict(adversarials)
    correct = np.sum(preds_nat == -1) + np.sum(preds_adv == 1)
    return float(correct / (len(naturals) + len(adversarials)))


def run_case_study(seed: int = 3) -> dict:
    """Two-Gaussian experiment: attack with cross-entropy vs Gini
    objectives, train an RBF-SVM detector on each (and on both), and
    cross-test. Returns the headline accuracy numbers.

    The detector study follows the narrow-classifier setup: a single
    2-unit hidden layer, corrupted accuracy measured over both classes,
    detectors fitted and evaluated on class-0 attack points.
    """
    from .data import GaussianSpec

    train, test = gen_gaussian_dataset(GaussianSpec(seed=seed))
    model = nn.train_classifier(
        train, [2, 2, 2],
        nn.TrainConfig(epochs=20, learning_rate=0.01, momentum=0.9,
                       batch_size=16, seed=seed))

    objectives = (ObjectiveKind.ACE, ObjectiveKind.GINI)
    adv_all = {obj: _attack_points(model, test, obj, CASE_STUDY_EPS[obj],
                                   seed=seed)
               for obj in objectives}
    corrupted_accuracy = {
        obj.value: float(np.mean(
            nn.predict_label(model, adv_all[obj]) == test.labels))
        for obj in objectives}

    # detectors see all naturals but only class-0 attack points
    mask = test.labels == 0
    adv = {o: adv_all[o][mask] for o in objectives}
    n_fit_nat = len(test) // 2
    n_fit_adv = int(mask.sum()) // 2
    nat_fit, nat_eval = test.inputs[:n_fit_nat], test.inputs[n_fit_nat:]
    adv_fit = {o: adv[o][:n_fit_adv] for o in objectives}
    adv_eval = {o: adv[o][n_fit_adv:] for o in objectives}

    matrix = {}
    for trained_on in objectives:
        det = det_mod.RbfSvmDetector().fit(nat_fit, adv_fit[trained_on])
        matrix[trained_on.value] = {
            tested_on.value: _detector_accuracy(det, nat_eval,
                                                adv_eval[tested_on])
            for tested_on in objectives}

    det_both = det_mod.RbfSvmDetector().fit(
        nat_fit, np.vstack([adv_fit[o] for o in objectives]))
    both = {o.value: _detector_accuracy(det_both, nat_eval, adv_eval[o])
            for o in objectives}

    return {
        "corrupted_accuracy": corrupted_accuracy,
        "detector_matrix": matrix,
        "both_trained": both,
        "train_accuracy": nn.accuracy(model, train),
        "test_accuracy": nn.accuracy(model, test),
    }
