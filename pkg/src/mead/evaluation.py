"""Worst-case (multi-armed) detector evaluation.

A natural sample is attacked by every arm of a group; perturbations that
fail to fool the classifier are sifted out. The sample's adversarial side
is then summarized by the minimum detector score over its successful
arms: thresholding that worst-case score realizes the all-arms-detected
criterion. AUROC and FPR@95%TPR are computed from the resulting curve,
alongside conventional single-objective baselines.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import detectors as det_mod
from . import nn
from .attacks import AttackOutcome, AttackSpec, Norm, run_attack, with_seed


class EvaluationError(RuntimeError):
    """Raised when a group has no positives to evaluate."""


@dataclass
class ArmGroup:
    norm: Norm
    epsilon: float | None
    arms: list[AttackSpec]

    def __post_init__(self):
        if not self.arms:
            raise ValueError("an arm group needs at least one arm")
        for a in self.arms:
            if a.norm != self.norm or a.epsilon != self.epsilon:
                raise ValueError("all arms in a group must share (norm, epsilon)")


def group_arms(specs: list[AttackSpec]) -> list[ArmGroup]:
    """Partition attack specs into (norm, epsilon) groups."""
    buckets: dict[tuple, list[AttackSpec]] = {}
    for s in specs:
        buckets.setdefault((s.norm, s.epsilon), []).append(s)
    return [ArmGroup(norm, eps, arms) for (norm, eps), arms in buckets.items()]


@dataclass
class SampleVerdict:
    natural_score: float
    adversarial_scores: list[tuple[AttackSpec, float]] = field(default_factory=list)

    @property
    def worst_case_score(self) -> float | None:
        if not self.adversarial_scores:
            return None
        return min(s for _, s in self.adversarial_scores)


def sift(outcomes: list[AttackOutcome]) -> list[AttackOutcome]:
    """Keep only the perturbations that fooled the classifier."""
    return [o for o in outcomes if o.fooled]


def confusion_counts(verdicts: list[SampleVerdict], gamma: float):
    """(tp, fn, tn, fp) under detection rule score >= gamma.

    A sample with successful arms is a TP iff every arm's score clears the
    threshold, i.e. iff its worst-case score does; a miss on any single arm
    makes it a FN. Every natural contributes to TN/FP.
    """
    tp = fn = tn = fp = 0
    for v in verdicts:
        wc = v.worst_case_score
        if wc is not None:
            if wc >= gamma:
                tp += 1
            else:
                fn += 1
        if v.natural_score >= gamma:
            fp += 1
        else:
            tn += 1
    return tp, fn, tn, fp


def roc_points(verdicts: list[SampleVerdict]) -> list[tuple[float, float]]:
    """(FPR, TPR) curve over a sweep of every distinct observed score plus
    +/-inf sentinels, sorted by FPR then TPR."""
    nat = [v.natural_score for v in verdicts]
    pos = [v.worst_case_score for v in verdicts if v.worst_case_score is not None]
    if not nat or not pos:
        raise EvaluationError("need at least one natural and one positive")
    thresholds = sorted(set(nat) | set(pos))
    thresholds = [-np.inf] + thresholds + [np.inf]
    points = []
    for gamma in thresholds:
        tp, fn, tn, fp = confusion_counts(verdicts, gamma)
        points.append((fp / (fp + tn), tp / (tp + fn)))
    return sorted(set(points))


def auroc(points: list[tuple[float, float]]) -> float:
    pts = sorted(points)
    fpr = np.array([p[0] for p in pts])
    tpr = np.array([p[1] for p in pts])
    return float(np.trapezoid(tpr, fpr))


def fpr_at_95_tpr(points: list[tuple[float, float]]) -> float:
    """FPR of the largest threshold reaching TPR >= 0.95; conservative
    (no interpolation). Falls back to the permissive sentinel (FPR 1)
    when no finite threshold reaches 95% TPR."""
    # larger threshold = smaller FPR; scan from the strict end
    for fpr, tpr in sorted(points):
        if tpr >= 0.95:
            return float(fpr)
    return 1.0


@dataclass
class GroupResult:
    norm: Norm
    epsilon: float | None
    detector_kind: str
    auroc: float
    fpr95: float
    n_naturals: int
    n_adversarials: int
    per_objective: dict[str, tuple[float, float]] = field(default_factory=dict)
    per_objective_counts: dict[str, int] = field(default_factory=dict)


def build_verdicts(natural_scores: np.ndarray,
                   per_sample_outcomes: list[list[tuple[AttackOutcome, float]]]
                   ) -> list[SampleVerdict]:
    """Assemble verdicts from natural scores and per-sample scored sifted
    outcomes (outcome, detector score)."""
    verdicts = []
    for ns, scored in zip(natural_scores, per_sample_outcomes):
        verdicts.append(SampleVerdict(
            natural_score=float(ns),
            adversarial_scores=[(o.spec, float(s)) for o, s in scored]))
    return verdicts


def evaluate_group(model: nn.ModelParams, detector, naturals: nn.LabeledDataset,
                   group: ArmGroup, clip: bool = True,
                   image_shape: tuple[int, int] | None = None,
                   attack_only_correct: bool = False,
                   base_seed: int = 0) -> GroupResult:
    """Run every arm on every natural, sift, score, and aggregate."""
    natural_scores = np.array([det_mod.score(detector, model, x)
                               for x in naturals.inputs])
    per_sample: list[list[tuple[AttackOutcome, float]]] = []
    for si, (x, y) in enumerate(zip(naturals.inputs, naturals.labels)):
        scored: list[tuple[AttackOutcome, float]] = []
        if not attack_only_correct or int(nn.predict_label(model, x)) == y:
            outcomes = []
            for ai, spec in enumerate(group.arms):
                seeded = with_seed(spec, base_seed * 1_000_003 + si * 1009 + ai)
                outcomes.append(run_attack(model, x, int(y), seeded, clip=clip,
                                           image_shape=image_shape))
            for o in sift(outcomes):
                scored.append((o, det_mod.score(detector, model, o.x_adv)))
        per_sample.append(scored)
    verdicts = build_verdicts(natural_scores, per_sample)

    points = roc_points(verdicts)
    n_adv = sum(1 for v in verdicts if v.worst_case_score is not None)
    result = GroupResult(
        norm=group.norm, epsilon=group.epsilon, detector_kind=detector.kind,
        auroc=auroc(points), fpr95=fpr_at_95_tpr(points),
        n_naturals=len(naturals), n_adversarials=n_adv)

    objectives = {a.objective for a in group.arms if a.objective is not None}
    for obj in objectives:
        sub = []
        count = 0
        for v in verdicts:
            mine = [(sp, s) for sp, s in v.adversarial_scores
                    if sp.objective == obj]
            sub.append(SampleVerdict(v.natural_score, mine))
            count += 1 if mine else 0
        try:
            pts = roc_points(sub)
            result.per_objective[obj.value] = (auroc(pts), fpr_at_95_tpr(pts))
            result.per_objective_counts[obj.value] = count
        except EvaluationError:
            pass
    return result


def report_rows(results: list[GroupResult]) -> list[dict]:
    """Flatten group results into the report CSV schema."""
    rows = []
    for r in results:
        eps = "" if r.epsilon is None else f"{r.epsilon:g}"
        rows.append({"norm": r.norm.value, "epsilon": eps, "setting": "mead",
                     "detector": r.detector_kind, "auroc": r.auroc,
                     "fpr_at_95_tpr": r.fpr95, "n_naturals": r.n_naturals,
                     "n_adversarials": r.n_adversarials})
        for obj in ("ace", "kl", "fr", "gini"):
            if obj in r.per_objective:
                a, f95 = r.per_objective[obj]
                rows.append({"norm": r.norm.value, "epsilon": eps,
                             "setting": obj, "detector": r.detector_kind,
                             "auroc": a, "fpr_at_95_tpr": f95,
                             "n_naturals": r.n_naturals,
                             "n_adversarials": r.per_objective_counts[obj]})
    return rows
