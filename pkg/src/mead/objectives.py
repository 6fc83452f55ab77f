"""Attack objective functions over probability vectors, with gradients.

All four objectives are scalar functions of the perturbed prediction
q_adv (and, for the cross-entropy and divergence ones, a reference).
Higher objective value = better for the attacker. Probabilities entering
a log, a division, or an arccos are clamped away from 0/1 so every value
and gradient stays finite.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

PROB_FLOOR = 1e-12
ARCCOS_CLAMP = 1.0 - 1e-9


class ObjectiveKind(str, Enum):
    ACE = "ace"
    KL = "kl"
    FR = "fr"
    GINI = "gini"


@dataclass
class ObjectiveReference:
    """What the objective compares against: a true label (ACE), the
    natural prediction (KL, FR), or nothing (Gini)."""

    label: int | None = None
    q_nat: np.ndarray | None = None

    @classmethod
    def for_label(cls, y: int) -> "ObjectiveReference":
        return cls(label=int(y))

    @classmethod
    def for_natural(cls, q_nat: np.ndarray) -> "ObjectiveReference":
        return cls(q_nat=np.asarray(q_nat, dtype=float))

    @classmethod
    def none(cls) -> "ObjectiveReference":
        return cls()


def _clamp(q: np.ndarray) -> np.ndarray:
    return np.clip(q, PROB_FLOOR, 1.0)


def ace_loss(q_adv: np.ndarray, y: int) -> float:
    """Cross-entropy against the one-hot true label."""
    return float(-np.log(_clamp(q_adv)[y]))


def kl_loss(q_nat: np.ndarray, q_adv: np.ndarray) -> float:
    qn = _clamp(q_nat)
    qa = _clamp(q_adv)
    return float(np.sum(q_nat * np.log(qn / qa)))


def fr_loss(q_nat: np.ndarray, q_adv: np.ndarray) -> float:
    """Spherical (Bhattacharyya-angle) distance between predictions."""
    bc = np.sum(np.sqrt(_clamp(q_nat) * _clamp(q_adv)))
    return float(2.0 * np.arccos(np.clip(bc, -1.0, 1.0)))


def gini_loss(q_adv: np.ndarray) -> float:
    """1 - sqrt(sum of squared probs); maximal at the uniform prediction."""
    return float(1.0 - np.sqrt(np.sum(np.asarray(q_adv, dtype=float) ** 2)))


def objective_value(kind: ObjectiveKind, reference: ObjectiveReference,
                    q_adv: np.ndarray) -> float:
    if kind == ObjectiveKind.ACE:
        if reference.label is None:
            raise ValueError("ACE objective needs a label reference")
        return ace_loss(q_adv, reference.label)
    if kind == ObjectiveKind.KL:
        if reference.q_nat is None:
            raise ValueError("KL objective needs a natural-prediction reference")
        return kl_loss(reference.q_nat, q_adv)
    if kind == ObjectiveKind.FR:
        if reference.q_nat is None:
            raise ValueError("FR objective needs a natural-prediction reference")
        return fr_loss(reference.q_nat, q_adv)
    if kind == ObjectiveKind.GINI:
        return gini_loss(q_adv)
    raise ValueError(f"unknown objective {kind}")


def objective_grad_probs(kind: ObjectiveKind, reference: ObjectiveReference,
                         q_adv: np.ndarray) -> np.ndarray:
    """Gradient of the objective w.r.t. q_adv, finite everywhere.

    The arccos derivative blows up at coinciding predictions, so its
    argument is clamped below 1 before differentiating.
    """
    q_adv = np.asarray(q_adv, dtype=float)
    if kind == ObjectiveKind.ACE:
        if reference.label is None:
            raise ValueError("ACE objective needs a label reference")
        g = np.zeros_like(q_adv)
        g[reference.label] = -1.0 / _clamp(q_adv)[reference.label]
        return g
    if kind == ObjectiveKind.KL:
        if reference.q_nat is None:
            raise ValueError("KL objective needs a natural-prediction reference")
        return -reference.q_nat / _clamp(q_adv)
    if kind == ObjectiveKind.FR:
        if reference.q_nat is None:
            raise ValueError("FR objective needs a natural-prediction reference")
        qn = _clamp(reference.q_nat)
        qa = _clamp(q_adv)
        bc = np.clip(np.sum(np.sqrt(qn * qa)), -ARCCOS_CLAMP, ARCCOS_CLAMP)
        d_bc = 0.5 * np.sqrt(qn / qa)
        return -2.0 / np.sqrt(1.0 - bc * bc) * d_bc
    if kind == ObjectiveKind.GINI:
        norm = max(np.sqrt(np.sum(q_adv ** 2)), PROB_FLOOR)
        return -q_adv / norm
    raise ValueError(f"unknown objective {kind}")
