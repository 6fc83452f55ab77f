"""Attack generators: gradient-sign families, local linearization,
random-search squares, and grid-searched spatial transforms.

Each generator returns an AttackOutcome carrying the perturbed input and
whether it fooled the model. Norm-constrained families keep the iterate
inside the (p, eps) ball around the natural sample; the [0,1] pixel-domain
clamp can be switched off for unbounded synthetic data.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from scipy import ndimage

from . import nn
from .objectives import ObjectiveKind, ObjectiveReference, objective_value


class AttackFamily(str, Enum):
    FGSM = "fgsm"
    BIM = "bim"
    PGD = "pgd"
    DEEPFOOL = "deepfool"
    SQUARE = "square"
    SPATIAL = "spatial"


class Norm(str, Enum):
    L1 = "l1"
    L2 = "l2"
    LINF = "linf"


@dataclass(frozen=True)
class AttackSpec:
    family: AttackFamily
    objective: ObjectiveKind | None = None   # ignored by DeepFool / spatial
    norm: Norm = Norm.LINF
    epsilon: float | None = None
    steps: int = 40
    step_size: float | None = None           # default 2.5 * eps / steps
    random_init: bool = False
    seed: int = 0
    # spatial-transform parameters
    max_rot_deg: float = 30.0
    max_trans_px: int = 3
    grid_steps: int = 5

    def label(self) -> str:
        obj = self.objective.value if self.objective else "-"
        eps = f"{self.epsilon:g}" if self.epsilon is not None else "-"
        return f"{self.family.value}/{obj}/{self.norm.value}/eps={eps}"


@dataclass
class AttackOutcome:
    x_adv: np.ndarray
    predicted_label: int
    fooled: bool
    spec: AttackSpec


def clip_domain(x: np.ndarray) -> np.ndarray:
    return np.clip(x, 0.0, 1.0)


def project_l1_ball(offset: np.ndarray, eps: float) -> np.ndarray:
    """Euclidean projection of an offset onto the L1 ball of radius eps,
    via the sorted-threshold simplex projection."""
    a = np.abs(offset)
    if a.sum() <= eps:
        return offset
    u = np.sort(a)[::-1]
    css = np.cumsum(u)
    idx = np.arange(1, len(u) + 1)
    rho = np.nonzero(u - (css - eps) / idx > 0)[0][-1]
    theta = (css[rho] - eps) / (rho + 1.0)
    return np.sign(offset) * np.maximum(a - theta, 0.0)


def project_lp(v: np.ndarray, center: np.ndarray, eps: float, p: Norm) -> np.ndarray:
    """Project v onto the Lp ball of radius eps around center."""
    off = v - center
    if p == Norm.LINF:
        # clip against the absolute bounds so the box constraint holds
        # exactly in floating point
        return np.clip(v, center - eps, center + eps)
    if p == Norm.L2:
        norm = np.linalg.norm(off)
        if norm <= eps:
            return v
        return center + off * (eps / norm)
    if p == Norm.L1:
        return center + project_l1_ball(off, eps)
    raise ValueError(f"unknown norm {p}")


def _sample_in_ball(d: int, eps: float, p: Norm, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw from the Lp ball of radius eps."""
    if p == Norm.LINF:
        return rng.uniform(-eps, eps, size=d)
    if p == Norm.L2:
        v = rng.standard_normal(d)
        v /= np.linalg.norm(v)
        return v * eps * rng.random() ** (1.0 / d)
    if p == Norm.L1:
        mags = rng.dirichlet(np.ones(d))
        signs = rng.choice([-1.0, 1.0], size=d)
        return signs * mags * eps * rng.random() ** (1.0 / d)
    raise ValueError(f"unknown norm {p}")


def make_reference(kind: ObjectiveKind, model: nn.ModelParams,
                   x: np.ndarray, y: int) -> ObjectiveReference:
    """Build the reference an objective needs at this natural point."""
    if kind == ObjectiveKind.ACE:
        return ObjectiveReference.for_label(y)
    if kind in (ObjectiveKind.KL, ObjectiveKind.FR):
        return ObjectiveReference.for_natural(nn.forward(model, x).probs)
    return ObjectiveReference.none()


def _outcome(model: nn.ModelParams, x_adv: np.ndarray, y: int,
             spec: AttackSpec) -> AttackOutcome:
    label = int(nn.predict_label(model, x_adv))
    return AttackOutcome(x_adv=x_adv, predicted_label=label,
                         fooled=label != y, spec=spec)


def _lp_step(grad: np.ndarray, step_size: float, p: Norm) -> np.ndarray:
    """Ascent step of the given norm geometry."""
    if p == Norm.LINF:
        return step_size * np.sign(grad)
    if p == Norm.L2:
        norm = np.linalg.norm(grad)
        if norm == 0:
            return np.zeros_like(grad)
        return step_size * grad / norm
    if p == Norm.L1:
        # put the whole step on the k largest-magnitude coordinates
        d = len(grad)
        k = max(1, int(np.ceil(d / 100)))
        step = np.zeros_like(grad)
        top = np.argsort(np.abs(grad))[-k:]
        step[top] = np.sign(grad[top]) * step_size / k
        return step
    raise ValueError(f"unknown norm {p}")


def fgsm(model: nn.ModelParams, x: np.ndarray, y: int,
         objective: ObjectiveKind, eps: float, clip: bool = True,
         spec: AttackSpec | None = None) -> AttackOutcome:
    spec = spec or AttackSpec(AttackFamily.FGSM, objective, Norm.LINF, eps)
    ref = make_reference(objective, model, x, y)
    g = nn.input_gradient(model, x, objective, ref)
    x_adv = x + eps * np.sign(g)
    if clip:
        x_adv = clip_domain(x_adv)
    return _outcome(model, x_adv, y, spec)


def pgd(model: nn.ModelParams, x: np.ndarray, y: int,
        objective: ObjectiveKind, eps: float, p: Norm,
        steps: int = 40, step_size: float | None = None,
        random_init: bool = True, seed: int = 0,
        clip: bool = True, spec: AttackSpec | None = None) -> AttackOutcome:
    """Projected gradient ascent on the objective; BIM is random_init=False."""
    spec = spec or AttackSpec(AttackFamily.PGD, objective, p, eps,
                              steps=steps, random_init=random_init, seed=seed)
    if step_size is None:
        step_size = 2.5 * eps / steps
    ref = make_reference(objective, model, x, y)
    x_adv = x.astype(float).copy()
    if random_init:
        rng = np.random.default_rng(seed)
        x_adv = x + _sample_in_ball(len(x), eps, p, rng)
        if clip:
            x_adv = clip_domain(x_adv)
    for _ in range(steps):
        g = nn.input_gradient(model, x_adv, objective, ref)
        x_adv = x_adv + _lp_step(g, step_size, p)
        x_adv = project_lp(x_adv, x, eps, p)
        if clip:
            x_adv = clip_domain(x_adv)
    return _outcome(model, x_adv, y, spec)


def deepfool(model: nn.ModelParams, x: np.ndarray, y: int,
             max_iter: int = 50, overshoot: float = 0.02,
             clip: bool = True, spec: AttackSpec | None = None) -> AttackOutcome:
    """Iterative local linearization toward the nearest class boundary."""
    spec = spec or AttackSpec(AttackFamily.DEEPFOOL, None, Norm.L2, None,
                              steps=max_iter)
    x_adv = x.astype(float).copy()
    C = model.out_dim
    total = np.zeros_like(x_adv)
    for _ in range(max_iter):
        pred = nn.forward(model, x_adv)
        cur = int(np.argmax(pred.probs))
        if cur != y:
            break
        logits = pred.logits
        g_y = nn.logit_gradient(model, x_adv, y)
        best_dist, best_dir = np.inf, None
        for k in range(C):
            if k == y:
                continue
            w_k = nn.logit_gradient(model, x_adv, k) - g_y
            f_k = logits[k] - logits[y]
            norm = np.linalg.norm(w_k)
            if norm < 1e-12:
                continue
            dist = abs(f_k) / norm
            if dist < best_dist:
                best_dist = dist
                best_dir = (abs(f_k) + 1e-6) / (norm * norm) * w_k
        if best_dir is None:
            break
        total += best_dir
        x_adv = x + (1.0 + overshoot) * total
        if clip:
            x_adv = clip_domain(x_adv)
    return _outcome(model, x_adv, y, spec)


def square_attack(model: nn.ModelParams, x: np.ndarray, y: int,
                  objective: ObjectiveKind, eps: float, iters: int = 200,
                  seed: int = 0, image_shape: tuple[int, int] | None = None,
                  clip: bool = True, spec: AttackSpec | None = None,
                  return_trace: bool = False):
    """Gradient-free random search under the Linf ball.

    Proposals set a contiguous block (a square for image-shaped inputs,
    an index run for flat ones) to +/-eps around the natural sample, and
    are accepted only when the objective increases. The block side shrinks
    geometrically from 30% to 1% of the input extent over the iterations.
    """
    spec = spec or AttackSpec(AttackFamily.SQUARE, objective, Norm.LINF, eps,
                              steps=iters, seed=seed)
    rng = np.random.default_rng(seed)
    ref = make_reference(objective, model, x, y)
    d = len(x)
    side0 = max(image_shape[0] if image_shape else d, 1)

    def value(pt):
        return objective_value(objective, ref, nn.forward(model, pt).probs)

    x_adv = x.astype(float).copy()
    best = value(x_adv)
    trace = [best]
    for t in range(iters):
        frac = 0.30 * (0.01 / 0.30) ** (t / max(iters - 1, 1))
        cand = x_adv.copy()
        signs = None
        if image_shape:
            H, W = image_shape
            s = max(1, int(round(frac * min(H, W))))
            r = rng.integers(0, H - s + 1)
            c = rng.integers(0, W - s + 1)
            block = cand.reshape(H, W)
            signs = rng.choice([-eps, eps], size=(s, s))
            block[r:r + s, c:c + s] = x.reshape(H, W)[r:r + s, c:c + s] + signs
            cand = block.ravel()
        else:
            s = max(1, int(round(frac * d)))
            start = rng.integers(0, d - s + 1)
            cand[start:start + s] = x[start:start + s] + rng.choice(
                [-eps, eps], size=s)
        cand = project_lp(cand, x, eps, Norm.LINF)
        if clip:
            cand = clip_domain(cand)
        v = value(cand)
        if v > best:
            best = v
            x_adv = cand
        trace.append(best)
    out = _outcome(model, x_adv, y, spec)
    if return_trace:
        return out, trace
    return out


def spatial_transform_attack(model: nn.ModelParams, x_image: np.ndarray, y: int,
                             image_shape: tuple[int, int],
                             max_rot_deg: float = 30.0, max_trans_px: int = 3,
                             grid_steps: int = 5,
                             spec: AttackSpec | None = None) -> AttackOutcome:
    """Exhaustive grid search over rotations and integer translations.

    Returns the first transform that fools the model; otherwise the
    transform maximizing cross-entropy against the true label.
    """
    if x_image.size != image_shape[0] * image_shape[1]:
        raise nn.ConfigurationError(
            f"input size {x_image.size} does not match image shape {image_shape}")
    spec = spec or AttackSpec(AttackFamily.SPATIAL, None, Norm.LINF, None,
                              max_rot_deg=max_rot_deg,
                              max_trans_px=max_trans_px, grid_steps=grid_steps)
    img = x_image.reshape(image_shape)
    rotations = np.linspace(-max_rot_deg, max_rot_deg, grid_steps)
    shifts = range(-max_trans_px, max_trans_px + 1)
    best_x, best_val = x_image, -np.inf
    for rot in rotations:
        rotated = ndimage.rotate(img, rot, reshape=False, order=1,
                                 mode="constant", cval=0.0)
        for dy in shifts:
            for dx in shifts:
                moved = ndimage.shift(rotated, (dy, dx), order=1,
                                      mode="constant", cval=0.0)
                cand = np.clip(moved.ravel(), 0.0, 1.0)
                pred = nn.forward(model, cand)
                if int(np.argmax(pred.probs)) != y:
                    return _outcome(model, cand, y, spec)
                val = -np.log(np.clip(pred.probs[y], 1e-12, 1.0))
                if val > best_val:
                    best_val, best_x = val, cand
    return _outcome(model, best_x, y, spec)


def run_attack(model: nn.ModelParams, x: np.ndarray, y: int, spec: AttackSpec,
               clip: bool = True,
               image_shape: tuple[int, int] | None = None) -> AttackOutcome:
    """Dispatch one attack spec against one natural sample."""
    fam = spec.family
    if fam == AttackFamily.FGSM:
        return fgsm(model, x, y, spec.objective, spec.epsilon, clip, spec)
    if fam in (AttackFamily.PGD, AttackFamily.BIM):
        random_init = spec.random_init if fam == AttackFamily.PGD else False
        return pgd(model, x, y, spec.objective, spec.epsilon, spec.norm,
                   steps=spec.steps, step_size=spec.step_size,
                   random_init=random_init, seed=spec.seed, clip=clip,
                   spec=spec)
    if fam == AttackFamily.DEEPFOOL:
        return deepfool(model, x, y, max_iter=spec.steps, clip=clip, spec=spec)
    if fam == AttackFamily.SQUARE:
        return square_attack(model, x, y, spec.objective, spec.epsilon,
                             iters=spec.steps, seed=spec.seed,
                             image_shape=image_shape, clip=clip, spec=spec)
    if fam == AttackFamily.SPATIAL:
        if image_shape is None:
            raise nn.ConfigurationError("spatial transform needs an image shape")
        return spatial_transform_attack(model, x, y, image_shape,
                                        spec.max_rot_deg, spec.max_trans_px,
                                        spec.grid_steps, spec=spec)
    raise ValueError(f"unknown family {fam}")


PAPER_EPS_L1 = (5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 40.0)
PAPER_EPS_L2 = (0.125, 0.25, 0.3125, 0.5, 1.0, 1.5, 2.0)
PAPER_EPS_LINF = (0.0315, 0.0625, 0.125, 0.25, 0.3125, 0.5)

_OBJECTIVES = (ObjectiveKind.ACE, ObjectiveKind.KL,
               ObjectiveKind.FR, ObjectiveKind.GINI)


def attack_preset(name: str, eps_limit: int | None = None) -> list[AttackSpec]:
    """Named attack grids. eps_limit truncates each epsilon grid (smoke runs)."""
    def cut(grid):
        return grid[:eps_limit] if eps_limit else grid

    specs: list[AttackSpec] = []
    if name == "paper-l1":
        for eps in cut(PAPER_EPS_L1):
            for obj in _OBJECTIVES:
                specs.append(AttackSpec(AttackFamily.PGD, obj, Norm.L1, eps,
                                        random_init=True))
    elif name == "paper-l2":
        for eps in cut(PAPER_EPS_L2):
            for obj in _OBJECTIVES:
                specs.append(AttackSpec(AttackFamily.PGD, obj, Norm.L2, eps,
                                        random_init=True))
        specs.append(AttackSpec(AttackFamily.DEEPFOOL, None, Norm.L2, None,
                                steps=50))
    elif name == "paper-linf":
        for eps in cut(PAPER_EPS_LINF):
            for obj in _OBJECTIVES:
                specs.append(AttackSpec(AttackFamily.FGSM, obj, Norm.LINF, eps))
                specs.append(AttackSpec(AttackFamily.BIM, obj, Norm.LINF, eps,
                                        random_init=False))
                specs.append(AttackSpec(AttackFamily.PGD, obj, Norm.LINF, eps,
                                        random_init=True))
        for obj in _OBJECTIVES:
            specs.append(AttackSpec(AttackFamily.SQUARE, obj, Norm.LINF, 0.3125,
                                    steps=200))
    else:
        raise ValueError(f"unknown preset {name!r}")
    return specs


def with_seed(spec: AttackSpec, seed: int) -> AttackSpec:
    return replace(spec, seed=seed)
