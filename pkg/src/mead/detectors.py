"""Adversarial-example detectors: each exposes fit state and a scalar
score where higher means "more adversarial".

Supervised kinds (RBF-SVM, LID, KD-BU) are fitted on natural plus
attacked samples; unsupervised ones (FS, MagNet) only ever see naturals.
"""

from __future__ import annotations

import pickle
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, optimize

from . import nn

DETECTOR_FORMAT_VERSION = 1


class UsageError(RuntimeError):
    """Raised when a detector is scored before being fitted."""


# ---------------------------------------------------------------------------
# logistic head shared by LID and KD-BU

def logistic_loss_grad(w: np.ndarray, X: np.ndarray, y: np.ndarray,
                       l2: float = 1e-4):
    """Mean negative log-likelihood of a linear logistic model plus an L2
    penalty; returns (loss, gradient). X must carry a bias column already."""
    z = X @ w
    # log(1 + exp(-y z)) computed stably
    m = np.maximum(0.0, -z * y)
    loss = np.mean(m + np.log(np.exp(-m) + np.exp(-z * y - m)))
    p = 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))
    t = (y + 1.0) / 2.0
    grad = X.T @ (p - t) / len(y)
    return loss + 0.5 * l2 * np.sum(w * w), grad + l2 * w


class LogisticHead:
    """Binary logistic regression on standardized features."""

    def __init__(self, l2: float = 1e-4):
        self.l2 = l2
        self.w = None
        self.mean = None
        self.std = None

    def _design(self, X: np.ndarray) -> np.ndarray:
        Z = (X - self.mean) / self.std
        return np.hstack([Z, np.ones((len(Z), 1))])

    def fit(self, X: np.ndarray, labels: np.ndarray) -> "LogisticHead":
        X = np.asarray(X, dtype=float)
        self.mean = X.mean(axis=0)
        self.std = np.where(X.std(axis=0) > 1e-12, X.std(axis=0), 1.0)
        D = self._design(X)
        y = np.where(np.asarray(labels) > 0, 1.0, -1.0)
        res = optimize.minimize(
            logistic_loss_grad, np.zeros(D.shape[1]), args=(D, y, self.l2),
            jac=True, method="L-BFGS-B")
        self.w = res.x
        return self

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        z = self._design(np.atleast_2d(X)) @ self.w
        return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))


# ---------------------------------------------------------------------------
# RBF kernel SVM trained by dual coordinate ascent

def _rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    sq = (np.sum(A ** 2, axis=1)[:, None] + np.sum(B ** 2, axis=1)[None, :]
          - 2.0 * A @ B.T)
    return np.exp(-gamma * np.maximum(sq, 0.0))


class RbfSvmDetector:
    """Binary RBF-kernel SVM; score is the signed decision value toward
    the adversarial class."""

    kind = "rbf_svm"

    def __init__(self, gamma: float | None = None, c_reg: float = 1.0,
                 max_passes: int = 10_000, tol: float = 1e-3):
        self.gamma = gamma
        self.c_reg = c_reg
        self.max_passes = max_passes
        self.tol = tol
        self.bias = 0.0
        self.X = None
        self.y = None
        self.alphas = None
        self.converged = True
        self.training_manifest: dict = {}

    def fit(self, naturals: np.ndarray, adversarials: np.ndarray) -> "RbfSvmDetector":
        X = np.vstack([naturals, adversarials]).astype(float)
        y = np.concatenate([-np.ones(len(naturals)), np.ones(len(adversarials))])
        if self.gamma is None:
            var = X.var()
            self.gamma = 1.0 / (X.shape[1] * var) if var > 0 else 1.0
        K = _rbf_kernel(X, X, self.gamma)
        n = len(X)
        C = self.c_reg
        alphas = np.zeros(n)
        self.bias = 0.0
        # pairwise dual coordinate ascent (SMO) preserving sum(a y) = 0;
        # the error cache is maintained incrementally so each update is O(n)
        self.converged = False
        err = -y.astype(float)           # f(x_i) - y_i at alphas = 0, b = 0
        for _ in range(self.max_passes * n):
            viol = np.where((alphas < C) & (y * err < -self.tol), -y * err, 0.0) \
                + np.where((alphas > 0) & (y * err > self.tol), y * err, 0.0)
            if viol.max() <= self.tol:
                self.converged = True
                break
            # most-violating first index; partners by decreasing |E_i - E_j|
            step_done = False
            for i in np.argsort(-viol):
                i = int(i)
                if viol[i] <= self.tol:
                    break
                for j in np.argsort(-np.abs(err - err[i])):
                    j = int(j)
                    if j != i and self._smo_step(i, j, K, y, alphas, err):
                        step_done = True
                        break
                if step_done:
                    break
            if not step_done:
                # fixed point of the pair solver: no update can improve
                # the dual, so treat the solution as converged
                self.converged = True
                break
        self.X, self.y, self.alphas = X, y, alphas
        return self

    def _smo_step(self, i: int, j: int, K, y, alphas, err) -> bool:
        """One analytic pair update; mutates alphas/err/bias in place."""
        C = self.c_reg
        if y[i] != y[j]:
            low = max(0.0, alphas[j] - alphas[i])
            high = min(C, C + alphas[j] - alphas[i])
        else:
            low = max(0.0, alphas[i] + alphas[j] - C)
            high = min(C, alphas[i] + alphas[j])
        if low >= high:
            return False
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if eta <= 1e-12:
            return False
        aj_new = np.clip(alphas[j] + y[j] * (err[i] - err[j]) / eta, low, high)
        dj = aj_new - alphas[j]
        if abs(dj) < 1e-12:
            return False
        ai_new = alphas[i] - y[i] * y[j] * dj
        di = ai_new - alphas[i]
        b_i = self.bias - err[i] - y[i] * di * K[i, i] - y[j] * dj * K[i, j]
        b_j = self.bias - err[j] - y[i] * di * K[i, j] - y[j] * dj * K[j, j]
        if 0.0 < ai_new < C:
            b_new = b_i
        elif 0.0 < aj_new < C:
            b_new = b_j
        else:
            b_new = 0.5 * (b_i + b_j)
        err += y[i] * di * K[i] + y[j] * dj * K[j] + (b_new - self.bias)
        alphas[i], alphas[j] = ai_new, aj_new
        self.bias = b_new
        return True

    def score_inputs(self, X: np.ndarray) -> np.ndarray:
        if self.alphas is None:
            raise UsageError("RBF-SVM detector not fitted")
        K = _rbf_kernel(np.atleast_2d(X).astype(float), self.X, self.gamma)
        return K @ (self.alphas * self.y) + self.bias

    def score(self, model, x: np.ndarray) -> float:
        return float(self.score_inputs(x)[0])

    def predict(self, X: np.ndarray) -> np.ndarray:
        """+1 = adversarial, -1 = natural."""
        return np.where(self.score_inputs(X) >= 0, 1, -1)


# ---------------------------------------------------------------------------
# LID

def lid_estimate(query_features: np.ndarray, reference_batch: np.ndarray,
                 k: int) -> float:
    """Maximum-likelihood local intrinsic dimensionality from the k nearest
    reference distances."""
    if len(reference_batch) <= k:
        raise ValueError("reference batch must be larger than k")
    if k < 2:
        raise ValueError("k must be >= 2")
    d = np.linalg.norm(reference_batch - query_features, axis=1)
    d = np.maximum(np.sort(d)[:k], 1e-12)
    mean_log = np.mean(np.log(d / d[-1]))
    if mean_log == 0.0:
        mean_log = -1e-12
    return float(-1.0 / mean_log)


class LidDetector:
    """Per-layer LID features against a natural reference batch, with a
    logistic head separating natural/noisy from adversarial inputs."""

    kind = "lid"

    def __init__(self, k: int = 10, noise_sigma: float = 0.03125, seed: int = 0):
        self.k = k
        self.noise_sigma = noise_sigma
        self.seed = seed
        self.reference_layers = None
        self.head = None
        self.training_manifest: dict = {}

    def _features(self, model, X: np.ndarray) -> np.ndarray:
        layers = nn.hidden_activations(model, np.atleast_2d(X))
        feats = np.empty((len(np.atleast_2d(X)), len(layers)))
        for li, (layer, ref) in enumerate(zip(layers, self.reference_layers)):
            for si in range(layer.shape[0]):
                feats[si, li] = lid_estimate(layer[si], ref, self.k)
        return feats

    def fit(self, model, naturals: np.ndarray, adversarials: np.ndarray) -> "LidDetector":
        rng = np.random.default_rng(self.seed)
        noisy = naturals + rng.normal(0.0, self.noise_sigma, size=naturals.shape)
        self.reference_layers = [a.copy() for a in
                                 nn.hidden_activations(model, naturals)]
        feats = np.vstack([self._features(model, naturals),
                           self._features(model, noisy),
                           self._features(model, adversarials)])
        labels = np.concatenate([np.zeros(2 * len(naturals)),
                                 np.ones(len(adversarials))])
        self.head = LogisticHead().fit(feats, labels)
        return self

    def score(self, model, x: np.ndarray) -> float:
        if self.head is None:
            raise UsageError("LID detector not fitted")
        return float(self.head.predict_proba(self._features(model, x))[0])


# ---------------------------------------------------------------------------
# KD-BU

def gaussian_kde_logpdf(query: np.ndarray, points: np.ndarray,
                        bandwidth: float) -> float:
    """Log density of an isotropic Gaussian mixture centered on points."""
    d = points.shape[1]
    sq = np.sum((points - query) ** 2, axis=1)
    log_kernels = -sq / (2.0 * bandwidth ** 2)
    log_norm = -0.5 * d * np.log(2.0 * np.pi * bandwidth ** 2)
    m = np.max(log_kernels)
    return float(m + np.log(np.mean(np.exp(log_kernels - m))) + log_norm)


def scott_bandwidth(points: np.ndarray) -> float:
    n, d = points.shape
    sigma = np.mean(points.std(axis=0))
    return max(float(sigma * n ** (-1.0 / (d + 4))), 1e-6)


class KdBuDetector:
    """Kernel density on last-hidden-layer features plus dropout-pass
    uncertainty, combined by a logistic head."""

    kind = "kd_bu"

    def __init__(self, bandwidth: float | None = None, dropout_passes: int = 30,
                 seed: int = 0):
        self.bandwidth = bandwidth
        self.dropout_passes = dropout_passes
        self.seed = seed
        self.class_points = None
        self.all_points = None
        self.head = None
        self.training_manifest: dict = {}

    def _last_hidden(self, model, X: np.ndarray) -> np.ndarray:
        acts = nn.hidden_activations(model, np.atleast_2d(X))
        return acts[-2] if len(acts) >= 2 else acts[-1]

    def _uncertainty(self, model, x: np.ndarray) -> float:
        """Variance of softmax outputs across stochastic forward passes."""
        if all(rate == 0.0 for rate in model.dropout):
            return 0.0
        probs = np.stack([
            nn.forward(model, x, dropout_active=True,
                       seed=self.seed + 7919 * t).probs
            for t in range(self.dropout_passes)])
        return float(np.mean(probs.var(axis=0)))

    def _features(self, model, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        hidden = self._last_hidden(model, X)
        labels = nn.predict_label(model, X)
        rows = []
        for h, x, lbl in zip(hidden, X, np.atleast_1d(labels)):
            pts = self.class_points.get(int(lbl), self.all_points)
            rows.append([-gaussian_kde_logpdf(h, pts, self.bandwidth),
                         self._uncertainty(model, x)])
        return np.asarray(rows)

    def fit(self, model, naturals: np.ndarray, natural_labels: np.ndarray,
            adversarials: np.ndarray) -> "KdBuDetector":
        hidden = self._last_hidden(model, naturals)
        if self.bandwidth is None:
            self.bandwidth = scott_bandwidth(hidden)
        self.all_points = hidden
        self.class_points = {}
        for c in np.unique(natural_labels):
            pts = hidden[natural_labels == c]
            if len(pts) > 0:
                self.class_points[int(c)] = pts
        feats = np.vstack([self._features(model, naturals),
                           self._features(model, adversarials)])
        labels = np.concatenate([np.zeros(len(naturals)),
                                 np.ones(len(adversarials))])
        self.head = LogisticHead().fit(feats, labels)
        return self

    def score(self, model, x: np.ndarray) -> float:
        if self.head is None:
            raise UsageError("KD-BU detector not fitted")
        return float(self.head.predict_proba(self._features(model, x))[0])


# ---------------------------------------------------------------------------
# Feature squeezing

def bit_depth_squeeze(x: np.ndarray, bits: int) -> np.ndarray:
    """Quantize [0,1] values to 2^bits levels, rounding half up."""
    levels = 2 ** bits - 1
    return np.floor(np.clip(x, 0.0, 1.0) * levels + 0.5) / levels


def median_smooth(x: np.ndarray, image_shape: tuple[int, int],
                  window: int = 2) -> np.ndarray:
    img = x.reshape(image_shape)
    return ndimage.median_filter(img, size=window, mode="reflect").ravel()


class FsDetector:
    """Prediction shift under input squeezing; unsupervised."""

    kind = "fs"

    def __init__(self, bit_depths=(4,), median_window: int = 2,
                 image_shape: tuple[int, int] | None = None):
        self.bit_depths = tuple(bit_depths)
        self.median_window = median_window
        self.image_shape = image_shape
        self.training_manifest: dict = {}

    def fit(self, *_args, **_kw) -> "FsDetector":
        return self

    def score(self, model, x: np.ndarray) -> float:
        base = nn.forward(model, x).probs
        squeezed = [bit_depth_squeeze(x, b) for b in self.bit_depths]
        if self.image_shape is not None:
            squeezed.append(median_smooth(x, self.image_shape,
                                          self.median_window))
        diffs = [np.sum(np.abs(base - nn.forward(model, s).probs))
                 for s in squeezed]
        return float(max(diffs)) if diffs else 0.0


# ---------------------------------------------------------------------------
# MagNet

def jensen_shannon(p: np.ndarray, q: np.ndarray) -> float:
    """JSD with natural log; bounded by ln 2."""
    p = np.clip(p, 1e-12, 1.0)
    q = np.clip(q, 1e-12, 1.0)
    m = 0.5 * (p + q)
    return float(0.5 * np.sum(p * np.log(p / m)) + 0.5 * np.sum(q * np.log(q / m)))


def magnet_scores(autoencoder: nn.ModelParams, model: nn.ModelParams,
                  x: np.ndarray, temperature: float = 10.0):
    """Raw MagNet statistics: reconstruction error and probability divergence
    between temperature-softened predictions of x and its reconstruction."""
    recon = nn.reconstruct(autoencoder, x)
    recon_error = float(np.linalg.norm(x - recon))
    p = nn.softmax(nn.forward(model, x).logits / temperature)
    q = nn.softmax(nn.forward(model, recon).logits / temperature)
    return recon_error, jensen_shannon(p, q)


def _rank_normalize(value: float, fit_values: np.ndarray) -> float:
    """Fraction of fit-set values at or below this value."""
    return float(np.searchsorted(fit_values, value, side="right")
                 / len(fit_values))


class MagnetDetector:
    """Autoencoder-based detector; score is the max of the two MagNet
    statistics after rank normalization against the natural fit set."""

    kind = "magnet"

    def __init__(self, autoencoder: nn.ModelParams, temperature: float = 10.0):
        self.autoencoder = autoencoder
        self.temperature = temperature
        self.fit_recon = None
        self.fit_jsd = None
        self.training_manifest: dict = {}

    def fit(self, model, naturals: np.ndarray) -> "MagnetDetector":
        stats = [magnet_scores(self.autoencoder, model, x, self.temperature)
                 for x in naturals]
        self.fit_recon = np.sort([s[0] for s in stats])
        self.fit_jsd = np.sort([s[1] for s in stats])
        return self

    def score(self, model, x: np.ndarray) -> float:
        if self.fit_recon is None:
            raise UsageError("MagNet detector not fitted")
        recon, jsd = magnet_scores(self.autoencoder, model, x, self.temperature)
        return max(_rank_normalize(recon, self.fit_recon),
                   _rank_normalize(jsd, self.fit_jsd))


# ---------------------------------------------------------------------------

def score(detector, model, x: np.ndarray) -> float:
    """Scalar detector score; higher means more adversarial."""
    return detector.score(model, x)


_KIND_TAGS = {"rbf_svm": 1, "lid": 2, "kd_bu": 3, "fs": 4, "magnet": 5}


def save_detector(detector, path) -> None:
    """Binary blob: kind tag byte, version byte, pickled state."""
    with open(path, "wb") as f:
        f.write(struct.pack("BB", _KIND_TAGS[detector.kind],
                            DETECTOR_FORMAT_VERSION))
        f.write(pickle.dumps(detector))


def load_detector(path):
    with open(path, "rb") as f:
        tag, version = struct.unpack("BB", f.read(2))
        if version != DETECTOR_FORMAT_VERSION:
            raise ValueError(f"unsupported detector format version {version}")
        det = pickle.loads(f.read())
    if _KIND_TAGS[det.kind] != tag:
        raise ValueError("detector kind tag mismatch")
    return det


def write_scores_csv(rows, path) -> None:
    """Stream (sample_id, detector, score) rows to CSV."""
    with open(path, "w", newline="\n", encoding="utf-8") as f:
        f.write("sample_id,detector,score\n")
        for sample_id, det, s in rows:
            f.write(f"{sample_id},{det},{float(s)!r}\n")
