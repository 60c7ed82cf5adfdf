"""Desk-scale FID and Inception Score.

Features come from a seeded random CNN and class probabilities from a small
softmax classifier trained on synthetic palette labels.  The numbers are only
comparable between runs that report the same extractor/classifier identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .data import IMAGE_SUFFIXES, DataError, ImageDecodeError, make_synthetic_dataset, read_image
from .losses import RandomFeatureExtractor
from .tensor import Tensor

EIG_CLAMP = 1e-10


class EvaluationError(ValueError):
    pass


@dataclass
class GaussianFit:
    mean: np.ndarray
    cov: np.ndarray

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def fit_gaussian(features) -> GaussianFit:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise EvaluationError("fit_gaussian needs at least 2 feature vectors")
    mu = x.mean(axis=0)
    d = x - mu
    cov = d.T @ d / (x.shape[0] - 1)
    return GaussianFit(mu, (cov + cov.T) / 2)


def _sym_eig(a: np.ndarray):
    try:
        return np.linalg.eigh((a + a.T) / 2)
    except np.linalg.LinAlgError as exc:
        raise EvaluationError(f"eigendecomposition did not converge: {exc}") from None


def sqrtm_psd(a: np.ndarray) -> np.ndarray:
    w, v = _sym_eig(a)
    w = np.where(w < EIG_CLAMP, 0.0, w)
    return (v * np.sqrt(w)) @ v.T


def trace_sqrt_product(a: np.ndarray, b: np.ndarray) -> float:
    """Tr((A B)^(1/2)) for PSD A, B, via the symmetric similar matrix A^½ B A^½."""
    ra = sqrtm_psd(a)
    w, _ = _sym_eig(ra @ b @ ra)
    w = np.where(w < EIG_CLAMP, 0.0, w)
    return float(np.sqrt(w).sum())


def frechet_distance(a: GaussianFit, b: GaussianFit) -> float:
    if a.dim != b.dim:
        raise EvaluationError(f"feature dimensions differ: {a.dim} vs {b.dim}")
    diff = a.mean - b.mean
    value = diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2.0 * trace_sqrt_product(a.cov, b.cov)
    return max(float(value), 0.0)


def inception_score(probs, splits: int = 1) -> tuple[float, float]:
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] == 0:
        raise EvaluationError("inception_score needs a non-empty (n, K) probability array")
    if (p < 0).any() or np.abs(p.sum(axis=1) - 1.0).max() > 1e-6:
        raise EvaluationError("every row must be a probability distribution")
    if not 1 <= splits <= p.shape[0]:
        raise EvaluationError(f"splits must lie in [1, {p.shape[0]}]")
    scores = []
    for part in np.array_split(p, splits):
        marginal = part.mean(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(part > 0, part * (np.log(part) - np.log(marginal)), 0.0)
        scores.append(math.exp(terms.sum(axis=1).mean()))
    return float(np.mean(scores)), float(np.std(scores))


# -- networks used for evaluation -----------------------------------------------


def image_features(fx, images: np.ndarray, batch: int = 16) -> np.ndarray:
    """Global-average-pooled activations of every extractor level, concatenated."""
    out = []
    with T.no_grad():
        for i in range(0, len(images), batch):
            x = Tensor(np.asarray(images[i:i + batch], dtype=np.float64))
            levels = fx(x)
            out.append(np.concatenate([f.data.mean(axis=(2, 3)) for f in levels], axis=1))
    return np.concatenate(out, axis=0).astype(np.float64)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class SoftmaxClassifier:
    """Multinomial logistic regression on standardized features, trained by
    full-batch gradient descent (deterministic)."""

    def __init__(self, num_classes: int, l2: float = 1e-3):
        self.num_classes = num_classes
        self.l2 = l2
        self.mu = self.sd = self.weight = self.bias = None
        self.identity = f"softmax(K={num_classes})"

    def fit(self, x: np.ndarray, y: np.ndarray, iters: int = 500, lr: float = 0.5):
        x = np.asarray(x, dtype=np.float64)
        self.mu = x.mean(axis=0)
        self.sd = x.std(axis=0) + 1e-8
        xs = (x - self.mu) / self.sd
        n, d = xs.shape
        onehot = np.eye(self.num_classes)[y]
        self.weight = np.zeros((d, self.num_classes))
        self.bias = np.zeros(self.num_classes)
        for _ in range(iters):
            p = softmax(xs @ self.weight + self.bias)
            g = (p - onehot) / n
            self.weight -= lr * (xs.T @ g + self.l2 * self.weight)
            self.bias -= lr * g.sum(axis=0)
        return self

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        xs = (np.asarray(x, dtype=np.float64) - self.mu) / self.sd
        return softmax(xs @ self.weight + self.bias)


def default_extractor(seed: int = 0) -> RandomFeatureExtractor:
    return RandomFeatureExtractor(seed, dtype=np.float64)


def palette_classifier(extractor, n: int = 64, size: int = 32, n_palettes: int = 4,
                       seed: int = 0) -> SoftmaxClassifier:
    """Classifier whose classes are the colour palettes of a synthetic set."""
    ds = make_synthetic_dataset("style_transfer", n=n, h=size, w=size, seed=seed, n_palettes=n_palettes)
    clf = SoftmaxClassifier(n_palettes).fit(image_features(extractor, ds.style_images), ds.palette_ids)
    clf.identity = f"palette-softmax(seed={seed},K={n_palettes},n={n})"
    return clf


# -- run-level evaluation ---------------------------------------------------------


def load_image_dir(path) -> np.ndarray:
    d = Path(path)
    if not d.is_dir():
        raise DataError(f"image directory does not exist: {path}")
    files = sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise DataError(f"image directory is empty: {path}")
    try:
        images = [read_image(f).pixels[0] for f in files]
    except ImageDecodeError as exc:
        raise DataError(str(exc)) from None
    shapes = {im.shape for im in images}
    if len(shapes) != 1:
        raise DataError(f"images in {path} have differing sizes: {sorted(shapes)}")
    return np.stack(images)


@dataclass
class EvalReport:
    fid: float
    is_mean: float
    is_std: float
    n_generated: int
    n_reference: int
    extractor: str
    classifier: str

    def machine_line(self) -> str:
        return (f"METRICS fid={self.fid!r} is_mean={self.is_mean!r} is_std={self.is_std!r} "
                f"n_generated={self.n_generated} n_reference={self.n_reference} "
                f"extractor={self.extractor} classifier={self.classifier}")

    def text(self) -> str:
        return "\n".join([
            "evaluation report",
            f"  extractor   {self.extractor}",
            f"  classifier  {self.classifier}",
            f"  images      {self.n_generated} generated, {self.n_reference} reference",
            f"  FID         {self.fid:.6g}",
            f"  IS          {self.is_mean:.6g} +/- {self.is_std:.3g}",
            "  desk-scale features: not comparable with Inception-v3 based numbers",
            self.machine_line(),
        ])


def parse_report(text: str) -> dict:
    """Read back the machine-readable line of a report."""
    for line in text.splitlines():
        if line.startswith("METRICS "):
            fields = dict(tok.split("=", 1) for tok in line[len("METRICS "):].split())
            out: dict = {}
            for k, v in fields.items():
                if k.startswith("n_"):
                    out[k] = int(v)
                elif k in ("fid", "is_mean", "is_std"):
                    out[k] = float(v)
                else:
                    out[k] = v
            return out
    raise ValueError("no METRICS line in report")


def evaluate_images(generated: np.ndarray, reference: np.ndarray, extractor=None, classifier=None,
                    splits: int = 1) -> EvalReport:
    if len(generated) == 0 or len(reference) == 0:
        raise DataError("both image sets must be non-empty")
    fx = extractor or default_extractor()
    clf = classifier or palette_classifier(fx)
    fg = image_features(fx, generated)
    fr = image_features(fx, reference)
    if len(fg) < 2 or len(fr) < 2:
        raise EvaluationError("FID needs at least 2 images per set")
    fid = frechet_distance(fit_gaussian(fg), fit_gaussian(fr))
    is_mean, is_std = inception_score(clf.predict_proba(fg), splits)
    return EvalReport(fid, is_mean, is_std, len(generated), len(reference),
                      getattr(fx, "identity", type(fx).__name__), clf.identity)


def evaluate_run(generated_dir, reference_dir, extractor=None, classifier=None) -> EvalReport:
    return evaluate_images(load_image_dir(generated_dir), load_image_dir(reference_dir),
                           extractor, classifier)
