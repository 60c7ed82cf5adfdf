"""GAN objectives: hinge adversarial losses, perceptual loss, feature matching."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from . import tensor as T
from .layers import Conv2d, Module, as_rng
from .tensor import Tensor

# relu1_1 .. relu5_1 level weights
PERCEPTUAL_WEIGHTS = (1 / 32, 1 / 16, 1 / 8, 1 / 4, 1.0)


class FeatureExtractor(Protocol):
    weights: Sequence[float]

    def __call__(self, image: Tensor) -> list[Tensor]: ...


class RandomFeatureExtractor(Module):
    """Fixed random CNN standing in for VGG-19: five stages, each a 2x average
    pool (except the first) followed by conv3x3 + ReLU.  Weights never train."""

    def __init__(self, seed: int = 0, in_channels: int = 3, widths=(8, 16, 32, 64, 64),
                 weights=PERCEPTUAL_WEIGHTS, dtype=np.float32):
        if len(weights) != len(widths):
            raise ValueError("need one weight per stage")
        rng = as_rng(seed)
        self.seed = seed
        self.widths = tuple(widths)
        self.weights = tuple(float(w) for w in weights)
        self.stages = []
        prev = in_channels
        for c in widths:
            conv = Conv2d(prev, c, 3, 1, 1, spectral_norm=False, seed=rng, gain=math.sqrt(2.0),
                          dtype=dtype)
            conv.weight.requires_grad = False
            conv.bias.requires_grad = False
            self.stages.append(conv)
            prev = c

    @property
    def identity(self) -> str:
        return f"random-cnn(seed={self.seed},widths={'-'.join(map(str, self.widths))})"

    def __call__(self, image: Tensor) -> list[Tensor]:
        feats = []
        h = image
        for i, conv in enumerate(self.stages):
            if i:
                h = T.avg_pool(h, 2)
            h = T.relu(conv(h))
            feats.append(h)
        return feats

    def named_tensors(self) -> dict[str, np.ndarray]:
        out = {}
        for i, conv in enumerate(self.stages):
            out[f"stage{i}.weight"] = conv.weight.data
            out[f"stage{i}.bias"] = conv.bias.data
        return out

    def load_tensors(self, tensors: dict[str, np.ndarray]) -> None:
        """Replace the random weights, e.g. with converted pretrained weights."""
        for i, conv in enumerate(self.stages):
            for part in ("weight", "bias"):
                key = f"stage{i}.{part}"
                if key not in tensors:
                    raise KeyError(f"missing extractor tensor {key}")
                dst = getattr(conv, part).data
                if tensors[key].shape != dst.shape:
                    raise ValueError(f"{key}: shape {tensors[key].shape} != {dst.shape}")
                dst[...] = tensors[key]


@dataclass
class LossWeights:
    lambda_p: float = 1.0
    lambda_fm: float = 1.0

    def __post_init__(self):
        for v in (self.lambda_p, self.lambda_fm):
            if not math.isfinite(v) or v < 0:
                raise ValueError("loss weights must be finite and non-negative")


STYLE_TRANSFER_WEIGHTS = LossWeights(1.0, 1.0)
SEMANTIC_SYNTHESIS_WEIGHTS = LossWeights(20.0, 10.0)


def _distance(a: Tensor, b: Tensor, distance: str) -> Tensor:
    diff = a - b
    if distance == "l1":
        return T.abs_(diff).mean()
    if distance == "l2":
        return (diff * diff).mean()
    raise ValueError(f"unknown distance {distance!r}")


def hinge_d_loss(scores_real: Sequence[Tensor], scores_fake: Sequence[Tensor]) -> Tensor:
    """Sum over scales of mean(relu(1 - D(real))) + mean(relu(1 + D(fake)))."""
    if not scores_real or len(scores_real) != len(scores_fake):
        raise ValueError("hinge_d_loss needs matching, non-empty score lists")
    total = None
    for real, fake in zip(scores_real, scores_fake):
        term = T.relu(1.0 - real).mean() + T.relu(1.0 + fake).mean()
        total = term if total is None else total + term
    return total


def hinge_g_loss(scores_fake: Sequence[Tensor]) -> Tensor:
    """Sum over scales of -mean(D(g))."""
    if not scores_fake:
        raise ValueError("hinge_g_loss needs a non-empty score list")
    total = None
    for fake in scores_fake:
        term = -fake.mean()
        total = term if total is None else total + term
    return total


def perceptual_loss(fx: FeatureExtractor, g: Tensor, target: Tensor, distance: str = "l1") -> Tensor:
    """Weighted sum over extractor levels of the mean absolute feature difference."""
    if g.shape != target.shape:
        raise ValueError(f"perceptual_loss: image shapes differ {g.shape} vs {target.shape}")
    feats_g = fx(g)
    with T.no_grad():
        feats_t = fx(target.detach())
    total = None
    for w, a, b in zip(fx.weights, feats_g, feats_t):
        term = _distance(a, b, distance) * w
        total = term if total is None else total + term
    return total


def feature_matching_loss(feats_fake: Sequence[Sequence[Tensor]], feats_real: Sequence[Sequence[Tensor]],
                          distance: str = "l1") -> Tensor:
    """Per scale, the mean over tapped layers of the feature distance; summed
    over scales.  Real features are treated as constants."""
    if len(feats_fake) != len(feats_real) or not feats_fake:
        raise ValueError("feature_matching_loss: scale lists differ or are empty")
    total = None
    for fake_layers, real_layers in zip(feats_fake, feats_real):
        if len(fake_layers) != len(real_layers) or not fake_layers:
            raise ValueError("feature_matching_loss: layer lists differ or are empty")
        scale_sum = None
        for a, b in zip(fake_layers, real_layers):
            if a.shape != b.shape:
                raise ValueError(f"feature_matching_loss: {a.shape} vs {b.shape}")
            term = _distance(a, b.detach(), distance)
            scale_sum = term if scale_sum is None else scale_sum + term
        term = scale_sum * (1.0 / len(fake_layers))
        total = term if total is None else total + term
    return total


def total_g_loss(scores_fake, feats_fake, feats_real, fx: FeatureExtractor, g: Tensor,
                 perceptual_target: Tensor, weights: LossWeights, distance: str = "l1"):
    """Generator objective; returns ``(total, components)`` with float components."""
    adv = hinge_g_loss(scores_fake)
    total = adv
    parts = {"g_adv": adv.item(), "perceptual": 0.0, "feature_matching": 0.0}
    if weights.lambda_p:
        lp = perceptual_loss(fx, g, perceptual_target, distance)
        total = total + lp * weights.lambda_p
        parts["perceptual"] = lp.item()
    if weights.lambda_fm:
        lfm = feature_matching_loss(feats_fake, feats_real, distance)
        total = total + lfm * weights.lambda_fm
        parts["feature_matching"] = lfm.item()
    return total, parts


def total_d_loss(scores_real, scores_fake) -> Tensor:
    return hinge_d_loss(scores_real, scores_fake)
