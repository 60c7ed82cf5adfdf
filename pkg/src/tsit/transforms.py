"""Feature transformations: FADE (element-wise feature adaptive denormalization)
and FAdaIN (feature adaptive instance normalization), plus the concatenation
substitute used by the ablations."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .layers import NORM_EPS, BatchNorm2d, Conv2d, Module, as_rng, instance_stats
from .tensor import Tensor


def _check_spatial(z: Tensor, f: Tensor, what: str) -> None:
    if z.ndim != 4 or f.ndim != 4:
        raise ValueError(f"{what}: expected N-C-H-W tensors")
    if z.shape[0] != f.shape[0] or z.shape[2:] != f.shape[2:]:
        raise ValueError(f"{what}: activation {z.shape} and feature {f.shape} differ in batch or extent")


class FADE(Module):
    """Batch-normalize ``z`` then modulate it element-wise with gamma/beta maps
    convolved from a content feature.

    gamma is used as produced by its convolution (no ``1 + gamma``).  Its bias
    starts at one so a fresh module begins close to plain batch norm.  With
    ``modulate=False`` the module is parameter-free batch norm (ablation).
    """

    def __init__(self, normc: int, featc: int, seed=0, spectral_norm: bool = True,
                 modulate: bool = True, dtype=np.float32):
        rng = as_rng(seed)
        self.normc, self.featc = normc, featc
        self.modulate = modulate
        self.bn = BatchNorm2d(normc, dtype=dtype)
        if modulate:
            self.gamma_conv = Conv2d(featc, normc, 3, 1, 1, spectral_norm=spectral_norm, seed=rng,
                                     gain=1.0, bias_init="ones", dtype=dtype)
            self.beta_conv = Conv2d(featc, normc, 3, 1, 1, spectral_norm=spectral_norm, seed=rng,
                                    gain=1.0, dtype=dtype)

    def modulation(self, f_c: Tensor):
        return self.gamma_conv(f_c), self.beta_conv(f_c)

    def forward(self, z: Tensor, f_c: Tensor | None = None) -> Tensor:
        normalized = self.bn(z)
        if not self.modulate:
            return normalized
        _check_spatial(z, f_c, "FADE")
        gamma, beta = self.modulation(f_c)
        return gamma * normalized + beta


def fadain(z: Tensor, f_s: Tensor, eps: float = NORM_EPS) -> Tensor:
    """Give ``z`` the per-(sample, channel) mean and std of the style feature ``f_s``."""
    if z.ndim != 4 or f_s.ndim != 4:
        raise ValueError("fadain: expected N-C-H-W tensors")
    if z.shape[:2] != f_s.shape[:2]:
        raise ValueError(f"fadain: batch/channel mismatch {z.shape[:2]} vs {f_s.shape[:2]}")
    mu_z, sigma_z = instance_stats(z, eps)
    mu_s, sigma_s = instance_stats(f_s, eps)
    return sigma_s * ((z - mu_z) / sigma_z) + mu_s


class ConcatInject(Module):
    """Concatenate ``f`` onto ``z`` along channels, then project back with a 1x1 conv."""

    def __init__(self, zc: int, fc: int, seed=0, spectral_norm: bool = True, dtype=np.float32):
        self.zc, self.fc = zc, fc
        self.proj = Conv2d(zc + fc, zc, 1, 1, 0, spectral_norm=spectral_norm, seed=seed,
                           gain=1.0, dtype=dtype)

    def forward(self, z: Tensor, f: Tensor) -> Tensor:
        _check_spatial(z, f, "inject_concat")
        return self.proj(T.concat([z, f], axis=1))


def inject_concat(z: Tensor, f: Tensor, proj: Conv2d) -> Tensor:
    """Functional form of :class:`ConcatInject` with an explicit projection layer."""
    _check_spatial(z, f, "inject_concat")
    if proj.inc != z.shape[1] + f.shape[1] or proj.outc != z.shape[1]:
        raise ValueError("inject_concat: projection does not map back to z's channel count")
    return proj(T.concat([z, f], axis=1))
