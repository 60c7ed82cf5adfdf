"""Residual blocks: the content/style stream block and the FADE generator block."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .layers import LRELU_SLOPE, Conv2d, InstanceNorm2d, Module, as_rng
from .tensor import Tensor
from .transforms import FADE


class StreamResBlock(Module):
    """Downsample(2) -> conv3x3 -> IN -> LReLU -> conv3x3 -> IN -> LReLU,
    with a learned 1x1 skip (conv -> IN -> LReLU); the two paths are summed."""

    def __init__(self, inc: int, outc: int, seed=0, spectral_norm: bool = True, dtype=np.float32):
        rng = as_rng(seed)
        self.inc, self.outc = inc, outc
        # no conv biases here: each conv feeds an instance norm, which removes them
        self.conv1 = Conv2d(inc, inc, 3, 1, 1, bias=False, spectral_norm=spectral_norm, seed=rng,
                            dtype=dtype)
        self.norm1 = InstanceNorm2d()
        self.conv2 = Conv2d(inc, outc, 3, 1, 1, bias=False, spectral_norm=spectral_norm, seed=rng,
                            dtype=dtype)
        self.norm2 = InstanceNorm2d()
        self.skip_conv = Conv2d(inc, outc, 1, 1, 0, bias=False, spectral_norm=spectral_norm, seed=rng,
                                dtype=dtype)
        self.norm_skip = InstanceNorm2d()

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.inc:
            raise ValueError(f"stream block expects {self.inc} channels, got {x.shape[1]}")
        if x.shape[2] % 2 or x.shape[3] % 2:
            raise ValueError(f"stream block cannot halve odd extent {x.shape[2:]}")
        x = T.downsample_nearest(x, 2)
        main = T.leaky_relu(self.norm1(self.conv1(x)), LRELU_SLOPE)
        main = T.leaky_relu(self.norm2(self.conv2(main)), LRELU_SLOPE)
        skip = T.leaky_relu(self.norm_skip(self.skip_conv(x)), LRELU_SLOPE)
        return main + skip


class FadeResBlock(Module):
    """FADE -> LReLU -> conv3x3 -> FADE -> LReLU -> conv3x3, with a learned skip
    FADE -> LReLU -> conv1x1.  Every FADE reads the same content feature.  The
    paths are summed and the sum is upsampled x2 (nearest)."""

    def __init__(self, inc: int, outc: int, featc: int, seed=0, spectral_norm: bool = True,
                 sn_modulation: bool = True, modulate: bool = True, dtype=np.float32):
        rng = as_rng(seed)
        self.inc, self.outc, self.featc = inc, outc, featc
        fade_sn = spectral_norm and sn_modulation
        self.fade1 = FADE(inc, featc, rng, fade_sn, modulate, dtype)
        # conv1 feeds fade2's batch norm, so a bias would be cancelled
        self.conv1 = Conv2d(inc, inc, 3, 1, 1, bias=False, spectral_norm=spectral_norm, seed=rng,
                            dtype=dtype)
        self.fade2 = FADE(inc, featc, rng, fade_sn, modulate, dtype)
        self.conv2 = Conv2d(inc, outc, 3, 1, 1, spectral_norm=spectral_norm, seed=rng, dtype=dtype)
        self.fade_skip = FADE(inc, featc, rng, fade_sn, modulate, dtype)
        self.skip_conv = Conv2d(inc, outc, 1, 1, 0, spectral_norm=spectral_norm, seed=rng, dtype=dtype)

    def forward(self, z: Tensor, f_c: Tensor | None = None) -> Tensor:
        if z.shape[1] != self.inc:
            raise ValueError(f"FADE block expects {self.inc} channels, got {z.shape[1]}")
        if f_c is not None and f_c.shape[2:] != z.shape[2:]:
            raise ValueError(f"FADE block: content feature extent {f_c.shape[2:]} != {z.shape[2:]}")
        main = self.conv1(T.leaky_relu(self.fade1(z, f_c), LRELU_SLOPE))
        main = self.conv2(T.leaky_relu(self.fade2(main, f_c), LRELU_SLOPE))
        skip = self.skip_conv(T.leaky_relu(self.fade_skip(z, f_c), LRELU_SLOPE))
        return T.upsample_nearest(main + skip, 2)
