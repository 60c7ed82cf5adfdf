"""Content/style streams, the FADE generator and the multi-scale patch discriminator."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .blocks import FadeResBlock, StreamResBlock
from .layers import LRELU_SLOPE, Conv2d, InstanceNorm2d, Module, as_rng
from .tensor import Tensor
from .transforms import ConcatInject, fadain

FULL_BASE_WIDTH = 64
FULL_SCHEDULE = (128, 256, 512, 1024, 1024, 1024, 1024)
ABLATIONS = ("no_cs", "no_ss", "concat_for_fade", "concat_for_fadain", "image_level_injection")


def default_schedule(k: int, base_width: int) -> list[int]:
    """The full-size channel ladder rescaled to ``base_width`` and cut/extended to ``k``."""
    ladder = list(FULL_SCHEDULE[:k]) + [FULL_SCHEDULE[-1]] * max(0, k - len(FULL_SCHEDULE))
    return [c * base_width // FULL_BASE_WIDTH for c in ladder]


@dataclass
class NetConfig:
    k: int = 7
    base_width: int = FULL_BASE_WIDTH
    schedule: list[int] | None = None
    width_divisor: int = 1
    content_channels: int = 3
    style_channels: int = 3
    output_channels: int = 3
    input_kernel: int = 7
    no_cs: bool = False
    no_ss: bool = False
    concat_for_fade: bool = False
    concat_for_fadain: bool = False
    image_level_injection: bool = False
    spectral_norm: bool = True
    sn_modulation: bool = True
    d_scales: int = 3
    d_layers: int = 3
    d_base_width: int = 64
    d_conditional: bool = False  # feed [content, image] to the discriminators
    dtype: str = "float32"
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.schedule is None:
            self.schedule = default_schedule(self.k, self.base_width)
        self.schedule = [int(c) for c in self.schedule]
        self.validate()

    def validate(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if len(self.schedule) != self.k:
            raise ValueError(f"schedule has {len(self.schedule)} entries, k={self.k}")
        if self.width_divisor not in (1, 2, 4):
            raise ValueError("width_divisor must be 1, 2 or 4")
        for c in [self.base_width, *self.schedule]:
            if c % self.width_divisor or c // self.width_divisor < 1:
                raise ValueError(f"width {c} is not divisible by width_divisor={self.width_divisor}")
        if self.d_scales < 1 or self.d_layers < 1:
            raise ValueError("d_scales and d_layers must be >= 1")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    @property
    def widths(self) -> list[int]:
        """Channels of f_0 .. f_k after applying the width divisor."""
        return [c // self.width_divisor for c in [self.base_width, *self.schedule]]

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    @property
    def uses_content_stream(self) -> bool:
        return not (self.no_cs or self.image_level_injection)

    @property
    def uses_style_stream(self) -> bool:
        return not (self.no_ss or self.image_level_injection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> NetConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown NetConfig keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class Site:
    """One injection site of the generator: block ``index`` consumes features at
    ``extent`` and produces ``out_channels`` at twice the extent."""

    index: int
    z_channels: int
    extent: tuple[int, int]
    content_channels: int
    style_channels: int | None
    out_channels: int
    out_extent: tuple[int, int]


def check_extent(cfg: NetConfig, h: int, w: int) -> None:
    f = 2**cfg.k
    if h % f or w % f:
        raise ValueError(f"input extent {h}x{w} is not divisible by 2^k = {f}")


def stream_shapes(cfg: NetConfig, h: int, w: int) -> list[tuple[int, int, int]]:
    check_extent(cfg, h, w)
    return [(c, h >> i, w >> i) for i, c in enumerate(cfg.widths)]


def generator_sites(cfg: NetConfig, h: int, w: int) -> list[Site]:
    """Sites in execution order (i = k .. 1)."""
    check_extent(cfg, h, w)
    widths = cfg.widths
    sites = []
    for i in range(cfg.k, 0, -1):
        cc = widths[i] if cfg.uses_content_stream else cfg.content_channels
        if cfg.no_ss:
            sc = None
        elif cfg.uses_style_stream:
            sc = widths[i]
        else:
            sc = cfg.style_channels
        sites.append(Site(i, widths[i], (h >> i, w >> i), cc, sc, widths[i - 1],
                          (h >> (i - 1), w >> (i - 1))))
    return sites


def noise_shape(cfg: NetConfig, n: int, h: int, w: int) -> tuple[int, int, int, int]:
    check_extent(cfg, h, w)
    return (n, cfg.widths[cfg.k], h >> cfg.k, w >> cfg.k)


def sample_noise(n: int, channels: int, h: int, w: int, seed=0, dtype=np.float32) -> Tensor:
    """i.i.d. standard Gaussian noise map, deterministic per seed."""
    if min(n, channels, h, w) < 1:
        raise ValueError("noise dimensions must be positive")
    rng = as_rng(seed)
    return Tensor(rng.standard_normal((n, channels, h, w)).astype(dtype))


class Stream(Module):
    """Content or style stream: input conv then k downsampling residual blocks."""

    def __init__(self, cfg: NetConfig, in_channels: int, seed=0):
        rng = as_rng(seed)
        self.k = cfg.k
        widths = cfg.widths
        dt = cfg.np_dtype
        kin = cfg.input_kernel
        self.input_conv = Conv2d(in_channels, widths[0], kin, 1, kin // 2, bias=False,
                                 spectral_norm=cfg.spectral_norm, seed=rng, dtype=dt)
        self.input_norm = InstanceNorm2d()
        self.blocks = [StreamResBlock(widths[i], widths[i + 1], rng, cfg.spectral_norm, dt)
                       for i in range(cfg.k)]

    def forward(self, x: Tensor) -> list[Tensor]:
        f = 2**self.k
        if x.shape[2] % f or x.shape[3] % f:
            raise ValueError(f"stream input extent {x.shape[2:]} is not divisible by 2^k = {f}")
        h = T.leaky_relu(self.input_norm(self.input_conv(x)), LRELU_SLOPE)
        feats = [h]
        for block in self.blocks:
            h = block(h)
            feats.append(h)
        return feats


class Generator(Module):
    """Mirror of the streams: head conv on z0, then for i = k .. 1 an FAdaIN site
    followed by a FADE residual block, then LReLU -> conv3x3 -> tanh."""

    def __init__(self, cfg: NetConfig, seed=0):
        rng = as_rng(seed)
        self.cfg = cfg
        dt = cfg.np_dtype
        sn = cfg.spectral_norm
        widths = cfg.widths
        ck = widths[cfg.k]
        # every path after the head normalizes per channel, which would cancel a bias
        self.head = Conv2d(ck, ck, 3, 1, 1, bias=False, spectral_norm=sn, seed=rng, dtype=dt)
        # blocks[j] serves site i = k - j
        self.blocks, self.content_inject, self.style_inject, self.style_lift = [], [], [], []
        for i in range(cfg.k, 0, -1):
            inc, outc = widths[i], widths[i - 1]
            featc = widths[i] if cfg.uses_content_stream else cfg.content_channels
            if cfg.concat_for_fade:
                self.content_inject.append(ConcatInject(inc, featc, rng, sn, dt))
            self.blocks.append(FadeResBlock(inc, outc, featc, rng, sn, cfg.sn_modulation,
                                            modulate=not cfg.concat_for_fade, dtype=dt))
            if cfg.no_ss:
                continue
            stylec = widths[i] if cfg.uses_style_stream else cfg.style_channels
            if cfg.concat_for_fadain:
                self.style_inject.append(ConcatInject(inc, stylec, rng, sn, dt))
            elif not cfg.uses_style_stream:
                self.style_lift.append(Conv2d(stylec, inc, 1, 1, 0, spectral_norm=sn, seed=rng,
                                              gain=1.0, dtype=dt))
        self.out_conv = Conv2d(widths[0], cfg.output_channels, 3, 1, 1, spectral_norm=sn,
                               seed=rng, gain=1.0, dtype=dt)
        self.trace: list[dict] = []

    def forward(self, z0: Tensor, content: list, style: list | None) -> Tensor:
        """``content[i]`` / ``style[i]`` are the maps injected at site i (index 0 unused)."""
        cfg = self.cfg
        if z0.shape[1] != cfg.widths[cfg.k]:
            raise ValueError(f"z0 has {z0.shape[1]} channels, expected {cfg.widths[cfg.k]}")
        if content[cfg.k].shape[2:] != z0.shape[2:]:
            raise ValueError(f"z0 extent {z0.shape[2:]} does not match the coarsest feature "
                             f"{content[cfg.k].shape[2:]}")
        self.trace = []
        z = self.head(z0)
        for j, i in enumerate(range(cfg.k, 0, -1)):
            f_c = content[i]
            f_s = None if style is None else style[i]
            self.trace.append({"site": i, "z": z.shape, "content": f_c.shape,
                               "style": None if f_s is None else f_s.shape})
            if f_s is not None:
                if cfg.concat_for_fadain:
                    z = self.style_inject[j](z, f_s)
                else:
                    if self.style_lift:
                        f_s = self.style_lift[j](f_s)
                    z = fadain(z, f_s)
            if cfg.concat_for_fade:
                z = self.content_inject[j](z, f_c)
                z = self.blocks[j](z, None)
            else:
                z = self.blocks[j](z, f_c)
        out = self.out_conv(T.leaky_relu(z, LRELU_SLOPE))
        return T.tanh(out)


class TwoStreamGenerator(Module):
    """Content stream + style stream + generator, with the ablation switches."""

    def __init__(self, cfg: NetConfig, seed=None):
        rng = as_rng(cfg.seed if seed is None else seed)
        self.cfg = cfg
        self.content_stream = Stream(cfg, cfg.content_channels, rng) if cfg.uses_content_stream else None
        self.style_stream = Stream(cfg, cfg.style_channels, rng) if cfg.uses_style_stream else None
        self.generator = Generator(cfg, rng)

    def injections(self, x_c: Tensor, x_s: Tensor):
        cfg = self.cfg
        h, w = x_c.shape[2:]
        check_extent(cfg, h, w)
        if not cfg.no_ss and (x_s.shape[2] % 2**cfg.k or x_s.shape[3] % 2**cfg.k):
            raise ValueError(f"style extent {x_s.shape[2:]} is not divisible by 2^k = {2**cfg.k}")
        if self.content_stream is not None:
            content = self.content_stream(x_c)
        else:
            content = [T.downsample_nearest(x_c, 2**i) for i in range(cfg.k + 1)]
        if cfg.no_ss:
            style = None
        elif self.style_stream is not None:
            style = self.style_stream(x_s)
        else:
            style = [T.downsample_nearest(x_s, 2**i) for i in range(cfg.k + 1)]
        return content, style

    def forward(self, x_c: Tensor, x_s: Tensor, z0: Tensor) -> Tensor:
        content, style = self.injections(x_c, x_s)
        return self.generator(z0, content, style)

    def noise(self, n: int, h: int, w: int, seed) -> Tensor:
        return sample_noise(*noise_shape(self.cfg, n, h, w), seed=seed, dtype=self.cfg.np_dtype)


class PatchDiscriminator(Module):
    """Patch discriminator: ``n_layers`` stride-2 4x4 convs and one
    stride-1 4x4 conv (IN + LReLU each), then a 1-channel 4x4 conv.  The outputs
    of the stride-2 convs are the feature-matching taps."""

    def __init__(self, in_channels: int, base: int, n_layers: int, spectral_norm: bool = True,
                 seed=0, dtype=np.float32):
        rng = as_rng(seed)
        self.n_layers = n_layers
        self.convs, self.norms = [], []
        prev = in_channels
        for j in range(n_layers + 1):
            width = base * min(2**j, 8)
            stride = 2 if j < n_layers else 1
            self.convs.append(Conv2d(prev, width, 4, stride, 2, bias=False, spectral_norm=spectral_norm,
                                     seed=rng, dtype=dtype))
            self.norms.append(InstanceNorm2d())
            prev = width
        self.final = Conv2d(prev, 1, 4, 1, 2, spectral_norm=spectral_norm, seed=rng, gain=1.0,
                            dtype=dtype)

    def forward(self, x: Tensor):
        taps = []
        h = x
        for j, (conv, norm) in enumerate(zip(self.convs, self.norms)):
            h = T.leaky_relu(norm(conv(h)), LRELU_SLOPE)
            if j < self.n_layers:
                taps.append(h)
        return self.final(h), taps


class MultiScaleDiscriminator(Module):
    def __init__(self, cfg: NetConfig, in_channels: int = 3, seed=None):
        rng = as_rng(cfg.seed + 1 if seed is None else seed)
        self.cfg = cfg
        base = max(cfg.d_base_width // cfg.width_divisor, 1)
        self.discriminators = [PatchDiscriminator(in_channels, base, cfg.d_layers, cfg.spectral_norm,
                                                  rng, cfg.np_dtype) for _ in range(cfg.d_scales)]

    def min_extent(self) -> int:
        return 2 ** (self.cfg.d_scales - 1 + self.cfg.d_layers)

    def forward(self, x: Tensor):
        """Returns ``(scores, feats)``: one raw score map per scale (finest first)
        and, per scale, the list of tapped intermediate features."""
        h, w = x.shape[2:]
        m = self.min_extent()
        if h < m or w < m:
            raise ValueError(f"discriminator input {h}x{w} is smaller than the minimum {m}x{m}")
        if h % 2 ** (self.cfg.d_scales - 1) or w % 2 ** (self.cfg.d_scales - 1):
            raise ValueError(f"discriminator input {h}x{w} cannot be halved {self.cfg.d_scales - 1} times")
        scores, feats = [], []
        for s, d in enumerate(self.discriminators):
            if s:
                x = T.avg_pool(x, 2)
            score, taps = d(x)
            scores.append(score)
            feats.append(taps)
        return scores, feats
