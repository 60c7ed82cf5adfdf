"""Trainable layer primitives: spectrally normalized conv, batch and instance norm."""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .tensor import Tensor

LRELU_SLOPE = 0.2
LRELU_GAIN = math.sqrt(2.0 / (1.0 + LRELU_SLOPE**2))
NORM_EPS = 1e-5
BN_MOMENTUM = 0.1
SN_EPS = 1e-12


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def init_params(shape, scheme: str = "kaiming", seed=0, gain: float = LRELU_GAIN,
                dtype=np.float32) -> Tensor:
    """Create a trainable tensor.

    ``kaiming`` draws N(0, gain / sqrt(fan_in)) where fan_in is the product of
    all but the leading dimension; ``zeros`` and ``ones`` are constant fills.
    ``seed`` may be an int or a shared ``np.random.Generator``.
    """
    shape = tuple(int(s) for s in shape)
    if scheme == "zeros":
        data = np.zeros(shape, dtype=dtype)
    elif scheme == "ones":
        data = np.ones(shape, dtype=dtype)
    elif scheme == "kaiming":
        fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else shape[0]
        std = gain / math.sqrt(fan_in)
        data = (as_rng(seed).standard_normal(shape) * std).astype(dtype)
    else:
        raise ValueError(f"unknown init scheme {scheme!r}")
    return Tensor(data, requires_grad=True)


class Module:
    """Minimal container: parameters are ``Tensor`` attributes that require grad,
    buffers are ``np.ndarray`` attributes, children are ``Module`` attributes or
    lists of modules.  Attribute insertion order fixes the naming order."""

    training = True
    batch_stats = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def children(self):
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
        for name, child in self.children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = ""):
        for name, value in vars(self).items():
            if isinstance(value, np.ndarray):
                yield prefix + name, value
        for name, child in self.children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        state.update({name: b.copy() for name, b in self.named_buffers()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        expected = set(params) | set(buffers)
        missing = expected - set(state)
        unexpected = set(state) - expected
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={sorted(missing)[:5]} unexpected={sorted(unexpected)[:5]}")
        for name, p in params.items():
            _copy_into(name, p.data, state[name])
        for name, buf in buffers.items():
            _copy_into(name, buf, state[name])

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def train(self, mode: bool = True):
        for m in self.modules():
            m.training = mode
            m.batch_stats = mode
        return self

    def eval(self, batch_stats: bool = False):
        """Inference mode.  ``batch_stats=True`` keeps batch statistics in the
        normalization layers but freezes every persistent buffer."""
        for m in self.modules():
            m.training = False
            m.batch_stats = batch_stats
        return self

    def modules(self):
        yield self
        for _, child in self.children():
            yield from child.modules()


def _copy_into(name: str, dst: np.ndarray, src: np.ndarray) -> None:
    if dst.shape != src.shape:
        raise ValueError(f"{name}: shape {src.shape} does not match {dst.shape}")
    dst[...] = src


def _l2_normalize(v: np.ndarray) -> np.ndarray:
    return v / max(float(np.linalg.norm(v)), SN_EPS)


def power_iteration(wmat: np.ndarray, u: np.ndarray, n_iter: int = 1):
    """Run ``n_iter`` power-iteration steps on ``wmat`` (rows x cols).

    Returns ``(u, v, sigma)`` with ``sigma = u^T W v``, the current estimate of
    the largest singular value.
    """
    v = None
    for _ in range(max(n_iter, 1)):
        v = _l2_normalize(wmat.T @ u)
        u = _l2_normalize(wmat @ v)
    sigma = float(u @ (wmat @ v))
    return u, v, sigma


def spectral_norm_estimates(wmat: np.ndarray, n_iter: int, seed=0) -> list[float]:
    """Sequence of sigma estimates over ``n_iter`` power iterations."""
    u = _l2_normalize(as_rng(seed).standard_normal(wmat.shape[0]))
    out = []
    for _ in range(n_iter):
        u, _, sigma = power_iteration(wmat, u, 1)
        out.append(sigma)
    return out


def sn_sigma(w: Tensor, u: np.ndarray, v: np.ndarray) -> Tensor:
    """``u^T W v`` for the (rows x rest) reshaping of ``w``; u and v are constants."""
    wmat = w.data.reshape(u.shape[0], -1)
    value = np.asarray(u @ (wmat @ v), dtype=w.dtype)

    def backward(g):
        return (g * np.outer(u, v).reshape(w.shape).astype(w.dtype),)

    return T._result(value, (w,), backward, "sn_sigma")


class Conv2d(Module):
    def __init__(self, inc: int, outc: int, kernel: int, stride: int = 1, pad: int = 0,
                 bias: bool = True, spectral_norm: bool = True, seed=0,
                 gain: float = LRELU_GAIN, bias_init: str = "zeros", dtype=np.float32):
        rng = as_rng(seed)
        self.inc, self.outc = inc, outc
        self.stride, self.pad = stride, pad
        self.sn_enabled = spectral_norm
        self.weight = init_params((outc, inc, kernel, kernel), "kaiming", rng, gain, dtype)
        self.bias = init_params((outc,), bias_init, rng, dtype=dtype) if bias else None
        if spectral_norm:
            self.sn_u = _l2_normalize(rng.standard_normal(outc)).astype(dtype)

    def effective_weight(self) -> Tensor:
        w = self.weight
        if not self.sn_enabled:
            return w
        wmat = w.data.reshape(self.outc, -1)
        if self.training:
            u, v, _ = power_iteration(wmat, self.sn_u, 1)
            self.sn_u[...] = u
        else:
            u = self.sn_u
            v = _l2_normalize(wmat.T @ u)
        sigma = sn_sigma(w, u, v)
        if sigma.data <= SN_EPS:
            return w
        return w / sigma

    def forward(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.effective_weight(), self.bias, self.stride, self.pad)


def batch_stats(z: Tensor, eps: float = NORM_EPS):
    """Per-channel mean and std over (N, H, W); eps sits under the square root."""
    if z.ndim != 4:
        raise ValueError("batch_stats expects an N-C-H-W tensor")
    mu = T.mean(z, (0, 2, 3))
    sigma = T.sqrt(T.variance(z, (0, 2, 3)) + eps)
    return mu, sigma


def batch_norm(z: Tensor, eps: float = NORM_EPS) -> Tensor:
    mu, sigma = batch_stats(z, eps)
    c = z.shape[1]
    return (z - mu.reshape(1, c, 1, 1)) / sigma.reshape(1, c, 1, 1)


def instance_stats(z: Tensor, eps: float = NORM_EPS):
    """Per-(n, channel) mean and std over the spatial axes, kept as N-C-1-1."""
    if z.ndim != 4:
        raise ValueError("instance statistics expect an N-C-H-W tensor")
    mu = T.mean(z, (2, 3), keepdims=True)
    sigma = T.sqrt(T.variance(z, (2, 3), keepdims=True) + eps)
    return mu, sigma


def instance_norm(z: Tensor, eps: float = NORM_EPS) -> Tensor:
    mu, sigma = instance_stats(z, eps)
    return (z - mu) / sigma


class BatchNorm2d(Module):
    """Affine-free batch norm.  On a single device this is what SyncBN computes."""

    def __init__(self, channels: int, eps: float = NORM_EPS, momentum: float = BN_MOMENTUM,
                 dtype=np.float32):
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_std = np.ones(channels, dtype=dtype)

    def forward(self, z: Tensor) -> Tensor:
        if z.ndim != 4:
            raise ValueError("BatchNorm2d expects an N-C-H-W tensor")
        c = self.channels
        if self.training or self.batch_stats:
            mu, sigma = batch_stats(z, self.eps)
            if self.training:
                m = self.momentum
                self.running_mean[...] = (1 - m) * self.running_mean + m * mu.data
                self.running_std[...] = (1 - m) * self.running_std + m * sigma.data
            return (z - mu.reshape(1, c, 1, 1)) / sigma.reshape(1, c, 1, 1)
        mu = self.running_mean.reshape(1, c, 1, 1).astype(z.dtype)
        sigma = self.running_std.reshape(1, c, 1, 1).astype(z.dtype)
        return (z - Tensor(mu)) / Tensor(sigma)


class InstanceNorm2d(Module):
    def __init__(self, eps: float = NORM_EPS):
        self.eps = eps

    def forward(self, z: Tensor) -> Tensor:
        return instance_norm(z, self.eps)
