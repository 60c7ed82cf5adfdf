"""Central finite-difference gradient checking and the per-op case table."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import tensor as T
from .layers import batch_norm, instance_norm, sn_sigma
from .tensor import Tensor
from .transforms import FADE, fadain

FD_STEP = 1e-4
REL_TOL = 1e-4
GRAD_FLOOR = 1e-8


@dataclass
class GradcheckResult:
    name: str
    max_rel_err: float
    checked: int

    @property
    def ok(self) -> bool:
        return self.max_rel_err < REL_TOL and self.checked > 0


def gradcheck(name: str, fn: Callable[[], Tensor], leaves: list[Tensor], seed: int = 0,
              h: float = FD_STEP) -> GradcheckResult:
    """Compare backprop with central differences for every element of every leaf.

    ``fn`` reads the leaves by closure.  A non-scalar output is contracted with
    a fixed random tensor first, so every output element contributes.
    """
    for leaf in leaves:
        if leaf.dtype != np.float64:
            raise TypeError("gradcheck runs in float64")
        leaf.requires_grad = True
        leaf.grad = None
    probe = None

    def scalar() -> Tensor:
        nonlocal probe
        out = fn()
        if out.size == 1:
            return out.reshape(())
        if probe is None:
            probe = np.random.default_rng(seed).standard_normal(out.shape)
        return T.sum_(out * Tensor(probe))

    scalar().backward()
    analytic = [np.zeros(leaf.shape) if leaf.grad is None else leaf.grad.copy() for leaf in leaves]
    worst, checked = 0.0, 0
    with T.no_grad():
        for leaf, grad in zip(leaves, analytic):
            flat = leaf.data.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = scalar().item()
                flat[i] = orig - h
                down = scalar().item()
                flat[i] = orig
                a = grad.reshape(-1)[i]
                if abs(a) <= GRAD_FLOOR:
                    continue
                numeric = (up - down) / (2 * h)
                worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric)))
                checked += 1
    return GradcheckResult(name, worst, checked)


# -- case table ----------------------------------------------------------------


def _away_from_zero(rng, shape, lo=0.1, hi=1.0):
    """Magnitudes in [lo, hi] with both signs present (for kinked ops)."""
    size = int(np.prod(shape))
    signs = rng.permutation(np.where(np.arange(size) % 2, 1.0, -1.0)).reshape(shape)
    return signs * rng.uniform(lo, hi, size=shape)


ELEMENTWISE_SHAPES = [(3,), (2, 3), (2, 3, 2), (4, 1), (1, 2, 2, 3)]
BROADCAST_PAIRS = [((2, 3), (3,)), ((3, 1), (1, 4)), ((2, 2, 3), (2, 1, 3)), ((4,), (4,)), ((1, 2, 2, 2), (2, 1, 1))]
REDUCE_CASES = [((3, 4), None, False), ((2, 3, 2), 1, True), ((2, 3, 4), (0, 2), False),
                ((1, 2, 2, 3), (2, 3), True), ((5,), 0, False)]
CONV_CASES = [  # n, c, h, w, oc, k, stride, pad, bias
    (1, 1, 4, 4, 1, 3, 1, 1, True),
    (2, 2, 5, 5, 3, 3, 1, 0, False),
    (1, 3, 6, 6, 2, 4, 2, 2, True),
    (2, 2, 4, 6, 2, 1, 1, 0, True),
    (1, 2, 7, 7, 2, 3, 2, 1, True),
]
MAP_SHAPES = [(1, 1, 2, 2), (2, 2, 2, 2), (1, 3, 4, 2), (2, 1, 2, 4), (1, 2, 4, 4)]
NORM_SHAPES = [(2, 2, 3, 3), (3, 1, 2, 2), (2, 3, 2, 4), (4, 2, 1, 3), (2, 2, 4, 4)]
TRANSFORM_SHAPES = [  # n, zc, fc, h, w
    (2, 2, 1, 3, 3), (2, 1, 2, 2, 4), (3, 2, 2, 2, 2), (2, 3, 1, 4, 4), (4, 1, 1, 2, 3),
]
N_SHAPES = 5


def _leaf(arr) -> Tensor:
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=True)


def _unary(op, sampler):
    def build(rng, i):
        x = _leaf(sampler(rng, ELEMENTWISE_SHAPES[i]))
        return (lambda: op(x)), [x]
    return build


def _binary(op, sample_b=None):
    def build(rng, i):
        sa, sb = BROADCAST_PAIRS[i]
        a = _leaf(rng.standard_normal(sa))
        b = _leaf(sample_b(rng, sb) if sample_b else rng.standard_normal(sb))
        return (lambda: op(a, b)), [a, b]
    return build


def _reduce(op):
    def build(rng, i):
        shape, axes, keep = REDUCE_CASES[i]
        x = _leaf(rng.standard_normal(shape))
        return (lambda: op(x, axes, keep)), [x]
    return build


def _case_conv(rng, i):
    n, c, h, w, oc, k, stride, pad, bias = CONV_CASES[i]
    x = _leaf(rng.standard_normal((n, c, h, w)))
    wt = _leaf(rng.standard_normal((oc, c, k, k)) * 0.5)
    leaves = [x, wt]
    b = None
    if bias:
        b = _leaf(rng.standard_normal(oc))
        leaves.append(b)
    return (lambda: T.conv2d(x, wt, b, stride, pad)), leaves


def _case_matmul(rng, i):
    m, k, n = [(1, 1, 1), (2, 3, 4), (3, 2, 1), (4, 4, 2), (1, 5, 3)][i]
    a, b = _leaf(rng.standard_normal((m, k))), _leaf(rng.standard_normal((k, n)))
    return (lambda: T.matmul(a, b)), [a, b]


def _case_concat(rng, i):
    shape = MAP_SHAPES[i]
    axis = i % 4
    other = list(shape)
    other[axis] += 1
    a, b = _leaf(rng.standard_normal(shape)), _leaf(rng.standard_normal(other))
    return (lambda: T.concat([a, b], axis=axis)), [a, b]


def _case_narrow(rng, i):
    shape = (3, 2, 2, 2) if i % 2 else (4, 3, 2, 1)
    x = _leaf(rng.standard_normal(shape))
    start, stop = [(0, 1), (1, 3), (0, 2), (2, 3), (1, 2)][i]
    return (lambda: T.narrow(x, start, stop, axis=0)), [x]


def _case_reshape(rng, i):
    shape = ELEMENTWISE_SHAPES[i]
    x = _leaf(rng.standard_normal(shape))
    return (lambda: T.reshape(x, (-1,)) * T.reshape(x, (-1,))), [x]


def _spatial(op, factor_for):
    def build(rng, i):
        x = _leaf(rng.standard_normal(MAP_SHAPES[i]))
        return (lambda: op(x, factor_for(i))), [x]
    return build


def _norm(fn):
    def build(rng, i):
        z = _leaf(rng.standard_normal(NORM_SHAPES[i]) * 2.0 + 0.5)
        return (lambda: fn(z)), [z]
    return build


def _case_sn_sigma(rng, i):
    rows, cols = [(2, 3), (3, 3), (4, 2), (1, 5), (3, 4)][i]
    w = _leaf(rng.standard_normal((rows, cols)))
    u = rng.standard_normal(rows)
    v = rng.standard_normal(cols)
    u, v = u / np.linalg.norm(u), v / np.linalg.norm(v)
    return (lambda: sn_sigma(w, u, v)), [w]


def _case_fade(rng, i):
    n, zc, fc, h, w = TRANSFORM_SHAPES[i]
    # spectral norm off: its power-iteration vectors are treated as constants,
    # which finite differences would see through
    mod = FADE(zc, fc, seed=int(rng.integers(1 << 30)), spectral_norm=False, dtype=np.float64)
    mod.eval(batch_stats=True)
    z = _leaf(rng.standard_normal((n, zc, h, w)))
    f = _leaf(rng.standard_normal((n, fc, h, w)))
    leaves = [z, f, mod.gamma_conv.weight, mod.gamma_conv.bias, mod.beta_conv.weight, mod.beta_conv.bias]
    return (lambda: mod(z, f)), leaves


def _case_fadain(rng, i):
    n, zc, _, h, w = TRANSFORM_SHAPES[i]
    z = _leaf(rng.standard_normal((n, zc, h, w)))
    s = _leaf(rng.standard_normal((n, zc, h + i % 2, w)) * 1.5 + 0.3)
    return (lambda: fadain(z, s)), [z, s]


def _positive(rng, shape):
    return rng.uniform(0.5, 2.0, size=shape)


GRAD_CASES: dict[str, Callable] = {
    "add": _binary(T.add),
    "sub": _binary(T.sub),
    "mul": _binary(T.mul),
    "div": _binary(T.div, lambda rng, s: _away_from_zero(rng, s, 0.5, 2.0)),
    "neg": _unary(T.neg, lambda rng, s: rng.standard_normal(s)),
    "power": _unary(lambda x: T.power(x, 1.5), _positive),
    "sqrt": _unary(T.sqrt, _positive),
    "exp": _unary(T.exp, lambda rng, s: rng.standard_normal(s)),
    "abs": _unary(T.abs_, _away_from_zero),
    "relu": _unary(T.relu, _away_from_zero),
    "leaky_relu": _unary(lambda x: T.leaky_relu(x, 0.2), _away_from_zero),
    "tanh": _unary(T.tanh, lambda rng, s: rng.standard_normal(s)),
    "sum": _reduce(T.sum_),
    "mean": _reduce(T.mean),
    "variance": _reduce(T.variance),
    "reshape": _case_reshape,
    "concat": _case_concat,
    "narrow": _case_narrow,
    "matmul": _case_matmul,
    "conv2d": _case_conv,
    "upsample_nearest": _spatial(T.upsample_nearest, lambda i: 2 + i % 2),
    "downsample_nearest": _spatial(T.downsample_nearest, lambda i: 2 if i != 2 else 1),
    "avg_pool": _spatial(T.avg_pool, lambda i: 2 if i != 2 else 1),
    "sn_sigma": _case_sn_sigma,
    "batch_norm": _norm(batch_norm),
    "instance_norm": _norm(instance_norm),
    "fade": _case_fade,
    "fadain": _case_fadain,
}


def run_grad_case(name: str, index: int, seed: int = 0) -> GradcheckResult:
    rng = np.random.default_rng([seed, index, len(name)])
    fn, leaves = GRAD_CASES[name](rng, index)
    return gradcheck(f"{name}[{index}]", fn, leaves, seed=index)
