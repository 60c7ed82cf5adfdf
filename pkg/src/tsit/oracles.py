"""Slow scalar-loop reference implementations.

Nothing here uses the autodiff tensor; every value is accumulated element by
element, so these functions serve as independent checks of the vectorized code.
"""

from __future__ import annotations

import math

import numpy as np


def conv2d(x, w, b=None, stride: int = 1, pad: int = 0) -> np.ndarray:
    n, c, h, wd = x.shape
    oc, _, kh, kw = w.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((n, oc, ho, wo))
    for s in range(n):
        for o in range(oc):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0 if b is None else float(b[o])
                    for ci in range(c):
                        for di in range(kh):
                            for dj in range(kw):
                                y = i * stride + di - pad
                                xx = j * stride + dj - pad
                                if 0 <= y < h and 0 <= xx < wd:
                                    acc += float(x[s, ci, y, xx]) * float(w[o, ci, di, dj])
                    out[s, o, i, j] = acc
    return out


def relu(x) -> np.ndarray:
    out = np.zeros(x.shape)
    for idx in np.ndindex(x.shape):
        out[idx] = x[idx] if x[idx] > 0 else 0.0
    return out


def avg_pool2(x) -> np.ndarray:
    n, c, h, w = x.shape
    out = np.zeros((n, c, h // 2, w // 2))
    for s, ci, i, j in np.ndindex(out.shape):
        out[s, ci, i, j] = (x[s, ci, 2 * i, 2 * j] + x[s, ci, 2 * i + 1, 2 * j]
                            + x[s, ci, 2 * i, 2 * j + 1] + x[s, ci, 2 * i + 1, 2 * j + 1]) / 4.0
    return out


def batch_norm(z, eps: float = 1e-5) -> np.ndarray:
    n, c, h, w = z.shape
    out = np.zeros(z.shape)
    count = n * h * w
    for ci in range(c):
        total = 0.0
        for s, i, j in np.ndindex(n, h, w):
            total += float(z[s, ci, i, j])
        mu = total / count
        sq = 0.0
        for s, i, j in np.ndindex(n, h, w):
            sq += (float(z[s, ci, i, j]) - mu) ** 2
        sigma = math.sqrt(sq / count + eps)
        for s, i, j in np.ndindex(n, h, w):
            out[s, ci, i, j] = (float(z[s, ci, i, j]) - mu) / sigma
    return out


def instance_moments(z, eps: float = 1e-5):
    n, c, h, w = z.shape
    mu = np.zeros((n, c))
    sigma = np.zeros((n, c))
    for s in range(n):
        for ci in range(c):
            total = 0.0
            for i, j in np.ndindex(h, w):
                total += float(z[s, ci, i, j])
            m = total / (h * w)
            sq = 0.0
            for i, j in np.ndindex(h, w):
                sq += (float(z[s, ci, i, j]) - m) ** 2
            mu[s, ci] = m
            sigma[s, ci] = math.sqrt(sq / (h * w) + eps)
    return mu, sigma


def fade(z, f_c, w_gamma, b_gamma, w_beta, b_beta, eps: float = 1e-5) -> np.ndarray:
    """gamma(f_c) * BN(z) + beta(f_c) with 3x3 'same' convolutions."""
    normalized = batch_norm(z, eps)
    gamma = conv2d(f_c, w_gamma, b_gamma, 1, 1)
    beta = conv2d(f_c, w_beta, b_beta, 1, 1)
    out = np.zeros(z.shape)
    for idx in np.ndindex(z.shape):
        out[idx] = gamma[idx] * normalized[idx] + beta[idx]
    return out


def fadain(z, f_s, eps: float = 1e-5) -> np.ndarray:
    mu_z, sd_z = instance_moments(z, eps)
    mu_s, sd_s = instance_moments(f_s, eps)
    out = np.zeros(z.shape)
    for s, ci, i, j in np.ndindex(z.shape):
        out[s, ci, i, j] = sd_s[s, ci] * (float(z[s, ci, i, j]) - mu_z[s, ci]) / sd_z[s, ci] + mu_s[s, ci]
    return out


def _mean(values) -> float:
    total, count = 0.0, 0
    for idx in np.ndindex(values.shape):
        total += float(values[idx])
        count += 1
    return total / count


def hinge_d(scores_real, scores_fake) -> float:
    total = 0.0
    for real, fake in zip(scores_real, scores_fake):
        total += _mean(np.vectorize(lambda v: max(0.0, 1.0 - v))(real))
        total += _mean(np.vectorize(lambda v: max(0.0, 1.0 + v))(fake))
    return total


def hinge_g(scores_fake) -> float:
    return sum(-_mean(s) for s in scores_fake)


def mean_abs_diff(a, b) -> float:
    total = 0.0
    for idx in np.ndindex(a.shape):
        total += abs(float(a[idx]) - float(b[idx]))
    return total / a.size


def random_cnn_features(image, convs) -> list[np.ndarray]:
    """Loop version of the random feature extractor: per stage an optional 2x
    average pool, then conv3x3 (pad 1) and ReLU.  ``convs`` is [(w, b), ...]."""
    feats = []
    h = image
    for i, (w, b) in enumerate(convs):
        if i:
            h = avg_pool2(h)
        h = relu(conv2d(h, w, b, 1, 1))
        feats.append(h)
    return feats


def perceptual(image_g, image_t, convs, weights) -> float:
    fg = random_cnn_features(image_g, convs)
    ft = random_cnn_features(image_t, convs)
    return sum(wt * mean_abs_diff(a, b) for wt, a, b in zip(weights, fg, ft))


def feature_matching(feats_fake, feats_real) -> float:
    total = 0.0
    for fake_layers, real_layers in zip(feats_fake, feats_real):
        s = 0.0
        for a, b in zip(fake_layers, real_layers):
            s += mean_abs_diff(a, b)
        total += s / len(fake_layers)
    return total


def adam(x0: float, grad_fn, steps: int, lr: float, b1: float, b2: float, eps: float = 1e-8) -> float:
    x, m, v = x0, 0.0, 0.0
    for t in range(1, steps + 1):
        g = grad_fn(x)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x -= lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
    return x


def covariance(x) -> tuple[np.ndarray, np.ndarray]:
    n, d = x.shape
    mu = np.zeros(d)
    for i in range(n):
        for a in range(d):
            mu[a] += x[i, a] / n
    cov = np.zeros((d, d))
    for a in range(d):
        for b in range(d):
            acc = 0.0
            for i in range(n):
                acc += (x[i, a] - mu[a]) * (x[i, b] - mu[b])
            cov[a, b] = acc / (n - 1)
    return mu, cov


def inception_score(probs) -> float:
    n, k = probs.shape
    marginal = [sum(probs[i, j] for i in range(n)) / n for j in range(k)]
    kl_total = 0.0
    for i in range(n):
        for j in range(k):
            p = probs[i, j]
            if p > 0:
                kl_total += p * math.log(p / marginal[j])
    return math.exp(kl_total / n)
