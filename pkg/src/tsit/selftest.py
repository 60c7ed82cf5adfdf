"""Built-in self-test: gradient checks, loop-oracle comparisons and invariants.

Each check is a small function that raises AssertionError with a message on
failure.  ``run_selftest`` executes every suite and reports per-suite counts.
"""

from __future__ import annotations

import io
import time
from typing import Callable

import numpy as np

from . import oracles
from . import tensor as T
from .checkpoint import decode_checkpoint, encode_checkpoint
from .data import decode_image, encode_image, one_hot, resize_nearest
from .evaluation import GaussianFit, fit_gaussian, frechet_distance, inception_score
from .gradcheck import GRAD_CASES, N_SHAPES, run_grad_case
from .layers import power_iteration
from .losses import feature_matching_loss, hinge_d_loss, hinge_g_loss
from .networks import NetConfig, TwoStreamGenerator, generator_sites, stream_shapes
from .optim import Adam
from .tensor import Tensor
from .transforms import FADE, fadain


def _close(name: str, got, want, tol: float) -> None:
    got, want = np.asarray(got, dtype=np.float64), np.asarray(want, dtype=np.float64)
    err = float(np.max(np.abs(got - want))) if got.size else 0.0
    assert got.shape == want.shape and err <= tol, f"{name}: max abs error {err:.3g} > {tol:g}"


# -- oracle suite -------------------------------------------------------------------


def _check_fade(seed: int) -> None:
    rng = np.random.default_rng(seed)
    mod = FADE(2, 3, seed=seed, spectral_norm=False, dtype=np.float64).eval(batch_stats=True)
    z, f = rng.standard_normal((2, 2, 3, 3)), rng.standard_normal((2, 3, 3, 3))
    got = mod(Tensor(z), Tensor(f)).data
    g, b = mod.gamma_conv, mod.beta_conv
    want = oracles.fade(z, f, g.weight.data, g.bias.data, b.weight.data, b.bias.data)
    _close("fade", got, want, 1e-10)


def _check_fadain(seed: int) -> None:
    rng = np.random.default_rng(seed)
    z, s = rng.standard_normal((2, 3, 3, 3)), rng.standard_normal((2, 3, 4, 2)) * 2 + 1
    _close("fadain", fadain(Tensor(z), Tensor(s)).data, oracles.fadain(z, s), 1e-10)


def _check_hinge(seed: int) -> None:
    rng = np.random.default_rng(seed)
    real = [rng.standard_normal((2, 1, 3, 3)) * 2 for _ in range(3)]
    fake = [rng.standard_normal((2, 1, 3, 3)) * 2 for _ in range(3)]
    got = hinge_d_loss([Tensor(r) for r in real], [Tensor(f) for f in fake]).item()
    _close("hinge_d", got, oracles.hinge_d(real, fake), 1e-10)
    _close("hinge_g", hinge_g_loss([Tensor(f) for f in fake]).item(), oracles.hinge_g(fake), 1e-10)


def _check_fm(seed: int) -> None:
    rng = np.random.default_rng(seed)
    shapes = [(2, 4, 4, 4), (2, 8, 2, 2)]
    fake = [[rng.standard_normal(s) for s in shapes] for _ in range(2)]
    real = [[rng.standard_normal(s) for s in shapes] for _ in range(2)]
    got = feature_matching_loss([[Tensor(a) for a in sc] for sc in fake],
                                [[Tensor(a) for a in sc] for sc in real]).item()
    _close("feature_matching", got, oracles.feature_matching(fake, real), 1e-10)


def _check_conv(seed: int) -> None:
    rng = np.random.default_rng(seed)
    x, w, b = rng.standard_normal((1, 2, 5, 5)), rng.standard_normal((3, 2, 3, 3)), rng.standard_normal(3)
    for stride, pad in ((1, 1), (2, 0), (2, 2)):
        got = T.conv2d(Tensor(x), Tensor(w), Tensor(b), stride, pad).data
        _close(f"conv2d(stride={stride},pad={pad})", got, oracles.conv2d(x, w, b, stride, pad), 1e-10)


def _check_adam(seed: int) -> None:
    p = Tensor(np.array([3.0 + seed]), requires_grad=True)
    opt = Adam([p], lr=0.1, betas=(0.0, 0.9))
    for _ in range(3):
        p.grad = 2.0 * p.data  # d/dx of x^2
        opt.step()
    want = oracles.adam(3.0 + seed, lambda x: 2.0 * x, 3, 0.1, 0.0, 0.9)
    _close("adam", p.data[0], want, 1e-10)


def _check_gaussian(seed: int) -> None:
    x = np.random.default_rng(seed).standard_normal((30, 3))
    fit = fit_gaussian(x)
    mu, cov = oracles.covariance(x)
    _close("fit_gaussian.mean", fit.mean, mu, 1e-10)
    _close("fit_gaussian.cov", fit.cov, cov, 1e-10)


def _check_is(seed: int) -> None:
    p = np.random.default_rng(seed).dirichlet(np.ones(5), size=20)
    _close("inception_score", inception_score(p)[0], oracles.inception_score(p), 1e-8)


ORACLE_CHECKS = {"fade": _check_fade, "fadain": _check_fadain, "hinge": _check_hinge,
                 "feature_matching": _check_fm, "conv2d": _check_conv, "adam": _check_adam,
                 "fit_gaussian": _check_gaussian, "inception_score": _check_is}


# -- invariant suite ---------------------------------------------------------------


def _inv_hinge_hand_values() -> None:
    one, neg = Tensor(np.array([[1.0]])), Tensor(np.array([[-1.0]]))
    zero = Tensor(np.array([[0.0]]))
    assert hinge_d_loss([one], [neg]).item() == 0.0, "hinge_d(1, -1) != 0"
    assert hinge_d_loss([zero], [zero]).item() == 2.0, "hinge_d(0, 0) != 2"


def _inv_fadain_identity() -> None:
    z = Tensor(np.random.default_rng(0).standard_normal((2, 3, 4, 4)).astype(np.float32))
    _close("fadain(z, z)", fadain(z, z).data, z.data, 1e-5)


def _inv_fade_is_bn() -> None:
    z = np.random.default_rng(1).standard_normal((2, 3, 4, 4))
    mod = FADE(3, 2, spectral_norm=False, dtype=np.float64).eval(batch_stats=True)
    for conv, value in ((mod.gamma_conv, 1.0), (mod.beta_conv, 0.0)):
        conv.weight.data[...] = 0.0
        conv.bias.data[...] = value
    got = mod(Tensor(z), Tensor(np.ones((2, 2, 4, 4)))).data
    _close("FADE(gamma=1, beta=0)", got, oracles.batch_norm(z), 1e-6)


def _inv_adam_first_step() -> None:
    lr = 1e-3
    g = np.random.default_rng(2).standard_normal(50) * 10
    g[np.abs(g) < 1e-2] = 1.0
    p = Tensor(np.zeros(50), requires_grad=True)
    opt = Adam([p], lr=lr, betas=(0.0, 0.9))
    p.grad = g
    opt.step()
    step = np.abs(p.data)
    assert step.min() >= 0.99 * lr and step.max() <= lr, "first Adam step outside [0.99 lr, lr]"


def _inv_spectral_norm() -> None:
    rng = np.random.default_rng(3)
    for i in range(10):
        rows, cols = rng.integers(8, 129, size=2)
        w = rng.standard_normal((rows, cols))
        u = rng.standard_normal(rows)
        _, _, sigma = power_iteration(w, u / np.linalg.norm(u), 25)
        true = np.linalg.svd(w, compute_uv=False)[0]
        assert abs(sigma - true) / true < 0.02, f"power iteration off by >2% on weight {i}"


def trace_sites(cfg: NetConfig, h: int, w: int) -> list[dict]:
    """Run the generator once and return the traced per-site shapes."""
    g = TwoStreamGenerator(cfg).eval(batch_stats=True)
    x = Tensor(np.zeros((1, 3, h, w), dtype=cfg.np_dtype))
    with T.no_grad():
        out = g(x, x, g.noise(1, h, w, 0))
    assert out.shape == (1, 3, h, w), f"output extent {out.shape[2:]} != input {(h, w)}"
    return g.generator.trace


def check_mirror(cfg: NetConfig, h: int, w: int) -> None:
    for site in trace_sites(cfg, h, w):
        i, z = site["site"], site["z"]
        assert site["content"][1:] == z[1:], f"FADE site {i}: feature {site['content']} vs activation {z}"
        assert site["style"][1:] == z[1:], f"FAdaIN site {i}: feature {site['style']} vs activation {z}"
    streams = stream_shapes(cfg, h, w)
    for site in generator_sites(cfg, h, w):
        assert streams[site.index] == (site.content_channels, *site.extent), f"site table {site.index}"


def _inv_architecture() -> None:
    # k=7 with the full-width ladder needs ~2 GB; the acceptance suite covers it
    for k, div in ((2, 1), (2, 2), (2, 4), (3, 1), (3, 2), (3, 4), (7, 4)):
        size = 2**k
        check_mirror(NetConfig(k=k, base_width=64, width_divisor=div), size, size)
    assert NetConfig(k=7).widths == [64, 128, 256, 512, 1024, 1024, 1024, 1024], "k=7 schedule"


def _inv_generator_extent() -> None:
    cfg = NetConfig(k=2, base_width=8, d_base_width=8)
    g = TwoStreamGenerator(cfg).eval(batch_stats=True)
    x = Tensor(np.zeros((1, 3, 8, 12), dtype=np.float32))
    with T.no_grad():
        out = g(x, x, g.noise(1, 8, 12, 0))
    assert out.shape == (1, 3, 8, 12), f"generator output {out.shape}"


def _inv_codecs() -> None:
    rng = np.random.default_rng(4)
    px = rng.integers(0, 256, size=(1, 3, 5, 7)).astype(np.float64) * (2.0 / 255.0) - 1.0
    for fmt in ("png", "ppm"):
        back = decode_image(encode_image(px.astype(np.float32), fmt)).pixels
        assert np.array_equal(back, px.astype(np.float32)), f"{fmt} round trip"
    mask = rng.integers(0, 5, size=(9, 11))
    assert set(np.unique(resize_nearest(mask, 4, 6))) <= set(np.unique(mask)), "resize label set"
    assert np.all(one_hot(mask[None], 5).sum(axis=1) == 1.0), "one-hot partition"


def _inv_checkpoint() -> None:
    rng = np.random.default_rng(5)
    tensors = {"a": rng.standard_normal((2, 3)).astype(np.float32), "b": rng.standard_normal(4)}
    blob = encode_checkpoint({"step": 3}, tensors)
    back = decode_checkpoint(blob)
    assert all(np.array_equal(back.tensors[k], v) and back.tensors[k].dtype == v.dtype
               for k, v in tensors.items()), "checkpoint round trip"
    try:
        decode_checkpoint(blob[:-5])
    except Exception:
        pass
    else:
        raise AssertionError("truncated checkpoint was accepted")


def _inv_frechet() -> None:
    a = GaussianFit(np.array([0.0]), np.array([[4.0]]))
    b = GaussianFit(np.array([0.0]), np.array([[25.0]]))
    assert abs(frechet_distance(a, b) - 9.0) < 1e-8, "1-D FID sigma case"
    c = GaussianFit(np.array([3.0]), np.array([[4.0]]))
    assert abs(frechet_distance(a, c) - 9.0) < 1e-8, "1-D FID mean case"
    k = 6
    assert abs(inception_score(np.eye(k))[0] - k) < 1e-6, "IS of uniform one-hot coverage"
    assert abs(inception_score(np.full((4, 3), 1 / 3))[0] - 1.0) < 1e-6, "IS of identical rows"


INVARIANT_CHECKS = {
    "hinge_hand_values": _inv_hinge_hand_values,
    "fadain_identity": _inv_fadain_identity,
    "fade_reduces_to_bn": _inv_fade_is_bn,
    "adam_first_step": _inv_adam_first_step,
    "spectral_norm": _inv_spectral_norm,
    "architecture_mirror": _inv_architecture,
    "generator_extent": _inv_generator_extent,
    "codecs": _inv_codecs,
    "checkpoint": _inv_checkpoint,
    "frechet_closed_form": _inv_frechet,
}


# -- runner ----------------------------------------------------------------------------


def _grad_checks() -> dict[str, Callable[[], None]]:
    checks = {}
    for name in GRAD_CASES:
        for i in range(N_SHAPES):
            def check(name=name, i=i):
                r = run_grad_case(name, i)
                assert r.ok, f"{r.name}: max relative error {r.max_rel_err:.3g} over {r.checked} elements"
            checks[f"{name}[{i}]"] = check
    return checks


def suites() -> dict[str, dict[str, Callable[[], None]]]:
    oracle = {}
    for name, fn in ORACLE_CHECKS.items():
        for seed in range(3):
            oracle[f"{name}[{seed}]"] = lambda fn=fn, seed=seed: fn(seed)
    return {"gradients": _grad_checks(), "oracles": oracle, "invariants": dict(INVARIANT_CHECKS)}


def run_selftest(out=None, fault: str | None = None) -> bool:
    out = out or io.StringIO()
    ok = True
    t0 = time.perf_counter()
    for suite, checks in suites().items():
        passed, failures = 0, []
        for name, check in checks.items():
            try:
                if fault:
                    with T.inject_fault(fault):
                        check()
                else:
                    check()
                passed += 1
            except AssertionError as exc:
                failures.append(f"{name}: {exc}")
        for f in failures:
            print(f"FAIL {suite}/{f}", file=out)
        print(f"{suite}: {passed}/{len(checks)} passed", file=out)
        ok = ok and not failures
    print(f"selftest {'passed' if ok else 'FAILED'} in {time.perf_counter() - t0:.1f} s", file=out)
    return ok

