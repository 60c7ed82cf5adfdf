"""Acceptance criteria.  Each test records PASS/FAIL with a measured detail into
``conftest.ACCEPTANCE_RESULTS`` before asserting; the summary is printed at the
end of the session (and by running this file directly)."""
import time

import numpy as np
import pytest
from conftest import ACCEPTANCE_RESULTS, toy_config

from tsit import oracles
from tsit import tensor as T
from tsit.cli import translate
from tsit.config import build_loader, preset
from tsit.data import BatchLoader, make_synthetic_dataset
from tsit.evaluation import (GaussianFit, default_extractor, evaluate_images, frechet_distance,
                             inception_score, palette_classifier)
from tsit.gradcheck import GRAD_CASES, N_SHAPES, run_grad_case
from tsit.layers import Conv2d, power_iteration
from tsit.losses import (PERCEPTUAL_WEIGHTS, RandomFeatureExtractor, feature_matching_loss,
                         hinge_d_loss, hinge_g_loss, perceptual_loss)
from tsit.networks import NetConfig
from tsit.optim import Adam
from tsit.selftest import check_mirror
from tsit.tensor import Tensor
from tsit.train import METRIC_FIELDS, TrainConfig, Trainer, load_generator, windowed_mean
from tsit.transforms import FADE, fadain

LOSS_FIELDS = [f for f in METRIC_FIELDS if f != "wall_ms"]


def record(name: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_RESULTS[name] = (bool(ok), detail)
    assert ok, f"{name}: {detail}"


# -- 1. full-scale results -------------------------------------------------------------


def test_full_scale_results_disclaimed():
    ds = make_synthetic_dataset(n=6, h=32, w=32, seed=1)
    report = evaluate_images(ds.targets, ds.targets).text()
    ok = "not comparable" in report
    record("full_scale_disclaimer", ok, "evaluation reports carry the not-comparable notice; "
           "the property suite below stands in")


# -- 2. gradient suite -----------------------------------------------------------------


def test_gradient_suite():
    t0 = time.perf_counter()
    failures, counts = [], {}
    for name in GRAD_CASES:
        for i in range(N_SHAPES):
            r = run_grad_case(name, i)
            counts[name] = counts.get(name, 0) + 1
            if not r.ok:
                failures.append(f"{r.name} rel err {r.max_rel_err:.2g}")
    seconds = time.perf_counter() - t0
    ok = not failures and min(counts.values()) >= 5 and seconds < 60
    for op in ("conv2d", "fade", "fadain"):
        ok = ok and op in counts
    record("gradient_suite", ok, f"{len(counts)} ops x {N_SHAPES} shapes in {seconds:.1f} s"
           + (f"; failures: {failures}" if failures else ""))


# -- 3. transform and loss oracles -----------------------------------------------------


def fade_instance(seed, dtype):
    rng = np.random.default_rng(seed)
    n, zc, fc, h, w = 2, int(rng.integers(1, 4)), int(rng.integers(1, 4)), 4, 5
    z = (rng.standard_normal((n, zc, h, w)) * 2 + 0.5).astype(dtype)
    f = rng.standard_normal((n, fc, h, w)).astype(dtype)
    mod = FADE(zc, fc, seed=seed, spectral_norm=False, dtype=dtype).eval(batch_stats=True)
    with T.no_grad():
        got = mod(Tensor(z), Tensor(f)).data
    g, b = mod.gamma_conv, mod.beta_conv
    want = oracles.fade(z, f, g.weight.data, g.bias.data, b.weight.data, b.bias.data)
    return got, want


def fadain_instance(seed, dtype):
    rng = np.random.default_rng(seed)
    z = (rng.standard_normal((2, 3, 4, 4)) * 3 - 1).astype(dtype)
    s = (rng.standard_normal((2, 3, 4, 4)) * 0.5 + 2).astype(dtype)
    return fadain(Tensor(z), Tensor(s)).data, oracles.fadain(z, s)


def hinge_instance(seed, dtype):
    rng = np.random.default_rng(seed)
    real = [(rng.standard_normal((2, 1, 4, 4)) * 2).astype(dtype) for _ in range(3)]
    fake = [(rng.standard_normal((2, 1, 4, 4)) * 2).astype(dtype) for _ in range(3)]
    got = [hinge_d_loss([Tensor(r) for r in real], [Tensor(f) for f in fake]).item(),
           hinge_g_loss([Tensor(f) for f in fake]).item()]
    return np.array(got), np.array([oracles.hinge_d(real, fake), oracles.hinge_g(fake)])


def perceptual_instance(seed, dtype):
    rng = np.random.default_rng(seed)
    a = rng.uniform(-1, 1, (1, 3, 16, 16)).astype(dtype)
    b = rng.uniform(-1, 1, (1, 3, 16, 16)).astype(dtype)
    fx = RandomFeatureExtractor(seed, widths=(4, 4, 6, 6, 8), dtype=dtype)
    convs = [(c.weight.data, c.bias.data) for c in fx.stages]
    return perceptual_loss(fx, Tensor(a), Tensor(b)).item(), oracles.perceptual(a, b, convs, PERCEPTUAL_WEIGHTS)


def fm_instance(seed, dtype):
    rng = np.random.default_rng(seed)
    shapes = [(2, 4, 4, 4), (2, 8, 2, 2)]
    fake = [[rng.standard_normal(s).astype(dtype) for s in shapes] for _ in range(2)]
    real = [[rng.standard_normal(s).astype(dtype) for s in shapes] for _ in range(2)]
    got = feature_matching_loss([[Tensor(a) for a in sc] for sc in fake], [[Tensor(a) for a in sc] for sc in real])
    return got.item(), oracles.feature_matching(fake, real)


ORACLE_INSTANCES = {"fade": fade_instance, "fadain": fadain_instance, "hinge": hinge_instance,
                    "perceptual": perceptual_instance, "feature_matching": fm_instance}


def test_transform_and_loss_oracles():
    worst, bad = {}, []
    for name, make in ORACLE_INSTANCES.items():
        for seed in range(10):
            for dtype, tol in ((np.float32, 1e-6), (np.float64, 1e-10)):
                got, want = make(seed, dtype)
                got, want = np.asarray(got, np.float64), np.asarray(want, np.float64)
                err = np.max(np.abs(got - want) / np.maximum(1.0, np.abs(want)))
                key = f"{name}/{np.dtype(dtype).name}"
                worst[key] = max(worst.get(key, 0.0), float(err))
                if err > tol:
                    bad.append(f"{key}[{seed}] {err:.2g}")
    detail = "10 instances each; worst scaled error " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    record("transform_and_loss_oracles", not bad, detail + (f"; over tolerance: {bad}" if bad else ""))


# -- 4. hand values --------------------------------------------------------------------


def test_hand_values():
    checks = {}
    one, minus = Tensor(np.ones((1, 1, 2, 2))), Tensor(-np.ones((1, 1, 2, 2)))
    zero = Tensor(np.zeros((1, 1, 2, 2)))
    checks["hinge_d(1,-1)=0"] = hinge_d_loss([one], [minus]).item() == 0.0
    checks["hinge_d(0,0)=2"] = hinge_d_loss([zero], [zero]).item() == 2.0

    z = np.random.default_rng(0).standard_normal((2, 3, 5, 5)).astype(np.float32) * 2 + 1
    checks["fadain(z,z)=z"] = np.max(np.abs(fadain(Tensor(z), Tensor(z)).data - z)) <= 1e-5

    mod = FADE(3, 2, seed=0, spectral_norm=False, dtype=np.float64).eval(batch_stats=True)
    mod.gamma_conv.weight.data[...] = 0.0
    mod.gamma_conv.bias.data[...] = 1.0
    mod.beta_conv.weight.data[...] = 0.0
    mod.beta_conv.bias.data[...] = 0.0
    zz = np.random.default_rng(1).standard_normal((2, 3, 4, 4)) * 3
    with T.no_grad():
        out = mod(Tensor(zz), Tensor(np.random.default_rng(2).standard_normal((2, 2, 4, 4)))).data
    checks["fade(gamma=1,beta=0)=bn"] = np.max(np.abs(out - oracles.batch_norm(zz))) <= 1e-6

    lr = 1e-3
    g = np.random.default_rng(3).standard_normal(1000)
    p = Tensor(np.zeros(1000), requires_grad=True)
    p.grad = g
    Adam([p], lr, (0.0, 0.9)).step()
    step = np.abs(p.data)
    checks["adam first step in [0.99lr, lr]"] = bool(step.min() >= 0.99 * lr and step.max() <= lr)

    failed = [k for k, v in checks.items() if not v]
    record("hand_values", not failed, f"{len(checks) - len(failed)}/{len(checks)} hand values hold"
           + (f"; failed: {failed}" if failed else ""))


# -- 5. spectral norm ------------------------------------------------------------------


def test_spectral_norm_power_iteration():
    rng = np.random.default_rng(11)
    errors = []
    for i in range(10):
        outc, inc, k = int(rng.integers(4, 65)), int(rng.integers(1, 15)), int(rng.choice([1, 3]))
        conv = Conv2d(inc, outc, k, seed=int(rng.integers(1 << 30)), spectral_norm=False, dtype=np.float64)
        wmat = conv.weight.data.reshape(outc, -1)
        assert max(wmat.shape) <= 128
        u0 = rng.standard_normal(outc)
        _, _, sigma = power_iteration(wmat, u0 / np.linalg.norm(u0), 25)
        true = np.linalg.svd(wmat, compute_uv=False)[0]
        errors.append(abs(sigma - true) / true)
    worst = max(errors)
    record("spectral_norm", worst < 0.02, f"10 conv weights, 25 iterations, worst relative error {worst:.2e}")


# -- 6. architecture mirror ------------------------------------------------------------


def test_architecture_mirror():
    checked, failures = [], []
    for k in (2, 3, 7):
        for div in (1, 2, 4):
            size = max(2**k, 32)
            try:
                check_mirror(NetConfig(k=k, base_width=64, width_divisor=div), size, size)
                checked.append(f"k{k}/div{div}")
            except AssertionError as exc:
                failures.append(f"k{k}/div{div}: {exc}")
    schedule_ok = NetConfig(k=7).widths == [64, 128, 256, 512, 1024, 1024, 1024, 1024]
    record("architecture_mirror", not failures and schedule_ok,
           f"{len(checked)}/9 configurations mirror the streams; k=7 schedule "
           f"{'matches' if schedule_ok else 'differs'}" + (f"; {failures}" if failures else ""))


# -- 7. multi-modal --------------------------------------------------------------------


def trained_toy_generator(tmp_path, name, **net_kw):
    ds = make_synthetic_dataset("style_transfer", n=8, h=16, w=16, seed=0, mode="paired")
    tr = Trainer(toy_config(**net_kw), TrainConfig(seed=0), BatchLoader(ds, 1, 0))
    tr.run(60)
    tr.save(tmp_path / f"{name}.ckpt")
    return load_generator(tmp_path / f"{name}.ckpt"), ds


def test_multimodal_property(tmp_path):
    g, ds = trained_toy_generator(tmp_path, "full")
    content = ds.content_images[0]
    s1, s2 = ds.style_images[1], ds.style_images[3]
    a, b = translate(g, content, s1, 0), translate(g, content, s2, 0)
    again = translate(g, content, s1.copy(), 0)
    rms = float(np.sqrt(np.mean((a - b) ** 2)))

    g_ns, _ = trained_toy_generator(tmp_path, "no_ss", no_ss=True)
    invariant = np.array_equal(translate(g_ns, content, s1, 0), translate(g_ns, content, s2, 0))
    ok = rms > 0.01 and np.array_equal(a, again) and invariant
    record("multimodal", ok, f"style RMS difference {rms:.4f} (running statistics); identical styles "
           f"{'bit-identical' if np.array_equal(a, again) else 'differ'}; no_ss "
           f"{'style-invariant' if invariant else 'style-dependent'}")


# -- 8. convergence --------------------------------------------------------------------


@pytest.fixture(scope="session")
def convergence_runs():
    runs = []
    for _ in range(2):
        cfg = preset("desk-convergence")
        tr = Trainer(cfg.net, cfg.train, build_loader(cfg))
        t0 = time.perf_counter()
        records = tr.run(cfg.train.steps)
        runs.append((records, time.perf_counter() - t0))
    return runs


def test_convergence(convergence_runs):
    (rec_a, sec_a), (rec_b, sec_b) = convergence_runs
    lp = [r["L_P"] for r in rec_a]
    means = windowed_mean(lp, 100)
    drop = 1 - means[-1] / means[0]
    identical = [[r[f] for f in LOSS_FIELDS] for r in rec_a] == [[r[f] for f in LOSS_FIELDS] for r in rec_b]
    slowest = max(sec_a, sec_b)
    ok = drop >= 0.70 and slowest < 1800 and identical
    record("convergence", ok, f"window-100 L_P {means[0]:.4f} -> {means[-1]:.4f} (drop {drop:.1%}, "
           f"need 70%); {len(lp)} steps in {slowest:.0f} s; runs "
           f"{'bit-identical' if identical else 'differ'}")


# -- 9. FID / IS -----------------------------------------------------------------------


def test_fid_is_sanity():
    checks = {}
    ds = make_synthetic_dataset(n=16, h=32, w=32, seed=5)
    ref = ds.targets.astype(np.float64)
    fx = default_extractor()
    clf = palette_classifier(fx)
    noise = np.random.default_rng(5).standard_normal(ref.shape)
    fids = [evaluate_images(np.clip(ref + s * noise, -1, 1), ref, fx, clf).fid for s in (0.0, 0.1, 0.2)]
    checks["identical sets"] = fids[0] < 1e-6
    checks["monotone under noise"] = fids[0] < fids[1] < fids[2]

    def g1(mu, sd):
        return GaussianFit(np.array([mu]), np.array([[sd * sd]]))

    checks["1-D mean case"] = abs(frechet_distance(g1(0, 2), g1(3, 2)) - 9.0) <= 1e-8
    checks["1-D sigma case"] = abs(frechet_distance(g1(1, 2), g1(1, 5)) - 9.0) <= 1e-8
    checks["IS identical conditionals"] = abs(inception_score(np.full((8, 5), 0.2))[0] - 1.0) <= 1e-6
    checks["IS one-hot coverage"] = all(abs(inception_score(np.eye(k))[0] - k) <= 1e-6 for k in (2, 5, 10))
    failed = [k for k, v in checks.items() if not v]
    record("fid_is_sanity", not failed, f"FID at noise 0/0.1/0.2: {fids[0]:.1e}/{fids[1]:.3f}/{fids[2]:.3f}; "
           f"{len(checks) - len(failed)}/{len(checks)} checks hold" + (f"; failed: {failed}" if failed else ""))


# -- 10. resume equivalence ------------------------------------------------------------


def desk_trainer():
    cfg = preset("desk-style-transfer")
    return Trainer(cfg.net, cfg.train, build_loader(cfg))


def test_resume_equivalence(tmp_path):
    straight = desk_trainer()
    rec_straight = straight.run(20)
    first = desk_trainer()
    rec_first = first.run(10)
    first.save(tmp_path / "mid.ckpt")
    resumed = desk_trainer()
    resumed.load(tmp_path / "mid.ckpt")
    rec_resumed = resumed.run(20)
    a, b = straight.state_tensors(), resumed.state_tensors()
    params_equal = a.keys() == b.keys() and all(np.array_equal(a[k], b[k]) for k in a)
    losses = [[r[f] for f in LOSS_FIELDS] for r in rec_first + rec_resumed]
    losses_equal = losses == [[r[f] for f in LOSS_FIELDS] for r in rec_straight]
    record("resume_equivalence", params_equal and losses_equal,
           f"10+10 vs 20 steps: state {'bit-identical' if params_equal else 'differs'} over {len(a)} tensors; "
           f"loss records {'identical' if losses_equal else 'differ'}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
