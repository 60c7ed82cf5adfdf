import numpy as np
import pytest
from conftest import toy_config

from tsit import oracles
from tsit import tensor as T
from tsit.networks import (ABLATIONS, MultiScaleDiscriminator, NetConfig, Stream, TwoStreamGenerator,
                           default_schedule, generator_sites, noise_shape, sample_noise, stream_shapes)
from tsit.tensor import Tensor
from tsit.train import TrainConfig, Trainer
from tsit.transforms import fadain


def images(n, h, w, seed, dtype=np.float32):
    return Tensor(np.tanh(np.random.default_rng(seed).standard_normal((n, 3, h, w))).astype(dtype))


def test_k7_stream_on_512x256():
    cfg = NetConfig(k=7)
    assert cfg.widths == [64, 128, 256, 512, 1024, 1024, 1024, 1024]
    with T.no_grad():
        feats = Stream(cfg, 3, seed=0)(Tensor(np.zeros((1, 3, 512, 256), dtype=np.float32)))
    assert feats[-1].shape == (1, 1024, 4, 2)
    assert [f.shape[1:] for f in feats] == stream_shapes(cfg, 512, 256)


def test_k2_toy_ladder_and_determinism():
    cfg = NetConfig(k=2, base_width=8, schedule=[16, 32])
    x = images(1, 16, 16, 0)
    a = Stream(cfg, 3, seed=3)(x)
    b = Stream(cfg, 3, seed=3)(x)
    assert [f.shape[1:] for f in a] == [(8, 16, 16), (16, 8, 8), (32, 4, 4)]
    assert all(np.array_equal(u.data, v.data) for u, v in zip(a, b))


def test_stream_rejects_indivisible_extent():
    with pytest.raises(ValueError, match="divisible"):
        Stream(toy_config(), 3)(images(1, 12, 10, 0))


def test_config_validation():
    with pytest.raises(ValueError):
        NetConfig(k=3, schedule=[8, 16])
    with pytest.raises(ValueError):
        NetConfig(k=2, base_width=6, width_divisor=4)
    assert default_schedule(3, 16) == [32, 64, 128]
    cfg = toy_config(no_ss=True)
    assert NetConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        NetConfig.from_dict({"nonsense": 1})


def test_generator_output_shape_and_range():
    cfg = toy_config()
    g = TwoStreamGenerator(cfg)
    x = images(1, 16, 16, 1)
    out = g(x, images(1, 16, 16, 2), g.noise(1, 16, 16, 0))
    assert out.shape == (1, 3, 16, 16)
    assert np.all(np.abs(out.data) <= 1.0)


def test_generator_composition_oracle():
    cfg = toy_config(spectral_norm=False, dtype="float64")
    tg = TwoStreamGenerator(cfg).eval(batch_stats=True)
    xc, xs = images(2, 8, 8, 3, np.float64), images(2, 8, 8, 4, np.float64)
    z0 = tg.noise(2, 8, 8, 5)
    got = tg(xc, xs, z0).data
    gen = tg.generator
    fc, fs = tg.content_stream(xc), tg.style_stream(xs)
    z = gen.head(z0)
    for j, i in enumerate(range(cfg.k, 0, -1)):
        z = gen.blocks[j](fadain(z, fs[i]), fc[i])
    want = np.tanh(oracles.conv2d(np.where(z.data > 0, z.data, 0.2 * z.data), gen.out_conv.weight.data,
                                  gen.out_conv.bias.data, 1, 1))
    assert np.max(np.abs(got - want)) < 1e-5


def test_mirror_trace_matches_streams():
    cfg = toy_config(k=3, base_width=16)
    g = TwoStreamGenerator(cfg).eval(batch_stats=True)
    x = images(1, 16, 24, 0)
    with T.no_grad():
        g(x, x, g.noise(1, 16, 24, 0))
    streams = stream_shapes(cfg, 16, 24)
    for site in g.generator.trace:
        i = site["site"]
        assert site["z"][1:] == site["content"][1:] == site["style"][1:] == streams[i]
    assert [s.index for s in generator_sites(cfg, 16, 24)] == [3, 2, 1]


def test_noise_statistics_and_determinism():
    n = sample_noise(1, 10, 100, 100, seed=0, dtype=np.float64).data
    assert abs(n.mean()) < 0.02 and abs(n.std() - 1) < 0.02
    assert np.array_equal(sample_noise(1, 2, 4, 4, seed=7).data, sample_noise(1, 2, 4, 4, seed=7).data)
    assert np.linalg.norm(sample_noise(1, 2, 4, 4, seed=7).data - sample_noise(1, 2, 4, 4, seed=8).data) > 0
    with pytest.raises(ValueError):
        sample_noise(0, 2, 4, 4)
    assert noise_shape(toy_config(), 2, 16, 8) == (2, 32, 4, 2)


def test_z0_extent_mismatch():
    g = TwoStreamGenerator(toy_config())
    x = images(1, 16, 16, 0)
    with pytest.raises(ValueError):
        g(x, x, g.noise(1, 8, 8, 0))


def test_multimodal_and_content_sensitivity():
    g = TwoStreamGenerator(toy_config()).eval(batch_stats=True)
    xc, z0 = images(1, 16, 16, 0), g.noise(1, 16, 16, 0)
    s1, s2 = images(1, 16, 16, 1), images(1, 16, 16, 2)
    with T.no_grad():
        a, b, c = g(xc, s1, z0).data, g(xc, s2, z0).data, g(xc, images(1, 16, 16, 1), z0).data
        d = g(images(1, 16, 16, 9), s1, z0).data
    assert np.linalg.norm(a - b) > 0
    assert np.array_equal(a, c)
    assert np.linalg.norm(a - d) > 0


def test_no_ss_is_style_invariant():
    g = TwoStreamGenerator(toy_config(no_ss=True)).eval(batch_stats=True)
    xc, z0 = images(1, 16, 16, 0), g.noise(1, 16, 16, 0)
    with T.no_grad():
        assert np.array_equal(g(xc, images(1, 16, 16, 1), z0).data, g(xc, images(1, 16, 16, 2), z0).data)
    assert g.style_stream is None


@pytest.mark.parametrize("flag", ABLATIONS)
def test_every_ablation_keeps_the_shape_contract(flag):
    cfg = toy_config(**{flag: True})
    g = TwoStreamGenerator(cfg).eval(batch_stats=True)
    x = images(1, 16, 16, 0)
    with T.no_grad():
        assert g(x, images(1, 16, 16, 1), g.noise(1, 16, 16, 0)).shape == (1, 3, 16, 16)


def test_no_cs_feeds_resized_content_image():
    cfg = toy_config(no_cs=True)
    g = TwoStreamGenerator(cfg).eval(batch_stats=True)
    x = images(1, 16, 16, 0)
    content, _ = g.injections(x, x)
    assert g.content_stream is None
    assert np.array_equal(content[2].data, x.data[:, :, ::4, ::4])


def test_width_divisor_shrinks_every_width():
    assert NetConfig(k=3, base_width=64, width_divisor=4).widths == [16, 32, 64, 128]


def test_discriminator_scales_and_taps():
    cfg = NetConfig(k=2, base_width=8, d_base_width=64, width_divisor=4)
    d = MultiScaleDiscriminator(cfg)
    with T.no_grad():
        scores, feats = d(images(1, 256, 256, 0))
    extents = [s.shape[2] for s in scores]
    assert len(scores) == 3 and extents == sorted(extents, reverse=True) and len(set(extents)) == 3
    assert all(len(f) == 3 for f in feats)
    assert all(s.shape[1] == 1 for s in scores)


def test_discriminator_minimum_extent():
    d = MultiScaleDiscriminator(toy_config())
    with pytest.raises(ValueError, match="minimum"):
        d(images(1, 4, 4, 0))


def test_discriminators_do_not_share_weights():
    d = MultiScaleDiscriminator(toy_config())
    w0, w1 = d.discriminators[0].convs[0].weight.data, d.discriminators[1].convs[0].weight.data
    assert w0.shape == w1.shape and not np.array_equal(w0, w1)


def test_discriminator_composition_oracle():
    cfg = NetConfig(k=1, base_width=4, d_base_width=2, d_layers=2, d_scales=2, spectral_norm=False,
                    dtype="float64")
    d = MultiScaleDiscriminator(cfg)
    x = images(1, 8, 8, 5, np.float64).data
    scores, feats = d(Tensor(x))

    def ref(sub, h):
        taps = []
        for j, conv in enumerate(sub.convs):
            h = oracles.conv2d(h, conv.weight.data, None, conv.stride, conv.pad)
            mu, sd = oracles.instance_moments(h)
            h = (h - mu[:, :, None, None]) / sd[:, :, None, None]
            h = np.where(h > 0, h, 0.2 * h)
            if j < sub.n_layers:
                taps.append(h)
        return oracles.conv2d(h, sub.final.weight.data, sub.final.bias.data, 1, 2), taps

    inputs = [x, oracles.avg_pool2(x)]
    for s, sub in enumerate(d.discriminators):
        score, taps = ref(sub, inputs[s])
        assert np.max(np.abs(scores[s].data - score)) < 1e-5
        for a, b in zip(feats[s], taps):
            assert np.max(np.abs(a.data - b)) < 1e-5


def test_conditional_discriminator_input_channels():
    tr = Trainer(toy_config(d_conditional=True), TrainConfig(steps=1))
    assert tr.D.discriminators[0].convs[0].inc == 6


def rms(a, b):
    return float(np.sqrt(np.mean((a - b) ** 2)))


def test_single_sample_batch_statistics_erase_style():
    # FADE re-normalizes every channel over (N, H, W); with N = 1 those are the
    # instance moments FAdaIN just imposed, so only eps-level style effects remain
    g = TwoStreamGenerator(toy_config(dtype="float64")).eval(batch_stats=True)
    xc, z0 = images(1, 16, 16, 0, np.float64), g.noise(1, 16, 16, 0)
    with T.no_grad():
        a = g(xc, images(1, 16, 16, 1, np.float64), z0).data
        b = g(xc, images(1, 16, 16, 2, np.float64), z0).data
    assert 0 < rms(a, b) < 1e-4


def test_running_statistics_keep_style():
    g = TwoStreamGenerator(toy_config())
    with T.no_grad():
        for seed in range(4):  # populate the running statistics
            g(images(2, 16, 16, seed), images(2, 16, 16, seed + 10), g.noise(2, 16, 16, seed))
    g.eval()
    xc, z0 = images(1, 16, 16, 0), g.noise(1, 16, 16, 0)
    with T.no_grad():
        a = g(xc, images(1, 16, 16, 1), z0).data
        b = g(xc, images(1, 16, 16, 2), z0).data
    assert rms(a, b) > 0.01
