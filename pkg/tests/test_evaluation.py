import math

import numpy as np
import pytest

from tsit import oracles
from tsit.data import DataError, make_synthetic_dataset, write_image
from tsit.evaluation import (EvaluationError, GaussianFit, default_extractor, evaluate_images,
                             evaluate_run, fit_gaussian, frechet_distance, image_features,
                             inception_score, palette_classifier, parse_report, sqrtm_psd)


def gauss1(mu, sigma):
    return GaussianFit(np.array([float(mu)]), np.array([[float(sigma) ** 2]]))


def test_fit_gaussian_hand_values():
    fit = fit_gaussian([[0.0, 0.0], [2.0, 2.0]])
    assert np.array_equal(fit.mean, [1.0, 1.0])
    assert np.array_equal(fit.cov, [[2.0, 2.0], [2.0, 2.0]])
    assert not fit_gaussian(np.ones((5, 3))).cov.any()
    with pytest.raises(EvaluationError):
        fit_gaussian([[1.0, 2.0]])


def test_fit_gaussian_vs_loop():
    x = np.random.default_rng(0).standard_normal((100, 4))
    fit = fit_gaussian(x)
    mu, cov = oracles.covariance(x)
    assert np.max(np.abs(fit.mean - mu)) < 1e-10 and np.max(np.abs(fit.cov - cov)) < 1e-10
    assert np.array_equal(fit.cov, fit.cov.T)
    assert np.linalg.eigvalsh(fit.cov).min() > -1e-8


def test_frechet_closed_forms():
    assert abs(frechet_distance(gauss1(0, 2), gauss1(3, 2)) - 9.0) < 1e-8
    assert abs(frechet_distance(gauss1(1, 2), gauss1(1, 5)) - 9.0) < 1e-8
    rng = np.random.default_rng(1)
    for _ in range(5):
        m1, m2 = rng.standard_normal(2)
        s1, s2 = rng.uniform(0.1, 3, 2)
        want = (m1 - m2) ** 2 + (s1 - s2) ** 2
        assert abs(frechet_distance(gauss1(m1, s1), gauss1(m2, s2)) - want) < 1e-8


def test_frechet_identity_symmetry_and_errors():
    rng = np.random.default_rng(2)
    a, b = fit_gaussian(rng.standard_normal((50, 6))), fit_gaussian(rng.standard_normal((40, 6)) + 0.3)
    assert frechet_distance(a, a) < 1e-8
    assert abs(frechet_distance(a, b) - frechet_distance(b, a)) < 1e-8
    with pytest.raises(EvaluationError):
        frechet_distance(a, fit_gaussian(rng.standard_normal((5, 3))))


def test_frechet_matches_diagonal_closed_form():
    rng = np.random.default_rng(3)
    v1, v2 = rng.uniform(0.1, 2, 5), rng.uniform(0.1, 2, 5)
    m1, m2 = rng.standard_normal(5), rng.standard_normal(5)
    want = np.sum((m1 - m2) ** 2) + np.sum((np.sqrt(v1) - np.sqrt(v2)) ** 2)
    got = frechet_distance(GaussianFit(m1, np.diag(v1)), GaussianFit(m2, np.diag(v2)))
    assert abs(got - want) < 1e-10


def test_sqrtm_clamps_negative_noise():
    a = np.diag([4.0, -1e-12, 0.0])
    assert np.allclose(sqrtm_psd(a), np.diag([2.0, 0.0, 0.0]))


def test_inception_score_cases():
    assert abs(inception_score(np.full((6, 4), 0.25))[0] - 1.0) < 1e-6
    for k in (2, 5, 10):
        assert abs(inception_score(np.eye(k))[0] - k) < 1e-6
    p = np.random.default_rng(4).dirichlet(np.ones(6), size=30)
    score = inception_score(p)[0]
    assert abs(score - oracles.inception_score(p)) < 1e-8
    assert 1.0 <= score <= 6.0
    mean, std = inception_score(np.tile(np.eye(3), (4, 1)), splits=4)
    assert abs(mean - 3.0) < 1e-9 and std < 1e-9


def test_inception_score_rejects_invalid():
    with pytest.raises(EvaluationError):
        inception_score([[0.5, 0.6]])
    with pytest.raises(EvaluationError):
        inception_score([[1.5, -0.5]])
    with pytest.raises(EvaluationError):
        inception_score(np.eye(3), splits=5)


def test_palette_classifier_recognises_palettes():
    fx = default_extractor()
    clf = palette_classifier(fx)
    held_out = make_synthetic_dataset(n=32, h=32, w=32, seed=0, n_palettes=4)
    # same palettes (seeded), new layouts
    pred = clf.predict_proba(image_features(fx, held_out.style_images)).argmax(axis=1)
    assert (pred == held_out.palette_ids).mean() >= 0.9


def test_fid_monotone_under_noise():
    ds = make_synthetic_dataset(n=16, h=32, w=32, seed=5)
    ref = ds.targets.astype(np.float64)
    fx = default_extractor()
    noise = np.random.default_rng(5).standard_normal(ref.shape)
    fids = [evaluate_images(np.clip(ref + s * noise, -1, 1), ref, fx, palette_classifier(fx)).fid
            for s in (0.0, 0.1, 0.2)]
    assert fids[0] < 1e-6
    assert fids[0] < fids[1] < fids[2]


def write_set(d, images):
    d.mkdir()
    for i, im in enumerate(images):
        write_image(d / f"{i:03d}.png", im)


def test_evaluate_run_identical_dirs_and_report(tmp_path):
    ds = make_synthetic_dataset(n=6, h=32, w=32, seed=6)
    write_set(tmp_path / "gen", ds.targets)
    write_set(tmp_path / "ref", ds.targets)
    report = evaluate_run(tmp_path / "gen", tmp_path / "ref")
    assert report.fid < 1e-6
    text = report.text()
    fields = parse_report(text)
    assert fields["fid"] == report.fid and fields["is_mean"] == report.is_mean
    assert fields["n_generated"] == 6 and fields["extractor"].startswith("random-cnn")
    assert all(math.isfinite(fields[k]) for k in ("fid", "is_mean", "is_std"))
    assert "not comparable" in text


def test_evaluate_run_errors(tmp_path):
    (tmp_path / "empty").mkdir()
    write_set(tmp_path / "ref", make_synthetic_dataset(n=3, h=8, w=8).targets)
    with pytest.raises(DataError, match="empty"):
        evaluate_run(tmp_path / "empty", tmp_path / "ref")
    with pytest.raises(DataError):
        evaluate_run(tmp_path / "missing", tmp_path / "ref")
    with pytest.raises(ValueError):
        parse_report("no metrics here")
