import math

import numpy as np
import pytest

import eyeadapt as ea


def test_render_and_generate():
    img, mask = ea.render_eye(3, "real", 48, 64)
    assert img.shape == (48, 64) and img.dtype == np.float32
    assert mask.shape == (48, 64) and mask.max() < 4
    img2, mask2 = ea.render_eye(3, "real", 48, 64)
    assert np.array_equal(img, img2) and np.array_equal(mask, mask2)

    ds = ea.generate_dataset(4, "synthetic", 7, 32, 32)
    assert len(ds) == 4
    ids = [s[0] for s in ds]
    assert len(set(ids)) == 4
    again = ea.generate_dataset(4, "synthetic", 7, 32, 32)
    assert all(np.array_equal(a[1], b[1]) for a, b in zip(ds, again))


def test_augment_keeps_shapes_and_classes():
    _, img, mask = ea.generate_dataset(1, "synthetic", 1)[0]
    out_img, out_mask = ea.augment(img, mask, 5)
    assert out_img.shape == img.shape
    assert out_mask.max() < 4


def test_miou_and_mmiou():
    gt = np.array([[0, 0], [1, 1]], dtype=np.uint8)
    pred = np.array([[0, 1], [1, 1]], dtype=np.uint8)
    assert ea.miou(gt, gt) == 1.0
    assert ea.miou(pred, gt) == pytest.approx((0.5 + 2 / 3) / 2)
    mean, std = ea.mmiou([0.4, 0.6])
    assert mean == pytest.approx(0.5)
    assert std == pytest.approx(math.sqrt(0.02))
    assert ea.mmiou([0.7])[1] is None


def test_pca_matches_numpy():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(20, 5))
    out = ea.pca_project(pts, 2)
    centered = pts - pts.mean(axis=0)
    vals = np.linalg.eigvalsh(np.cov(centered, rowvar=False))[::-1]
    assert np.allclose(out["explained_ratio"], vals[:2] / vals.sum())
    assert np.array(out["coords"]).shape == (20, 2)


def test_class_stats_and_sobel():
    img = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=np.float32)
    mask = np.full((2, 2), 2, dtype=np.uint8)
    mean, var, count = ea.class_stats(img, mask)
    assert mean[2] == pytest.approx(0.5) and var[2] == pytest.approx(0.25) and count[2] == 4

    step = np.zeros((6, 8))
    step[:, 4:] = 1.0
    e = ea.sobel_edges(step)
    assert e.shape == (2, 6, 8)
    assert e[0, 2, 3] == pytest.approx(4.0) and e[0, 2, 0] == 0.0
    assert np.abs(e[1]).max() == 0.0


def test_losses_and_schedule():
    assert ea.contrastive_loss(0.4, False, 1.0) == pytest.approx(0.36)
    assert ea.domain_bce_loss(np.array([0.5, 0.5]), np.array([0.0, 1.0])) == pytest.approx(math.log(2))
    a = np.zeros((1, 1, 4, 4))
    assert ea.cycle_loss(a, a + 0.1, a, a + 0.1) == pytest.approx(0.2)
    assert ea.epoch_schedule(64, 0) == 1600
    assert ea.epoch_schedule(200, 0, 0.05) == 40
    d = ea.distance_transform(np.eye(3, dtype=np.uint8))
    assert d[0, 2] == pytest.approx(math.sqrt(2))
    assert ea.git_blob_sha1(b"hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a"


def test_errors_map_to_python_exceptions():
    with pytest.raises(ea.ConfigError):
        ea.generate_dataset(0, "synthetic", 1)
    with pytest.raises(ValueError):
        ea.render_eye(1, "cartoon")
    with pytest.raises(ea.ConfigError):
        ea.contrastive_loss(-1.0, True, 1.0)
