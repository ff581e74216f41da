import gzip
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from otapcm import data
from otapcm.errors import FormatError


def test_idx_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    imgs = rng.integers(0, 256, size=(5, 4, 3)).astype(np.uint8)
    lbls = rng.integers(0, 10, size=5).astype(np.uint8)
    for suffix in ("", ".gz"):
        data.write_idx(tmp_path / f"i{suffix}", imgs)
        data.write_idx(tmp_path / f"l{suffix}", lbls)
        np.testing.assert_array_equal(data.read_idx(tmp_path / f"i{suffix}"), imgs)
        np.testing.assert_array_equal(data.read_idx(tmp_path / f"l{suffix}"), lbls)
    np.testing.assert_allclose(data.load_idx(tmp_path / "i.gz"), imgs / 255.0)


def test_idx_header_bytes(tmp_path):
    raw = bytes([0, 0, 8, 1]) + struct.pack(">I", 10) + bytes(range(10))
    (tmp_path / "labels").write_bytes(raw)
    assert data.read_idx(tmp_path / "labels").tolist() == list(range(10))
    raw = bytes([0, 0, 8, 3]) + struct.pack(">III", 2, 3, 3) + bytes(18)
    (tmp_path / "imgs").write_bytes(raw)
    assert data.read_idx(tmp_path / "imgs").shape == (2, 3, 3)


def test_idx_truncated_and_bad_magic(tmp_path):
    raw = bytes([0, 0, 8, 3]) + struct.pack(">III", 2, 3, 3) + bytes(10)
    (tmp_path / "short").write_bytes(raw)
    with pytest.raises(data.IdxLengthError):
        data.read_idx(tmp_path / "short")
    (tmp_path / "junk").write_bytes(b"\x01\x02\x03\x04" + bytes(8))
    with pytest.raises(FormatError):
        data.read_idx(tmp_path / "junk")


def test_load_mnist_from_env(tmp_path, monkeypatch):
    imgs = np.zeros((3, 28, 28), np.uint8)
    lbls = np.array([1, 2, 3], np.uint8)
    img_name, lbl_name = data.MNIST_FILES["test"]
    data.write_idx(tmp_path / (img_name + ".gz"), imgs)
    data.write_idx(tmp_path / lbl_name, lbls)
    monkeypatch.setenv(data.DATA_ROOT_ENV, str(tmp_path))
    ds = data.load_mnist(split="test", limit=2)
    assert ds.images.shape == (2, 28, 28) and ds.labels.tolist() == [1, 2]
    monkeypatch.delenv(data.DATA_ROOT_ENV)
    with pytest.raises(FileNotFoundError):
        data.load_mnist(split="test")


def test_rotation_identity_and_zero():
    img = np.random.default_rng(0).uniform(size=(9, 9))
    np.testing.assert_array_equal(data.rotate(img, 0.0), img)
    assert not data.rotate(np.zeros((9, 9)), 37.0).any()


@pytest.mark.parametrize("side", [8, 9, 28])
def test_rotation_180_is_index_reversal(side):
    img = np.random.default_rng(side).uniform(size=(side, side))
    oracle = np.empty_like(img)
    for r in range(side):
        for c in range(side):
            oracle[r, c] = img[side - 1 - r, side - 1 - c]
    np.testing.assert_allclose(data.rotate(img, 180.0), oracle, atol=1e-12)
    np.testing.assert_allclose(data.rotate(img, 180.0, order=0), oracle, atol=1e-12)


def test_rotation_90_is_counter_clockwise():
    img = np.random.default_rng(1).uniform(size=(7, 7))
    np.testing.assert_allclose(data.rotate(img, 90.0), np.rot90(img), atol=1e-12)


def test_rotation_rejects_bad_inputs():
    with pytest.raises(ValueError):
        data.rotate(np.zeros((3, 4)), 10.0)
    with pytest.raises(ValueError):
        data.rotate(np.zeros((3, 3)), 10.0, order=3)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 360), st.integers(0, 1))
def test_rotation_stays_in_unit_range(angle, order):
    img = np.random.default_rng(2).uniform(size=(10, 10))
    out = data.rotate(img, angle, order)
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_angles_uniform_chi_square():
    angles = data.draw_angles(np.random.default_rng(3), 100_000)
    counts, _ = np.histogram(angles, bins=36, range=(0, 180))
    assert stats.chisquare(counts).pvalue > 0.01
    assert angles.min() >= 0 and angles.max() <= 180


def test_views_shapes_and_determinism():
    imgs = np.random.default_rng(4).uniform(size=(6, 28, 28))
    a = data.make_views_batch(imgs, 3, np.random.default_rng(9))
    b = data.make_views_batch(imgs, 3, np.random.default_rng(9))
    assert a.views.shape == (3, 6, 28, 28) and a.angles.shape == (3, 6)
    np.testing.assert_array_equal(a.views, b.views)
    flat = data.make_views_batch(imgs, 2, np.random.default_rng(0), rotate_views=False)
    np.testing.assert_array_equal(flat.views[1], imgs)
    single = data.make_views(imgs[0], 1, np.random.default_rng(0), max_deg=0.0)
    np.testing.assert_array_equal(single.views[0], imgs[0])
    with pytest.raises(ValueError):
        data.make_views(imgs[0], 0, np.random.default_rng(0))


def test_synthetic_blobs_separable():
    ds = data.synthetic_blobs(300, 3, 5, seed=0, separation=1e6)
    x = ds.images.reshape(len(ds), -1)
    onehot = np.eye(3)[ds.labels]
    w, *_ = np.linalg.lstsq(np.c_[x, np.ones(len(x))], onehot, rcond=None)
    pred = (np.c_[x, np.ones(len(x))] @ w).argmax(axis=1)
    assert np.mean(pred == ds.labels) == 1.0
    assert np.bincount(ds.labels).tolist() == [100, 100, 100]


def test_dataset_validation():
    with pytest.raises(ValueError):
        data.Dataset(np.zeros((3, 2, 2)), np.zeros(2, int), "x")
