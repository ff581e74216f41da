import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from otapcm import ota
from otapcm.errors import StateError

from fdcheck import numeric_grad, rel_err


def test_p_one_is_sum():
    rng = np.random.default_rng(0)
    f = rng.uniform(0, 2, size=(4, 3, 5))
    fused, _, _ = ota.fuse_lp(f, 1.0)
    np.testing.assert_allclose(fused, f.sum(axis=0), rtol=1e-12)


def test_large_p_approaches_max():
    rng = np.random.default_rng(1)
    f = rng.uniform(0.1, 1, size=(12, 500))
    fused, _, _ = ota.fuse_lp(f, 64.0)
    rel = (fused - f.max(axis=0)) / f.max(axis=0)
    assert np.all(rel <= 12 ** (1 / 64) - 1 + 1e-12)
    assert np.median(rel) < 1e-3


def test_large_p_tied_sensors_hit_upper_bound():
    f = np.full((12, 1), 0.5)
    fused, _, _ = ota.fuse_lp(f, 64.0)
    assert fused[0] == pytest.approx(0.5 * 12 ** (1 / 64), rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 6)),
              elements=st.one_of(st.just(0.0), st.floats(1e-6, 10))),
       st.floats(0.5, 20))
def test_sandwich_bound(f, p):
    fused, _, _ = ota.fuse_lp(f, p)
    mx = f.max(axis=0)
    m = f.shape[0]
    assert np.all(fused >= mx * (1 - 1e-12) - 1e-300)
    assert np.all(fused <= m ** (1 / p) * mx * (1 + 1e-12) + 1e-300)


def test_noise_variance_monte_carlo():
    rng = np.random.default_rng(2)
    x = rng.uniform(0, 1, size=(3, 1, 200_000))
    y, real = ota.mac_transmit(x, snr_db=5.0, rng=rng)
    clean = x.sum(axis=0)
    expect = np.mean(clean ** 2) / 10 ** 0.5
    assert real.sigma2.item() == pytest.approx(expect, rel=1e-12)
    assert np.var(y - clean) == pytest.approx(expect, rel=0.01)


def test_noise_reference_modes():
    s = np.array([[1.0, 1.0], [3.0, 3.0]])
    assert ota.channel_noise(s, 0.0, np.random.default_rng(0), "example").sigma2.ravel().tolist() == [1.0, 9.0]
    assert ota.channel_noise(s, 0.0, np.random.default_rng(0), "batch").sigma2.ravel().tolist() == [5.0, 5.0]
    with pytest.raises(ValueError):
        ota.channel_noise(s, 0.0, np.random.default_rng(0), "frame")


def test_noiseless_channel_and_pinned_sigma():
    x = np.ones((2, 1, 4))
    y, real = ota.mac_transmit(x)
    np.testing.assert_array_equal(y, 2 * np.ones((1, 4)))
    assert np.all(real.sigma2 == 0)
    y, real = ota.mac_transmit(x, sigma2=0.0)
    np.testing.assert_array_equal(y, 2 * np.ones((1, 4)))
    with pytest.raises(ValueError):
        ota.mac_transmit(x, sigma2=-1.0, rng=np.random.default_rng(0))


def test_postprocess_clamps_negative():
    assert ota.postprocess(np.array([-1.0, 4.0]), 2.0).tolist() == [0.0, 2.0]


def test_preprocess_rejects_negative_features():
    with pytest.raises(ValueError):
        ota.preprocess(np.array([-1.0]), 1.0)


def test_average_and_exact_max():
    f = np.array([[[1.0, 4.0]], [[3.0, 2.0]]])
    fused, _ = ota.fuse_average(f)
    np.testing.assert_allclose(fused, [[2.0, 3.0]])
    fused, received, _, uses = ota.fuse_exact_max(f)
    np.testing.assert_allclose(fused, [[3.0, 4.0]])
    assert uses == 2
    assert ota.FusionSpec("exact_max").channel_uses(7) == 7
    assert ota.FusionSpec("lp").channel_uses(7) == 1


def test_exact_max_noise_matches_ota_variance():
    rng = np.random.default_rng(3)
    f = rng.uniform(0, 1, size=(4, 1, 100_000))
    _, received, real, _ = ota.fuse_exact_max(f, 10.0, rng)
    expect = np.mean(f.sum(axis=0) ** 2) / 10.0
    assert np.var(received - f) == pytest.approx(expect, rel=0.01)


def _points(rng, m, d):
    f = rng.uniform(0.2, 2.0, size=(m, 1, d))
    noise = rng.normal(0, 0.05, size=(1, d))
    return f, noise


@pytest.mark.parametrize("p", [0.7, 1.0, 1.5, 3.0])
def test_fusion_gradients_match_finite_differences(p):
    rng = np.random.default_rng(int(p * 10))
    for _ in range(25):
        f, noise = _points(rng, 3, 4)
        y = np.power(f, p).sum(axis=0) + noise
        d_f, d_p = ota.fusion_gradients(y, f, p)

        def fused_sum():
            return float(np.sum(ota.postprocess(np.power(f, p).sum(axis=0) + noise, p)))

        assert rel_err(d_f, numeric_grad(fused_sum, f)) <= 1e-4
        pp = np.array([p])

        def fused_p():
            return float(np.sum(ota.postprocess(np.power(f, pp[0]).sum(axis=0) + noise, pp[0])))

        assert rel_err(d_p.sum(), numeric_grad(fused_p, pp)[0]) <= 1e-4


def test_gradient_conventions_at_boundaries():
    f = np.array([[[0.0, 1.0]], [[0.0, 2.0]]])
    y = np.array([[-0.1, 3.0]])
    d_f, d_p = ota.fusion_gradients(y, f, 2.0)
    assert np.all(d_f[:, :, 0] == 0) and d_p[0, 0] == 0
    assert np.all(np.isfinite(d_f)) and np.all(np.isfinite(d_p))


def test_fusion_layer_backward_shapes_and_errors():
    fusion = ota.Fusion("lp")
    with pytest.raises(StateError):
        fusion.backward(np.zeros((1, 2)))
    f = np.ones((3, 2, 4))
    out = fusion.forward(f, 1.0)
    d_f, d_p = fusion.backward(np.ones_like(out))
    assert d_f.shape == f.shape and isinstance(d_p, float)
    avg = ota.Fusion("average")
    avg.forward(f, 1.0)
    np.testing.assert_allclose(avg.backward(np.ones((2, 4)))[0], np.full(f.shape, 1 / 3))
    with pytest.raises(ValueError):
        ota.Fusion("median")


def test_snr_range_draw_is_uniform_in_linear_scale():
    ch = ota.ChannelSpec(snr_range_db=(0.0, 10.0))
    rng = np.random.default_rng(4)
    lin = 10 ** (np.array([ch.draw_snr_db(rng) for _ in range(20000)]) / 10)
    assert lin.min() >= 1.0 and lin.max() <= 10.0
    assert lin.mean() == pytest.approx(5.5, rel=0.01)


def test_channel_spec_validation():
    with pytest.raises(ValueError):
        ota.ChannelSpec(snr_range_db=(10.0, 0.0))
    with pytest.raises(ValueError):
        ota.ChannelSpec(float("inf"))
    with pytest.raises(ValueError):
        ota.FusionSpec(p=0.0)
    assert ota.ChannelSpec().noiseless
