import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from otapcm import pcm
from otapcm.streams import stream

P = pcm.PcmParams()
P50 = pcm.PcmParams(g_max=50.0)


def test_sigma_prog_reference_points():
    assert pcm.sigma_prog(0.0) == 0.2635
    assert pcm.sigma_prog(2.0 * P.g_max) == 0.0
    vertex = 1.9650 / (2 * 1.1731)
    assert pcm.sigma_prog(vertex * P.g_max) == pytest.approx(1.08636, abs=1e-5)
    g = np.linspace(0, 2 * P.g_max, 1001)
    assert pcm.sigma_prog(g).max() <= pcm.sigma_prog(vertex * P.g_max) + 1e-12


def test_drift_closed_forms():
    assert pcm.drift(10.0, P.t_c, P, 0.3) == pytest.approx(10.0, rel=1e-15)
    assert pcm.drift(10.0, 10 * P.t_c, P, 0.05) == pytest.approx(10 * 10 ** -0.05, rel=1e-12)
    assert pcm.mu_nu(25.0) == pytest.approx(0.049)
    assert -0.0155 * np.log(25) + 0.0244 == pytest.approx(-0.02549, abs=1e-5)


def test_drift_coefficient_clamps():
    g = np.logspace(-3, np.log10(25), 200)
    assert np.all((pcm.mu_nu(g) >= 0.049) & (pcm.mu_nu(g) <= 0.1))
    assert np.all((pcm.sigma_nu(g) >= 0.008) & (pcm.sigma_nu(g) <= 0.045))


def test_read_noise_closed_forms():
    assert pcm.q_s(25.0) == pytest.approx(0.0088 / 25 ** 0.65, rel=1e-12)
    assert pcm.q_s(25.0) == pytest.approx(1.0858e-3, rel=5e-4)
    assert pcm.q_s(1e-9) == 0.2
    expect = 10 * pcm.q_s(25.0) * np.sqrt(np.log(21 / 5e-7))
    assert pcm.sigma_read(10.0, 25.0, 1.0) == pytest.approx(expect, rel=1e-12)


def test_sigma_read_rejects_degenerate_log():
    with pytest.raises(ValueError):
        pcm.sigma_read(1.0, 1.0, 0.0, P.replace(t_c=1e-7))


@pytest.mark.parametrize("g_t", [2.0, 8.0, 15.0, 20.0])
def test_programming_noise_monte_carlo(g_t):
    g = pcm.program(np.full(400_000, g_t), P, np.random.default_rng(int(g_t)))
    assert g.std() == pytest.approx(float(pcm.sigma_prog(g_t)), rel=0.02)
    assert g.mean() == pytest.approx(g_t, abs=4 * float(pcm.sigma_prog(g_t)) / np.sqrt(g.size))


@pytest.mark.parametrize("g_t", [2.0, 10.0, 20.0])
def test_read_noise_monte_carlo(g_t):
    t = 3600.0
    g = pcm.read(np.full(400_000, g_t), t, g_t, P, np.random.default_rng(7))
    assert g.std() == pytest.approx(float(pcm.sigma_read(g_t, g_t, t)), rel=0.02)


def test_noise_switches_and_determinism():
    g = np.linspace(0.5, 20, 50)
    quiet = P.noiseless()
    assert np.array_equal(pcm.program(g, quiet, np.random.default_rng(0)), g)
    assert np.array_equal(pcm.read(g, 100.0, g, quiet, np.random.default_rng(0)), g)
    assert np.array_equal(pcm.sample_nu(g, quiet, np.random.default_rng(0)), np.zeros_like(g))
    a = pcm.program(g, P, stream(3, "pcm", 0, 0))
    b = pcm.program(g, P, stream(3, "pcm", 0, 0))
    assert np.array_equal(a, b)


def test_conductances_stay_in_range():
    g = np.full(100_000, 24.9)
    out = pcm.program(g, P, np.random.default_rng(1))
    assert out.min() >= 0 and out.max() <= P.g_max


def test_time_before_programming_rejected():
    with pytest.raises(ValueError):
        pcm.drift(1.0, P.t_c / 2, P, 0.05)
    with pytest.raises(ValueError):
        pcm.read(1.0, 0.0, 1.0, P, np.random.default_rng(0))


def test_mapping_examples():
    xbar = pcm.map_weights([2.0, -4.0], P50)
    np.testing.assert_array_equal(xbar.g_pos, [25.0, 0.0])
    np.testing.assert_array_equal(xbar.g_neg, [0.0, 50.0])
    assert pcm.reverse_map(xbar, [25.0], [0.0])[0] == pytest.approx(2.0)
    assert pcm.reverse_map(xbar, [25.0 + 3], [3.0])[0] == pytest.approx(2.0)
    assert pcm.map_weights([0.5], P50).g_pos[0] == 50.0
    with pytest.raises(ValueError):
        pcm.map_weights(np.zeros(3))


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.integers(1, 40),
              elements=st.one_of(st.just(0.0), st.floats(1e-6, 5), st.floats(-5, -1e-6)))
       .filter(lambda w: np.any(w != 0)))
def test_mapping_sign_pattern_and_round_trip(w):
    xbar = pcm.map_weights(w, P)
    assert np.array_equal(np.sign(xbar.g_pos - xbar.g_neg), np.sign(w))
    assert np.all((xbar.g_pos == 0) | (xbar.g_neg == 0))
    np.testing.assert_allclose(pcm.reverse_map(xbar, xbar.g_pos, xbar.g_neg), w, rtol=1e-12, atol=0)


def test_noiseless_chain_is_identity():
    rng = np.random.default_rng(5)
    w = rng.normal(size=(10, 26))
    out = pcm.noisy_weights(w, P.t_c, P.noiseless(), rng)
    np.testing.assert_allclose(out, w, rtol=1e-12, atol=0)


def test_idle_cells_stay_zero():
    w = np.array([[1.0, 0.0], [-2.0, 0.0]])
    prog = pcm.program_crossbar(pcm.map_weights(w, P), np.random.default_rng(0))
    for _ in range(5):
        out = prog.read_weights(1e6, np.random.default_rng(1))
        assert np.all(out[:, 1] == 0)


def test_programmed_weights_unbiased_at_t_c():
    w = np.array([0.3, -0.7, 1.0, -0.05])
    quiet_read = P.replace(drift=False, read_noise=False)
    draws = np.array([pcm.noisy_weights(w, P.t_c, quiet_read, np.random.default_rng(i)) for i in range(10_000)])
    se = draws.std(axis=0) / np.sqrt(len(draws))
    inner = np.abs(w) < 1.0  # the max-|w| cell sits at g_max, where clipping biases it low
    assert np.all(np.abs(draws.mean(axis=0) - w)[inner] <= 3 * se[inner])
    assert draws.mean(axis=0)[~inner] < 1.0


def test_drift_shrinks_weights_over_a_year():
    w = np.random.default_rng(2).normal(size=500)
    prog = pcm.program_crossbar(pcm.map_weights(w, P), np.random.default_rng(3))
    early = np.abs(prog.read_weights(P.t_c + 1.0, np.random.default_rng(4)))
    late = np.abs(prog.read_weights(P.t_c + 31_536_000.0, np.random.default_rng(4)))
    assert np.median(late) < np.median(early)
    # nu is cached at programming time: drifted conductances are repeatable
    assert np.array_equal(prog.drifted(1e4)[0], prog.drifted(1e4)[0])


def test_params_validation_and_describe():
    with pytest.raises(ValueError):
        pcm.PcmParams(g_min=5, g_max=1)
    with pytest.raises(ValueError):
        pcm.sigma_prog(-1.0)
    d = P.describe()
    assert d["g_max"] == 25.0 and d["t_c"] == 20.0 and d["t_read"] == 250e-9
