import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from ara_nsd.ins import (
    InsConfig,
    default_scales,
    hermite_tapers,
    ins_profile,
    ins_vector,
    make_surrogates,
    multitaper_spectrogram,
)
from ara_nsd.signal import AudioSignal

FS = 16000
SMALL = InsConfig(n_surrogates=20, scales=(0.05, 0.1, 0.2))


def test_default_scales():
    s = default_scales()
    assert len(s) == 10
    assert s[0] == pytest.approx(0.02)
    assert s[-1] == pytest.approx(0.49)
    assert all(a < b for a, b in zip(s, s[1:]))


def test_config_validation():
    with pytest.raises(ValueError):
        InsConfig(n_surrogates=1)
    with pytest.raises(ValueError):
        InsConfig(n_tapers=0)
    with pytest.raises(ValueError):
        InsConfig(confidence=1.0)
    with pytest.raises(ValueError):
        InsConfig(scales=(0.1, 1.2))


def test_fast_config_windows_fit_a_frame():
    cfg = InsConfig.fast(512)
    assert cfg.n_surrogates == 20
    wins = [round(s * 512) for s in cfg.scales]
    assert min(wins) >= 8 and max(wins) <= 256


@pytest.mark.parametrize("w,k", [(64, 5), (101, 3), (16, 1)])
def test_tapers_orthonormal(w, k):
    t = hermite_tapers(w, k)
    assert t.shape == (k, w)
    np.testing.assert_allclose(t @ t.T, np.eye(k), atol=1e-10)


def test_first_taper_is_gaussian():
    t = hermite_tapers(129, 1)[0]
    grid = np.linspace(-6, 6, 129)
    g = np.exp(-0.5 * grid**2)
    np.testing.assert_allclose(t, g / np.linalg.norm(g), atol=1e-12)
    # Even and odd symmetry alternate with the taper order.
    t5 = hermite_tapers(129, 5)
    for k in range(5):
        np.testing.assert_allclose(t5[k][::-1], (-1) ** k * t5[k], atol=1e-9)


def test_single_taper_matches_direct_periodogram():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(1000)
    w = 128
    tfr = multitaper_spectrogram(x, w, n_tapers=1, positions=[0, 100])
    taper = hermite_tapers(w, 1)[0]
    for row, p in zip(tfr.power, (0, 100)):
        spec = np.abs(np.fft.rfft(x[p : p + w] * taper)) ** 2 / w
        spec[1:-1] *= 2
        np.testing.assert_allclose(row, spec, rtol=1e-10)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), w=st.sampled_from([37, 64, 97, 128]))
def test_rows_hold_tapered_energy(seed, w):
    x = np.random.default_rng(seed).standard_normal(600)
    tfr = multitaper_spectrogram(x, w, n_tapers=5)
    tapers = hermite_tapers(w, 5)
    for row, p in zip(tfr.power, tfr.positions):
        expected = np.mean(np.sum((x[p : p + w] * tapers) ** 2, axis=1))
        assert row.sum() == pytest.approx(expected, rel=1e-9)


def test_tone_concentrates_at_its_frequency():
    n, w = 4096, 256
    t = np.arange(n) / FS
    x = np.sin(2 * np.pi * 1000.0 * t)
    tfr = multitaper_spectrogram(AudioSignal(x, FS), w)
    nfft = (tfr.power.shape[1] - 1) * 2
    freqs = np.fft.rfftfreq(nfft, 1 / FS)
    mean = tfr.power.mean(axis=0)
    # Five Hermite tapers on a +-6 support spread a line over about
    # +-8 window-resolution bins.
    near = np.abs(freqs - 1000.0) <= 8 * FS / w
    assert mean[near].sum() / mean.sum() > 0.9999
    assert abs(freqs[np.argmax(mean)] - 1000.0) <= FS / nfft


def test_spectrogram_errors():
    with pytest.raises(ValueError):
        multitaper_spectrogram(np.ones(10), 20)
    with pytest.raises(ValueError):
        multitaper_spectrogram(np.ones(100), 20, positions=[90])
    with pytest.raises(ValueError):
        multitaper_spectrogram(np.ones(100), 20, n_tapers=0)


# -- surrogates ---------------------------------------------------------------


@pytest.mark.parametrize("n", [1000, 1001])
def test_surrogates_keep_magnitude_spectrum(n):
    x = AudioSignal(np.random.default_rng(1).standard_normal(n), FS)
    surr = make_surrogates(x, InsConfig(n_surrogates=5))
    ref = np.abs(np.fft.rfft(x.samples))
    for s in surr:
        np.testing.assert_allclose(np.abs(np.fft.rfft(s.samples)), ref, rtol=1e-9, atol=1e-9)
        assert abs(s.energy - x.energy) <= 1e-9 * x.energy
        assert np.mean(s.samples) == pytest.approx(np.mean(x.samples), abs=1e-12)
        assert not np.allclose(s.samples, x.samples)


def test_surrogates_deterministic():
    x = AudioSignal(np.random.default_rng(2).standard_normal(500), FS)
    a = make_surrogates(x, InsConfig(n_surrogates=4, rng_seed=7))
    b = make_surrogates(x, InsConfig(n_surrogates=4, rng_seed=7))
    c = make_surrogates(x, InsConfig(n_surrogates=4, rng_seed=8))
    for sa, sb, sc in zip(a, b, c):
        np.testing.assert_array_equal(sa.samples, sb.samples)
        assert not np.array_equal(sa.samples, sc.samples)
    # Surrogate j does not depend on how many are requested.
    more = make_surrogates(x, InsConfig(n_surrogates=6, rng_seed=7))
    np.testing.assert_array_equal(more[3].samples, a[3].samples)


def test_surrogate_errors():
    with pytest.raises(ValueError):
        make_surrogates(AudioSignal(np.ones(8), FS), InsConfig())
    with pytest.raises(ValueError):
        make_surrogates(AudioSignal(np.zeros(100), FS), InsConfig())


# -- INS ----------------------------------------------------------------------


def test_profile_shape_and_rows():
    x = np.random.default_rng(3).standard_normal(2048)
    prof = ins_profile(AudioSignal(x, FS), SMALL)
    assert prof.ins.shape == prof.gamma.shape == (3,)
    assert np.all(prof.gamma > 0)
    rows = list(prof.rows())
    assert len(rows) == 3
    assert {r[3] for r in rows} <= {"stationary", "nonstationary"}
    assert prof.max_ins == pytest.approx(prof.ins.max())


def test_profile_deterministic():
    x = np.random.default_rng(4).standard_normal(2048)
    a = ins_profile(x, SMALL)
    b = ins_profile(x, SMALL)
    np.testing.assert_array_equal(a.ins, b.ins)
    np.testing.assert_array_equal(a.gamma, b.gamma)


@pytest.mark.parametrize("gain", [1e-3, 7.5])
def test_amplitude_scale_invariance(gain):
    x = np.random.default_rng(5).standard_normal(2048)
    x[:1024] *= 0.1
    a = ins_profile(x, SMALL)
    b = ins_profile(gain * x, SMALL)
    np.testing.assert_allclose(b.ins, a.ins, rtol=1e-6)
    np.testing.assert_allclose(b.gamma, a.gamma, rtol=1e-6)


def test_silence_is_stationary():
    prof = ins_profile(np.zeros(2048), SMALL)
    np.testing.assert_array_equal(prof.ins, 0.0)
    expected = np.sqrt(stats.gamma.ppf(0.95, 1.0))
    np.testing.assert_allclose(prof.gamma, expected)
    assert not prof.is_nonstationary.any()


def test_abrupt_onset_is_nonstationary():
    x = np.random.default_rng(6).standard_normal(4096)
    x[:2048] = 0.0
    prof = ins_profile(x, InsConfig(n_surrogates=30))
    assert prof.is_nonstationary.any()
    assert prof.max_ins > 3.0


def test_white_noise_mostly_stationary():
    hits = 0
    for seed in range(10):
        x = np.random.default_rng(100 + seed).standard_normal(4096)
        hits += ins_profile(x, InsConfig(n_surrogates=30)).is_nonstationary.sum()
    # Ten signals with ten scales: a 5 % test should flag only a handful.
    assert hits <= 20


def test_ins_vector_matches_profile():
    x = np.random.default_rng(7).standard_normal(1024)
    np.testing.assert_array_equal(ins_vector(x, SMALL), ins_profile(x, SMALL).ins)


def test_fast_mode_on_one_frame():
    x = np.random.default_rng(8).standard_normal(512)
    v = ins_vector(x, InsConfig.fast(512))
    assert v.shape == (4,)
    assert np.all(np.isfinite(v)) and np.all(v >= 0)


def test_profile_errors():
    with pytest.raises(ValueError):
        ins_profile(np.ones(10), InsConfig(scales=(0.5,)))
    with pytest.raises(ValueError, match="too large"):
        ins_profile(np.random.default_rng(0).standard_normal(100), InsConfig(scales=(0.9,)))
