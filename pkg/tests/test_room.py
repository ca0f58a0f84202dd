import math
import warnings

import numpy as np
import pytest

from ara_nsd.room import (
    SPEED_OF_SOUND,
    RoomSpec,
    direct_path_rir,
    direct_path_signal,
    energy_db,
    equalize_energy,
    estimate_drr,
    estimate_t60,
    ism_rir,
    measure_rir,
    sabine_absorption,
    schroeder_edc,
)
from ara_nsd.signal import AudioSignal, convolve

FS = 16000


def decay(t60, seconds, noise_seed=None):
    t = np.arange(int(seconds * FS)) / FS
    env = 10.0 ** (-3.0 * t / t60)  # -60 dB of energy after t60
    if noise_seed is not None:
        env = env * np.random.default_rng(noise_seed).standard_normal(len(t))
    return AudioSignal(env, FS)


def test_spec_validation_and_geometry():
    spec = RoomSpec()
    assert spec.volume == pytest.approx(7 * 5.2 * 3)
    assert spec.surface == pytest.approx(2 * (7 * 5.2 + 7 * 3 + 5.2 * 3))
    assert spec.distance == pytest.approx(math.hypot(2.5, 0.4))
    with pytest.raises(ValueError, match="inside"):
        RoomSpec(source_pos=(8.0, 1.0, 1.0))
    with pytest.raises(ValueError, match="inside"):
        RoomSpec(mic_pos=(0.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        RoomSpec(dimensions=(0.0, 5.0, 3.0))
    with pytest.raises(ValueError):
        RoomSpec(target_t60=0.0)
    with pytest.raises(ValueError):
        RoomSpec(absorption=0.0)


def test_sabine_absorption_value():
    spec = RoomSpec(target_t60=1.0)
    a = 24 * math.log(10) * spec.volume / (343.0 * spec.surface * 1.0)
    assert sabine_absorption(spec) == pytest.approx(1 - math.exp(-a))
    assert sabine_absorption(RoomSpec(target_t60=0.5)) > sabine_absorption(spec)


# -- measurement oracles ----------------------------------------------------------


@pytest.mark.parametrize("t60", [0.3, 0.6, 1.2])
def test_t60_of_exponential_decay(t60):
    assert estimate_t60(decay(t60, 2 * t60)) == pytest.approx(t60, rel=0.02)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_t60_of_noise_modulated_decay(seed):
    assert estimate_t60(decay(0.5, 1.0, noise_seed=seed)) == pytest.approx(0.5, rel=0.10)


def test_edc_starts_at_zero_db():
    edc = schroeder_edc(decay(0.5, 1.0))
    assert edc[0] == 0.0
    assert np.all(np.diff(edc[np.isfinite(edc)]) <= 1e-12)


def test_impulse_has_no_decay():
    h = np.zeros(1000)
    h[10] = 1.0
    with pytest.raises(ValueError, match="decay range"):
        estimate_t60(AudioSignal(h, FS))
    with pytest.raises(ValueError):
        schroeder_edc(np.zeros(10))


def test_drr_cases():
    h = np.zeros(2000)
    h[100] = 1.0
    assert estimate_drr(AudioSignal(h, FS)) == math.inf
    h[1000] = 1.0
    assert estimate_drr(AudioSignal(h, FS)) == pytest.approx(0.0)
    h[1000] = 0.1
    assert estimate_drr(AudioSignal(h, FS)) == pytest.approx(20.0)
    with pytest.raises(ValueError):
        estimate_drr(AudioSignal(np.zeros(10), FS))


@pytest.mark.parametrize("target", [0.0, 17.9, -6.0])
def test_equalize_energy(target):
    h = decay(0.4, 0.5, noise_seed=3)
    out = equalize_energy(h, target)
    assert energy_db(out) == pytest.approx(target, abs=1e-6)
    np.testing.assert_allclose(out.samples / h.samples, out.samples[0] / h.samples[0])
    with pytest.raises(ValueError):
        equalize_energy(AudioSignal(np.zeros(5), FS))


def test_direct_path_rir_window():
    h = decay(0.4, 0.5, noise_seed=4).samples.copy()
    h[800] = 50.0
    d = direct_path_rir(AudioSignal(h, FS)).samples
    half = 40  # 2.5 ms at 16 kHz
    np.testing.assert_array_equal(d[800 - half : 800 + half + 1], h[800 - half : 800 + half + 1])
    assert not np.any(d[: 800 - half]) and not np.any(d[800 + half + 1 :])


# -- image-source simulation ---------------------------------------------------------


def test_anechoic_direct_path():
    spec = RoomSpec(absorption=1.0, max_order=0, target_t60=0.2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        h = ism_rir(spec).samples
    r = spec.distance
    # Band-limited fractional impulse: unit area, centred at r / c.
    assert h.sum() == pytest.approx(1 / (4 * math.pi * r), rel=0.01)
    assert abs(np.argmax(h) - r / SPEED_OF_SOUND * FS) <= 1.0
    assert estimate_drr(AudioSignal(h, FS)) > 40.0


@pytest.fixture(scope="module")
def half_second_rir():
    return ism_rir(RoomSpec(target_t60=0.5), rng_seed=0)


def test_calibrated_t60(half_second_rir):
    assert estimate_t60(half_second_rir) == pytest.approx(0.5, rel=0.15)
    assert len(half_second_rir) == int(math.ceil(0.75 * FS))


def test_rir_deterministic(half_second_rir):
    again = ism_rir(RoomSpec(target_t60=0.5), rng_seed=0)
    np.testing.assert_array_equal(again.samples, half_second_rir.samples)
    other = ism_rir(RoomSpec(target_t60=0.5), rng_seed=1)
    assert not np.array_equal(other.samples, half_second_rir.samples)


def test_more_absorption_decays_faster():
    lo = ism_rir(RoomSpec(target_t60=0.4, absorption=0.2, duration=0.6))
    hi = ism_rir(RoomSpec(target_t60=0.4, absorption=0.5, duration=0.6))
    assert estimate_t60(hi) < estimate_t60(lo)


def test_close_mic_has_higher_drr():
    near = ism_rir(RoomSpec(source_pos=(3.0, 2.6, 1.5), mic_pos=(3.5, 2.6, 1.5), target_t60=0.4))
    far = ism_rir(RoomSpec(source_pos=(1.0, 1.0, 1.5), mic_pos=(6.0, 4.2, 1.5), target_t60=0.4))
    assert estimate_drr(near) > estimate_drr(far) + 6.0


def test_low_order_warns():
    with pytest.warns(UserWarning, match="max_order"):
        ism_rir(RoomSpec(target_t60=0.5, max_order=2))


def test_measure_and_direct_signal(half_second_rir):
    m = measure_rir(half_second_rir)
    assert m.t60 == pytest.approx(estimate_t60(half_second_rir))
    assert m.total_energy_db == pytest.approx(energy_db(half_second_rir))
    x = AudioSignal(np.random.default_rng(0).standard_normal(1000), FS)
    s_dir = direct_path_signal(x, half_second_rir)
    ref = convolve(x, direct_path_rir(half_second_rir))
    np.testing.assert_array_equal(s_dir.samples, ref.samples)
    assert len(s_dir) == len(x) + len(half_second_rir) - 1
