"""Short-time speech intelligibility index and evaluation helpers.

The ESII here follows the SII band-audibility recipe on short windows:
the reference and the distortion are split into one-third-octave bands,
band levels are measured on 12.5 ms windows, each band's audibility is the
clamped speech-to-distortion level difference, and the importance-weighted
sum is averaged over windows.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .signal import AudioSignal

__all__ = [
    "THIRD_OCTAVE_CENTERS",
    "BAND_IMPORTANCE",
    "EsiiConfig",
    "IntelligibilityResult",
    "extract_distortion",
    "band_signals",
    "esii",
    "normalized_esii",
    "delta_score",
    "speech_shaped_noise",
    "band_levels_db",
]

# One-third-octave band centers (Hz) and the average-speech band-importance
# function of the SII standard for that band division.
THIRD_OCTAVE_CENTERS = (
    160, 200, 250, 315, 400, 500, 630, 800, 1000,
    1250, 1600, 2000, 2500, 3150, 4000, 5000, 6300, 8000,
)
BAND_IMPORTANCE = (
    0.0083, 0.0095, 0.0150, 0.0289, 0.0440, 0.0578, 0.0653, 0.0711, 0.0818,
    0.0844, 0.0882, 0.0898, 0.0868, 0.0844, 0.0771, 0.0527, 0.0364, 0.0185,
)

_LEVEL_FLOOR = 1e-30


@dataclass(frozen=True)
class EsiiConfig:
    band_centers: tuple[float, ...] = THIRD_OCTAVE_CENTERS
    band_importance: tuple[float, ...] = BAND_IMPORTANCE
    window_ms: float = 12.5
    dynamic_range_db: float = 30.0
    filter_order: int = 3

    def __post_init__(self):
        if len(self.band_centers) != len(self.band_importance):
            raise ValueError("one importance weight per band is required")
        w = np.asarray(self.band_importance)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-6:
            raise ValueError("band importance must be nonnegative and sum to 1")
        if self.window_ms <= 0 or self.dynamic_range_db <= 0:
            raise ValueError("window_ms and dynamic_range_db must be positive")


@dataclass
class IntelligibilityResult:
    raw_esii: float
    normalized_esii: float
    delta_esii: float = 0.0
    # Scores from external tools (e.g. other intelligibility or quality
    # measures) can be attached here and are carried into reports.
    extra: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.raw_esii <= 1.0:
            raise ValueError("raw_esii must be in [0, 1]")


def extract_distortion(s: AudioSignal, s_dir: AudioSignal, trim: bool = False) -> AudioSignal:
    """``s - s_dir``; with ``trim`` both are cut to the shorter length first."""
    if s.sample_rate != s_dir.sample_rate:
        raise ValueError("sample rate mismatch")
    a, b = s.samples, s_dir.samples
    if trim:
        n = min(len(a), len(b))
        a, b = a[:n], b[:n]
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    return AudioSignal(a - b, s.sample_rate)


def _band_filters(fs: int, cfg: EsiiConfig):
    nyq = fs / 2.0
    filters, weights = [], []
    for fc, w in zip(cfg.band_centers, cfg.band_importance):
        lo, hi = fc * 2.0 ** (-1 / 6), fc * 2.0 ** (1 / 6)
        if lo >= nyq:
            continue
        if hi >= nyq:
            sos = sps.butter(cfg.filter_order, lo, btype="highpass", fs=fs, output="sos")
        else:
            sos = sps.butter(cfg.filter_order, [lo, hi], btype="bandpass", fs=fs, output="sos")
        filters.append(sos)
        weights.append(w)
    if not filters:
        raise ValueError(f"no analysis band below Nyquist at {fs} Hz")
    weights = np.asarray(weights)
    return filters, weights / weights.sum()


def band_signals(x: np.ndarray, fs: int, cfg: EsiiConfig = EsiiConfig()) -> np.ndarray:
    """One-third-octave filtered copies of ``x``, shape ``(n_bands, n)``."""
    filters, _ = _band_filters(fs, cfg)
    return np.stack([sps.sosfilt(sos, x) for sos in filters])


def _window_power(bands: np.ndarray, win: int) -> np.ndarray:
    n_win = bands.shape[1] // win
    return (bands[:, : n_win * win] ** 2).reshape(bands.shape[0], n_win, win).mean(axis=2)


def band_levels_db(x: AudioSignal, cfg: EsiiConfig = EsiiConfig()) -> np.ndarray:
    """Long-term level of each band in dB."""
    bands = band_signals(x.samples, x.sample_rate, cfg)
    return 10.0 * np.log10(np.mean(bands**2, axis=1) + _LEVEL_FLOOR)


def esii(speech_ref: AudioSignal, distortion: AudioSignal, cfg: EsiiConfig = EsiiConfig()) -> float:
    """Extended SII of ``speech_ref`` masked by ``distortion``, in [0, 1]."""
    if speech_ref.sample_rate != distortion.sample_rate:
        raise ValueError("sample rate mismatch")
    if len(speech_ref) != len(distortion):
        raise ValueError(f"length mismatch: {len(speech_ref)} vs {len(distortion)}")
    fs = speech_ref.sample_rate
    win = int(round(cfg.window_ms * 1e-3 * fs))
    if win < 1 or len(speech_ref) < win:
        raise ValueError("signal shorter than one analysis window")
    if not np.any(speech_ref.samples):
        raise ValueError("reference is silent")

    filters, weights = _band_filters(fs, cfg)
    ps = _window_power(np.stack([sps.sosfilt(f, speech_ref.samples) for f in filters]), win)
    pn = _window_power(np.stack([sps.sosfilt(f, distortion.samples) for f in filters]), win)
    diff = 10.0 * np.log10((ps + _LEVEL_FLOOR) / (pn + _LEVEL_FLOOR))
    half = cfg.dynamic_range_db / 2.0
    audibility = np.clip((diff + half) / cfg.dynamic_range_db, 0.0, 1.0)
    per_window = weights @ audibility
    return float(np.clip(per_window.mean(), 0.0, 1.0))


def normalized_esii(raw: float, reference_raw: float) -> float:
    """``raw / reference_raw`` clamped to [0, 1.5]."""
    if reference_raw <= 0:
        raise ValueError("reference score must be positive")
    r = raw / reference_raw
    if r > 1.0:
        warnings.warn(f"normalized score {r:.3f} exceeds the reference", stacklevel=2)
    return float(min(max(r, 0.0), 1.5))


def delta_score(processed_norm: float, unprocessed_norm: float) -> float:
    """Improvement in units of 1e-2."""
    return (processed_norm - unprocessed_norm) * 100.0


def speech_shaped_noise(reference: AudioSignal, length: int, seed: int = 0, nperseg: int = 512) -> AudioSignal:
    """Gaussian noise with the long-term average spectrum of ``reference``.

    The output RMS equals the reference RMS.
    """
    x = reference.samples
    if len(x) < 16 or not np.any(x):
        raise ValueError("reference must be a non-trivial signal")
    if length < 1:
        raise ValueError("length must be positive")
    seg = min(nperseg, len(x))
    f, psd = sps.welch(x, fs=reference.sample_rate, nperseg=seg)
    rng = np.random.default_rng(seed)
    white = rng.standard_normal(length)
    spec = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(length, 1.0 / reference.sample_rate)
    spec *= np.sqrt(np.interp(freqs, f, psd))
    y = np.fft.irfft(spec, length)
    rms_y = math.sqrt(float(np.mean(y**2)))
    if rms_y == 0.0:
        raise ValueError("reference spectrum is degenerate")
    y *= math.sqrt(float(np.mean(x**2))) / rms_y
    return AudioSignal(y, reference.sample_rate)
