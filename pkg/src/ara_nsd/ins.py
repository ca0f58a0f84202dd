"""Surrogate-based index of non-stationarity.

A segment is compared with phase-randomized copies of itself. The copies
share its magnitude spectrum but are stationary by construction, so the
spread of the segment's local spectra around their time average, relative
to the same spread measured on the copies, tells how non-stationary the
segment is at a given observation scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sp_fft
from scipy import stats

from .signal import AudioSignal

__all__ = [
    "InsConfig",
    "InsProfile",
    "TimeFrequencyRepr",
    "default_scales",
    "hermite_tapers",
    "make_surrogates",
    "multitaper_spectrogram",
    "ins_profile",
    "ins_vector",
]

MIN_WINDOW = 8
# Relative spectral floor. Keeps log/KL terms finite on silent stretches
# while staying far below any real spectral content.
_FLOOR = 1e-10
_CHUNK_ELEMENTS = 2_000_000


def default_scales(n: int = 10, lo: float = 0.02, hi: float = 0.49) -> tuple[float, ...]:
    return tuple(float(s) for s in np.geomspace(lo, hi, n))


@dataclass(frozen=True)
class InsConfig:
    n_surrogates: int = 50
    n_tapers: int = 5
    scales: tuple[float, ...] = field(default_factory=default_scales)
    confidence: float = 0.95
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_surrogates < 2:
            raise ValueError("n_surrogates must be >= 2")
        if self.n_tapers < 1:
            raise ValueError("n_tapers must be >= 1")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must be in (0, 1)")
        scales = tuple(float(s) for s in self.scales)
        if not scales or any(not 0.0 < s < 1.0 for s in scales):
            raise ValueError("scales must lie in (0, 1)")
        object.__setattr__(self, "scales", scales)

    @classmethod
    def fast(cls, frame_len: int = 512, rng_seed: int = 0) -> "InsConfig":
        """Reduced setting for per-frame analysis: 20 surrogates and four
        windows from 1/8 to 1/2 of the frame (64 to 256 samples for 512)."""
        windows = np.geomspace(frame_len / 8, frame_len / 2, 4)
        return cls(n_surrogates=20, scales=tuple(windows / frame_len), rng_seed=rng_seed)


@dataclass(frozen=True)
class InsProfile:
    scales: np.ndarray
    ins: np.ndarray
    gamma: np.ndarray

    @property
    def is_nonstationary(self) -> np.ndarray:
        return self.ins > self.gamma

    @property
    def max_ins(self) -> float:
        return float(np.max(self.ins))

    def rows(self):
        """(scale, ins, gamma, verdict) tuples, one per scale."""
        for s, i, g, ns in zip(self.scales, self.ins, self.gamma, self.is_nonstationary):
            yield float(s), float(i), float(g), "nonstationary" if ns else "stationary"


@dataclass(frozen=True)
class TimeFrequencyRepr:
    """Multitaper power spectra, one row per analysis position.

    Rows are one-sided and scaled so that each row sums to the taper-averaged
    energy of the windowed segment.
    """

    power: np.ndarray
    positions: np.ndarray
    window_len: int


# ---------------------------------------------------------------------------
# Tapers and spectra
# ---------------------------------------------------------------------------

_taper_cache: dict[tuple[int, int], np.ndarray] = {}


def hermite_tapers(window_len: int, n_tapers: int, half_support: float = 6.0) -> np.ndarray:
    """Orthonormal Hermite-function tapers, shape ``(n_tapers, window_len)``.

    The Hermite functions are sampled on ``[-half_support, half_support]``
    and re-orthonormalized on the discrete grid.
    """
    key = (window_len, n_tapers)
    if key in _taper_cache:
        return _taper_cache[key]
    if n_tapers > window_len:
        raise ValueError("more tapers than window samples")
    t = np.linspace(-half_support, half_support, window_len)
    h = np.empty((n_tapers, window_len))
    g = np.exp(-0.5 * t**2)
    h[0] = g / np.pi**0.25
    if n_tapers > 1:
        h[1] = np.sqrt(2.0) * t * h[0]
    for k in range(2, n_tapers):
        h[k] = np.sqrt(2.0 / k) * t * h[k - 1] - np.sqrt((k - 1) / k) * h[k - 2]
    q, r = np.linalg.qr(h.T)
    # QR may flip signs; keep the Hermite sign convention.
    q = q * np.sign(np.diag(r))[None, :]
    tapers = np.ascontiguousarray(q.T)
    tapers.setflags(write=False)
    _taper_cache[key] = tapers
    return tapers


def _positions(n: int, window_len: int) -> np.ndarray:
    hop = max(1, window_len // 2)
    return np.arange(0, n - window_len + 1, hop)


def _mt_power(x: np.ndarray, window_len: int, tapers: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Taper-averaged one-sided power spectra for a batch of signals.

    ``x`` has shape ``(..., n)``; the result has shape
    ``(..., n_positions, nfft // 2 + 1)`` where ``nfft`` is the first
    FFT-friendly length at or above ``window_len``.
    """
    nfft = sp_fft.next_fast_len(window_len, real=True)
    idx = positions[:, None] + np.arange(window_len)[None, :]
    segs = x[..., idx]
    spec = sp_fft.rfft(segs[..., None, :] * tapers, n=nfft, axis=-1)
    power = (spec.real**2 + spec.imag**2).mean(axis=-2)
    # One-sided Parseval weights: interior bins stand for two.
    power[..., 1 : (nfft + 1) // 2] *= 2.0
    return power / nfft


def multitaper_spectrogram(
    signal: AudioSignal | np.ndarray,
    window_len: int,
    n_tapers: int = 5,
    positions=None,
) -> TimeFrequencyRepr:
    """Hermite multitaper spectrogram.

    Parameters
    ----------
    window_len : int
        Analysis window length in samples.
    positions : array_like of int, optional
        Start index of every window. Defaults to a 50 % overlap grid that
        stops before the window would overrun the signal.
    """
    x = signal.samples if isinstance(signal, AudioSignal) else np.asarray(signal, dtype=np.float64)
    if window_len > x.shape[-1]:
        raise ValueError(f"window of {window_len} samples exceeds signal of {x.shape[-1]}")
    if n_tapers < 1:
        raise ValueError("n_tapers must be >= 1")
    pos = _positions(x.shape[-1], window_len) if positions is None else np.asarray(positions, dtype=int)
    if np.any(pos < 0) or np.any(pos + window_len > x.shape[-1]):
        raise ValueError("window positions overrun the signal")
    tapers = hermite_tapers(window_len, n_tapers)
    return TimeFrequencyRepr(_mt_power(x, window_len, tapers, pos), pos, window_len)


# ---------------------------------------------------------------------------
# Surrogates
# ---------------------------------------------------------------------------


def _surrogate_array(x: np.ndarray, n_surrogates: int, seed: int) -> np.ndarray:
    n = x.shape[0]
    spectrum = np.fft.rfft(x)
    mag = np.abs(spectrum)
    n_bins = spectrum.shape[0]
    # Bin 0 and, for even n, the Nyquist bin stay real and untouched.
    last = n_bins - 1 if n % 2 == 0 else n_bins
    out = np.empty((n_surrogates, n))
    for j in range(n_surrogates):
        rng = np.random.default_rng([seed, j])
        phase = rng.uniform(0.0, 2.0 * np.pi, last - 1)
        s = spectrum.copy()
        s[1:last] = mag[1:last] * np.exp(1j * phase)
        out[j] = np.fft.irfft(s, n)
    return out


def make_surrogates(signal: AudioSignal, cfg: InsConfig) -> list[AudioSignal]:
    """Phase-randomized copies of ``signal`` with identical magnitude spectrum.

    Surrogate ``j`` draws its phases from a generator seeded with
    ``(cfg.rng_seed, j)``.
    """
    x = signal.samples
    if len(x) < 16:
        raise ValueError("signal must have at least 16 samples")
    if not np.any(x):
        raise ValueError("cannot build surrogates of an all-zero signal")
    arr = _surrogate_array(x, cfg.n_surrogates, cfg.rng_seed)
    return [AudioSignal(row, signal.sample_rate) for row in arr]


# ---------------------------------------------------------------------------
# INS
# ---------------------------------------------------------------------------


def _dispersion(power: np.ndarray) -> np.ndarray:
    """Variance over time of the distance between local and mean spectra.

    ``power`` has shape ``(n_signals, n_positions, n_bins)``. The distance is
    the symmetrized Kullback-Leibler divergence of the unit-sum spectra
    multiplied by one plus the mean absolute log-spectral deviation.
    """
    mean_spec = power.mean(axis=1, keepdims=True)
    floor = _FLOOR * mean_spec.mean(axis=2, keepdims=True) + np.finfo(float).tiny
    g = power + floor
    h = mean_spec + floor
    gn = g / g.sum(axis=2, keepdims=True)
    hn = h / h.sum(axis=2, keepdims=True)
    kl = np.sum((gn - hn) * np.log(gn / hn), axis=2)
    lsd = np.mean(np.abs(np.log(g / h)), axis=2)
    dist = kl * (1.0 + lsd)
    return dist.var(axis=1)


def _window_len(scale: float, n: int) -> int:
    return max(MIN_WINDOW, int(round(scale * n)))


def ins_profile(signal: AudioSignal | np.ndarray, cfg: InsConfig | None = None) -> InsProfile:
    """Index of non-stationarity and its stationarity threshold per scale.

    For each scale the dispersion statistic of the signal is divided by the
    mean dispersion of the surrogates; INS is the square root of that ratio.
    The threshold is the square root of the ``cfg.confidence`` quantile of a
    Gamma law fitted by moments to the surrogate ratios.

    An all-zero segment is stationary: INS is 0 at every scale.
    """
    cfg = cfg or InsConfig()
    x = signal.samples if isinstance(signal, AudioSignal) else np.asarray(signal, dtype=np.float64)
    n = x.shape[0]
    scales = np.asarray(cfg.scales)
    windows = [_window_len(s, n) for s in scales]
    for s, w in zip(scales, windows):
        if w > n or len(_positions(n, w)) < 2:
            raise ValueError(f"scale {s:.3g} too large for a {n}-sample signal")
    if n < 16:
        raise ValueError("signal must have at least 16 samples")

    if not np.any(x):
        gamma = np.full(scales.shape, _threshold_for_silence(cfg))
        return InsProfile(scales, np.zeros(scales.shape), gamma)

    batch = np.vstack([x[None, :], _surrogate_array(x, cfg.n_surrogates, cfg.rng_seed)])
    ins = np.empty(scales.shape)
    gamma = np.empty(scales.shape)
    for i, w in enumerate(windows):
        tapers = hermite_tapers(w, cfg.n_tapers)
        pos = _positions(n, w)
        # Bound the size of the (signals, positions, tapers, bins) spectrum.
        step = max(1, _CHUNK_ELEMENTS // (len(pos) * cfg.n_tapers * w))
        theta = np.concatenate([
            _dispersion(_mt_power(batch[j : j + step], w, tapers, pos))
            for j in range(0, batch.shape[0], step)
        ])
        ref = theta[1:]
        mean_ref = ref.mean()
        if not mean_ref > 0.0:
            raise ValueError(f"degenerate surrogate population at scale {scales[i]:.3g}")
        ratios = ref / mean_ref
        var = ratios.var()
        if not var > 0.0:
            raise ValueError(f"degenerate surrogate population at scale {scales[i]:.3g}")
        ins[i] = np.sqrt(theta[0] / mean_ref)
        gamma[i] = np.sqrt(stats.gamma.ppf(cfg.confidence, 1.0 / var, scale=var))
    return InsProfile(scales, ins, gamma)


def _threshold_for_silence(cfg: InsConfig) -> float:
    # No surrogate population exists for silence; report the threshold of an
    # exponential law (Gamma with unit shape), which keeps gamma positive.
    return float(np.sqrt(stats.gamma.ppf(cfg.confidence, 1.0)))


def ins_vector(samples: np.ndarray, cfg: InsConfig) -> np.ndarray:
    """Per-scale INS values of a raw sample array."""
    return ins_profile(np.asarray(samples, dtype=np.float64), cfg).ins
