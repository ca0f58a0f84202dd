"""Waveform container, WAV I/O, framing and overlap-add synthesis.

Every other module in the package works on :class:`AudioSignal` objects and
on the :class:`FrameSequence` produced by :func:`frame_signal`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal as sps
from scipy.io import wavfile

__all__ = [
    "AudioSignal",
    "FrameSequence",
    "load_wav",
    "save_wav",
    "frame_signal",
    "overlap_add",
    "convolve",
    "mix_at_snr",
    "energy",
    "snr_db",
]

PCM16_SCALE = 32768.0


@dataclass(frozen=True)
class AudioSignal:
    """Mono waveform with its sample rate.

    Parameters
    ----------
    samples : array_like
        Real amplitudes, nominally within [-1, 1]. Stored as float64.
    sample_rate : int
        Sampling frequency in Hz.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.flags.writeable:
            # Copy so that freezing does not reach into the caller's array.
            x = x.copy()
        if x.ndim != 1:
            raise ValueError(f"samples must be 1-D, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("samples contain NaN or Inf")
        sr = int(self.sample_rate)
        if sr <= 0 or sr != self.sample_rate:
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate}")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", sr)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    @property
    def energy(self) -> float:
        return energy(self.samples)

    def replace(self, samples) -> "AudioSignal":
        """Same sample rate, new samples."""
        return AudioSignal(samples, self.sample_rate)

    def scaled(self, gain: float) -> "AudioSignal":
        return AudioSignal(self.samples * gain, self.sample_rate)


@dataclass(frozen=True)
class FrameSequence:
    """Fixed-length analysis frames of a signal.

    ``frames`` holds the raw (unwindowed) samples, one frame per row. The
    analysis ``window`` is kept alongside so that synthesis can weight the
    frames. ``length`` is the number of samples of the source signal, used to
    trim the zero-padded tail after synthesis.
    """

    frames: np.ndarray
    frame_len: int
    hop: int
    window: np.ndarray
    length: int
    sample_rate: int
    window_kind: str = "hann"
    _starts: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.hop > self.frame_len or self.hop < 1:
            raise ValueError("hop must satisfy 1 <= hop <= frame_len")
        if self.frames.ndim != 2 or self.frames.shape[1] != self.frame_len:
            raise ValueError("frames must have shape (n_frames, frame_len)")
        object.__setattr__(self, "_starts", np.arange(self.n_frames) * self.hop)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def starts(self) -> np.ndarray:
        """First sample index of every frame."""
        return self._starts

    @property
    def padded_length(self) -> int:
        return (self.n_frames - 1) * self.hop + self.frame_len


def energy(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.dot(x, x))


def snr_db(speech, noise) -> float:
    """10·log10 of the energy ratio of two sample arrays."""
    return 10.0 * np.log10(energy(speech) / energy(noise))


# ---------------------------------------------------------------------------
# WAV I/O
# ---------------------------------------------------------------------------


def load_wav(path) -> AudioSignal:
    """Read a PCM16 or float32 WAV file and return its first channel.

    PCM16 samples are mapped to [-1, 1) by dividing by 32768.
    """
    path = Path(path)
    try:
        sr, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except (ValueError, OSError, EOFError) as exc:
        raise ValueError(f"cannot read WAV file {path}: {exc}") from exc

    if data.ndim == 2:
        if data.shape[1] > 1:
            warnings.warn(f"{path.name}: {data.shape[1]} channels, using channel 0", stacklevel=2)
        data = data[:, 0]
    if data.shape[0] == 0:
        raise ValueError(f"{path}: zero-length audio")

    if data.dtype == np.int16:
        x = data.astype(np.float64) / PCM16_SCALE
    elif data.dtype == np.float32:
        x = data.astype(np.float64)
    else:
        raise ValueError(f"{path}: unsupported sample encoding {data.dtype}")
    return AudioSignal(x, sr)


def save_wav(signal: AudioSignal, path, encoding: str = "float32", clamp: bool = False) -> None:
    """Write ``signal`` as a mono WAV file.

    Parameters
    ----------
    encoding : {"float32", "pcm16"}
    clamp : bool
        For ``pcm16`` only. Clip out-of-range amplitudes instead of raising.
    """
    x = signal.samples
    if encoding == "float32":
        data = x.astype(np.float32)
    elif encoding == "pcm16":
        if np.any(np.abs(x) > 1.0):
            if not clamp:
                raise ValueError("samples exceed [-1, 1]; pass clamp=True to clip")
            x = np.clip(x, -1.0, 1.0)
        data = np.clip(np.round(x * PCM16_SCALE), -32768, 32767).astype(np.int16)
    else:
        raise ValueError(f"unknown encoding {encoding!r}")
    wavfile.write(Path(path), signal.sample_rate, data)


# ---------------------------------------------------------------------------
# Framing and synthesis
# ---------------------------------------------------------------------------


def _analysis_window(kind: str, n: int) -> np.ndarray:
    if kind == "hann":
        return sps.get_window("hann", n, fftbins=True)
    if kind in ("rect", "rectangular", "boxcar"):
        return np.ones(n)
    raise ValueError(f"unknown window kind {kind!r}")


def frame_signal(
    signal: AudioSignal,
    frame_ms: float = 32.0,
    overlap_frac: float = 0.5,
    window_kind: str = "hann",
) -> FrameSequence:
    """Split a signal into overlapping frames.

    The tail is zero-padded so the last frame is full. A signal shorter than
    one frame yields a single zero-padded frame (with a warning).

    Examples
    --------
    3 s at 16 kHz with 32 ms frames and 50 % overlap gives 512-sample frames,
    a hop of 256 and ``ceil((48000 - 512) / 256) + 1 = 187`` frames.
    """
    frame_len = int(round(frame_ms * 1e-3 * signal.sample_rate))
    if frame_len < 2:
        raise ValueError("frame must span at least 2 samples")
    if not 0.0 <= overlap_frac < 1.0:
        raise ValueError("overlap_frac must be in [0, 1)")
    hop = max(1, int(round(frame_len * (1.0 - overlap_frac))))

    n = len(signal)
    if n == 0:
        raise ValueError("empty signal")
    if n < frame_len:
        warnings.warn("signal shorter than one frame; zero-padding a single frame", stacklevel=2)
        n_frames = 1
    else:
        n_frames = int(np.ceil((n - frame_len) / hop)) + 1

    padded = np.zeros((n_frames - 1) * hop + frame_len)
    padded[:n] = signal.samples
    idx = np.arange(n_frames)[:, None] * hop + np.arange(frame_len)[None, :]
    return FrameSequence(
        frames=padded[idx],
        frame_len=frame_len,
        hop=hop,
        window=_analysis_window(window_kind, frame_len),
        length=n,
        sample_rate=signal.sample_rate,
        window_kind=window_kind,
    )


def overlap_add(frames: FrameSequence, gains=None) -> AudioSignal:
    """Resynthesize a signal from gain-weighted frames.

    Each frame is multiplied by its gain and by the analysis window, the
    results are overlap-added and divided by the summed window, so unity
    gains return the original samples. Samples where every covering window
    vanishes fall back to a plain average of the covering frames.
    """
    n_frames = frames.n_frames
    g = np.ones(n_frames) if gains is None else np.asarray(gains, dtype=np.float64)
    if g.shape != (n_frames,):
        raise ValueError(f"expected {n_frames} gains, got {g.shape}")
    if np.any(g < 0):
        raise ValueError("gains must be nonnegative")

    total = frames.padded_length
    idx = (frames.starts[:, None] + np.arange(frames.frame_len)[None, :]).ravel()
    w = np.broadcast_to(frames.window, frames.frames.shape)
    weighted = (g[:, None] * w * frames.frames).ravel()

    num = np.bincount(idx, weights=weighted, minlength=total)
    den = np.bincount(idx, weights=w.ravel(), minlength=total)
    plain = np.bincount(idx, weights=(g[:, None] * frames.frames).ravel(), minlength=total)
    count = np.bincount(idx, minlength=total)

    out = np.empty(total)
    ok = den > 1e-12
    out[ok] = num[ok] / den[ok]
    out[~ok] = plain[~ok] / count[~ok]
    return AudioSignal(out[: frames.length], frames.sample_rate)


# ---------------------------------------------------------------------------
# Convolution and mixing
# ---------------------------------------------------------------------------


def convolve(x: AudioSignal, h: AudioSignal) -> AudioSignal:
    """Full linear convolution, FFT based for long kernels."""
    if x.sample_rate != h.sample_rate:
        raise ValueError(f"sample rate mismatch: {x.sample_rate} vs {h.sample_rate}")
    if min(len(x), len(h)) <= 64:
        y = np.convolve(x.samples, h.samples)
    else:
        y = sps.fftconvolve(x.samples, h.samples)
    return AudioSignal(y, x.sample_rate)


def mix_at_snr(
    speech: AudioSignal,
    noise: AudioSignal,
    snr_db: float,
    tile: bool = False,
    return_noise: bool = False,
):
    """Add ``noise`` to ``speech`` scaled to reach ``snr_db``.

    The SNR is the full-signal energy ratio between ``speech`` and the
    scaled noise. Noise longer than the speech is truncated; shorter noise is
    tiled when ``tile`` is set and rejected otherwise.

    Returns the mixture, or ``(mixture, scaled_noise)`` if ``return_noise``.
    """
    if speech.sample_rate != noise.sample_rate:
        raise ValueError(f"sample rate mismatch: {speech.sample_rate} vs {noise.sample_rate}")
    if not np.isfinite(snr_db):
        raise ValueError("snr_db must be finite")
    n = len(speech)
    w = noise.samples
    if len(w) < n:
        if not tile:
            raise ValueError("noise shorter than speech; pass tile=True to repeat it")
        w = np.tile(w, int(np.ceil(n / len(w))))
    w = w[:n]

    e_s = energy(speech.samples)
    e_w = energy(w)
    if e_s == 0.0 or e_w == 0.0:
        raise ValueError("speech and noise must have nonzero energy")
    alpha = np.sqrt(e_s / (e_w * 10.0 ** (snr_db / 10.0)))
    scaled = alpha * w
    mixture = AudioSignal(speech.samples + scaled, speech.sample_rate)
    if return_noise:
        return mixture, AudioSignal(scaled, speech.sample_rate)
    return mixture
