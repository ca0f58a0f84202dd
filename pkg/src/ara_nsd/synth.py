"""Synthetic speech-like test utterances.

Stand-in for a licensed speech corpus: voiced syllables built from harmonic
complexes with a gliding pitch and vowel-like formant weighting, short
fricative noise bursts, and pauses of varied length.
"""

from __future__ import annotations

import numpy as np
from scipy import signal as sps

from .signal import AudioSignal

__all__ = ["speech_like", "speech_like_corpus"]

# (F1, F2, F3) in Hz for a handful of vowels.
_VOWELS = (
    (730, 1090, 2440),
    (270, 2290, 3010),
    (530, 1840, 2480),
    (570, 840, 2410),
    (300, 870, 2240),
    (660, 1720, 2410),
)
_BANDWIDTHS = (90.0, 110.0, 170.0)


def _formant_gain(freqs: np.ndarray, formants) -> np.ndarray:
    g = np.zeros_like(freqs)
    for f, bw in zip(formants, _BANDWIDTHS):
        g += 1.0 / np.sqrt(1.0 + ((freqs - f) / (bw / 2.0)) ** 2)
    # Gentle source tilt of about -6 dB per octave above 500 Hz.
    return g * np.minimum(1.0, 500.0 / np.maximum(freqs, 1.0))


def _envelope(n: int, attack: int, release: int) -> np.ndarray:
    env = np.ones(n)
    attack = min(attack, n // 2)
    release = min(release, n - attack)
    if attack:
        env[:attack] = 0.5 - 0.5 * np.cos(np.pi * np.arange(attack) / attack)
    if release:
        env[n - release :] = 0.5 + 0.5 * np.cos(np.pi * np.arange(release) / release)
    return env


def _syllable(rng: np.random.Generator, fs: int) -> np.ndarray:
    n = int(rng.uniform(0.12, 0.32) * fs)
    f_start = rng.uniform(100.0, 220.0)
    f_end = f_start * rng.uniform(0.8, 1.2)
    f0 = np.linspace(f_start, f_end, n)
    phase = 2.0 * np.pi * np.cumsum(f0) / fs
    formants = _VOWELS[rng.integers(len(_VOWELS))]
    n_harm = int(min(5000.0, fs / 2.0 - 200.0) // max(f_start, f_end))
    k = np.arange(1, n_harm + 1)
    amps = _formant_gain(k * f0.mean(), formants)
    voiced = np.sin(np.outer(phase, k) + rng.uniform(0, 2 * np.pi, n_harm)) @ amps
    # Slow amplitude modulation within the syllable.
    am = 1.0 + 0.3 * np.sin(2.0 * np.pi * rng.uniform(3.0, 6.0) * np.arange(n) / fs)
    seg = voiced * am * _envelope(n, int(0.02 * fs), int(0.05 * fs))

    if rng.random() < 0.4:
        m = int(rng.uniform(0.04, 0.09) * fs)
        sos = sps.butter(4, rng.uniform(2500.0, 4000.0), btype="highpass", fs=fs, output="sos")
        burst = sps.sosfilt(sos, rng.standard_normal(m)) * _envelope(m, m // 4, m // 2)
        burst *= 0.3 * np.std(seg) / max(np.std(burst), 1e-12)
        seg = np.concatenate([burst, seg]) if rng.random() < 0.5 else np.concatenate([seg, burst])
    return seg


def speech_like(duration: float = 3.0, fs: int = 16000, seed: int = 0, rms: float = 0.05) -> AudioSignal:
    """One utterance of about ``duration`` seconds with leading and trailing
    silence, scaled to the given RMS."""
    rng = np.random.default_rng(seed)
    n_total = int(round(duration * fs))
    out = np.zeros(n_total)
    pos = int(rng.uniform(0.05, 0.15) * fs)
    tail = int(0.1 * fs)
    while True:
        seg = _syllable(rng, fs)
        if pos + len(seg) > n_total - tail:
            break
        out[pos : pos + len(seg)] += seg
        pos += len(seg)
        # Word gaps are longer than syllable gaps.
        pause = rng.uniform(0.15, 0.3) if rng.random() < 0.35 else rng.uniform(0.03, 0.08)
        pos += int(pause * fs)
    level = np.sqrt(np.mean(out**2))
    if level > 0:
        out *= rms / level
    return AudioSignal(out, fs)


def speech_like_corpus(n: int, duration: float = 3.0, fs: int = 16000, seed: int = 0) -> list[AudioSignal]:
    return [speech_like(duration, fs, seed=seed * 1000 + i) for i in range(n)]
