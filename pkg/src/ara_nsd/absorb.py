"""Adaptive frame absorption driven by non-stationarity detection.

Frames inside groups flagged as masked are pulled down towards a small
floor gain; frames in non-stationary (speech) groups receive a sigmoid gain
that may exceed one. Within each branch the gain grows with the frame-level
INS variation, so onsets are kept and steady frames are absorbed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .detect import DetectConfig, ReverbGroup, delta_ins, detect_groups, owning_group
from .ins import InsConfig, ins_vector
from .signal import AudioSignal, frame_signal, overlap_add

__all__ = [
    "AbsorptionParams",
    "AbsorptionState",
    "AbsorptionResult",
    "frame_distance",
    "emphasis_factor",
    "update_max_absorption",
    "absorption_gain",
    "absorb",
    "process",
    "write_frames_csv",
]


@dataclass(frozen=True)
class AbsorptionParams:
    k: float = 17.0
    d0: float = -0.2
    k_prime: float = 13.0
    d0_prime: float = 0.5
    S: float = 0.05
    L_prime: float = 1.2
    p: float = 0.7
    theta_ins: float = 0.4

    def __post_init__(self):
        if self.S <= 0:
            raise ValueError("S must be positive")
        if self.L_prime <= 0:
            raise ValueError("L_prime must be positive")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must be in [0, 1]")
        if self.k <= 0 or self.k_prime <= 0:
            raise ValueError("growth rates must be positive")


@dataclass
class AbsorptionState:
    """Running state: maximum absorption of the current group and the INS
    vector of the previous frame."""

    L: float = 0.4
    prev_frame_ins: np.ndarray | None = None

    def __post_init__(self):
        if self.L < 0:
            raise ValueError("L must be nonnegative")


def frame_distance(v_curr, v_prev=None) -> float:
    """Short-time distance between consecutive frame INS vectors.

    The first frame (``v_prev is None``) gets 1.
    """
    if v_prev is None:
        return 1.0
    return delta_ins(v_curr, v_prev)


def emphasis_factor(d: float) -> float:
    """``d ** (1.2 - d)`` with the value at 0 fixed to 0."""
    if not 0.0 <= d <= 1.0:
        raise ValueError(f"d must be in [0, 1], got {d}")
    if d == 0.0:
        return 0.0
    return d ** (1.2 - d)


def update_max_absorption(L_prev: float, delta: float, p: float) -> float:
    return p * delta + (1.0 - p) * L_prev


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def absorption_gain(
    d: float,
    delta: float,
    state: AbsorptionState | float,
    params: AbsorptionParams = AbsorptionParams(),
) -> float:
    """Gain of one frame.

    Masked branch (``delta <= theta_ins``)::

        F(d) * (L - S) / (1 + exp(-k (d - d0))) + S

    Speech branch::

        L' / (1 + exp(-k' (d - d0')))
    """
    if not 0.0 <= d <= 1.0:
        raise ValueError(f"d must be in [0, 1], got {d}")
    L = state.L if isinstance(state, AbsorptionState) else float(state)
    if delta <= params.theta_ins:
        return emphasis_factor(d) * (L - params.S) * _sigmoid(params.k * (d - params.d0)) + params.S
    return params.L_prime * _sigmoid(params.k_prime * (d - params.d0_prime))


@dataclass
class AbsorptionResult:
    """Output of :func:`absorb` with per-frame and per-group diagnostics."""

    signal: AudioSignal
    gains: np.ndarray
    distances: np.ndarray
    frame_group: np.ndarray
    groups: list[ReverbGroup]
    max_absorption: np.ndarray
    theta_ins: float
    hop: int
    branch: np.ndarray
    peak_scale: float = 1.0

    def frame_rows(self):
        sr = self.signal.sample_rate
        for l, (g, d, m, b) in enumerate(zip(self.gains, self.distances, self.frame_group, self.branch)):
            yield (l, l * self.hop / sr, float(d), self.groups[m].delta_ins, b, float(g))


def absorb(
    signal: AudioSignal,
    params: AbsorptionParams = AbsorptionParams(),
    frame_ms: float = 32.0,
    detect_cfg: DetectConfig | None = None,
    group_ins_cfg: InsConfig | None = None,
    frame_ins_cfg: InsConfig | None = None,
    median_theta: bool = False,
    peak_normalize: bool = True,
) -> AbsorptionResult:
    """Frame, detect, compute per-frame gains and resynthesize.

    With ``median_theta`` the threshold is the utterance median of the group
    variations instead of ``params.theta_ins``. When ``peak_normalize`` is
    set and the output peak exceeds 1, the whole output is scaled down by its
    peak; the factor is reported as ``peak_scale``.
    """
    if len(signal) == 0:
        raise ValueError("empty signal")
    frames = frame_signal(signal, frame_ms, 0.5)
    if detect_cfg is None:
        detect_cfg = DetectConfig(theta_ins="median" if median_theta else params.theta_ins)
    groups, theta = detect_groups(frames, detect_cfg, group_ins_cfg or InsConfig())
    if theta != params.theta_ins:
        params = replace(params, theta_ins=theta)

    L = np.empty(len(groups))
    L_prev = theta
    for m, g in enumerate(groups):
        L_prev = update_max_absorption(L_prev, g.delta_ins, params.p)
        L[m] = L_prev

    frame_cfg = frame_ins_cfg or InsConfig.fast(frames.frame_len)
    n = frames.n_frames
    gains = np.empty(n)
    dists = np.empty(n)
    owner = np.empty(n, dtype=int)
    branch = np.empty(n, dtype=object)
    state = AbsorptionState(L=theta)
    for l in range(n):
        v = ins_vector(frames.frames[l], frame_cfg)
        d = frame_distance(v, state.prev_frame_ins)
        m = owning_group(l, len(groups), detect_cfg)
        state.L = L[m]
        state.prev_frame_ins = v
        gains[l] = absorption_gain(d, groups[m].delta_ins, state, params)
        dists[l] = d
        owner[l] = m
        branch[l] = "masked" if groups[m].masked else "speech"

    out = overlap_add(frames, gains).samples
    scale = 1.0
    peak = np.max(np.abs(out))
    if peak_normalize and peak > 1.0:
        scale = 1.0 / peak
        out = out * scale
    return AbsorptionResult(
        signal=AudioSignal(out, signal.sample_rate),
        gains=gains,
        distances=dists,
        frame_group=owner,
        groups=groups,
        max_absorption=L,
        theta_ins=theta,
        hop=frames.hop,
        peak_scale=scale,
        branch=branch,
    )


def process(signal: AudioSignal, params: AbsorptionParams = AbsorptionParams(), **kwargs) -> AudioSignal:
    """Processed signal only; see :func:`absorb` for the options."""
    return absorb(signal, params, **kwargs).signal


def write_frames_csv(path, result: AbsorptionResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "time_s", "d", "delta_ins", "branch", "gain"])
        for l, t, d, delta, b, a in result.frame_rows():
            w.writerow([l, f"{t:.6f}", f"{d:.6f}", f"{delta:.6f}", b, f"{a:.6f}"])
