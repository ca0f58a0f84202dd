"""Reverberation-group segmentation and masking detection.

Frames are grouped into overlapping reverberation groups. Each group gets a
vector of INS values over scales; the normalized change between consecutive
vectors flags groups dominated by steady masking (noise, late reverberation).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .ins import InsConfig, ins_vector
from .signal import FrameSequence

__all__ = [
    "DetectConfig",
    "GroupSpan",
    "ReverbGroup",
    "segment_groups",
    "group_samples",
    "group_ins_vector",
    "delta_ins",
    "median_threshold",
    "detect_groups",
    "owning_group",
    "write_groups_csv",
]


@dataclass(frozen=True)
class DetectConfig:
    n_frames_per_group: int = 8
    group_overlap_frac: float = 0.5
    theta_ins: float | str = 0.4

    def __post_init__(self):
        if self.n_frames_per_group < 1:
            raise ValueError("n_frames_per_group must be >= 1")
        if not 0.0 <= self.group_overlap_frac < 1.0:
            raise ValueError("group_overlap_frac must be in [0, 1)")
        if isinstance(self.theta_ins, str):
            if self.theta_ins != "median":
                raise ValueError("theta_ins must be a number in [0, 1] or 'median'")
        elif not 0.0 <= self.theta_ins <= 1.0:
            raise ValueError("theta_ins must be in [0, 1]")

    @property
    def group_hop(self) -> int:
        return max(1, int(round(self.n_frames_per_group * (1.0 - self.group_overlap_frac))))


@dataclass(frozen=True)
class GroupSpan:
    index: int
    first_frame: int
    n_frames: int

    @property
    def last_frame(self) -> int:
        return self.first_frame + self.n_frames - 1

    def frame_indices(self, n_available: int) -> np.ndarray:
        """Frame indices of the group, the last frame repeated past the end."""
        idx = np.arange(self.first_frame, self.first_frame + self.n_frames)
        return np.minimum(idx, n_available - 1)


@dataclass(frozen=True)
class ReverbGroup:
    span: GroupSpan
    v_ins: np.ndarray
    delta_ins: float
    masked: bool

    @property
    def index(self) -> int:
        return self.span.index


def segment_groups(frames: FrameSequence | int, cfg: DetectConfig = DetectConfig()) -> list[GroupSpan]:
    """Spans of N consecutive frames advancing by ``cfg.group_hop`` frames.

    The last group may run past the final frame; its missing frames are
    repeats of the last one (see :meth:`GroupSpan.frame_indices`).
    """
    n_frames = frames if isinstance(frames, int) else frames.n_frames
    if n_frames < 1:
        raise ValueError("need at least one frame")
    n, hop = cfg.n_frames_per_group, cfg.group_hop
    n_groups = 1 if n_frames <= n else int(np.ceil((n_frames - n) / hop)) + 1
    return [GroupSpan(m, m * hop, n) for m in range(n_groups)]


def group_samples(frames: FrameSequence, span: GroupSpan) -> np.ndarray:
    """Contiguous samples covered by a group.

    The first frame is taken whole and every following frame contributes its
    last ``hop`` samples, which for in-range frames reproduces the original
    signal span.
    """
    idx = span.frame_indices(frames.n_frames)
    f = frames.frames
    parts = [f[idx[0]]] + [f[i, frames.frame_len - frames.hop :] for i in idx[1:]]
    return np.concatenate(parts)


def group_ins_vector(samples: np.ndarray, ins_cfg: InsConfig) -> np.ndarray:
    """INS values over all scales for one group's samples (zeros for silence)."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise ValueError("empty group")
    return ins_vector(samples, ins_cfg)


def delta_ins(v_curr, v_prev) -> float:
    """Normalized variation ``|a - b| / (|a| + |b|)`` between INS vectors.

    Two zero vectors give 0.
    """
    a = np.asarray(v_curr, dtype=np.float64)
    b = np.asarray(v_prev, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"vector shapes differ: {a.shape} vs {b.shape}")
    den = np.linalg.norm(a) + np.linalg.norm(b)
    if den == 0.0:
        return 0.0
    return float(min(1.0, np.linalg.norm(a - b) / den))


def median_threshold(deltas) -> float:
    d = np.asarray(deltas, dtype=np.float64)
    if d.size == 0:
        raise ValueError("no delta values")
    return float(np.median(d))


def detect_groups(
    frames: FrameSequence,
    cfg: DetectConfig = DetectConfig(),
    ins_cfg: InsConfig | None = None,
) -> tuple[list[ReverbGroup], float]:
    """Run group segmentation and masking detection over a framed signal.

    Returns the groups and the threshold that was applied (the fixed
    ``cfg.theta_ins`` or the utterance median). The first group has no
    predecessor and gets a variation of 1.
    """
    ins_cfg = ins_cfg or InsConfig()
    spans = segment_groups(frames, cfg)
    vectors = [group_ins_vector(group_samples(frames, sp), ins_cfg) for sp in spans]
    deltas = [1.0] + [delta_ins(vectors[m], vectors[m - 1]) for m in range(1, len(vectors))]
    theta = median_threshold(deltas) if cfg.theta_ins == "median" else float(cfg.theta_ins)
    groups = [
        ReverbGroup(sp, v, d, d <= theta) for sp, v, d in zip(spans, vectors, deltas)
    ]
    return groups, theta


def owning_group(frame_index: int, n_groups: int, cfg: DetectConfig = DetectConfig()) -> int:
    """Most recent group whose span contains the frame."""
    return min(frame_index // cfg.group_hop, n_groups - 1)


def write_groups_csv(path, groups: list[ReverbGroup], frames: FrameSequence) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["group", "start_s", "delta_ins", "masked"])
        for g in groups:
            start = g.span.first_frame * frames.hop / frames.sample_rate
            w.writerow([g.index, f"{start:.6f}", f"{g.delta_ins:.6f}", int(g.masked)])
