"""Adaptive reverberation absorption with non-stationarity detection."""

from .absorb import AbsorptionParams, absorb, process
from .detect import DetectConfig
from .ins import InsConfig, InsProfile, ins_profile
from .room import RoomSpec, estimate_t60, ism_rir
from .signal import AudioSignal, load_wav, save_wav

__version__ = "0.1.0"

__all__ = [
    "AbsorptionParams",
    "AudioSignal",
    "DetectConfig",
    "InsConfig",
    "InsProfile",
    "RoomSpec",
    "absorb",
    "estimate_t60",
    "ins_profile",
    "ism_rir",
    "load_wav",
    "process",
    "save_wav",
]
