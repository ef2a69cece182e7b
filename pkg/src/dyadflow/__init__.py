"""Simultaneous-flow detection from dyadic EEG.

Wavelet denoising and band decomposition, 208 individual and 64 inter-brain
synchrony features per participant-sample, eight classifier families, and a
leakage-audited cross-validation harness with importance and ablation tools.
"""

__version__ = "0.1.0"

from ._backend import BACKEND
from .core import ChannelId, DyadSample, SignalSegment, label_binary, label_ternary
from .features import FEATURE_GROUPS, FEATURE_NAMES, feature_set

__all__ = [
    "BACKEND",
    "ChannelId",
    "DyadSample",
    "FEATURE_GROUPS",
    "FEATURE_NAMES",
    "SignalSegment",
    "__version__",
    "feature_set",
    "label_binary",
    "label_ternary",
]
