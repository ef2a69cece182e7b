"""Inter-brain synchrony: per-channel, per-band Pearson correlation and DTW
distance between the two participants of a dyad (8 × 4 × 2 = 64 values)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .core import FLOW_CHANNELS
from .dsp import EEG_BANDS, BandSignals
from .features import SYNCHRONY_FEATURES, ExtractionConfig


def _pearson(a: np.ndarray, b: np.ndarray) -> tuple[float, bool]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"cross_correlation needs equal-length 1-D inputs, got {a.shape} and {b.shape}")
    if a.shape[0] < 2:
        raise ValueError("cross_correlation needs at least 2 samples")
    ca = a - a.mean()
    cb = b - b.mean()
    sa = np.sqrt(np.dot(ca, ca))
    sb = np.sqrt(np.dot(cb, cb))
    if sa == 0 or sb == 0:
        return 0.0, True
    r = np.dot(ca, cb) / (sa * sb)
    return float(min(1.0, max(-1.0, r))), False


def cross_correlation(a, b) -> float:
    """Pearson coefficient cov(a, b) / (σ_a σ_b).

    A flat input has no defined correlation; 0.0 is returned and
    :func:`extract_synchrony` records a quality flag for it.
    """
    return _pearson(a, b)[0]


def znormalize(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    s = x.std()
    if s == 0:
        return np.zeros_like(x)
    return (x - x.mean()) / s


def dtw_distance(a, b, window: int | None = None) -> float:
    """Dynamic time warping distance with absolute-difference local cost.

    D(i, j) = |a_i - b_j| + min(D(i-1, j), D(i, j-1), D(i-1, j-1)), starting
    from D(0, 0) = |a_0 - b_0|. The full table is used unless ``window``
    gives a Sakoe-Chiba radius.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1:
        raise ValueError("dtw_distance expects one-dimensional sequences")
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("dtw_distance needs non-empty sequences")
    return float(kernels.dtw(a, b, -1 if window is None else int(window)))


@dataclass(frozen=True)
class SynchronyFeatures:
    values: np.ndarray  # (64,) in SYNCHRONY_FEATURES order
    flags: frozenset

    names = SYNCHRONY_FEATURES

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.values.tolist()))


def extract_synchrony(bands_p1: dict, bands_p2: dict, config: ExtractionConfig = ExtractionConfig()) -> SynchronyFeatures:
    """Correlation and DTW between matching band signals of two participants.

    ``bands_p1`` and ``bands_p2`` map each flow channel to its
    :class:`~dyadflow.dsp.BandSignals`, computed over the same window.
    """
    values = np.empty(len(SYNCHRONY_FEATURES))
    flags = set()
    pos = 0
    for ch in FLOW_CHANNELS:
        b1: BandSignals = bands_p1[ch]
        b2: BandSignals = bands_p2[ch]
        ccc, dtw = [], []
        for band in EEG_BANDS:
            x, y = b1[band], b2[band]
            if x.shape != y.shape:
                raise ValueError(f"{ch.value} {band.name}: band signals are not aligned")
            r, degenerate = _pearson(x, y)
            if degenerate:
                flags.add(f"{ch.value}:flat_{band.name.lower()}")
            ccc.append(r)
            if config.dtw_znorm:
                x, y = znormalize(x), znormalize(y)
            dtw.append(dtw_distance(x, y, config.dtw_window))
        values[pos : pos + 8] = ccc + dtw
        pos += 8
    return SynchronyFeatures(values, frozenset(flags))
