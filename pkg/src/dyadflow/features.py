"""Per-channel individual-flow features and the feature-name registry.

Each flow channel contributes 26 values: 12 time-domain descriptors and 14
frequency-domain ones (band PSD, log band power, differential entropy and
the mean of the band PSDs). Eight channels give 208 individual features.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .core import FLOW_CHANNELS, FRONTAL_CHANNELS, TEMPORAL_CHANNELS, ChannelId
from .dsp import (
    EEG_BANDS,
    BandSignals,
    DenoiseConfig,
    Spectrum,
    band_decompose,
    band_power,
    wavelet_denoise,
    welch_psd,
)

LN_2PI_E = np.log(2.0 * np.pi * np.e)

TIME_FEATURE_LABELS = (
    "Mean",
    "SD",
    "Variance",
    "AAFOD",
    "NFOD",
    "Energy",
    "Power",
    "Activity",
    "Mobility",
    "HOZC",
    "PPM",
    "Kurtosis",
)
FREQ_FEATURE_LABELS = (
    *(f"PSD {b.symbol}" for b in EEG_BANDS),
    *(f"LBP {b.symbol}" for b in EEG_BANDS),
    *(f"DE {b.symbol}" for b in EEG_BANDS),
    "DE FB",
    "Mean PSD",
)
CHANNEL_FEATURE_LABELS = TIME_FEATURE_LABELS + FREQ_FEATURE_LABELS
SYNCHRONY_FEATURE_LABELS = (
    *(f"CCC {b.symbol}" for b in EEG_BANDS),
    *(f"DTW {b.symbol}" for b in EEG_BANDS),
)


def _names(channels, labels) -> tuple[str, ...]:
    return tuple(f"{ch.value} {label}" for ch in channels for label in labels)


INDIVIDUAL_FEATURES = _names(FLOW_CHANNELS, CHANNEL_FEATURE_LABELS)
SYNCHRONY_FEATURES = _names(FLOW_CHANNELS, SYNCHRONY_FEATURE_LABELS)
#: Ordered names of all 272 columns. Stable across releases.
FEATURE_NAMES = INDIVIDUAL_FEATURES + SYNCHRONY_FEATURES

FEATURE_GROUPS = {
    "L": _names(TEMPORAL_CHANNELS, CHANNEL_FEATURE_LABELS),
    "F": _names(FRONTAL_CHANNELS, CHANNEL_FEATURE_LABELS),
    "LS": _names(TEMPORAL_CHANNELS, SYNCHRONY_FEATURE_LABELS),
    "FS": _names(FRONTAL_CHANNELS, SYNCHRONY_FEATURE_LABELS),
}


def feature_set(spec: str) -> tuple[str, ...]:
    """Resolve a ``+``-joined group spec like ``"L+F+FS"`` to registry-ordered names.

    ``"all"`` selects every column and ``"individual"`` / ``"synchrony"`` the two halves.
    """
    spec = spec.strip()
    if spec.lower() == "all":
        return FEATURE_NAMES
    if spec.lower() == "individual":
        return INDIVIDUAL_FEATURES
    if spec.lower() == "synchrony":
        return SYNCHRONY_FEATURES
    parts = [p.strip().upper() for p in spec.split("+") if p.strip()]
    if not parts:
        raise ValueError("empty feature set")
    unknown = [p for p in parts if p not in FEATURE_GROUPS]
    if unknown:
        raise ValueError(f"unknown feature group(s) {unknown}; expected L, F, LS, FS")
    chosen = set().union(*(FEATURE_GROUPS[p] for p in parts))
    return tuple(n for n in FEATURE_NAMES if n in chosen)


# ---------------------------------------------------------------------------
# time domain


@dataclass(frozen=True)
class TimeFeatures:
    mean: float
    std: float
    variance: float
    aafod: float
    nfod: float
    energy: float
    power: float
    hjorth_activity: float
    hjorth_mobility: float
    hozc: float
    ppm: float
    kurtosis: float
    flags: frozenset = field(default=frozenset(), compare=False)

    def values(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)[:12]])


def zero_crossing_indicator(x: np.ndarray) -> np.ndarray:
    """1 where the zero-meaned signal is non-negative, else 0."""
    return (x - x.mean() >= 0).astype(np.float64)


def time_features(x) -> TimeFeatures:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] < 2:
        raise ValueError("time_features needs a one-dimensional sequence of length >= 2")
    if not np.all(np.isfinite(x)):
        raise ValueError("time_features input contains non-finite values")
    n = x.shape[0]
    mu = x.mean()
    centered = x - mu
    var = np.mean(centered**2)
    std = np.sqrt(var)
    diff = np.diff(x)
    aafod = np.mean(np.abs(diff))
    energy = np.sum(x**2)
    flags = set()
    if std > 0:
        nfod = aafod / std
        mobility = np.std(diff) / std
        kurt = np.mean(centered**4) / var**2
    else:
        nfod = mobility = kurt = 0.0
        flags.add("zero_variance")
    hozc = np.sum(np.diff(zero_crossing_indicator(x)) ** 2)
    return TimeFeatures(
        mean=float(mu),
        std=float(std),
        variance=float(var),
        aafod=float(aafod),
        nfod=float(nfod),
        energy=float(energy),
        power=float(energy / n),
        hjorth_activity=float(var),
        hjorth_mobility=float(mobility),
        hozc=float(hozc),
        ppm=float((x.max() - x.min()) / n),
        kurtosis=float(kurt),
        flags=frozenset(flags),
    )


# ---------------------------------------------------------------------------
# frequency domain


@dataclass(frozen=True)
class FreqFeatures:
    psd: tuple[float, float, float, float]
    lbp: tuple[float, float, float, float]
    de: tuple[float, float, float, float]
    de_fb: float
    mean_psd: float
    flags: frozenset = field(default=frozenset(), compare=False)

    def values(self) -> np.ndarray:
        return np.array([*self.psd, *self.lbp, *self.de, self.de_fb, self.mean_psd])


def differential_entropy(x: np.ndarray) -> float | None:
    """Gaussian differential entropy ½·ln(2πe·σ²); ``None`` for a flat signal."""
    var = np.var(x)
    if var <= 0:
        return None
    return 0.5 * (LN_2PI_E + np.log(var))


def log_band_power(x: np.ndarray) -> float | None:
    p = np.mean(np.square(x))
    if p <= 0:
        return None
    return float(np.log(p))


def freq_features(bands: BandSignals, full, spectrum: Spectrum) -> FreqFeatures:
    flags = set()
    psd = tuple(band_power(spectrum, b) for b in EEG_BANDS)
    lbp, de = [], []
    for b in EEG_BANDS:
        sig = bands[b]
        v = log_band_power(sig)
        if v is None:
            flags.add(f"zero_power_{b.name.lower()}")
            v = 0.0
        lbp.append(v)
        h = differential_entropy(sig)
        if h is None:
            flags.add(f"zero_variance_{b.name.lower()}")
            h = 0.0
        de.append(float(h))
    de_fb = differential_entropy(np.asarray(full, dtype=np.float64))
    if de_fb is None:
        flags.add("zero_variance_full")
        de_fb = 0.0
    return FreqFeatures(
        psd=psd,
        lbp=tuple(lbp),
        de=tuple(de),
        de_fb=float(de_fb),
        mean_psd=float(np.mean(psd)),
        flags=frozenset(flags),
    )


# ---------------------------------------------------------------------------
# per participant


@dataclass(frozen=True)
class ExtractionConfig:
    """Knobs for the per-segment pipeline. Defaults follow the documented design."""

    denoise: bool = True
    denoise_config: DenoiseConfig = DenoiseConfig()
    welch_window: int = 256
    welch_overlap: int = 128
    dtw_znorm: bool = True
    dtw_window: int | None = None


@dataclass
class ChannelAnalysis:
    """Intermediate products of one channel; bands are reused for synchrony."""

    channel: ChannelId
    signal: np.ndarray
    bands: BandSignals
    values: np.ndarray
    flags: frozenset


def analyze_channel(channel: ChannelId, x, config: ExtractionConfig = ExtractionConfig()) -> ChannelAnalysis:
    x = np.asarray(x, dtype=np.float64)
    if config.denoise:
        x = wavelet_denoise(x, config.denoise_config)
    tf = time_features(x)
    bands = band_decompose(x)
    spec = welch_psd(x, window_len=config.welch_window, overlap=config.welch_overlap)
    ff = freq_features(bands, x, spec)
    flags = frozenset(f"{channel.value}:{f}" for f in tf.flags | ff.flags)
    return ChannelAnalysis(channel, x, bands, np.concatenate([tf.values(), ff.values()]), flags)


@dataclass
class IndividualFeatures:
    values: np.ndarray  # (208,)
    bands: dict  # ChannelId -> BandSignals
    flags: frozenset

    names = INDIVIDUAL_FEATURES


def extract_individual(participant, config: ExtractionConfig = ExtractionConfig()) -> IndividualFeatures:
    """208 features for one participant.

    ``participant`` maps each of the eight flow channels to its samples, or is
    a sequence of :class:`~dyadflow.core.SignalSegment`.
    """
    if isinstance(participant, dict):
        by_channel = {ChannelId(k): v for k, v in participant.items()}
    else:
        by_channel = {s.channel: s.samples for s in participant}
    for ch in FLOW_CHANNELS:
        if ch not in by_channel:
            raise KeyError(f"missing flow channel {ch.value}")
    parts = [analyze_channel(ch, by_channel[ch], config) for ch in FLOW_CHANNELS]
    return IndividualFeatures(
        values=np.concatenate([p.values for p in parts]),
        bands={p.channel: p.bands for p in parts},
        flags=frozenset().union(*(p.flags for p in parts)),
    )
