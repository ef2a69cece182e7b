"""Wavelet denoising, dyadic band decomposition and Welch spectra.

The discrete wavelet transform here uses half-sample symmetric extension,
so a single level of length ``N`` with a filter of length ``F`` produces
``floor((N + F - 1) / 2)`` coefficients per branch. Reconstruction from the
full coefficient set is exact for orthogonal families.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from math import comb

import numpy as np
from scipy import signal as sps

from .core import SAMPLE_RATE


class BandId(Enum):
    DELTA = ("δ", 0.0, 4.0)
    THETA = ("θ", 4.0, 8.0)
    ALPHA = ("α", 8.0, 16.0)
    BETA = ("β", 16.0, 32.0)
    FULL = ("FB", None, None)

    @property
    def symbol(self) -> str:
        return self.value[0]

    @property
    def low(self) -> float | None:
        return self.value[1]

    @property
    def high(self) -> float | None:
        return self.value[2]


EEG_BANDS = (BandId.DELTA, BandId.THETA, BandId.ALPHA, BandId.BETA)


# ---------------------------------------------------------------------------
# filters


@dataclass(frozen=True)
class Wavelet:
    name: str
    dec_lo: np.ndarray
    dec_hi: np.ndarray
    rec_lo: np.ndarray
    rec_hi: np.ndarray

    @property
    def length(self) -> int:
        return self.dec_lo.shape[0]


def _daubechies_scaling(order: int) -> np.ndarray:
    # Minimum-phase spectral factor of the Daubechies half-band polynomial.
    if order == 1:
        return np.array([1.0, 1.0]) / np.sqrt(2.0)
    poly_y = [comb(order - 1 + k, k) for k in range(order)]
    y_roots = np.roots(poly_y[::-1])
    z_roots = []
    for y in y_roots:
        pair = np.roots([1.0, -(2.0 - 4.0 * y), 1.0])
        z_roots.append(pair[np.argmin(np.abs(pair))])
    h = np.poly(np.concatenate([-np.ones(order), z_roots]))
    h = np.real(h)
    return h * (np.sqrt(2.0) / h.sum())


@lru_cache(maxsize=None)
def wavelet(name: str = "db4") -> Wavelet:
    """Orthogonal Daubechies filter bank ``dbN`` (``haar`` is ``db1``)."""
    key = name.lower()
    if key == "haar":
        key = "db1"
    if not key.startswith("db") or not key[2:].isdigit() or not 1 <= int(key[2:]) <= 20:
        raise ValueError(f"unsupported wavelet {name!r}; expected db1..db20")
    rec_lo = _daubechies_scaling(int(key[2:]))
    dec_lo = rec_lo[::-1].copy()
    signs = np.where(np.arange(rec_lo.size) % 2 == 0, 1.0, -1.0)
    rec_hi = signs * dec_lo
    dec_hi = rec_hi[::-1].copy()
    for arr in (dec_lo, dec_hi, rec_lo, rec_hi):
        arr.setflags(write=False)
    return Wavelet(name, dec_lo, dec_hi, rec_lo, rec_hi)


# ---------------------------------------------------------------------------
# transform


def dwt(x: np.ndarray, w: Wavelet) -> tuple[np.ndarray, np.ndarray]:
    """One analysis level: (approximation, detail)."""
    x = np.asarray(x, dtype=np.float64)
    f = w.length
    ext = np.pad(x, f - 1, mode="symmetric")
    n_out = (x.shape[0] + f - 1) // 2
    sl = slice(f, f + 2 * n_out, 2)
    ca = np.convolve(ext, w.dec_lo)[sl]
    cd = np.convolve(ext, w.dec_hi)[sl]
    return ca, cd


def idwt(ca: np.ndarray | None, cd: np.ndarray | None, w: Wavelet, n: int) -> np.ndarray:
    """One synthesis level back to ``n`` samples. ``None`` stands for zeros."""
    f = w.length
    ref = ca if ca is not None else cd
    m = ref.shape[0]
    if n > 2 * m - f + 2:
        raise ValueError(f"cannot reconstruct {n} samples from {m} coefficients")
    out = np.zeros(n)
    for coeffs, filt in ((ca, w.rec_lo), (cd, w.rec_hi)):
        if coeffs is None:
            continue
        up = np.zeros(2 * m)
        up[::2] = coeffs
        out += np.convolve(up, filt)[f - 2 : f - 2 + n]
    return out


@dataclass(frozen=True)
class Decomposition:
    """Multilevel coefficients ``[cA_L, cD_L, ..., cD_1]`` plus the lengths
    of the signal entering each level (finest first)."""

    coeffs: list
    lengths: tuple[int, ...]
    wavelet: Wavelet

    @property
    def level(self) -> int:
        return len(self.lengths)


def wavedec(x: np.ndarray, w: Wavelet, level: int) -> Decomposition:
    a = np.asarray(x, dtype=np.float64)
    details, lengths = [], []
    for _ in range(level):
        lengths.append(a.shape[0])
        a, d = dwt(a, w)
        details.append(d)
    return Decomposition([a] + details[::-1], tuple(lengths), w)


def waverec(dec: Decomposition, keep=None) -> np.ndarray:
    """Inverse transform. ``keep`` optionally restricts reconstruction to a
    set of coefficient-group indices (0 = approximation, 1 = coarsest detail)."""
    coeffs = dec.coeffs
    if keep is not None:
        keep = set(keep)
        coeffs = [c if i in keep else None for i, c in enumerate(coeffs)]
    a = coeffs[0]
    for lvl in range(dec.level):
        n = dec.lengths[dec.level - 1 - lvl]
        d = coeffs[lvl + 1]
        if a is None and d is None:
            a = None
            continue
        a = idwt(a, d, dec.wavelet, n)
    if a is None:
        return np.zeros(dec.lengths[0])
    return a


def _check_signal(x, min_len: int, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"{what} expects a one-dimensional sequence")
    if x.shape[0] < min_len:
        raise ValueError(f"{what} needs at least {min_len} samples, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{what} input contains non-finite values")
    return x


# ---------------------------------------------------------------------------
# denoising


@dataclass(frozen=True)
class DenoiseConfig:
    wavelet: str = "db4"
    level: int = 5
    mode: str = "soft"


def soft_threshold(c: np.ndarray, t: float) -> np.ndarray:
    return np.sign(c) * np.maximum(np.abs(c) - t, 0.0)


def hard_threshold(c: np.ndarray, t: float) -> np.ndarray:
    return np.where(np.abs(c) > t, c, 0.0)


def universal_threshold(finest_detail: np.ndarray, n: int) -> float:
    sigma = np.median(np.abs(finest_detail)) / 0.6745
    return float(sigma * np.sqrt(2.0 * np.log(n)))


def wavelet_denoise(x, config: DenoiseConfig = DenoiseConfig()) -> np.ndarray:
    """VisuShrink-style denoising: noise level from the finest detail band,
    universal threshold applied to every detail level, approximation kept."""
    x = _check_signal(x, 32, "wavelet_denoise")
    if config.mode not in ("soft", "hard"):
        raise ValueError(f"unknown threshold mode {config.mode!r}")
    dec = wavedec(x, wavelet(config.wavelet), config.level)
    thr = universal_threshold(dec.coeffs[-1], x.shape[0])
    shrink = soft_threshold if config.mode == "soft" else hard_threshold
    coeffs = [dec.coeffs[0]] + [shrink(d, thr) for d in dec.coeffs[1:]]
    return waverec(Decomposition(coeffs, dec.lengths, dec.wavelet))


# ---------------------------------------------------------------------------
# bands


@dataclass(frozen=True)
class BandSignals:
    delta: np.ndarray
    theta: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    residual: np.ndarray  # D1 + D2 content above the beta band

    def __getitem__(self, band: BandId) -> np.ndarray:
        return getattr(self, band.name.lower())

    def total(self) -> np.ndarray:
        return self.delta + self.theta + self.alpha + self.beta + self.residual


def band_decompose(x, sample_rate: int = SAMPLE_RATE, wavelet_name: str = "db4") -> BandSignals:
    """Split a 256 Hz signal into delta/theta/alpha/beta with a 5-level DWT.

    At 256 Hz the dyadic ranges line up with the EEG bands: A5 is 0-4 Hz,
    D5 4-8, D4 8-16, D3 16-32. D2 and D1 land in ``residual``.
    """
    if sample_rate != SAMPLE_RATE:
        raise ValueError(f"band edges assume {SAMPLE_RATE} Hz sampling, got {sample_rate}")
    x = _check_signal(x, 64, "band_decompose")
    dec = wavedec(x, wavelet(wavelet_name), 5)
    return BandSignals(
        delta=waverec(dec, keep=[0]),
        theta=waverec(dec, keep=[1]),
        alpha=waverec(dec, keep=[2]),
        beta=waverec(dec, keep=[3]),
        residual=waverec(dec, keep=[4, 5]),
    )


# ---------------------------------------------------------------------------
# spectra


@dataclass(frozen=True)
class Spectrum:
    frequencies: np.ndarray
    power: np.ndarray


def welch_psd(x, sample_rate: int = SAMPLE_RATE, window_len: int = 256, overlap: int = 128) -> Spectrum:
    """One-sided Welch PSD (Hann windows, per-window mean removed), in units²/Hz."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] == 0:
        raise ValueError("welch_psd needs a non-empty one-dimensional sequence")
    if window_len > x.shape[0]:
        raise ValueError(f"window of {window_len} exceeds signal length {x.shape[0]}")
    if not 0 <= overlap < window_len:
        raise ValueError(f"overlap must be in [0, {window_len}), got {overlap}")
    freqs, power = sps.welch(
        x,
        fs=sample_rate,
        window="hann",
        nperseg=window_len,
        noverlap=overlap,
        detrend="constant",
        scaling="density",
    )
    return Spectrum(freqs, power)


def band_power(spectrum: Spectrum, band: BandId) -> float:
    """Mean PSD over bins with ``low <= f < high``."""
    if band is BandId.FULL:
        raise ValueError("band_power is defined for the four EEG bands only")
    mask = (spectrum.frequencies >= band.low) & (spectrum.frequencies < band.high)
    if not mask.any():
        raise ValueError(f"no spectral bins inside {band.name} ({band.low}-{band.high} Hz)")
    return float(spectrum.power[mask].mean())
