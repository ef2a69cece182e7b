"""Synthetic dyads with planted frontal band-power and inter-brain coupling effects.

Each channel is a sum of band-limited noise components (one per EEG band)
plus a white noise floor. Frontal channels scale their band amplitudes by a
score-dependent multiplier. When both participants are in high flow, every
band of every channel mixes in a component shared by the pair, so the
expected per-band correlation between partners is ``coupling ** 2``. Shared
components are drawn separately per channel; a single draw reused across
channels would make one participant's channels coherent with each other,
which would reveal the partner's state through individual features.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    EMOTIV_ORDER,
    FLOW_CHANNELS,
    SAMPLE_RATE,
    SEGMENT_LENGTH,
    DyadSample,
    Region,
    SignalSegment,
    is_high,
    label_binary,
    label_ternary,
)
from .dataset import ManifestRow, recording_path, write_manifest, write_recording
from .dsp import EEG_BANDS, BandId, band_decompose

#: Joint probability of (participant 1 high, participant 2 high). Gives 62.9%
#: simultaneous, 17.0% individual-only and 20.1% neither per participant.
DEFAULT_JOINT = {(True, True): 0.629, (True, False): 0.170, (False, True): 0.170, (False, False): 0.031}

#: Band amplitudes (µV) before any score effect.
BASE_AMPLITUDE = {BandId.DELTA: 20.0, BandId.THETA: 10.0, BandId.ALPHA: 8.0, BandId.BETA: 5.0}

#: Frontal amplitude multipliers indexed by flow score 0..3.
PLANTED_BAND_EFFECT = {
    BandId.DELTA: (1.0, 1.0, 1.0, 1.0),
    BandId.THETA: (1.0, 1.1, 1.5, 1.7),
    BandId.ALPHA: (1.0, 0.95, 0.75, 0.7),
    BandId.BETA: (1.0, 1.0, 1.2, 1.3),
}
NO_BAND_EFFECT = {b: (1.0, 1.0, 1.0, 1.0) for b in EEG_BANDS}

QUANTUM = 1.0 / 64  # exactly representable in "%.6f"


@dataclass(frozen=True)
class SynthConfig:
    n_pairs: int = 47
    n_rounds: int = 3
    n_samplings: int = 5
    coupling: float = 0.8
    band_effect: dict = field(default_factory=lambda: dict(PLANTED_BAND_EFFECT))
    noise_floor: float = 1.0
    joint: dict = field(default_factory=lambda: dict(DEFAULT_JOINT))
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.coupling <= 1.0:
            raise ValueError(f"coupling must lie in [0, 1], got {self.coupling}")
        for name in ("n_pairs", "n_rounds", "n_samplings"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.n_rounds > 3 or self.n_samplings > 5:
            raise ValueError("at most 3 rounds and 5 samplings per round")
        if self.noise_floor < 0:
            raise ValueError("noise_floor must be non-negative")
        for band in EEG_BANDS:
            mult = self.band_effect.get(band)
            if mult is None or len(mult) != 4 or min(mult) <= 0:
                raise ValueError(f"band_effect for {band.name} needs four positive multipliers (scores 0..3)")
        w = np.array([self.joint.get(k, -1.0) for k in DEFAULT_JOINT])
        if np.any(w < 0) or not np.isclose(w.sum(), 1.0):
            raise ValueError("joint score distribution needs four non-negative weights summing to 1")

    def to_dict(self) -> dict:
        return {
            "n_pairs": self.n_pairs,
            "n_rounds": self.n_rounds,
            "n_samplings": self.n_samplings,
            "coupling": self.coupling,
            "band_effect": {b.name.lower(): list(v) for b, v in self.band_effect.items()},
            "noise_floor": self.noise_floor,
            "joint": {f"{'H' if a else 'L'}{'H' if b else 'L'}": p for (a, b), p in self.joint.items()},
            "seed": self.seed,
        }


def null_config(**overrides) -> SynthConfig:
    """No coupling and no band effects: labels carry no signal."""
    base = dict(coupling=0.0, band_effect=dict(NO_BAND_EFFECT))
    base.update(overrides)
    return SynthConfig(**base)


@dataclass
class SynthDataset:
    config: SynthConfig
    dyads: list
    recordings: dict  # (group, participant, round, sampling) -> (14, 1536)
    truth: list  # dict per dyad


#: Expected variance of each band of unit white noise (orthogonal 5-level DWT).
_WHITE_BAND_VARIANCE = {BandId.DELTA: 2.0**-5, BandId.THETA: 2.0**-5, BandId.ALPHA: 2.0**-4, BandId.BETA: 2.0**-3}


def _unit_bands(rng) -> dict:
    # Scale by the expected, not the sample, variance: forcing every draw to
    # exactly unit power would make uncoupled channels distinguishable from
    # coupled mixtures by their band power alone.
    bands = band_decompose(rng.standard_normal(SEGMENT_LENGTH), SAMPLE_RATE)
    return {b: bands[b] / np.sqrt(_WHITE_BAND_VARIANCE[b]) for b in EEG_BANDS}


def _draw_scores(rng, joint) -> tuple[int, int]:
    keys = list(DEFAULT_JOINT)
    p = np.array([joint[k] for k in keys])
    h1, h2 = keys[rng.choice(len(keys), p=p / p.sum())]
    s1 = int(rng.integers(2, 4)) if h1 else int(rng.integers(0, 2))
    s2 = int(rng.integers(2, 4)) if h2 else int(rng.integers(0, 2))
    return s1, s2


def _participant(rng, score: int, shared: list | None, config: SynthConfig) -> np.ndarray:
    own_w = np.sqrt(1.0 - config.coupling**2)
    data = np.empty((len(EMOTIV_ORDER), SEGMENT_LENGTH))
    for row, ch in enumerate(EMOTIV_ORDER):
        own = _unit_bands(rng)
        x = config.noise_floor * rng.standard_normal(SEGMENT_LENGTH)
        for b in EEG_BANDS:
            comp = own[b] if shared is None else own_w * own[b] + config.coupling * shared[row][b]
            amp = BASE_AMPLITUDE[b]
            if ch.region is Region.FRONTAL:
                amp *= config.band_effect[b][score]
            x += amp * comp
        data[row] = np.round(x / QUANTUM) * QUANTUM
    return data


def generate(config: SynthConfig = SynthConfig()) -> SynthDataset:
    """Deterministic synthetic dataset; each sample has its own seeded stream."""
    dyads, recordings, truth = [], {}, []
    flow_rows = [EMOTIV_ORDER.index(ch) for ch in FLOW_CHANNELS]
    for g in range(1, config.n_pairs + 1):
        for r in range(1, config.n_rounds + 1):
            for s in range(1, config.n_samplings + 1):
                rng = np.random.default_rng([config.seed, g, r, s])
                s1, s2 = _draw_scores(rng, config.joint)
                coupled = is_high(s1) and is_high(s2) and config.coupling > 0
                shared = [_unit_bands(rng) for _ in EMOTIV_ORDER] if coupled else None
                d1 = _participant(rng, s1, shared, config)
                d2 = _participant(rng, s2, shared, config)
                recordings[(g, 1, r, s)] = d1
                recordings[(g, 2, r, s)] = d2
                dyads.append(
                    DyadSample(
                        group_id=g,
                        round_index=r,
                        sampling_index=s,
                        segments_p1=tuple(SignalSegment(FLOW_CHANNELS[i], d1[row]) for i, row in enumerate(flow_rows)),
                        segments_p2=tuple(SignalSegment(FLOW_CHANNELS[i], d2[row]) for i, row in enumerate(flow_rows)),
                        score_p1=s1,
                        score_p2=s2,
                    )
                )
                truth.append({
                    "group": g,
                    "round": r,
                    "sampling": s,
                    "score_p1": s1,
                    "score_p2": s2,
                    "binary_label": int(label_binary(s1, s2)),
                    "ternary_p1": int(label_ternary(s1, s2)),
                    "ternary_p2": int(label_ternary(s2, s1)),
                    "coupled": int(coupled),
                })
    return SynthDataset(config, dyads, recordings, truth)


TRUTH_COLUMNS = ("group", "round", "sampling", "score_p1", "score_p2", "binary_label", "ternary_p1", "ternary_p2",
                 "coupled")


def write_dataset(data: SynthDataset, root) -> Path:
    """Write recordings, ``manifest.csv``, ``channel_map.json``, ``ground_truth.csv`` and ``synth_config.json``."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    manifest = []
    for (g, p, r, s), rec in sorted(data.recordings.items()):
        path = recording_path(root, g, p, r, s)
        path.parent.mkdir(exist_ok=True)
        write_recording(path, rec)
    for t in data.truth:
        manifest.append(ManifestRow(t["group"], 1, t["round"], t["sampling"], t["score_p1"]))
        manifest.append(ManifestRow(t["group"], 2, t["round"], t["sampling"], t["score_p2"]))
    write_manifest(root / "manifest.csv", manifest)
    (root / "channel_map.json").write_text(json.dumps({"channels": [c.value for c in EMOTIV_ORDER]}, indent=2) + "\n")
    with (root / "ground_truth.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TRUTH_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(data.truth)
    (root / "synth_config.json").write_text(json.dumps(data.config.to_dict(), indent=2, sort_keys=True) + "\n")
    return root
