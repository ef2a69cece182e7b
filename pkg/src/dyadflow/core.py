"""Domain types shared across the pipeline and the flow-labeling rules."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Sequence

import numpy as np

SAMPLE_RATE = 256
SEGMENT_SECONDS = 6
SEGMENT_LENGTH = SAMPLE_RATE * SEGMENT_SECONDS  # 1536

HIGH_FLOW_THRESHOLD = 2


class Region(Enum):
    FRONTAL = "frontal"
    LEFT_TEMPORAL = "left_temporal"


class ChannelId(str, Enum):
    """The 14 Emotiv Epoc+ electrodes, declared in the headset's canonical order."""

    AF3 = "AF3"
    F7 = "F7"
    F3 = "F3"
    FC5 = "FC5"
    T7 = "T7"
    P7 = "P7"
    O1 = "O1"
    O2 = "O2"
    P8 = "P8"
    T8 = "T8"
    FC6 = "FC6"
    F4 = "F4"
    F8 = "F8"
    AF4 = "AF4"

    def __str__(self) -> str:
        return self.value

    @property
    def region(self) -> Region | None:
        return _REGIONS.get(self)

    @property
    def is_flow_channel(self) -> bool:
        return self in _REGIONS


#: Default row order of a recording file.
EMOTIV_ORDER: tuple[ChannelId, ...] = tuple(ChannelId)

#: The eight channels used for flow features, in feature-registry order.
FLOW_CHANNELS: tuple[ChannelId, ...] = (
    ChannelId.F3,
    ChannelId.F4,
    ChannelId.F7,
    ChannelId.F8,
    ChannelId.AF3,
    ChannelId.AF4,
    ChannelId.T7,
    ChannelId.P7,
)

_REGIONS = {
    ChannelId.F3: Region.FRONTAL,
    ChannelId.F4: Region.FRONTAL,
    ChannelId.F7: Region.FRONTAL,
    ChannelId.F8: Region.FRONTAL,
    ChannelId.AF3: Region.FRONTAL,
    ChannelId.AF4: Region.FRONTAL,
    ChannelId.T7: Region.LEFT_TEMPORAL,
    ChannelId.P7: Region.LEFT_TEMPORAL,
}

FRONTAL_CHANNELS = tuple(c for c in FLOW_CHANNELS if c.region is Region.FRONTAL)
TEMPORAL_CHANNELS = tuple(c for c in FLOW_CHANNELS if c.region is Region.LEFT_TEMPORAL)


def parse_channel(name: str) -> ChannelId:
    try:
        return ChannelId(name.strip().upper())
    except ValueError:
        raise ValueError(f"unknown channel name {name!r}") from None


class BinaryLabel(IntEnum):
    LOW = 0
    HIGH = 1


class TernaryLabel(IntEnum):
    NEITHER = 0  # neither individual nor simultaneous flow
    INDIVIDUAL = 1  # individual but not simultaneous flow
    SIMULTANEOUS = 2


def validate_score(score) -> int:
    """Return ``score`` as an int flow rating, rejecting anything outside 0..3."""
    if isinstance(score, bool) or int(score) != score or not 0 <= score <= 3:
        raise ValueError(f"flow score must be an integer in 0..3, got {score!r}")
    return int(score)


def is_high(score: int) -> bool:
    return validate_score(score) >= HIGH_FLOW_THRESHOLD


def label_binary(s1: int, s2: int) -> BinaryLabel:
    """High simultaneous flow only when both participants rate 2 or 3."""
    if is_high(s1) and is_high(s2):
        return BinaryLabel.HIGH
    return BinaryLabel.LOW


def label_ternary(self_score: int, other_score: int) -> TernaryLabel:
    """Label from the point of view of the participant holding ``self_score``."""
    if not is_high(self_score):
        validate_score(other_score)
        return TernaryLabel.NEITHER
    if is_high(other_score):
        return TernaryLabel.SIMULTANEOUS
    return TernaryLabel.INDIVIDUAL


@dataclass(frozen=True)
class SignalSegment:
    channel: ChannelId
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        arr = np.array(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError("segment samples must be one-dimensional")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"segment for {self.channel} contains non-finite samples")
        if self.sample_rate != SAMPLE_RATE:
            raise ValueError(f"sample rate must be {SAMPLE_RATE} Hz, got {self.sample_rate}")
        arr.setflags(write=False)
        object.__setattr__(self, "channel", ChannelId(self.channel))
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return self.samples.shape[0]


def _as_segments(segs: Sequence[SignalSegment]) -> tuple[SignalSegment, ...]:
    by_channel = {s.channel: s for s in segs}
    if len(by_channel) != len(segs):
        raise ValueError("duplicate channel in participant segments")
    missing = [c for c in FLOW_CHANNELS if c not in by_channel]
    if missing:
        raise ValueError(f"missing flow channel(s): {', '.join(map(str, missing))}")
    extra = [c for c in by_channel if c not in FLOW_CHANNELS]
    if extra:
        raise ValueError(f"non-flow channel(s) supplied: {', '.join(map(str, extra))}")
    return tuple(by_channel[c] for c in FLOW_CHANNELS)


@dataclass(frozen=True)
class DyadSample:
    """Both participants' eight flow-channel segments for one sampling point."""

    group_id: int
    round_index: int
    sampling_index: int
    segments_p1: tuple[SignalSegment, ...]
    segments_p2: tuple[SignalSegment, ...]
    score_p1: int
    score_p2: int
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not 1 <= self.round_index <= 3:
            raise ValueError(f"round_index must be in 1..3, got {self.round_index}")
        if not 1 <= self.sampling_index <= 5:
            raise ValueError(f"sampling_index must be in 1..5, got {self.sampling_index}")
        p1 = _as_segments(self.segments_p1)
        p2 = _as_segments(self.segments_p2)
        lengths = {len(s) for s in p1 + p2}
        if len(lengths) != 1:
            raise ValueError(f"segments differ in length: {sorted(lengths)}")
        object.__setattr__(self, "segments_p1", p1)
        object.__setattr__(self, "segments_p2", p2)
        object.__setattr__(self, "score_p1", validate_score(self.score_p1))
        object.__setattr__(self, "score_p2", validate_score(self.score_p2))

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.group_id, self.round_index, self.sampling_index)

    @property
    def binary_label(self) -> BinaryLabel:
        return label_binary(self.score_p1, self.score_p2)

    def ternary_label(self, participant: int) -> TernaryLabel:
        if participant == 1:
            return label_ternary(self.score_p1, self.score_p2)
        if participant == 2:
            return label_ternary(self.score_p2, self.score_p1)
        raise ValueError("participant must be 1 or 2")

    def signals(self, participant: int) -> np.ndarray:
        """(8, n) array of one participant's samples in FLOW_CHANNELS order."""
        segs = self.segments_p1 if participant == 1 else self.segments_p2
        return np.stack([s.samples for s in segs])
