"""Recording ingestion, segment slicing, feature-matrix assembly, Z-scoring
and SMOTE balancing.

On-disk layout::

    <root>/manifest.csv                 group,participant,round,sampling,flow_score
    <root>/channel_map.json             optional; 14 channel names in row order
    <root>/<group>-<participant>-<round>/<sampling>.csv     14 x 1536, no header
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import (
    EMOTIV_ORDER,
    FLOW_CHANNELS,
    SAMPLE_RATE,
    SEGMENT_LENGTH,
    ChannelId,
    DyadSample,
    SignalSegment,
    label_binary,
    label_ternary,
)
from .features import FEATURE_NAMES, ExtractionConfig, extract_individual
from .synchrony import extract_synchrony

log = logging.getLogger(__name__)

N_CHANNELS = len(EMOTIV_ORDER)
META_COLUMNS = (
    "group_id",
    "participant",
    "round_index",
    "sampling_index",
    "binary_label",
    "ternary_label",
    "quality_flags",
)


class DatasetError(Exception):
    """Base class for malformed dataset inputs."""


class ShapeError(DatasetError):
    pass


class ParseError(DatasetError):
    pass


class ChannelMapError(DatasetError):
    pass


class ManifestError(DatasetError):
    pass


class SliceError(DatasetError):
    pass


class ExtractionError(DatasetError):
    pass


# ---------------------------------------------------------------------------
# recordings


@dataclass(frozen=True)
class RecordingFile:
    path: Path
    data: np.ndarray  # (14, 1536)
    channels: tuple[ChannelId, ...]

    def channel(self, ch: ChannelId) -> np.ndarray:
        return self.data[self.channels.index(ch)]

    def flow_segments(self) -> tuple[SignalSegment, ...]:
        return tuple(SignalSegment(ch, self.channel(ch)) for ch in FLOW_CHANNELS)


def resolve_channel_order(names: Sequence | None) -> tuple[ChannelId, ...]:
    if names is None:
        return EMOTIV_ORDER
    order = []
    for name in names:
        try:
            order.append(ChannelId(str(name).strip().upper()))
        except ValueError:
            raise ChannelMapError(f"unknown channel name {name!r} in channel map") from None
    if len(order) != N_CHANNELS or len(set(order)) != N_CHANNELS:
        raise ChannelMapError(f"channel map must list each of the {N_CHANNELS} channels exactly once")
    return tuple(order)


def load_channel_map(path) -> tuple[ChannelId, ...]:
    """Read a JSON channel map: either a list of names or ``{"channels": [...]}``."""
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ChannelMapError(f"cannot read channel map {path}: {exc}") from exc
    if isinstance(raw, dict):
        raw = raw.get("channels")
    if not isinstance(raw, list):
        raise ChannelMapError(f"channel map {path} must contain a list of channel names")
    return resolve_channel_order(raw)


def _locate_bad_cell(text: str, path) -> ParseError:
    for r, line in enumerate(text.splitlines()):
        for c, cell in enumerate(line.split(",")):
            try:
                v = float(cell)
            except ValueError:
                return ParseError(f"{path}: non-numeric cell {cell.strip()!r} at row {r + 1}, column {c + 1}")
            if not np.isfinite(v):
                return ParseError(f"{path}: non-finite value {cell.strip()!r} at row {r + 1}, column {c + 1}")
    return ParseError(f"{path}: malformed CSV")


def load_recording(path, channels: Sequence | None = None) -> RecordingFile:
    """Read a headerless 14 × 1536 CSV. ``channels`` gives the row order
    (defaults to the Emotiv Epoc+ order)."""
    order = resolve_channel_order(channels)
    path = Path(path)
    text = path.read_text()
    rows = [line for line in text.splitlines() if line.strip()]
    if len(rows) != N_CHANNELS:
        raise ShapeError(f"{path}: expected {N_CHANNELS} rows (channels), found {len(rows)}")
    widths = {len(line.split(",")) for line in rows}
    if widths != {SEGMENT_LENGTH}:
        raise ShapeError(f"{path}: expected {SEGMENT_LENGTH} columns per row, found {sorted(widths)}")
    try:
        data = np.array([[float(v) for v in line.split(",")] for line in rows])
    except ValueError:
        raise _locate_bad_cell(text, path) from None
    if not np.all(np.isfinite(data)):
        raise _locate_bad_cell(text, path)
    return RecordingFile(path, data, order)


def write_recording(path, data: np.ndarray) -> None:
    data = np.asarray(data, dtype=np.float64)
    if data.shape != (N_CHANNELS, SEGMENT_LENGTH):
        raise ShapeError(f"recording must be {N_CHANNELS}x{SEGMENT_LENGTH}, got {data.shape}")
    np.savetxt(path, data, delimiter=",", fmt="%.6f")


# ---------------------------------------------------------------------------
# slicing


def slice_segments(continuous: np.ndarray, sampling_points: Iterable[float], sample_rate: int = SAMPLE_RATE,
                   length: int = SEGMENT_LENGTH) -> tuple[dict, dict]:
    """Cut the ``length`` samples ending at each sampling point (in seconds).

    ``continuous`` is (channels, samples) or a single 1-D stream. Returns
    ``(segments, errors)``, both keyed by the point's position in
    ``sampling_points``; a bad point does not affect the others.
    """
    data = np.asarray(continuous, dtype=np.float64)
    n_total = data.shape[-1]
    segments, errors = {}, {}
    for k, t in enumerate(sampling_points):
        end = int(round(t * sample_rate))
        start = end - length
        if start < 0:
            errors[k] = SliceError(f"sampling point {t} s has only {max(end, 0)} samples of history; need {length}")
        elif end > n_total:
            errors[k] = SliceError(f"sampling point {t} s lies beyond the end of the stream ({n_total / sample_rate:g} s)")
        else:
            segments[k] = data[..., start:end].copy()
    return segments, errors


# ---------------------------------------------------------------------------
# manifest and dataset tree


@dataclass(frozen=True)
class ManifestRow:
    group: int
    participant: int
    round_index: int
    sampling_index: int
    flow_score: int


MANIFEST_COLUMNS = ("group", "participant", "round", "sampling", "flow_score")


def read_manifest(path) -> list[ManifestRow]:
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    rows = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(MANIFEST_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ManifestError(f"{path}: missing column(s) {sorted(missing)}")
        for lineno, rec in enumerate(reader, start=2):
            try:
                row = ManifestRow(*(int(rec[c]) for c in MANIFEST_COLUMNS))
            except (TypeError, ValueError):
                raise ManifestError(f"{path}:{lineno}: non-integer field in {dict(rec)}") from None
            if row.participant not in (1, 2) or not 0 <= row.flow_score <= 3:
                raise ManifestError(f"{path}:{lineno}: participant must be 1/2 and flow_score 0..3")
            rows.append(row)
    return rows


def write_manifest(path, rows: Iterable[ManifestRow]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_COLUMNS)
        for r in rows:
            w.writerow([r.group, r.participant, r.round_index, r.sampling_index, r.flow_score])


def recording_path(root, group: int, participant: int, round_index: int, sampling_index: int) -> Path:
    return Path(root) / f"{group}-{participant}-{round_index}" / f"{sampling_index}.csv"


@dataclass
class DatasetLoad:
    dyads: list
    skipped: list = field(default_factory=list)  # incomplete dyads, not errors


def load_dataset(root, manifest=None, channel_map=None) -> DatasetLoad:
    """Pair up participants listed in the manifest into :class:`DyadSample`s.

    Dyads lacking either participant are skipped and reported. Malformed
    files raise, with every failing file listed in the message.
    """
    root = Path(root)
    manifest = Path(manifest) if manifest else root / "manifest.csv"
    if channel_map is None and (root / "channel_map.json").exists():
        channel_map = root / "channel_map.json"
    order = load_channel_map(channel_map) if channel_map else EMOTIV_ORDER
    by_key: dict = {}
    for row in read_manifest(manifest):
        by_key.setdefault((row.group, row.round_index, row.sampling_index), {})[row.participant] = row
    dyads, skipped, errors = [], [], []
    for key in sorted(by_key):
        parts = by_key[key]
        if set(parts) != {1, 2}:
            skipped.append(f"group {key[0]} round {key[1]} sampling {key[2]}: only participant(s) {sorted(parts)} listed")
            continue
        recs = {}
        for p, row in parts.items():
            path = recording_path(root, row.group, p, row.round_index, row.sampling_index)
            if not path.exists():
                errors.append(f"{path}: file listed in manifest does not exist")
                continue
            try:
                recs[p] = load_recording(path, order)
            except DatasetError as exc:
                errors.append(str(exc))
        if len(recs) != 2:
            continue
        dyads.append(
            DyadSample(
                group_id=key[0],
                round_index=key[1],
                sampling_index=key[2],
                segments_p1=recs[1].flow_segments(),
                segments_p2=recs[2].flow_segments(),
                score_p1=parts[1].flow_score,
                score_p2=parts[2].flow_score,
            )
        )
    if errors:
        raise DatasetError(f"{len(errors)} malformed input(s):\n  " + "\n  ".join(errors))
    return DatasetLoad(dyads, skipped)


# ---------------------------------------------------------------------------
# feature matrix


@dataclass
class LabeledDataset:
    """One row per participant-sample: 208 individual + 64 shared synchrony columns."""

    X: np.ndarray
    feature_names: tuple
    binary: np.ndarray
    ternary: np.ndarray
    group_id: np.ndarray
    participant: np.ndarray
    round_index: np.ndarray
    sampling_index: np.ndarray
    flags: tuple = ()

    def __post_init__(self):
        n = self.X.shape[0]
        if self.X.ndim != 2 or self.X.shape[1] != len(self.feature_names):
            raise ValueError("feature matrix and feature names disagree")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise ValueError("duplicate feature names")
        for name in ("binary", "ternary", "group_id", "participant", "round_index", "sampling_index"):
            arr = np.asarray(getattr(self, name), dtype=np.intp)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have one entry per row")
            setattr(self, name, arr)
        if not self.flags:
            self.flags = ("",) * n
        self.feature_names = tuple(self.feature_names)

    def __len__(self) -> int:
        return self.X.shape[0]

    def labels(self, task: str) -> np.ndarray:
        if task == "binary":
            return self.binary
        if task == "ternary":
            return self.ternary
        raise ValueError(f"unknown task {task!r}; expected 'binary' or 'ternary'")

    @property
    def dyad_id(self) -> np.ndarray:
        keys = list(zip(self.group_id.tolist(), self.round_index.tolist(), self.sampling_index.tolist()))
        index = {k: i for i, k in enumerate(dict.fromkeys(keys))}
        return np.array([index[k] for k in keys], dtype=np.intp)

    def select(self, names: Sequence[str]) -> "LabeledDataset":
        pos = {n: i for i, n in enumerate(self.feature_names)}
        missing = [n for n in names if n not in pos]
        if missing:
            raise KeyError(f"unknown feature column(s): {missing[:5]}")
        if not names:
            raise ValueError("empty feature set")
        cols = [pos[n] for n in names]
        return replace(self, X=self.X[:, cols], feature_names=tuple(names))

    def subset(self, rows) -> "LabeledDataset":
        rows = np.asarray(rows)
        return LabeledDataset(
            X=self.X[rows],
            feature_names=self.feature_names,
            binary=self.binary[rows],
            ternary=self.ternary[rows],
            group_id=self.group_id[rows],
            participant=self.participant[rows],
            round_index=self.round_index[rows],
            sampling_index=self.sampling_index[rows],
            flags=tuple(np.asarray(self.flags, dtype=object)[rows].tolist()),
        )

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(list(self.feature_names) + list(META_COLUMNS))
            for i in range(len(self)):
                w.writerow(
                    [repr(float(v)) for v in self.X[i]]
                    + [
                        int(self.group_id[i]),
                        int(self.participant[i]),
                        int(self.round_index[i]),
                        int(self.sampling_index[i]),
                        int(self.binary[i]),
                        int(self.ternary[i]),
                        self.flags[i],
                    ]
                )

    @classmethod
    def from_csv(cls, path) -> "LabeledDataset":
        path = Path(path)
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise DatasetError(f"{path}: empty feature file")
            missing = [c for c in META_COLUMNS if c not in header]
            if missing:
                raise DatasetError(f"{path}: missing column(s) {missing}")
            feat_cols = [i for i, h in enumerate(header) if h not in META_COLUMNS]
            meta = {c: header.index(c) for c in META_COLUMNS}
            unknown = [header[i] for i in feat_cols if header[i] not in FEATURE_NAMES]
            if unknown:
                raise DatasetError(f"{path}: column(s) not in the feature registry: {unknown[:5]}")
            X, cols = [], {c: [] for c in META_COLUMNS}
            for lineno, rec in enumerate(reader, start=2):
                if len(rec) != len(header):
                    raise DatasetError(f"{path}:{lineno}: expected {len(header)} fields, found {len(rec)}")
                try:
                    X.append([float(rec[i]) for i in feat_cols])
                    for c in META_COLUMNS[:-1]:
                        cols[c].append(int(rec[meta[c]]))
                except ValueError as exc:
                    raise DatasetError(f"{path}:{lineno}: {exc}") from None
                cols["quality_flags"].append(rec[meta["quality_flags"]])
        X = np.array(X, dtype=np.float64).reshape(-1, len(feat_cols))
        if not np.all(np.isfinite(X)):
            raise DatasetError(f"{path}: non-finite feature values")
        return cls(
            X=X,
            feature_names=tuple(header[i] for i in feat_cols),
            binary=cols["binary_label"],
            ternary=cols["ternary_label"],
            group_id=cols["group_id"],
            participant=cols["participant"],
            round_index=cols["round_index"],
            sampling_index=cols["sampling_index"],
            flags=tuple(cols["quality_flags"]),
        )


def dyad_rows(dyad: DyadSample, config: ExtractionConfig = ExtractionConfig()):
    """Both participants' 272-column rows for one dyad, plus their flags."""
    try:
        ind1 = extract_individual(dyad.segments_p1, config)
        ind2 = extract_individual(dyad.segments_p2, config)
        sync = extract_synchrony(ind1.bands, ind2.bands, config)
    except (ValueError, KeyError) as exc:
        g, r, s = dyad.key
        raise ExtractionError(f"group {g} round {r} sampling {s}: {exc}") from exc
    row1 = np.concatenate([ind1.values, sync.values])
    row2 = np.concatenate([ind2.values, sync.values])
    f1 = ";".join(sorted(ind1.flags | {f"sync:{f}" for f in sync.flags}))
    f2 = ";".join(sorted(ind2.flags | {f"sync:{f}" for f in sync.flags}))
    return (row1, f1), (row2, f2)


def _dyad_rows_star(args):
    return dyad_rows(*args)


def assemble(dyads: Sequence[DyadSample], config: ExtractionConfig = ExtractionConfig(), jobs: int = 1) -> LabeledDataset:
    """Build the labeled feature matrix, two rows per dyad (participant 1 first)."""
    dyads = list(dyads)
    if jobs > 1 and len(dyads) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_dyad_rows_star, [(d, config) for d in dyads], chunksize=4))
    else:
        results = [dyad_rows(d, config) for d in dyads]
    X, flags, meta = [], [], []
    for dyad, rows in zip(dyads, results):
        for participant, (row, fl) in zip((1, 2), rows):
            X.append(row)
            flags.append(fl)
            meta.append(
                (
                    dyad.group_id,
                    participant,
                    dyad.round_index,
                    dyad.sampling_index,
                    int(dyad.binary_label),
                    int(dyad.ternary_label(participant)),
                )
            )
    meta = np.array(meta, dtype=np.intp).reshape(-1, 6)
    return LabeledDataset(
        X=np.array(X, dtype=np.float64).reshape(-1, len(FEATURE_NAMES)),
        feature_names=FEATURE_NAMES,
        binary=meta[:, 4],
        ternary=meta[:, 5],
        group_id=meta[:, 0],
        participant=meta[:, 1],
        round_index=meta[:, 2],
        sampling_index=meta[:, 3],
        flags=tuple(flags),
    )


def check_labels(ds: LabeledDataset, scores: dict) -> None:
    """Assert stored labels agree with the labeling rules for ``scores``,
    a mapping ``(group, round, sampling) -> (score_p1, score_p2)``."""
    for i in range(len(ds)):
        s1, s2 = scores[(ds.group_id[i], ds.round_index[i], ds.sampling_index[i])]
        own, other = (s1, s2) if ds.participant[i] == 1 else (s2, s1)
        assert ds.binary[i] == label_binary(s1, s2)
        assert ds.ternary[i] == label_ternary(own, other)


# ---------------------------------------------------------------------------
# normalization


@dataclass(frozen=True)
class NormalizationStats:
    mean: np.ndarray
    std: np.ndarray

    @property
    def degenerate(self) -> np.ndarray:
        return self.std == 0


def zscore_fit(train: np.ndarray) -> NormalizationStats:
    train = np.asarray(train, dtype=np.float64)
    if train.ndim != 2 or train.shape[0] == 0:
        raise ValueError("cannot fit normalization on an empty matrix")
    return NormalizationStats(train.mean(axis=0), train.std(axis=0))


def zscore_apply(stats: NormalizationStats, matrix: np.ndarray) -> np.ndarray:
    """(x - mean) / std with population std; constant columns map to 0."""
    matrix = np.asarray(matrix, dtype=np.float64)
    safe = np.where(stats.degenerate, 1.0, stats.std)
    z = (matrix - stats.mean) / safe
    z[:, stats.degenerate] = 0.0
    return z


def zscore_fit_transform(train: np.ndarray) -> tuple[np.ndarray, NormalizationStats]:
    stats = zscore_fit(train)
    return zscore_apply(stats, train), stats


def zscore_inverse(stats: NormalizationStats, z: np.ndarray) -> np.ndarray:
    return np.asarray(z, dtype=np.float64) * stats.std + stats.mean


# ---------------------------------------------------------------------------
# SMOTE


def smote(features: np.ndarray, labels: np.ndarray, k_neighbors: int = 5, seed: int = 0,
          return_provenance: bool = False):
    """Oversample every class up to the majority count.

    Each synthetic row is ``x + u * (x_nn - x)`` where ``x`` is a random member
    of the class, ``x_nn`` one of its ``k_neighbors`` nearest same-class rows
    (Euclidean, ties to the lower index) and ``u ~ U[0, 1)``. Synthetic rows
    are appended after the originals, class by class in ascending label
    order. With ``return_provenance`` a third array of
    ``(base_row, neighbor_row, u)`` per synthetic row is returned.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("features and labels disagree in length")
    classes, counts = np.unique(y, return_counts=True)
    target = counts.max() if counts.size else 0
    rng = np.random.default_rng(seed)
    new_X, new_y, prov = [X], [y], []
    for cls, count in zip(classes, counts):
        deficit = int(target - count)
        if deficit == 0:
            continue
        members = np.flatnonzero(y == cls)
        if count <= k_neighbors:
            raise ValueError(
                f"class {cls!r} has {count} rows, too few for k_neighbors={k_neighbors}; "
                f"use k_neighbors <= {count - 1}"
            )
        P = X[members]
        sq = np.sum(P * P, axis=1)
        d2 = sq[:, None] + sq[None, :] - 2.0 * P @ P.T
        np.fill_diagonal(d2, np.inf)
        nn = np.argsort(d2, axis=1, kind="stable")[:, :k_neighbors]
        base = rng.integers(0, count, size=deficit)
        pick = rng.integers(0, k_neighbors, size=deficit)
        u = rng.random(deficit)
        neighbor = nn[base, pick]
        synth = P[base] + u[:, None] * (P[neighbor] - P[base])
        new_X.append(synth)
        new_y.append(np.full(deficit, cls, dtype=y.dtype))
        prov.append(np.column_stack([members[base], members[neighbor], u]))
    out_X = np.concatenate(new_X, axis=0)
    out_y = np.concatenate(new_y)
    if not return_provenance:
        return out_X, out_y
    provenance = np.concatenate(prov, axis=0) if prov else np.empty((0, 3))
    return out_X, out_y, provenance
