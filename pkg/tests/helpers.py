"""Small adapters shared by several test modules."""

import numpy as np

from dyadflow.core import FLOW_CHANNELS, DyadSample, SignalSegment
from dyadflow.dsp import band_decompose, welch_psd
from dyadflow.features import CHANNEL_FEATURE_LABELS, freq_features, time_features


def package_features(x):
    """Package feature values for one raw (undenoised) sequence, keyed like the oracle."""
    x = np.asarray(x, dtype=float)
    tf = time_features(x)
    ff = freq_features(band_decompose(x), x, welch_psd(x))
    return dict(zip(CHANNEL_FEATURE_LABELS, np.concatenate([tf.values(), ff.values()])))


def make_dyad(rng, group=1, round_index=1, sampling_index=1, s1=2, s2=3, n=1536, p2=None):
    p1 = rng.normal(size=(8, n)) * 10
    p2 = rng.normal(size=(8, n)) * 10 if p2 is None else p2
    seg = lambda rows: [SignalSegment(ch, r) for ch, r in zip(FLOW_CHANNELS, rows)]
    return DyadSample(group, round_index, sampling_index, seg(p1), seg(p2), s1, s2)


def toy_dataset(rng, n_dyads=60, informative=(), shift=4.0, p_high=0.5):
    """LabeledDataset with all 272 registry columns of noise.

    Columns named in ``informative`` are shifted by ``shift`` on High rows.
    Ternary labels are derived from random scores consistent with the
    binary label, so both tasks are usable.
    """
    from dyadflow.core import label_binary, label_ternary
    from dyadflow.dataset import LabeledDataset
    from dyadflow.features import FEATURE_NAMES

    rows, meta = [], []
    for g in range(n_dyads):
        high = rng.random() < p_high
        if high:
            s1, s2 = rng.integers(2, 4, size=2)
        else:
            s1, s2 = rng.integers(0, 4), rng.integers(0, 2)
            if rng.random() < 0.5:
                s1, s2 = s2, s1
        for p, (own, other) in ((1, (s1, s2)), (2, (s2, s1))):
            meta.append((g // 15 + 1, p, g % 15 // 5 + 1, g % 5 + 1, int(label_binary(s1, s2)),
                         int(label_ternary(own, other))))
    meta = np.array(meta)
    X = rng.normal(size=(meta.shape[0], len(FEATURE_NAMES)))
    cols = [FEATURE_NAMES.index(n) for n in informative]
    X[:, cols] += shift * meta[:, 4:5]
    return LabeledDataset(X, FEATURE_NAMES, meta[:, 4], meta[:, 5], meta[:, 0], meta[:, 1], meta[:, 2], meta[:, 3])
