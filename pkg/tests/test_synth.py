import csv
import filecmp

import numpy as np
import pytest

from dyadflow.core import FRONTAL_CHANNELS, ChannelId, label_binary, label_ternary
from dyadflow.dataset import assemble, check_labels, load_dataset, load_recording, recording_path
from dyadflow.dsp import BandId, band_decompose
from dyadflow.features import ExtractionConfig, extract_individual
from dyadflow.synchrony import extract_synchrony
from dyadflow.synth import DEFAULT_JOINT, SynthConfig, generate, null_config, write_dataset

FAST = ExtractionConfig(dtw_window=0)


def ccc_by_label(data):
    """Mean CCC over the 32 channel-band pairs, split by binary label."""
    high, low = [], []
    for d in data.dyads:
        a = extract_individual(d.segments_p1, FAST)
        b = extract_individual(d.segments_p2, FAST)
        vals = extract_synchrony(a.bands, b.bands, FAST).values.reshape(8, 8)[:, :4]
        (high if d.binary_label else low).append(vals.mean())
    return np.array(high), np.array(low)


class TestConfig:
    def test_defaults_mirror_study_scale(self):
        c = SynthConfig()
        assert (c.n_pairs, c.n_rounds, c.n_samplings) == (47, 3, 5)
        assert sum(DEFAULT_JOINT.values()) == pytest.approx(1.0)
        # per-participant ternary marginals: neither 20.1%, individual 17.0%, simultaneous 62.9%
        neither = DEFAULT_JOINT[(False, True)] + DEFAULT_JOINT[(False, False)]
        assert neither == pytest.approx(0.201)

    @pytest.mark.parametrize(
        "kw",
        [{"coupling": 1.5}, {"n_pairs": 0}, {"n_rounds": 4}, {"noise_floor": -1},
         {"joint": {(True, True): 0.5, (True, False): 0.5, (False, True): 0.5, (False, False): 0.0}},
         {"band_effect": {b: (1, 1, 1, 0) for b in BandId if b is not BandId.FULL}}],
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SynthConfig(**kw)


class TestGenerate:
    def test_byte_identical(self, tmp_path):
        cfg = SynthConfig(n_pairs=1, n_rounds=1, n_samplings=2, seed=4)
        a = write_dataset(generate(cfg), tmp_path / "a")
        b = write_dataset(generate(cfg), tmp_path / "b")
        files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
        assert len(files) == 4 + 4
        match, mismatch, errors = filecmp.cmpfiles(a, b, [str(f) for f in files], shallow=False)
        assert not mismatch and not errors

    def test_seed_changes_output(self):
        a = generate(SynthConfig(n_pairs=1, n_rounds=1, n_samplings=1, seed=0))
        b = generate(SynthConfig(n_pairs=1, n_rounds=1, n_samplings=1, seed=1))
        assert not np.array_equal(a.recordings[(1, 1, 1, 1)], b.recordings[(1, 1, 1, 1)])

    def test_files_load_and_labels_match(self, tmp_path):
        data = generate(SynthConfig(n_pairs=2, n_rounds=1, n_samplings=3, seed=1))
        root = write_dataset(data, tmp_path)
        rec = load_recording(recording_path(root, 2, 1, 1, 3))
        np.testing.assert_array_equal(rec.data, data.recordings[(2, 1, 1, 3)])
        loaded = load_dataset(root)
        assert len(loaded.dyads) == 6
        with (root / "ground_truth.csv").open() as fh:
            truth = list(csv.DictReader(fh))
        for t in truth:
            s1, s2 = int(t["score_p1"]), int(t["score_p2"])
            assert int(t["binary_label"]) == label_binary(s1, s2)
            assert int(t["ternary_p1"]) == label_ternary(s1, s2)
            assert int(t["ternary_p2"]) == label_ternary(s2, s1)
        for a, b in zip(loaded.dyads, data.dyads):
            assert a.key == b.key and (a.score_p1, a.score_p2) == (b.score_p1, b.score_p2)
            for sa, sb in zip(a.segments_p1, b.segments_p1):
                np.testing.assert_array_equal(sa.samples, sb.samples)

    def test_assembled_labels_consistent(self):
        data = generate(SynthConfig(n_pairs=1, n_rounds=1, n_samplings=2, seed=3))
        ds = assemble(data.dyads, FAST)
        check_labels(ds, {d.key: (d.score_p1, d.score_p2) for d in data.dyads})

    def test_frontal_band_effect(self):
        cfg = SynthConfig(n_pairs=6, n_rounds=1, n_samplings=5, coupling=0.0, seed=2)
        data = generate(cfg)
        theta = {0: [], 3: []}
        for d in data.dyads:
            for score, segs in ((d.score_p1, d.segments_p1), (d.score_p2, d.segments_p2)):
                if score in theta:
                    x = next(s.samples for s in segs if s.channel is ChannelId.F3)
                    theta[score].append(np.var(band_decompose(x)[BandId.THETA]))
        assert ChannelId.F3 in FRONTAL_CHANNELS
        assert np.mean(theta[3]) > 2 * np.mean(theta[0])


class TestCoupling:
    def test_uncoupled(self):
        high, low = ccc_by_label(generate(null_config(n_pairs=2, n_rounds=3, seed=5)))
        assert np.mean(np.abs(high)) <= 0.1

    def test_coupled(self):
        high, low = ccc_by_label(generate(SynthConfig(n_pairs=2, n_rounds=3, coupling=0.8, seed=5)))
        assert high.mean() >= 0.4
        assert high.mean() > low.mean()

    def test_monotone_in_kappa(self):
        means = [ccc_by_label(generate(SynthConfig(n_pairs=2, n_rounds=2, coupling=k, seed=9)))[0].mean()
                 for k in (0.0, 0.2, 0.4, 0.6, 0.8)]
        assert all(b >= a for a, b in zip(means, means[1:]))
