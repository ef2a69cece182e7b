import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from dyadflow.core import FLOW_CHANNELS, ChannelId
from dyadflow.dsp import BandSignals, EEG_BANDS, band_decompose, welch_psd
from dyadflow.features import (
    CHANNEL_FEATURE_LABELS,
    FEATURE_GROUPS,
    FEATURE_NAMES,
    INDIVIDUAL_FEATURES,
    LN_2PI_E,
    SYNCHRONY_FEATURES,
    ExtractionConfig,
    extract_individual,
    feature_set,
    freq_features,
    time_features,
)
from helpers import package_features

RAW = ExtractionConfig(denoise=False)
LOG_DOMAIN = {lab for lab in CHANNEL_FEATURE_LABELS if lab.startswith(("LBP", "DE"))}
seeds = st.integers(0, 2**32 - 1)


class TestTimeFeatures:
    def test_worked_example(self):
        tf = time_features([1, 2, 3, 4])
        assert tf.mean == 2.5
        assert tf.variance == pytest.approx(1.25, abs=1e-12)
        assert tf.aafod == 1.0
        assert tf.energy == 30.0
        assert tf.power == 7.5
        assert tf.ppm == 0.75
        assert tf.hjorth_mobility == 0.0
        assert tf.kurtosis == pytest.approx(1.64, abs=1e-12)

    def test_hozc_alternating(self):
        assert time_features([1, -1, 1, -1]).hozc == 3.0

    def test_type_invariants(self, rng):
        tf = time_features(rng.normal(size=300))
        assert tf.variance == pytest.approx(tf.std**2, rel=1e-12)
        assert tf.energy == pytest.approx(300 * tf.power, rel=1e-12)
        assert tf.hjorth_activity == tf.variance

    def test_constant_signal_flagged(self):
        tf = time_features(np.full(50, 3.0))
        assert "zero_variance" in tf.flags
        assert tf.nfod == tf.hjorth_mobility == tf.kurtosis == 0.0
        assert np.all(np.isfinite(tf.values()))

    def test_preconditions(self):
        with pytest.raises(ValueError):
            time_features([1.0])
        with pytest.raises(ValueError):
            time_features([1.0, np.inf])


class TestOracle:
    @pytest.mark.parametrize("n", [64, 65, 200])
    def test_time_domain_short(self, rng, n):
        x = rng.normal(size=n) * 7 + 2
        ref = oracles.time_features(list(x))
        tf = dict(zip(CHANNEL_FEATURE_LABELS[:12], time_features(x).values()))
        for k, v in ref.items():
            assert tf[k] == pytest.approx(v, rel=1e-9), k

    def test_all_features_with_dft_welch(self, rng):
        x = rng.normal(size=384) * 12 + 1.5
        ref = oracles.freq_features(list(x)) | oracles.time_features(list(x))
        got = package_features(x)
        for k, v in ref.items():
            if k in LOG_DOMAIN:
                assert got[k] == pytest.approx(v, abs=1e-9), k
            else:
                assert got[k] == pytest.approx(v, rel=1e-9), k


class TestFreqFeatures:
    def test_unit_variance_entropy(self, rng):
        z = rng.normal(size=1536)
        z = (z - z.mean()) / z.std()
        x = rng.normal(size=1536)
        bands = BandSignals(*[z] * 4, residual=np.zeros(1536))
        ff = freq_features(bands, x, welch_psd(x))
        for d in ff.de:
            assert d == pytest.approx(1.41894, abs=5e-6)
            assert d == pytest.approx(0.5 * LN_2PI_E, abs=1e-12)

    def test_unit_power_lbp(self, rng):
        s = np.where(rng.random(512) < 0.5, -1.0, 1.0)
        bands = BandSignals(*[s] * 4, residual=np.zeros(512))
        ff = freq_features(bands, s, welch_psd(s))
        assert ff.lbp == (0.0, 0.0, 0.0, 0.0)

    def test_ten_hz_alpha_largest(self):
        x = np.sin(2 * np.pi * 10 * np.arange(1536) / 256)
        ff = freq_features(band_decompose(x), x, welch_psd(x))
        assert np.argmax(ff.psd) == 2
        assert ff.mean_psd == pytest.approx(np.mean(ff.psd))

    def test_zero_band_flagged(self):
        x = np.zeros(512)
        ff = freq_features(band_decompose(x), x, welch_psd(x))
        assert {"zero_variance_theta", "zero_power_beta", "zero_variance_full"} <= ff.flags
        assert np.all(ff.values() == 0)


class TestLaws:
    @given(seeds, st.floats(0.1, 50))
    def test_scale_law(self, seed, c):
        x = np.random.default_rng(seed).normal(size=512) * 5 + 1
        a, b = package_features(x), package_features(c * x)
        for k in ("Mean", "SD", "AAFOD", "PPM"):
            assert b[k] == pytest.approx(c * a[k], rel=1e-9)
        for k in ("Variance", "Activity", "Energy", "Power"):
            assert b[k] == pytest.approx(c * c * a[k], rel=1e-9)
        for k in ("NFOD", "Mobility", "Kurtosis", "HOZC"):
            assert b[k] == pytest.approx(a[k], rel=1e-9)
        for s in "δθαβ":
            assert b[f"DE {s}"] == pytest.approx(a[f"DE {s}"] + np.log(c), abs=1e-9)
        assert b["DE FB"] == pytest.approx(a["DE FB"] + np.log(c), abs=1e-9)

    @given(seeds, st.floats(-100, 100))
    def test_shift_law(self, seed, k):
        x = np.random.default_rng(seed).normal(size=512) * 5
        a, b = package_features(x), package_features(x + k)
        assert b["Mean"] == pytest.approx(a["Mean"] + k, abs=1e-9)
        for name in ("SD", "Variance", "AAFOD", "Kurtosis", "HOZC"):
            assert b[name] == pytest.approx(a[name], rel=1e-7, abs=1e-9)
        # the constant lives entirely in the approximation path
        for s in "θαβ":
            assert b[f"LBP {s}"] == pytest.approx(a[f"LBP {s}"], abs=1e-6)
            assert b[f"PSD {s}"] == pytest.approx(a[f"PSD {s}"], rel=1e-6, abs=1e-12)
        n = x.shape[0]
        assert b["Energy"] == pytest.approx(a["Energy"] + 2 * k * x.sum() + n * k * k, rel=1e-9)


class TestExtractIndividual:
    def test_dimension_and_names(self, rng):
        out = extract_individual({ch: rng.normal(size=1536) for ch in FLOW_CHANNELS})
        assert out.values.shape == (208,)
        assert len(INDIVIDUAL_FEATURES) == 208 and len(SYNCHRONY_FEATURES) == 64
        assert len(set(FEATURE_NAMES)) == 272
        assert "F7 PSD α" in INDIVIDUAL_FEATURES and "AF4 HOZC" in INDIVIDUAL_FEATURES
        assert "AF4 CCC α" in SYNCHRONY_FEATURES and "P7 DTW α" in SYNCHRONY_FEATURES

    def test_zero_segments_are_finite(self):
        out = extract_individual({ch: np.zeros(1536) for ch in FLOW_CHANNELS})
        assert not np.isnan(out.values).any()
        assert np.all(out.values == 0)
        assert any(f.startswith("F3:") for f in out.flags)

    def test_duplicated_channels_identical_blocks(self, rng):
        x = rng.normal(size=1536)
        out = extract_individual({ch: x for ch in FLOW_CHANNELS}, RAW)
        blocks = out.values.reshape(8, 26)
        assert np.array_equal(blocks, np.repeat(blocks[:1], 8, axis=0))

    def test_missing_channel(self, rng):
        data = {ch: rng.normal(size=1536) for ch in FLOW_CHANNELS if ch is not ChannelId.T7}
        with pytest.raises(KeyError, match="T7"):
            extract_individual(data)


class TestFeatureSets:
    def test_group_sizes(self):
        sizes = {k: len(v) for k, v in FEATURE_GROUPS.items()}
        assert sizes == {"L": 52, "F": 156, "LS": 16, "FS": 48}

    def test_specs(self):
        assert len(feature_set("L+F")) == 208
        assert len(feature_set("L+F+FS+LS")) == 272
        assert feature_set("all") == FEATURE_NAMES
        assert feature_set("fs+l") == feature_set("L+FS")
        with pytest.raises(ValueError):
            feature_set("L+X")
        with pytest.raises(ValueError):
            feature_set("")
