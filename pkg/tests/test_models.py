import numpy as np
import pytest

from dyadflow.models import (
    HIDDEN_LAYERS,
    ModelConfig,
    ModelKind,
    TrainedModel,
    gradient_check,
    init_network,
    load,
    mdi,
    network_gradients,
    predict,
    predict_scores,
    same_parameters,
    save,
    train,
    tree_count,
    tree_predict,
)

FAST = {
    ModelKind.LR: {},
    ModelKind.SVM: {},
    ModelKind.DT: {},
    ModelKind.RF: {"n_trees": 25},
    ModelKind.NN: {"epochs": 40},
    ModelKind.DNN1: {"epochs": 40},
    ModelKind.DNN2: {"epochs": 40},
    ModelKind.DNN3: {"epochs": 40},
}


def cfg(kind, **kw):
    return ModelConfig.default(kind, **(FAST[kind] | kw))


def blobs(rng, n=60, d=2, k=2, sep=5.0):
    centers = np.eye(k, d) * sep
    y = np.repeat(np.arange(k), n // k)
    return centers[y] + rng.normal(size=(y.size, d)), y


class TestConfig:
    def test_depths(self):
        assert HIDDEN_LAYERS == {ModelKind.NN: 1, ModelKind.DNN1: 3, ModelKind.DNN2: 5, ModelKind.DNN3: 9}
        assert ModelConfig.default("dnn3").hidden_layers == 9
        assert len(ModelKind) == 8

    def test_defaults(self):
        rf = ModelConfig.default("RF")
        assert rf.n_trees == 200 and rf.max_depth is None and rf.min_leaf == 1
        dt = ModelConfig.default("DT")
        assert dt.max_depth == 16 and dt.min_leaf == 2
        nn = ModelConfig.default("NN")
        assert nn.learning_rate == 1e-3 and nn.epochs == 200 and nn.batch_size == 32 and nn.hidden_width == 128
        lr = ModelConfig.default("LR")
        assert (lr.learning_rate, lr.epochs, lr.l2) == (0.1, 500, 1e-4)

    def test_dict_and_digest(self):
        c = ModelConfig.default("SVM", C=2.0)
        assert ModelConfig.from_dict(c.to_dict()) == c
        assert c.digest() != ModelConfig.default("SVM").digest()

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            ModelKind.parse("XGB")


class TestTraining:
    def test_blob_separability_oracle(self, rng):
        X, y = blobs(rng)
        # the hyperplane x0 = x1 separates the blobs before any model is fitted
        assert np.all((X[:, 0] > X[:, 1]) == (y == 0))

    @pytest.mark.parametrize("kind", list(ModelKind))
    def test_separable_blobs(self, rng, kind):
        X, y = blobs(rng)
        assert np.mean(predict(train(cfg(kind), X, y), X) == y) == 1.0

    def test_ternary(self, rng):
        X, y = blobs(rng, n=90, d=3, k=3)
        for kind in (ModelKind.LR, ModelKind.SVM, ModelKind.RF, ModelKind.NN):
            m = train(cfg(kind), X, y)
            assert m.n_classes == 3 and predict_scores(m, X).shape == (90, 3)
            assert np.mean(predict(m, X) == y) >= 0.97

    def test_dt_memorizes(self, rng):
        X = rng.normal(size=(80, 4))
        y = rng.integers(0, 3, size=80)
        m = train(ModelConfig.default("DT", max_depth=None, min_leaf=1), X, y)
        assert np.array_equal(predict(m, X), y)

    @pytest.mark.parametrize("kind", list(ModelKind))
    def test_deterministic(self, rng, kind):
        X, y = blobs(rng, n=40, d=3)
        c = cfg(kind, epochs=5) if kind.is_network else cfg(kind)
        assert same_parameters(train(c, X, y), train(c, X, y))

    def test_seed_matters(self, rng):
        X, y = blobs(rng, n=40, d=3)
        assert not same_parameters(train(cfg("RF"), X, y), train(cfg("RF", seed=1), X, y))

    def test_labels_preserved(self, rng):
        X, y = blobs(rng)
        m = train(cfg("LR"), X, np.where(y == 1, 7, 3))
        assert set(predict(m, X)) == {3, 7}

    def test_errors(self, rng):
        X, y = blobs(rng)
        with pytest.raises(ValueError, match="single class"):
            train(cfg("LR"), X, np.zeros(len(y)))
        Xbad = X.copy()
        Xbad[3, 1] = np.nan
        with pytest.raises(ValueError, match="row 3, column 1"):
            train(cfg("DT"), Xbad, y)
        with pytest.raises(ValueError, match="rows"):
            train(cfg("DT"), X, y[:-1])
        m = train(cfg("LR"), X, y)
        with pytest.raises(ValueError, match="expects 2 features"):
            predict(m, X[:, :1])


class TestPrediction:
    def test_zero_weight_lr_uniform(self):
        m = TrainedModel(ModelConfig.default("LR"), np.array([0, 1, 2]), 4,
                         {"W": np.zeros((4, 3)), "b": np.zeros(3)})
        np.testing.assert_allclose(predict_scores(m, np.ones((5, 4))), 1 / 3)
        assert np.all(predict(m, np.ones((5, 4))) == 0)

    @pytest.mark.parametrize("kind", ["LR", "DT", "RF", "NN", "DNN2"])
    def test_probabilities(self, rng, kind):
        X, y = blobs(rng, n=60, d=3, k=3, sep=1.0)
        s = predict_scores(train(cfg(kind, epochs=5) if ModelKind.parse(kind).is_network else cfg(kind), X, y), X)
        assert np.all(np.isfinite(s))
        np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-9)

    def test_svm_margins(self, rng):
        X, y = blobs(rng)
        s = predict_scores(train(cfg("SVM"), X, y), X)
        assert np.array_equal(s[:, 0], -s[:, 1])

    def test_rf_majority_vote(self, rng):
        X = rng.normal(size=(100, 5))
        y = rng.integers(0, 3, size=100)
        m = train(ModelConfig.default("RF", n_trees=31), X, y)
        Xq = rng.normal(size=(20, 5))
        votes = np.zeros((20, 3), int)
        for t in range(tree_count(m)):
            votes[np.arange(20), tree_predict(m, t, Xq)] += 1
        expect = np.array([np.flatnonzero(v == v.max())[0] for v in votes])
        assert np.array_equal(predict(m, Xq), m.classes[expect])

    def test_duplicate_rows(self, rng):
        X, y = blobs(rng)
        m = train(cfg("RF"), X, y)
        Xq = np.vstack([X[:5], X[:5]])
        p = predict(m, Xq)
        assert np.array_equal(p[:5], p[5:])


class TestEquivariance:
    def test_lr(self, rng):
        X, y = blobs(rng, n=60, d=6, k=3, sep=1.5)
        perm = rng.permutation(6)
        a = train(cfg("LR"), X, y)
        b = train(cfg("LR"), X[:, perm], y)
        np.testing.assert_allclose(b.params["W"], a.params["W"][perm], rtol=1e-9, atol=1e-12)
        assert np.array_equal(predict(a, X), predict(b, X[:, perm]))

    def test_nn(self, rng):
        X, y = blobs(rng, n=60, d=6, k=2, sep=2.0)
        names = [f"f{i}" for i in range(6)]
        perm = rng.permutation(6)
        c = cfg("NN", epochs=10)
        a = train(c, X, y, feature_names=names)
        b = train(c, X[:, perm], y, feature_names=[names[i] for i in perm])
        np.testing.assert_allclose(predict_scores(a, X), predict_scores(b, X[:, perm]), atol=1e-8)
        assert np.array_equal(predict(a, X), predict(b, X[:, perm]))


class TestGradients:
    @pytest.mark.parametrize("kind", ["NN", "DNN1"])
    def test_fresh_network(self, rng, kind):
        X = rng.normal(size=(5, 7))
        y = np.array([0, 1, 1, 0, 1])
        net = init_network(ModelConfig.default(kind, hidden_width=16), 7, [0, 1])
        err = gradient_check(net, X, y)
        assert err < (1e-4 if kind == "NN" else 1e-3)

    def test_zero_batch_finite(self):
        net = init_network(ModelConfig.default("DNN2", hidden_width=8), 4, [0, 1])
        grads = network_gradients(net.params, np.zeros((5, 4)), np.zeros(5, dtype=np.intp))
        assert all(np.all(np.isfinite(g)) for g in grads.values())

    def test_non_network(self, rng):
        m = train(cfg("LR"), *blobs(rng))
        with pytest.raises(TypeError):
            gradient_check(m, np.zeros((2, 2)), [0, 1])
        with pytest.raises(TypeError):
            init_network(ModelConfig.default("RF"), 3, [0, 1])


class TestSerialization:
    @pytest.mark.parametrize("kind", ["LR", "SVM", "DT", "RF", "NN", "DNN1"])
    def test_roundtrip(self, tmp_path, rng, kind):
        X, y = blobs(rng, n=40, d=3)
        m = train(cfg(kind, epochs=5) if ModelKind.parse(kind).is_network else cfg(kind), X, y)
        save(m, tmp_path / "m.npz")
        back = load(tmp_path / "m.npz")
        assert back.config == m.config and same_parameters(back, m)
        assert np.array_equal(predict_scores(back, X), predict_scores(m, X))
        assert back.meta["config_digest"] == m.config.digest()

    def test_tampered_digest(self, tmp_path, rng):
        import json

        m = train(cfg("LR"), *blobs(rng))
        save(m, tmp_path / "m.npz")
        with np.load(tmp_path / "m.npz") as z:
            arrays = {k: z[k] for k in z.files}
        header = json.loads(arrays["__meta__"].tobytes())
        header["config"]["l2"] = 0.5
        arrays["__meta__"] = np.frombuffer(json.dumps(header).encode(), dtype=np.uint8)
        np.savez(tmp_path / "bad.npz", **arrays)
        with pytest.raises(ValueError, match="digest"):
            load(tmp_path / "bad.npz")


class TestMdi:
    def test_informative_feature(self, rng):
        X = rng.normal(size=(200, 5))
        y = (X[:, 2] > 0).astype(int)
        imp = mdi(train(cfg("RF"), X, y))
        assert np.argmax(imp) == 2 and imp.sum() == pytest.approx(1.0)

    def test_rejects_linear(self, rng):
        with pytest.raises(TypeError):
            mdi(train(cfg("LR"), *blobs(rng)))
