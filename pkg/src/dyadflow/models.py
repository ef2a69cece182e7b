"""The eight classifier families: logistic regression, linear SVM, CART,
random forest and four fully connected networks of increasing depth.

Every model is a :class:`TrainedModel` holding a flat dict of numpy arrays,
so prediction, serialization and importance code share one container.
"""

from __future__ import annotations

import hashlib
import json
import zlib
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from ._backend import kernels

FORMAT_VERSION = 1


class ModelKind(str, Enum):
    LR = "LR"
    SVM = "SVM"
    DT = "DT"
    RF = "RF"
    NN = "NN"
    DNN1 = "DNN1"
    DNN2 = "DNN2"
    DNN3 = "DNN3"

    @property
    def is_network(self) -> bool:
        return self in NETWORK_KINDS

    @classmethod
    def parse(cls, name) -> "ModelKind":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).strip().upper())
        except ValueError:
            raise ValueError(f"unknown model {name!r}; choose from {', '.join(k.value for k in cls)}") from None


HIDDEN_LAYERS = {ModelKind.NN: 1, ModelKind.DNN1: 3, ModelKind.DNN2: 5, ModelKind.DNN3: 9}
NETWORK_KINDS = frozenset(HIDDEN_LAYERS)


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters for one model kind. Irrelevant fields are ignored.

    ``max_depth=None`` grows trees until leaves are pure; ``max_features=None``
    means √d for forests and all features for single trees.
    """

    kind: ModelKind
    learning_rate: float = 0.1
    epochs: int = 500
    l2: float = 1e-4
    C: float = 1.0
    max_depth: int | None = 16
    min_leaf: int = 2
    n_trees: int = 200
    max_features: int | None = None
    hidden_width: int = 128
    activation: str = "relu"
    batch_size: int = 32
    val_fraction: float = 0.1
    patience: int = 10
    seed: int = 0

    @classmethod
    def default(cls, kind, **overrides) -> "ModelConfig":
        kind = ModelKind.parse(kind)
        base: dict = {}
        if kind == ModelKind.RF:
            base = dict(max_depth=None, min_leaf=1)
        elif kind.is_network:
            base = dict(learning_rate=1e-3, epochs=200)
        base.update(overrides)
        return cls(kind=kind, **base)

    @property
    def hidden_layers(self) -> int:
        return HIDDEN_LAYERS.get(self.kind, 0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["kind"] = ModelKind.parse(d["kind"])
        return cls(**d)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class TrainedModel:
    config: ModelConfig
    classes: np.ndarray
    n_features: int
    params: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def kind(self) -> ModelKind:
        return self.config.kind

    @property
    def n_classes(self) -> int:
        return len(self.classes)


# ---------------------------------------------------------------------------
# shared helpers


def _check_xy(X, y):
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2:
        raise ValueError("X must be a 2-D feature matrix")
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]} labels")
    if not np.all(np.isfinite(X)):
        bad = np.argwhere(~np.isfinite(X))[0]
        raise ValueError(f"non-finite feature value at row {bad[0]}, column {bad[1]}")
    classes, codes = np.unique(y, return_inverse=True)
    if classes.shape[0] < 2:
        raise ValueError("training set contains a single class")
    return X, classes, codes.astype(np.intp)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _argmax_lowest(scores: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. the lowest class index
    return np.argmax(scores, axis=1)


# ---------------------------------------------------------------------------
# linear models


def _train_lr(cfg: ModelConfig, X, codes, k):
    n, d = X.shape
    Y = np.zeros((n, k))
    Y[np.arange(n), codes] = 1.0
    W = np.zeros((d, k))
    b = np.zeros(k)
    for _ in range(cfg.epochs):
        P = softmax(X @ W + b)
        G = (P - Y) / n
        W -= cfg.learning_rate * (X.T @ G + cfg.l2 * W)
        b -= cfg.learning_rate * G.sum(axis=0)
    return {"W": W, "b": b}


def _train_svm(cfg: ModelConfig, X, codes, k):
    """Soft-margin linear SVM, ½‖w‖² + C·Σ hinge, by subgradient descent.

    Binary problems fit one separator (class 1 positive); more classes
    fit one-vs-rest separators.
    """
    n, d = X.shape
    targets = [codes == 1] if k == 2 else [codes == c for c in range(k)]
    W = np.zeros((d, len(targets)))
    b = np.zeros(len(targets))
    for j, pos in enumerate(targets):
        s = np.where(pos, 1.0, -1.0)
        w = np.zeros(d)
        bj = 0.0
        for t in range(1, cfg.epochs + 1):
            margin = s * (X @ w + bj)
            active = margin < 1
            gw = w / n - cfg.C * (s[active] @ X[active]) / n
            gb = -cfg.C * s[active].sum() / n
            step = cfg.learning_rate / np.sqrt(t)
            w -= step * gw
            bj -= step * gb
        W[:, j] = w
        b[j] = bj
    return {"W": W, "b": b}


def _linear_scores(model: TrainedModel, X):
    f = X @ model.params["W"] + model.params["b"]
    if model.kind == ModelKind.LR:
        return softmax(f)
    if model.n_classes == 2:
        return np.column_stack([-f[:, 0], f[:, 0]])
    return f


# ---------------------------------------------------------------------------
# trees


def _grow(X, codes, k, sample, cfg: ModelConfig, max_features: int, seed: int):
    max_depth = -1 if cfg.max_depth is None else int(cfg.max_depth)
    return kernels.grow_tree(X, codes, np.asarray(sample, dtype=np.intp), k, max_features, max_depth,
                             int(cfg.min_leaf), int(seed))


def _pack_trees(trees, n_classes):
    sizes = np.array([t[0].shape[0] for t in trees], dtype=np.intp)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    cat = [np.concatenate([t[i] for t in trees]) for i in range(6)]
    return {
        "tree_offsets": offsets,
        "feature": cat[0].astype(np.intp),
        "threshold": cat[1],
        "left": cat[2].astype(np.intp),
        "right": cat[3].astype(np.intp),
        "counts": cat[4].reshape(-1, n_classes).astype(np.intp),
        "decrease": cat[5],
    }


def tree_count(model: TrainedModel) -> int:
    return model.params["tree_offsets"].shape[0] - 1


def tree_arrays(model: TrainedModel, t: int) -> dict:
    """Arrays of tree ``t`` with node indices local to that tree."""
    lo, hi = model.params["tree_offsets"][t], model.params["tree_offsets"][t + 1]
    return {name: model.params[name][lo:hi] for name in ("feature", "threshold", "left", "right", "counts", "decrease")}


def tree_leaves(tree: dict, X: np.ndarray) -> np.ndarray:
    feature, threshold = tree["feature"], tree["threshold"]
    left, right = tree["left"], tree["right"]
    node = np.zeros(X.shape[0], dtype=np.intp)
    active = np.flatnonzero(feature[node] >= 0)
    while active.size:
        nd = node[active]
        go_left = X[active, feature[nd]] <= threshold[nd]
        node[active] = np.where(go_left, left[nd], right[nd])
        active = active[feature[node[active]] >= 0]
    return node


def _train_tree(cfg: ModelConfig, X, codes, k):
    mtry = cfg.max_features or X.shape[1]
    tree = _grow(X, codes, k, np.arange(X.shape[0]), cfg, mtry, cfg.seed)
    return _pack_trees([tree], k)


def _train_forest(cfg: ModelConfig, X, codes, k):
    n, d = X.shape
    mtry = cfg.max_features or max(1, int(np.floor(np.sqrt(d))))
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.n_trees)
    trees = []
    for child in children:
        rng = np.random.default_rng(child)
        sample = rng.integers(0, n, size=n)
        tree_seed = int(rng.integers(0, 2**63))
        trees.append(_grow(X, codes, k, sample, cfg, mtry, tree_seed))
    return _pack_trees(trees, k)


def tree_predict(model: TrainedModel, t: int, X) -> np.ndarray:
    """Class indices predicted by member tree ``t`` (majority class at its leaf)."""
    tree = tree_arrays(model, t)
    return _argmax_lowest(tree["counts"][tree_leaves(tree, X)])


def _tree_scores(model: TrainedModel, X):
    if model.kind == ModelKind.DT:
        tree = tree_arrays(model, 0)
        c = tree["counts"][tree_leaves(tree, X)].astype(np.float64)
        return c / c.sum(axis=1, keepdims=True)
    votes = np.zeros((X.shape[0], model.n_classes))
    rows = np.arange(X.shape[0])
    for t in range(tree_count(model)):
        votes[rows, tree_predict(model, t, X)] += 1.0
    return votes / tree_count(model)


def mdi(model: TrainedModel) -> np.ndarray:
    """Mean decrease in Gini impurity per feature, normalized to sum to 1.

    Each tree's weighted impurity decreases are summed per feature and
    normalized, then trees are averaged. A model without splits gives zeros.
    """
    if model.kind not in (ModelKind.RF, ModelKind.DT):
        raise TypeError(f"MDI needs a tree model, got {model.kind.value}")
    total = np.zeros(model.n_features)
    for t in range(tree_count(model)):
        tree = tree_arrays(model, t)
        split = tree["feature"] >= 0
        imp = np.bincount(tree["feature"][split], weights=tree["decrease"][split], minlength=model.n_features)
        s = imp.sum()
        if s > 0:
            total += imp / s
    s = total.sum()
    return total / s if s > 0 else total


# ---------------------------------------------------------------------------
# networks

_ACTIVATIONS = {
    "relu": (lambda z: np.maximum(z, 0.0), lambda z, a: (z > 0).astype(np.float64)),
    "tanh": (np.tanh, lambda z, a: 1.0 - a * a),
    "linear": (lambda z: z, lambda z, a: np.ones_like(z)),
}


def _layer_sizes(cfg: ModelConfig, d: int, k: int) -> list[int]:
    return [d] + [cfg.hidden_width] * cfg.hidden_layers + [k]


def _column_seed(seed: int, name: str) -> int:
    return zlib.crc32(name.encode()) ^ (seed * 0x9E3779B1 & 0xFFFFFFFF)


def init_network(config: ModelConfig, n_features: int, classes, feature_names=None) -> TrainedModel:
    """Untrained network with He-initialized weights and zero biases.

    With ``feature_names`` each input column's first-layer weights come from
    a stream keyed by its name, so reordering columns reorders the weights
    with them.
    """
    if not config.kind.is_network:
        raise TypeError(f"{config.kind.value} is not a network kind")
    if config.activation not in _ACTIVATIONS:
        raise ValueError(f"unknown activation {config.activation!r}")
    classes = np.asarray(classes)
    sizes = _layer_sizes(config, n_features, len(classes))
    rng = np.random.default_rng(config.seed)
    params = {}
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        scale = np.sqrt(2.0 / fan_in)
        if i == 0 and feature_names is not None:
            W = np.stack([
                np.random.default_rng(_column_seed(config.seed, str(nm))).standard_normal(fan_out)
                for nm in feature_names
            ]) * scale
        else:
            W = rng.standard_normal((fan_in, fan_out)) * scale
        params[f"W{i}"] = W
        params[f"b{i}"] = np.zeros(fan_out)
    return TrainedModel(config, classes, n_features, params, {"trained": False})


def _n_layers(params) -> int:
    return sum(1 for key in params if key.startswith("W"))


def _forward(params, X, activation):
    act, _ = _ACTIVATIONS[activation]
    L = _n_layers(params)
    zs, acts = [], [X]
    a = X
    for i in range(L):
        z = a @ params[f"W{i}"] + params[f"b{i}"]
        zs.append(z)
        a = act(z) if i < L - 1 else z
        acts.append(a)
    return zs, acts


def network_loss(params, X, codes, activation="relu") -> float:
    """Mean cross-entropy of the softmax output."""
    zs, _ = _forward(params, X, activation)
    logits = zs[-1]
    m = logits.max(axis=1, keepdims=True)
    logz = m[:, 0] + np.log(np.exp(logits - m).sum(axis=1))
    return float(np.mean(logz - logits[np.arange(X.shape[0]), codes]))


def network_gradients(params, X, codes, activation="relu") -> dict:
    _, dact = _ACTIVATIONS[activation]
    zs, acts = _forward(params, X, activation)
    n = X.shape[0]
    delta = softmax(zs[-1])
    delta[np.arange(n), codes] -= 1.0
    delta /= n
    grads = {}
    for i in reversed(range(len(zs))):
        grads[f"W{i}"] = acts[i].T @ delta
        grads[f"b{i}"] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params[f"W{i}"].T) * dact(zs[i - 1], acts[i])
    return grads


def _train_network(cfg: ModelConfig, X, codes, classes, feature_names):
    model = init_network(cfg, X.shape[1], classes, feature_names)
    params = model.params
    rng = np.random.default_rng([cfg.seed, 1])
    n = X.shape[0]
    order = rng.permutation(n)
    n_val = int(round(cfg.val_fraction * n)) if cfg.val_fraction > 0 else 0
    if n_val >= 1 and n - n_val >= 2:
        val, tr = order[:n_val], order[n_val:]
    else:
        val, tr = order[:0], order
    m = {key: np.zeros_like(v) for key, v in params.items()}
    v2 = {key: np.zeros_like(v) for key, v in params.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    best_loss, best_params, best_epoch, since = np.inf, None, 0, 0
    for epoch in range(cfg.epochs):
        perm = tr[rng.permutation(tr.shape[0])]
        for start in range(0, perm.shape[0], cfg.batch_size):
            batch = perm[start : start + cfg.batch_size]
            grads = network_gradients(params, X[batch], codes[batch], cfg.activation)
            step += 1
            for key, g in grads.items():
                m[key] = beta1 * m[key] + (1 - beta1) * g
                v2[key] = beta2 * v2[key] + (1 - beta2) * g * g
                mhat = m[key] / (1 - beta1**step)
                vhat = v2[key] / (1 - beta2**step)
                params[key] -= cfg.learning_rate * mhat / (np.sqrt(vhat) + eps)
        if val.size:
            loss = network_loss(params, X[val], codes[val], cfg.activation)
            if loss < best_loss:
                best_loss, best_epoch, since = loss, epoch, 0
                best_params = {key: v.copy() for key, v in params.items()}
            else:
                since += 1
                if since >= cfg.patience:
                    break
    if best_params is not None:
        params = best_params
    model.params = params
    model.meta = {"trained": True, "epochs_run": epoch + 1, "best_epoch": best_epoch}
    return model


def _network_scores(model: TrainedModel, X):
    zs, _ = _forward(model.params, X, model.config.activation)
    return softmax(zs[-1])


def network_logits(model: TrainedModel, X) -> np.ndarray:
    zs, _ = _forward(model.params, np.asarray(X, dtype=np.float64), model.config.activation)
    return zs[-1]


def gradient_check(model: TrainedModel, X, y, h: float = 1e-5, chunk: int = 1024) -> float:
    """Largest relative gap between backprop and central-difference gradients.

    Relative error is ``|a - n| / max(|a|, |n|, 1e-6)`` per parameter; the
    floor keeps vanishing gradients from dividing noise by zero.
    """
    if not model.kind.is_network:
        raise TypeError(f"gradient_check needs a network, got {model.kind.value}")
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] > 20:
        raise ValueError("gradient_check is meant for at most 20 rows")
    codes = np.searchsorted(model.classes, np.asarray(y))
    params = model.params
    act_name = model.config.activation
    act, _ = _ACTIVATIONS[act_name]
    analytic = network_gradients(params, X, codes, act_name)
    L = _n_layers(params)
    zs, acts = _forward(params, X, act_name)
    rows = np.arange(X.shape[0])

    def loss_from(layer, Z):
        # Z: (P, n, width) perturbed pre-activations of ``layer``
        a = act(Z) if layer < L - 1 else Z
        for i in range(layer + 1, L):
            z = a @ params[f"W{i}"] + params[f"b{i}"]
            a = act(z) if i < L - 1 else z
        mx = a.max(axis=2, keepdims=True)
        logz = mx[..., 0] + np.log(np.exp(a - mx).sum(axis=2))
        return np.mean(logz - a[:, rows, codes], axis=1)

    worst = 0.0
    for i in range(L):
        fan_in, width = params[f"W{i}"].shape
        # perturbing W[r, c] by h shifts column c of z by h * a_in[:, r]; b[c] by h
        for key, n_par in ((f"W{i}", fan_in * width), (f"b{i}", width)):
            num = np.empty(n_par)
            for lo in range(0, n_par, chunk):
                j = np.arange(lo, min(lo + chunk, n_par))
                r, c = (j // width, j % width) if key[0] == "W" else (None, j)
                shift = h * acts[i][:, r].T if r is not None else np.full((j.size, X.shape[0]), h)
                Z = np.repeat(zs[i][None], j.size, axis=0)
                p_idx = np.arange(j.size)
                Z[p_idx, :, c] += shift
                fp = loss_from(i, Z)
                Z[p_idx, :, c] -= 2 * shift
                fm = loss_from(i, Z)
                num[lo : lo + j.size] = (fp - fm) / (2 * h)
            a = analytic[key].reshape(-1)
            rel = np.abs(a - num) / np.maximum(np.maximum(np.abs(a), np.abs(num)), 1e-6)
            worst = max(worst, float(rel.max()))
    return worst


# ---------------------------------------------------------------------------
# public API


def train(config: ModelConfig, X, y, feature_names=None) -> TrainedModel:
    """Fit a model. Deterministic given ``(config, X, y)``."""
    X, classes, codes = _check_xy(X, y)
    k = classes.shape[0]
    kind = config.kind
    if kind.is_network:
        model = _train_network(config, X, codes, classes, feature_names)
    else:
        if kind == ModelKind.LR:
            params = _train_lr(config, X, codes, k)
        elif kind == ModelKind.SVM:
            params = _train_svm(config, X, codes, k)
        elif kind == ModelKind.DT:
            params = _train_tree(config, X, codes, k)
        else:
            params = _train_forest(config, X, codes, k)
        model = TrainedModel(config, classes, X.shape[1], params, {"trained": True})
    model.meta.update({"seed": config.seed, "config_digest": config.digest(), "n_train": int(X.shape[0])})
    return model


def predict_scores(model: TrainedModel, X) -> np.ndarray:
    """Per-class scores, columns ordered as ``model.classes``.

    LR, DT and networks return probabilities, RF returns vote fractions and
    SVM returns signed margins.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(f"model expects {model.n_features} features, got shape {X.shape}")
    if model.kind in (ModelKind.LR, ModelKind.SVM):
        return _linear_scores(model, X)
    if model.kind in (ModelKind.DT, ModelKind.RF):
        return _tree_scores(model, X)
    return _network_scores(model, X)


def predict(model: TrainedModel, X) -> np.ndarray:
    return model.classes[_argmax_lowest(predict_scores(model, X))]


def same_parameters(a: TrainedModel, b: TrainedModel) -> bool:
    if a.params.keys() != b.params.keys():
        return False
    # leaf thresholds are NaN, so compare with equal_nan
    return all(np.array_equal(a.params[key], b.params[key], equal_nan=True) for key in a.params)


def save(model: TrainedModel, path) -> None:
    """Write an ``.npz`` container: parameter arrays plus a JSON header."""
    header = {
        "format_version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "config_digest": model.config.digest(),
        "classes": model.classes.tolist(),
        "n_features": model.n_features,
        "meta": model.meta,
    }
    arrays = {f"param.{key}": v for key, v in model.params.items()}
    arrays["__meta__"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    with Path(path).open("wb") as fh:
        np.savez(fh, **arrays)


def load(path) -> TrainedModel:
    with np.load(Path(path), allow_pickle=False) as z:
        header = json.loads(z["__meta__"].tobytes().decode())
        params = {key[len("param."):]: z[key] for key in z.files if key.startswith("param.")}
    if header.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {header.get('format_version')}")
    config = ModelConfig.from_dict(header["config"])
    if config.digest() != header["config_digest"]:
        raise ValueError("model file config digest does not match its configuration")
    return TrainedModel(config, np.asarray(header["classes"]), int(header["n_features"]), params, header["meta"])


def with_seed(config: ModelConfig, seed: int) -> ModelConfig:
    return replace(config, seed=int(seed))
