"""Averaged-embedding logistic regression and the two-channel text CNN.

Both models carry hand-derived gradients and train with Adam under binary
cross entropy or mean squared error.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import DivergenceError
from .traits import POSITIVE, check_trait

log = logging.getLogger(__name__)

MODES = ("mono", "multi", "global_trait")
PROB_CLAMP = 1e-9


# ---------------------------------------------------------------- features

class FeatureVectorizer:
    """Word vectors for one embedding mode.

    ``mono`` uses each language's own table, ``multi`` applies the semantic
    map into the target space, ``global_trait`` additionally applies the
    trait map. Target-language words are never mapped. ``tables`` maps
    language -> monolingual EmbeddingTable, ``semantic_maps`` language ->
    OrthogonalMap (source -> target), ``trait_alignments`` language ->
    TraitAlignment.
    """

    def __init__(self, mode, tables, target_language="en", semantic_maps=None,
                 trait_alignments=None, trait=None):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        self.mode = mode
        self.tables = dict(tables)
        self.target_language = target_language
        self.semantic_maps = dict(semantic_maps or {})
        self.trait_alignments = dict(trait_alignments or {})
        self.trait = trait
        if mode == "global_trait":
            check_trait(trait)
        for lang in self.tables:
            if lang == target_language or mode == "mono":
                continue
            if lang not in self.semantic_maps:
                raise ValueError(f"{mode} mode needs a semantic map for {lang}")
            if mode == "global_trait" and lang not in self.trait_alignments:
                raise ValueError(f"global_trait mode needs trait maps for {lang}")
        self._mapped = {}

    def chain(self, language):
        """Matrix applied to ``language``'s monolingual vectors, or None."""
        if self.mode == "mono" or language == self.target_language:
            return None
        m = self.semantic_maps[language].matrix
        if self.mode == "global_trait":
            m = self.trait_alignments[language].maps[self.trait].matrix @ m
        return m

    def table_vectors(self, language):
        if language not in self._mapped:
            table = self.tables[language]
            m = self.chain(language)
            self._mapped[language] = table.vectors if m is None else table.vectors @ m.T
        return self._mapped[language]

    @property
    def dim(self):
        return next(iter(self.tables.values())).dim

    def lookup(self, language, word):
        table = self.tables[language]
        i = table.word_index.get(word)
        return None if i is None else self.table_vectors(language)[i]


def vectorize_average(doc, vz, return_flag=False):
    """Mean mapped vector of the in-vocabulary tokens of ``doc``.

    An all-OOV document yields the zero vector (``flag`` True).
    """
    table = vz.tables[doc.language]
    rows = [table.word_index[t] for t in doc.tokens if t in table.word_index]
    if not rows:
        vec = np.zeros(vz.dim)
        flagged = True
    else:
        vec = vz.table_vectors(doc.language)[rows].mean(axis=0)
        flagged = False
    return (vec, flagged) if return_flag else vec


# --------------------------------------------------------------- losses

def _sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def loss(kind, predictions, targets):
    """``bce`` over probabilities (clamped) or ``mse`` over raw predictions."""
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {y.shape}")
    if kind == "bce":
        pc = np.clip(p, PROB_CLAMP, 1 - PROB_CLAMP)
        return float(-np.mean(y * np.log(pc) + (1 - y) * np.log(1 - pc)))
    if kind == "mse":
        return float(np.mean((y - p) ** 2))
    raise ValueError(f"unknown loss {kind!r}")


# ------------------------------------------------------------------ Adam

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 10
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    loss: str = "bce"
    seed: int = 0
    max_tokens: int = 1000
    filters: int = 64
    widths: tuple = (3, 4, 5)
    fc_hidden: int = 100
    init_scale: float = 0.1

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.filters < 1 or self.fc_hidden < 1:
            raise ValueError("counts must be positive")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.loss not in ("bce", "mse"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.max_tokens < max(self.widths):
            raise ValueError("max_tokens must cover the widest window")

    def to_dict(self):
        d = asdict(self)
        d["widths"] = list(self.widths)
        return d


class Adam:
    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for k, g in grads.items():
            m = self.m[k]
            v = self.v[k]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# ------------------------------------------------------ logistic regression

@dataclass
class LogisticModel:
    params: dict
    config: TrainConfig = field(default_factory=TrainConfig)

    @classmethod
    def init(cls, dim, config=TrainConfig()):
        return cls({"w": np.zeros(dim), "b": np.zeros(1)}, config)

    def probabilities(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        z = X @ self.params["w"] + self.params["b"][0]
        return z if self.config.loss == "mse" else _sigmoid(z)

    def loss_and_grads(self, X, y):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        y = np.asarray(y, dtype=np.float64)
        out = self.probabilities(X)
        n = len(y)
        if self.config.loss == "mse":
            value = loss("mse", out, y)
            dz = 2.0 * (out - y) / n
        else:
            value = loss("bce", out, y)
            dz = (out - y) / n
        return value, {"w": X.T @ dz, "b": np.array([dz.sum()])}


def logistic_train(features, labels, config=TrainConfig()):
    """Fit the averaged-embedding logistic model with Adam."""
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if config.loss == "bce" and len(np.unique(y)) < 2:
        raise ValueError("logistic training needs examples of both classes")
    model = LogisticModel.init(X.shape[1], config)
    curve = _fit(model, lambda idx: model.loss_and_grads(X[idx], y[idx]), len(y), config)
    model.loss_curve = curve
    return model


def logistic_predict(model, feature):
    """``(label, probability)``; positive iff the probability is at least 0.5."""
    p = float(model.probabilities(feature)[0])
    if model.config.loss == "mse":
        return p, p
    return (POSITIVE if p >= 0.5 else 0), p


def _fit(model, loss_and_grads, n, config):
    """Fixed-epoch minibatch Adam over ``n`` examples; returns per-epoch mean loss."""
    rng = np.random.default_rng(config.seed)
    opt = Adam(model.params, config.lr, config.beta1, config.beta2, config.eps)
    curve = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            value, grads = loss_and_grads(idx)
            if not math.isfinite(value):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            for name, g in grads.items():
                if not np.all(np.isfinite(g)):
                    raise DivergenceError(f"non-finite gradient for {name} at epoch {epoch}")
            opt.step(model.params, grads)
            total += value * len(idx)
        curve.append(total / n)
    return curve


# ---------------------------------------------------------------------- CNN

class TokenEncoder:
    """Maps ``(language, word)`` to rows of the model's embedding matrices.

    Row ``len(vocab)`` is the shared padding/OOV row, always zero.
    """

    def __init__(self, keys):
        self.keys = list(keys)
        self.index = {k: i for i, k in enumerate(self.keys)}
        self.pad = len(self.keys)

    def encode(self, doc, length):
        idx = np.full(length, self.pad, dtype=np.int64)
        toks = [self.index.get((doc.language, t), self.pad) for t in doc.tokens[:length]]
        idx[:len(toks)] = toks
        return idx


def build_encoder(docs, vectorizers):
    """Vocabulary of every in-table token of ``docs`` (first-seen order)."""
    keys, seen = [], set()
    tables = vectorizers[0].tables
    for doc in docs:
        table = tables[doc.language]
        for t in doc.tokens:
            k = (doc.language, t)
            if k not in seen and t in table.word_index:
                seen.add(k)
                keys.append(k)
    return TokenEncoder(keys)


def _embedding_matrix(encoder, vz):
    m = np.zeros((len(encoder.keys) + 1, vz.dim))
    for i, (lang, word) in enumerate(encoder.keys):
        v = vz.lookup(lang, word)
        if v is not None:
            m[i] = v
    return m


class CnnModel:
    """Text CNN with a dynamic first channel and an optional static second.

    Per channel and window width: valid convolution over token positions,
    ReLU, max over positions. Pooled features of all channels are
    concatenated and passed to a tanh hidden layer, then a 2-way softmax
    (``bce``) or a scalar output (``mse``).
    """

    def __init__(self, params, static, encoder, config, length, meta=None):
        self.params = params
        self.static = static
        self.encoder = encoder
        self.config = config
        self.length = length
        self.meta = dict(meta or {})

    @property
    def channels(self):
        return 1 if self.static is None else 2

    @classmethod
    def create(cls, docs, dynamic, static=None, config=TrainConfig(), meta=None):
        """Initialise a model whose vocabulary covers ``docs``.

        ``dynamic`` and ``static`` are FeatureVectorizers; the static
        channel's vectors are frozen copies held outside ``params``.
        """
        vzs = [dynamic] if static is None else [dynamic, static]
        encoder = build_encoder(docs, vzs)
        length = max(max(config.widths), min(config.max_tokens, max(len(d.tokens) for d in docs)))
        rng = np.random.default_rng(config.seed)
        d = dynamic.dim
        params = {"emb": _embedding_matrix(encoder, dynamic)}
        n_channels = len(vzs)
        s = config.init_scale
        for c in range(n_channels):
            for w in config.widths:
                params[f"conv{c}_{w}_W"] = rng.uniform(-s, s, size=(w, d, config.filters))
                params[f"conv{c}_{w}_b"] = np.zeros(config.filters)
        n_feat = n_channels * len(config.widths) * config.filters
        params["fc_W"] = rng.uniform(-s, s, size=(n_feat, config.fc_hidden))
        params["fc_b"] = np.zeros(config.fc_hidden)
        n_out = 1 if config.loss == "mse" else 2
        params["out_W"] = rng.uniform(-s, s, size=(config.fc_hidden, n_out))
        params["out_b"] = np.zeros(n_out)
        static_m = None
        if static is not None:
            static_m = _embedding_matrix(encoder, static)
            static_m.setflags(write=False)
        return cls(params, static_m, encoder, config, length, meta)

    def encode(self, docs):
        return np.stack([self.encoder.encode(doc, self.length) for doc in docs])

    # -- forward / backward

    def forward(self, idx):
        """Output layer values for encoded docs ``idx`` (B, T) plus a cache."""
        p = self.params
        inputs = [p["emb"][idx]]
        if self.static is not None:
            inputs.append(self.static[idx])
        feats, cache_blocks = [], []
        for c, E in enumerate(inputs):
            E = np.ascontiguousarray(E)
            for w in self.config.widths:
                W = p[f"conv{c}_{w}_W"]
                pooled, pos = _kernels.conv_maxpool_forward(E, W, p[f"conv{c}_{w}_b"])
                feats.append(np.maximum(pooled, 0.0))
                cache_blocks.append((c, w, E, pos, pooled))
        feat = np.concatenate(feats, axis=1)
        h = np.tanh(feat @ p["fc_W"] + p["fc_b"])
        out = h @ p["out_W"] + p["out_b"]
        return out, (idx, feat, h, cache_blocks)

    def predict_proba(self, idx):
        out, _ = self.forward(idx)
        if self.config.loss == "mse":
            return out[:, 0]
        return softmax(out)[:, 1]

    def loss_and_grads(self, idx, y):
        out, cache = self.forward(idx)
        y = np.asarray(y, dtype=np.float64)
        n = len(y)
        if self.config.loss == "mse":
            pred = out[:, 0]
            value = loss("mse", pred, y)
            dout = (2.0 * (pred - y) / n)[:, None]
        else:
            prob = softmax(out)
            value = loss("bce", prob[:, 1], y)
            onehot = np.stack([1 - y, y], axis=1)
            dout = (prob - onehot) / n
        return value, self.backward(dout, cache)

    def backward(self, dout, cache):
        p = self.params
        idx, feat, h, blocks = cache
        grads = {"out_W": h.T @ dout, "out_b": dout.sum(axis=0)}
        dh = dout @ p["out_W"].T
        da = dh * (1.0 - h * h)
        grads["fc_W"] = feat.T @ da
        grads["fc_b"] = da.sum(axis=0)
        dfeat = da @ p["fc_W"].T
        F = self.config.filters
        demb = np.zeros_like(p["emb"])
        for k, (c, w, E, pos, pooled) in enumerate(blocks):
            dpooled = np.ascontiguousarray(dfeat[:, k * F:(k + 1) * F] * (pooled > 0))
            dW, db, dE = _kernels.conv_maxpool_backward(
                E, p[f"conv{c}_{w}_W"], pos, dpooled, c == 0)
            grads[f"conv{c}_{w}_W"] = dW
            grads[f"conv{c}_{w}_b"] = db
            if c == 0:
                np.add.at(demb, idx, dE)
        # the padding/OOV row is a fixed zero vector
        demb[self.encoder.pad] = 0.0
        grads["emb"] = demb
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise DivergenceError(f"non-finite gradient at {name}")
        return grads

    # -- persistence

    def save(self, path):
        """JSON header line, then each parameter as little-endian float64."""
        names = sorted(self.params)
        arrays = [(n, self.params[n]) for n in names]
        if self.static is not None:
            arrays.append(("static", self.static))
        header = {
            "architecture": "cnn", "channels": self.channels, "length": self.length,
            "config": self.config.to_dict(), "meta": self.meta,
            "vocab": [list(k) for k in self.encoder.keys],
            "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
        }
        with open(path, "wb") as fh:
            fh.write(json.dumps(header, sort_keys=True, ensure_ascii=False).encode() + b"\n")
            for _, a in arrays:
                fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            header = json.loads(fh.readline())
            payload = fh.read()
        arrays, off = {}, 0
        for spec in header["arrays"]:
            size = int(np.prod(spec["shape"])) * 8
            arrays[spec["name"]] = np.frombuffer(payload[off:off + size], dtype="<f8").reshape(
                spec["shape"]).copy()
            off += size
        static = arrays.pop("static", None)
        if static is not None:
            static.setflags(write=False)
        cfg = dict(header["config"])
        cfg["widths"] = tuple(cfg["widths"])
        encoder = TokenEncoder([tuple(k) for k in header["vocab"]])
        return cls(arrays, static, encoder, TrainConfig(**cfg), header["length"], header["meta"])


def cnn_forward(model, docs):
    """Output values (logits or regression outputs) and the forward cache."""
    return model.forward(model.encode(docs))


def cnn_gradients(model, docs, targets):
    """Loss and exact gradients of every trainable parameter for a batch."""
    return model.loss_and_grads(model.encode(docs), targets)


def train_model(model, docs, targets, config=None):
    """Fixed-epoch Adam training; returns the per-epoch mean loss curve.

    Works for a CnnModel (``docs`` are UserDocuments) or a LogisticModel
    (``docs`` is a feature matrix).
    """
    config = config or model.config
    y = np.asarray(targets, dtype=np.float64)
    if len(y) == 0:
        raise ValueError("empty training set")
    if isinstance(model, CnnModel):
        idx = model.encode(docs)
        return _fit(model, lambda b: model.loss_and_grads(idx[b], y[b]), len(y), config)
    X = np.asarray(docs, dtype=np.float64)
    return _fit(model, lambda b: model.loss_and_grads(X[b], y[b]), len(y), config)


def save_logistic(model, path):
    header = {"architecture": "logistic", "config": model.config.to_dict(),
              "arrays": [{"name": n, "shape": list(model.params[n].shape)} for n in ("b", "w")]}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for n in ("b", "w"):
            fh.write(np.ascontiguousarray(model.params[n], dtype="<f8").tobytes())


def load_logistic(path):
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        payload = fh.read()
    params, off = {}, 0
    for spec in header["arrays"]:
        size = int(np.prod(spec["shape"])) * 8
        params[spec["name"]] = np.frombuffer(payload[off:off + size], dtype="<f8").reshape(
            spec["shape"]).copy()
        off += size
    cfg = dict(header["config"])
    cfg["widths"] = tuple(cfg["widths"])
    return LogisticModel(params, TrainConfig(**cfg))
