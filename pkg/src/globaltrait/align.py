"""Orthogonal mappings between embedding spaces.

Conventions: embeddings are stored row-major, ``X`` is ``(n, d)``. A map
``M`` acts on column vectors, ``y = M x``, so a whole table maps as
``X @ M.T``. The Procrustes solution for rows is ``M = U V^T`` with
``U S V^T = svd(Y^T X)``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .embeddings import EmbeddingTable, csls_matrix, mean_cosine, unit_rows
from .errors import DivergenceError, OrthogonalityError, SpecError
from .traits import TRAITS

log = logging.getLogger(__name__)

ORTHO_TOL = 1e-3
PROVENANCES = ("procrustes", "adversarial", "adversarial+refined", "identity", "planted")


def orthogonality_error(m):
    """Frobenius norm of ``M^T M - I``."""
    m = np.asarray(m, dtype=np.float64)
    return float(np.linalg.norm(m.T @ m - np.eye(m.shape[1])))


@dataclass(frozen=True, eq=False)
class OrthogonalMap:
    matrix: np.ndarray
    provenance: str = "identity"
    source_language: str | None = None
    target_language: str | None = None
    trait: str | None = None
    non_unique: bool = False

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"map must be square, got {m.shape}")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        err = orthogonality_error(m)
        if not err <= ORTHO_TOL:
            raise OrthogonalityError(f"||M^T M - I||_F = {err:.3g} exceeds {ORTHO_TOL}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls, dim, **kw):
        return cls(np.eye(dim), provenance="identity", **kw)

    @property
    def dim(self):
        return self.matrix.shape[0]

    def then(self, other):
        """Composition: apply ``self`` first, then ``other``."""
        return other.matrix @ self.matrix

    def save(self, path):
        """Write a JSON header line followed by the row-major float64 payload."""
        header = {"dim": self.dim, "provenance": self.provenance,
                  "source_language": self.source_language,
                  "target_language": self.target_language,
                  "trait": self.trait, "non_unique": self.non_unique,
                  "dtype": "<f8"}
        with open(path, "wb") as fh:
            fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
            fh.write(np.ascontiguousarray(self.matrix, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            header = json.loads(fh.readline())
            payload = fh.read()
        d = int(header["dim"])
        if len(payload) != d * d * 8:
            raise ValueError(f"{path}: payload holds {len(payload)} bytes, expected {d * d * 8}")
        m = np.frombuffer(payload, dtype="<f8").reshape(d, d)
        return cls(m, provenance=header["provenance"],
                   source_language=header.get("source_language"),
                   target_language=header.get("target_language"),
                   trait=header.get("trait"), non_unique=header.get("non_unique", False))


@dataclass
class TraitAlignment:
    source_language: str
    target_language: str
    maps: dict
    history: dict = field(default_factory=dict)

    def __post_init__(self):
        if set(self.maps) != set(TRAITS):
            raise ValueError(f"need exactly one map per trait {TRAITS}, got {sorted(self.maps)}")


# ---------------------------------------------------------------- closed form

def procrustes(X, Y, source_language=None, target_language=None, trait=None):
    """Orthogonal ``M`` minimising ``sum ||M x_i - y_i||^2`` over paired rows."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or X.shape != Y.shape or X.shape[0] < 1:
        raise ValueError(f"procrustes needs matched non-empty (n, d) inputs, got {X.shape} and {Y.shape}")
    u, s, vt = np.linalg.svd(Y.T @ X)
    m = u @ vt
    # ambiguous when the cross-covariance loses more than one rank
    tol = max(s[0], 1.0) * X.shape[1] * np.finfo(float).eps * 1e3
    non_unique = bool(np.sum(s <= tol) > 1)
    if non_unique:
        log.warning("procrustes: rank-deficient cross-covariance, solution not unique")
    return OrthogonalMap(m, "procrustes", source_language, target_language, trait, non_unique)


def orthogonalize(m, beta=0.01):
    """One step of ``M <- (1 + beta) M - beta (M M^T) M``."""
    m = np.asarray(m, dtype=np.float64)
    before = orthogonality_error(m)
    if before >= 1.0:
        raise DivergenceError(
            f"matrix too far from orthogonal (||M^T M - I||_F = {before:.3g}); use a smaller map learning rate")
    out = (1 + beta) * m - beta * (m @ m.T) @ m
    after = orthogonality_error(out)
    if after > before + 1e-12:
        raise DivergenceError(
            f"orthogonalization diverged ({before:.3g} -> {after:.3g}); use a smaller map learning rate or beta")
    return out


def reorthogonalize(m, beta=0.01, tol=5e-4, max_passes=500):
    """Apply :func:`orthogonalize` until ``||M^T M - I||_F <= tol``."""
    m = orthogonalize(m, beta)
    passes = 1
    while orthogonality_error(m) > tol:
        if passes >= max_passes:
            raise DivergenceError(
                f"orthogonality error {orthogonality_error(m):.3g} after {passes} passes; "
                "use a smaller map learning rate")
        m = orthogonalize(m, beta)
        passes += 1
    return m


def apply_map(m, vectors):
    """``y = M x`` for every row; accepts a matrix, an OrthogonalMap or a table."""
    mat = m.matrix if isinstance(m, OrthogonalMap) else np.asarray(m, dtype=np.float64)
    if isinstance(vectors, EmbeddingTable):
        if vectors.dim != mat.shape[1]:
            raise ValueError(f"dim mismatch: map {mat.shape[1]}, table {vectors.dim}")
        return vectors.with_vectors(vectors.vectors @ mat.T)
    v = np.asarray(vectors, dtype=np.float64)
    if v.shape[-1] != mat.shape[1]:
        raise ValueError(f"dim mismatch: map {mat.shape[1]}, vectors {v.shape[-1]}")
    return v @ mat.T


# ------------------------------------------------------------- discriminator

def _leaky(x, slope=0.2):
    return np.where(x > 0, x, slope * x)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


class Discriminator:
    """MLP ``d -> h -> h -> 1`` with leaky-ReLU(0.2) hidden units and a sigmoid.

    ``__call__`` returns ``P(source = 1 | z)`` for each row of ``z``.
    """

    def __init__(self, dim, hidden=2048, dropout=0.1, seed=0, rng=None):
        rng = rng if rng is not None else np.random.default_rng(seed)
        sizes = [dim, hidden, hidden, 1]
        self.sizes = sizes
        self.dropout = dropout
        self.params = {}
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]), start=1):
            bound = 1.0 / math.sqrt(a)
            self.params[f"W{i}"] = rng.uniform(-bound, bound, size=(a, b))
            self.params[f"b{i}"] = rng.uniform(-bound, bound, size=b)

    @property
    def n_params(self):
        return sum(p.size for p in self.params.values())

    def logits(self, z, rng=None):
        """Forward pass; dropout on the input is active only when ``rng`` is given."""
        p = self.params
        x = np.asarray(z, dtype=np.float64)
        mask = None
        if rng is not None and self.dropout > 0:
            mask = (rng.random(x.shape) >= self.dropout) / (1.0 - self.dropout)
            x = x * mask
        a1 = x @ p["W1"] + p["b1"]
        h1 = _leaky(a1)
        a2 = h1 @ p["W2"] + p["b2"]
        h2 = _leaky(a2)
        out = (h2 @ p["W3"] + p["b3"])[:, 0]
        self._cache = (x, mask, a1, h1, a2, h2)
        return out

    def __call__(self, z):
        return _sigmoid(self.logits(z))

    def backward(self, dlogits, need_params=True):
        """Gradients from ``dL/dlogit`` of the most recent forward pass.

        Returns ``(param_grads, dz)``; ``param_grads`` is None when
        ``need_params`` is false.
        """
        p = self.params
        x, mask, a1, h1, a2, h2 = self._cache
        g = dlogits[:, None]
        grads = None
        dh2 = g @ p["W3"].T
        da2 = dh2 * np.where(a2 > 0, 1.0, 0.2)
        dh1 = da2 @ p["W2"].T
        da1 = dh1 * np.where(a1 > 0, 1.0, 0.2)
        dx = da1 @ p["W1"].T
        if mask is not None:
            dx = dx * mask
        if need_params:
            grads = {"W3": h2.T @ g, "b3": g.sum(axis=0),
                     "W2": h1.T @ da2, "b2": da2.sum(axis=0),
                     "W1": x.T @ da1, "b1": da1.sum(axis=0)}
        return grads, dx


# -------------------------------------------------------------------- losses

PROB_CLAMP = 1e-9


def _clamped_log(p):
    return np.log(np.clip(p, PROB_CLAMP, 1 - PROB_CLAMP))


def adversarial_loss_from_probs(p_mapped, p_target, mapped_label, smoothing=0.0):
    """``-(1/n) sum log P(l | Wx) - (1/m) sum log P(1 - l | y)`` with smoothing.

    ``mapped_label`` is the class the mapped-source rows are scored against
    (1 for the discriminator objective, 0 for the mapping objective).
    """
    p_mapped = np.asarray(p_mapped, dtype=np.float64)
    p_target = np.asarray(p_target, dtype=np.float64)
    if p_mapped.size == 0 or p_target.size == 0:
        raise ValueError("batches must be non-empty")
    t_mapped = (1 - smoothing) if mapped_label == 1 else smoothing
    t_target = 1 - t_mapped
    lm = -(t_mapped * _clamped_log(p_mapped) + (1 - t_mapped) * _clamped_log(1 - p_mapped)).mean()
    lt = -(t_target * _clamped_log(p_target) + (1 - t_target) * _clamped_log(1 - p_target)).mean()
    return float(lm + lt)


def discriminator_loss(D, W, source_batch, target_batch, smoothing=0.0):
    """Discriminator objective: mapped source is class 1, target class 0."""
    mapped = apply_map(W, source_batch)
    return adversarial_loss_from_probs(D(mapped), D(np.asarray(target_batch)), 1, smoothing)


def mapping_loss(D, W, source_batch, target_batch, smoothing=0.0):
    """Mapping objective: the same terms with flipped labels."""
    mapped = apply_map(W, source_batch)
    return adversarial_loss_from_probs(D(mapped), D(np.asarray(target_batch)), 0, smoothing)


# ------------------------------------------------------------ configuration

@dataclass(frozen=True)
class AdversarialConfig:
    epochs: int = 5
    iterations_per_epoch: int = 100_000
    batch_size: int = 32
    disc_steps_per_map_step: int = 1
    disc_lr: float = 0.1
    map_lr: float = 0.1
    lr_decay: float = 0.95
    beta: float = 0.01
    label_smoothing: float = 0.0
    disc_hidden: int = 2048
    disc_dropout: float = 0.1
    init: str = "identity"
    seed: int = 0
    validation: str = "mean_cosine"
    dictionary_metric: str = "cosine"
    csls_k: int = 10
    max_rank: int = 10_000
    map_gradient: str = "riemannian"
    ortho_tol: float = 5e-4
    refine_steps: int = 0
    restarts: int = 1
    restart_accept: float = 0.99
    min_lexicon_size: int = 50

    def __post_init__(self):
        for name in ("epochs", "iterations_per_epoch", "batch_size",
                     "disc_steps_per_map_step", "disc_hidden", "max_rank"):
            if getattr(self, name) < 1:
                raise SpecError(f"{name} must be positive")
        if not 0 < self.beta < 0.5:
            raise SpecError("beta must lie in (0, 0.5)")
        if not 0 <= self.label_smoothing <= 0.2:
            raise SpecError("label_smoothing must lie in [0, 0.2]")
        if self.init not in ("identity", "random"):
            raise SpecError(f"unknown init {self.init!r}")
        if self.dictionary_metric not in ("cosine", "csls"):
            raise SpecError(f"unknown dictionary metric {self.dictionary_metric!r}")
        if self.map_gradient not in ("riemannian", "euclidean"):
            raise SpecError(f"unknown map gradient {self.map_gradient!r}")
        if not 0 < self.ortho_tol <= ORTHO_TOL:
            raise SpecError(f"ortho_tol must lie in (0, {ORTHO_TOL}]")
        if self.restarts < 1:
            raise SpecError("restarts must be positive")
        if self.validation != "mean_cosine":
            raise SpecError("only mean_cosine validation is supported")

    def to_dict(self):
        return asdict(self)


PRESETS = {
    "paper": AdversarialConfig(),
    "desk": AdversarialConfig(iterations_per_epoch=2000, disc_hidden=256, map_lr=0.02,
                              refine_steps=5, restarts=8),
}


def preset(name, **overrides):
    try:
        base = PRESETS[name]
    except KeyError:
        raise SpecError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return replace(base, **overrides)


# --------------------------------------------------------- dictionary + eval

def induce_dictionary(mapped_src, tgt, metric="cosine", k=10, max_rank=None):
    """Mutual nearest neighbours between mapped source rows and target rows.

    Falls back to forward nearest neighbours when no pair is mutual.
    """
    a = np.asarray(mapped_src, dtype=np.float64)
    b = np.asarray(tgt, dtype=np.float64)
    if max_rank is not None:
        a, b = a[:max_rank], b[:max_rank]
    if metric == "csls":
        scores = csls_matrix(a, b, k)
    else:
        scores = unit_rows(a) @ unit_rows(b).T
    fwd = scores.argmax(axis=1)
    bwd = scores.argmax(axis=0)
    src_idx = np.arange(len(a))
    mutual = bwd[fwd] == src_idx
    if not mutual.any():
        return np.stack([src_idx, fwd], axis=1)
    return np.stack([src_idx[mutual], fwd[mutual]], axis=1)


def validation_score(matrix, X, Y, dictionary=None, metric="cosine", k=10, max_rank=None):
    """Mean cosine over a given dictionary or one induced under ``matrix``."""
    mapped = X @ np.asarray(matrix).T
    pairs = dictionary
    if pairs is None:
        pairs = induce_dictionary(mapped, Y, metric, k, max_rank)
    return mean_cosine(mapped, Y, pairs)


# ------------------------------------------------------------------ training

class TrainingHistory(list):
    """Per-epoch records; ``discriminator`` holds the final discriminator."""

    discriminator = None


def _random_orthogonal(dim, rng):
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def _as_matrix(t):
    return t.vectors if isinstance(t, EmbeddingTable) else np.asarray(t, dtype=np.float64)


def adversarial_train(X_table, Y_table, config=None, dictionary=None, init=None):
    """Learn an orthogonal map from ``X_table``'s space to ``Y_table``'s.

    Alternates ``disc_steps_per_map_step`` SGD steps on the discriminator
    objective with one SGD step on the mapping objective, re-orthogonalizing
    the map after each map step. The map with the best end-of-epoch
    validation score (the initial map included) is returned along with the
    per-epoch history.
    """
    cfg = config or preset("desk")
    X = _as_matrix(X_table)
    Y = _as_matrix(Y_table)
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dim mismatch: {X.shape[1]} vs {Y.shape[1]}")
    if len(X) == 0 or len(Y) == 0:
        raise ValueError("adversarial_train needs non-empty tables")
    dim = X.shape[1]
    rng = np.random.default_rng(cfg.seed)
    D = Discriminator(dim, cfg.disc_hidden, cfg.disc_dropout, rng=rng)
    if init is not None:
        W = np.array(init.matrix if isinstance(init, OrthogonalMap) else init, dtype=np.float64)
    elif cfg.init == "random":
        W = _random_orthogonal(dim, rng)
    else:
        W = np.eye(dim)

    nx = min(len(X), cfg.max_rank)
    ny = min(len(Y), cfg.max_rank)
    bs = cfg.batch_size
    s = cfg.label_smoothing

    def score(m):
        return validation_score(m, X, Y, dictionary, cfg.dictionary_metric, cfg.csls_k, cfg.max_rank)

    best_w, best_score = W.copy(), score(W)
    history = TrainingHistory([{"epoch": 0, "validation": best_score}])
    disc_lr, map_lr = cfg.disc_lr, cfg.map_lr
    # mapped rows are class 1 for the discriminator; smoothing pulls targets inward
    t_disc = np.concatenate([np.full(bs, 1 - s), np.full(bs, s)])
    t_map = np.full(bs, s)

    for epoch in range(1, cfg.epochs + 1):
        d_losses, w_losses, worst = [], [], 0.0
        for it in range(cfg.iterations_per_epoch):
            for _ in range(cfg.disc_steps_per_map_step):
                xb = X[rng.integers(0, nx, bs)]
                yb = Y[rng.integers(0, ny, bs)]
                z = np.concatenate([xb @ W.T, yb])
                logit = D.logits(z, rng)
                p = _sigmoid(logit)
                lm = adversarial_loss_from_probs(p[:bs], p[bs:], 1, s)
                dlogit = (p - t_disc) / bs
                grads, _ = D.backward(dlogit)
                for name, g in grads.items():
                    D.params[name] -= disc_lr * g
                d_losses.append(lm)
            xb = X[rng.integers(0, nx, bs)]
            mapped = xb @ W.T
            logit = D.logits(mapped, rng)
            p = _sigmoid(logit)
            # the target term of the mapping objective does not depend on W
            lw = float(-(t_map * _clamped_log(p) + (1 - t_map) * _clamped_log(1 - p)).mean())
            _, dz = D.backward((p - t_map) / bs, need_params=False)
            grad = dz.T @ xb
            if cfg.map_gradient == "riemannian":
                # tangent component at W on the orthogonal group
                grad = 0.5 * (grad - W @ grad.T @ W)
            W -= map_lr * grad
            W = reorthogonalize(W, cfg.beta, cfg.ortho_tol)
            worst = max(worst, orthogonality_error(W))
            w_losses.append(lw)
            if not (math.isfinite(lm) and math.isfinite(lw) and np.all(np.isfinite(W))):
                raise DivergenceError(
                    f"non-finite training state at epoch {epoch} iteration {it}: "
                    f"disc_loss={lm}, map_loss={lw}, ||W||_F={np.linalg.norm(W)}")
        val = score(W)
        history.append({"epoch": epoch, "validation": val,
                        "disc_loss": float(np.mean(d_losses)), "map_loss": float(np.mean(w_losses)),
                        "disc_lr": disc_lr, "map_lr": map_lr,
                        "ortho_error": orthogonality_error(W), "max_ortho_error": worst})
        log.info("epoch %d: validation %.4f disc %.4f map %.4f", epoch, val,
                 history[-1]["disc_loss"], history[-1]["map_loss"])
        if val > best_score:
            best_w, best_score = W.copy(), val
        disc_lr *= cfg.lr_decay
        map_lr *= cfg.lr_decay

    history.discriminator = D
    src_lang = getattr(X_table, "language", None)
    tgt_lang = getattr(Y_table, "language", None)
    return OrthogonalMap(best_w, "adversarial", src_lang, tgt_lang), history


def refine_with_procrustes(W, X_table, Y_table, dictionary):
    """Exact Procrustes on dictionary pairs; returns the map and its new score."""
    pairs = np.asarray(dictionary, dtype=np.int64).reshape(-1, 2)
    if len(pairs) == 0:
        raise ValueError("refinement needs a non-empty dictionary")
    X = _as_matrix(X_table)
    Y = _as_matrix(Y_table)
    m = procrustes(X[pairs[:, 0]], Y[pairs[:, 1]])
    src = W.source_language if isinstance(W, OrthogonalMap) else None
    tgt = W.target_language if isinstance(W, OrthogonalMap) else None
    trait = W.trait if isinstance(W, OrthogonalMap) else None
    out = OrthogonalMap(m.matrix, "adversarial+refined", src, tgt, trait, m.non_unique)
    return out, mean_cosine(X @ out.matrix.T, Y, pairs)


def iterative_refinement(W, X_table, Y_table, steps, metric="cosine", k=10, max_rank=10_000):
    """Alternate dictionary induction and Procrustes ``steps`` times."""
    X = _as_matrix(X_table)
    Y = _as_matrix(Y_table)
    current = W
    scores = []
    for _ in range(steps):
        pairs = induce_dictionary(X @ current.matrix.T, Y, metric, k, max_rank)
        current, sc = refine_with_procrustes(current, X, Y, pairs)
        scores.append(sc)
    return current, scores


def fit_map(X_table, Y_table, config=None, dictionary=None, trait=None):
    """Adversarial training with optional restarts and Procrustes refinement.

    Restart ``r > 0`` starts from a random orthogonal map with a fresh seed.
    Refinement is kept only when it raises the validation score. Restarts
    stop early once the validation score reaches ``config.restart_accept``.
    Returns ``(OrthogonalMap, history)`` where history has one entry per
    restart.
    """
    cfg = config or preset("desk")
    X = _as_matrix(X_table)
    Y = _as_matrix(Y_table)

    def score(m):
        return validation_score(m, X, Y, dictionary, cfg.dictionary_metric, cfg.csls_k, cfg.max_rank)

    best, best_score, runs = None, -np.inf, []
    for r in range(cfg.restarts):
        rcfg = cfg if r == 0 else replace(cfg, seed=cfg.seed + 7919 * r, init="random")
        m, hist = adversarial_train(X, Y, rcfg, dictionary)
        sc = score(m.matrix)
        if cfg.refine_steps:
            if dictionary is not None:
                refined, _ = refine_with_procrustes(m, X, Y, dictionary)
                refined_scores = [score(refined.matrix)]
            else:
                refined, _ = iterative_refinement(m, X, Y, cfg.refine_steps, cfg.dictionary_metric,
                                                  cfg.csls_k, cfg.max_rank)
                refined_scores = [score(refined.matrix)]
            hist.append({"refine": cfg.refine_steps, "validation": refined_scores[-1]})
            if refined_scores[-1] > sc:
                m, sc = refined, refined_scores[-1]
        runs.append({"restart": r, "seed": rcfg.seed, "validation": sc, "epochs": list(hist),
                     "map": m, "discriminator": hist.discriminator})
        log.info("restart %d: validation %.4f", r, sc)
        if sc > best_score:
            best, best_score = m, sc
        if best_score >= cfg.restart_accept:
            break
    out = OrthogonalMap(best.matrix, best.provenance,
                        getattr(X_table, "language", None), getattr(Y_table, "language", None),
                        trait, best.non_unique)
    return out, runs


def align_semantic(X_table, Y_table, config=None, dictionary=None):
    """Semantic (multilingual) map from one language's space to the target's."""
    return fit_map(X_table, Y_table, config, dictionary)


def train_global_trait(multi_src, multi_tgt, lexicon_src, lexicon_tgt, config=None):
    """One orthogonal map per trait between the trait words of two languages.

    ``lexicon_src`` and ``lexicon_tgt`` map each trait id to a TraitLexicon
    (or any object with a ``words`` sequence). Returns a TraitAlignment.
    """
    cfg = config or preset("desk")
    maps, history = {}, {}
    for i, trait in enumerate(TRAITS):
        if trait not in lexicon_src or trait not in lexicon_tgt:
            raise ValueError(f"missing lexicon for trait {trait}")
        src_words = [w for w in lexicon_src[trait].words if w in multi_src]
        tgt_words = [w for w in lexicon_tgt[trait].words if w in multi_tgt]
        if min(len(src_words), len(tgt_words)) < cfg.min_lexicon_size:
            raise ValueError(
                f"trait {trait}: {len(src_words)} source / {len(tgt_words)} target usable words, "
                f"need at least {cfg.min_lexicon_size}")
        X = multi_src.rows(src_words)
        Y = multi_tgt.rows(tgt_words)
        m, runs = fit_map(X, Y, replace(cfg, seed=cfg.seed + i), trait=trait)
        maps[trait] = OrthogonalMap(m.matrix, m.provenance, multi_src.language,
                                    multi_tgt.language, trait, m.non_unique)
        history[trait] = runs
    return TraitAlignment(multi_src.language, multi_tgt.language, maps, history)


def cross_evaluate(alignment, pairs_by_trait):
    """5x5 matrix: row = map's trait, column = evaluation trait's (X, Y, pairs)."""
    out = np.zeros((len(TRAITS), len(TRAITS)))
    for i, ti in enumerate(TRAITS):
        m = alignment.maps[ti].matrix
        for j, tj in enumerate(TRAITS):
            X, Y, pairs = pairs_by_trait[tj]
            out[i, j] = mean_cosine(np.asarray(X) @ m.T, Y, pairs)
    return out


def save_alignment(alignment, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {}
    for trait, m in alignment.maps.items():
        p = directory / f"{alignment.source_language}-{alignment.target_language}.{trait}.map"
        m.save(p)
        paths[trait] = p
    return paths


def load_alignment(directory, source_language, target_language):
    directory = Path(directory)
    maps = {}
    for trait in TRAITS:
        p = directory / f"{source_language}-{target_language}.{trait}.map"
        maps[trait] = OrthogonalMap.load(p)
    return TraitAlignment(source_language, target_language, maps)
