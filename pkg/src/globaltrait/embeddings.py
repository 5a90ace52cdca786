"""Word embedding tables: fastText ``.vec`` I/O, normalization and similarity."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import VecFormatError

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class EmbeddingTable:
    """Immutable vocabulary -> vector table for one language and space.

    ``space_tag`` is ``"mono"``, ``"multi"`` or ``"trait:<TraitId>"``.
    Vectors are stored as one contiguous ``(n, dim)`` float64 matrix.
    """

    language: str
    space_tag: str
    words: tuple
    vectors: np.ndarray
    zero_rows: tuple = ()
    duplicates: int = 0
    word_index: dict = field(init=False, repr=False)

    def __post_init__(self):
        vectors = np.ascontiguousarray(self.vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise ValueError(f"vectors must be 2-D, got shape {vectors.shape}")
        if len(self.words) != vectors.shape[0]:
            raise ValueError(
                f"{len(self.words)} words but {vectors.shape[0]} vectors")
        if vectors.shape[1] < 1:
            raise ValueError("dim must be positive")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("embedding vectors must be finite")
        index = {}
        for i, w in enumerate(self.words):
            if not w or any(c.isspace() for c in w):
                raise ValueError(f"invalid word {w!r}")
            if w in index:
                raise ValueError(f"duplicate word {w!r}")
            index[w] = i
        vectors.setflags(write=False)
        object.__setattr__(self, "words", tuple(self.words))
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "word_index", index)

    @classmethod
    def empty(cls, dim, language="xx", space_tag="mono"):
        return cls(language, space_tag, (), np.zeros((0, dim)))

    @property
    def dim(self):
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return word in self.word_index

    def vector(self, word):
        return self.vectors[self.word_index[word]]

    def rows(self, words):
        """Matrix of vectors for ``words`` (all must be present)."""
        return self.vectors[[self.word_index[w] for w in words]]

    def subset(self, words, space_tag=None):
        words = [w for w in words if w in self.word_index]
        return EmbeddingTable(self.language, space_tag or self.space_tag,
                              tuple(words), self.rows(words).reshape(len(words), self.dim))

    def with_vectors(self, vectors, space_tag=None):
        return EmbeddingTable(self.language, space_tag or self.space_tag,
                              self.words, vectors)


@dataclass(frozen=True)
class SimilarityMetric:
    kind: str = "cosine"
    csls_k: int = 10

    def __post_init__(self):
        if self.kind not in ("cosine", "csls"):
            raise ValueError(f"unknown similarity kind {self.kind!r}")
        if self.csls_k < 1:
            raise ValueError("csls_k must be >= 1")


def load_vec(path, limit=None, language=None, space_tag="mono"):
    """Read a fastText text ``.vec`` file.

    Duplicate words keep their first occurrence; the number dropped is
    logged and kept in ``table.duplicates``.
    """
    path = Path(path)
    if language is None:
        language = path.stem.split(".")[0]
    words, rows = [], []
    seen = set()
    duplicates = 0
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise VecFormatError("header must be '<count> <dim>'", line=1)
        try:
            count, dim = int(header[0]), int(header[1])
        except ValueError:
            raise VecFormatError("header must be '<count> <dim>'", line=1) from None
        if count < 0 or dim < 1:
            raise VecFormatError("header counts must be non-negative", line=1)
        wanted = count if limit is None else min(count, limit)
        lineno = 1
        for line in fh:
            if len(words) >= wanted:
                break
            lineno += 1
            parts = line.rstrip("\n").rstrip("\r").split()
            if not parts:
                continue
            if len(parts) != dim + 1:
                raise VecFormatError(
                    f"expected {dim + 1} tokens, found {len(parts)}", line=lineno)
            try:
                vec = [float(x) for x in parts[1:]]
            except ValueError:
                raise VecFormatError("non-numeric component", line=lineno) from None
            if not all(math.isfinite(x) for x in vec):
                raise ValueError(f"line {lineno}: non-finite value in vector for {parts[0]!r}")
            if parts[0] in seen:
                duplicates += 1
                continue
            seen.add(parts[0])
            words.append(parts[0])
            rows.append(vec)
    if duplicates:
        log.warning("%s: %d duplicate words dropped (first occurrence kept)", path, duplicates)
    vectors = np.array(rows, dtype=np.float64).reshape(len(rows), dim)
    return EmbeddingTable(language, space_tag, tuple(words), vectors,
                          duplicates=duplicates)


def save_vec(table, path):
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(table)} {table.dim}\n")
        for word, vec in zip(table.words, table.vectors):
            fh.write(word + " " + " ".join(f"{x:.9g}" for x in vec) + "\n")


def normalize(table):
    """Scale every nonzero row to unit L2 norm; zero rows are kept and flagged."""
    norms = np.linalg.norm(table.vectors, axis=1)
    zero = norms == 0
    safe = np.where(zero, 1.0, norms)
    # already-unit rows are left bit-identical so normalize is idempotent
    unit = np.abs(norms - 1.0) <= 1e-15
    scaled = np.where(unit[:, None], table.vectors, table.vectors / safe[:, None])
    out = EmbeddingTable(table.language, table.space_tag, table.words, scaled,
                         zero_rows=tuple(int(i) for i in np.flatnonzero(zero)))
    if out.zero_rows:
        log.warning("%d zero vectors left unnormalized", len(out.zero_rows))
    return out


def center(table):
    return table.with_vectors(table.vectors - table.vectors.mean(axis=0))


def unit_rows(m):
    """Row-normalize a matrix; zero rows stay zero."""
    m = np.asarray(m, dtype=np.float64)
    norms = np.linalg.norm(m, axis=-1, keepdims=True)
    return m / np.where(norms == 0, 1.0, norms)


def knn_mean_similarity(queries, pool, k):
    """Mean cosine of each query row to its ``k`` nearest rows of ``pool``."""
    sims = unit_rows(queries) @ unit_rows(pool).T
    k = min(k, sims.shape[1])
    if k == 0:
        return np.zeros(sims.shape[0])
    top = np.partition(sims, sims.shape[1] - k, axis=1)[:, -k:]
    return top.mean(axis=1)


def csls_matrix(src, tgt, k=10):
    """CSLS scores ``2 cos(x, y) - r_tgt(x) - r_src(y)`` for all row pairs."""
    cos = unit_rows(src) @ unit_rows(tgt).T
    r_tgt = knn_mean_similarity(src, tgt, k)
    r_src = knn_mean_similarity(tgt, src, k)
    return 2 * cos - r_tgt[:, None] - r_src[None, :]


def nearest_neighbors(table, query, k, metric=SimilarityMetric(), reference=None):
    """Top-``k`` words of ``table`` for ``query`` as ``[(word, score), ...]``.

    Ties are broken by ascending row index. For CSLS the query's own
    neighbourhood density is measured against ``reference`` rows (defaults to
    the table itself).
    """
    if len(table) == 0:
        raise ValueError("nearest_neighbors on an empty table")
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (table.dim,) or not np.all(np.isfinite(query)):
        raise ValueError("query must be a finite vector of the table's dim")
    if not 1 <= k <= len(table):
        raise ValueError(f"k must be in [1, {len(table)}]")
    cos = unit_rows(table.vectors) @ unit_rows(query)
    if metric.kind == "cosine":
        scores = cos
    else:
        ref = table.vectors if reference is None else np.asarray(reference, dtype=np.float64)
        scores = (2 * cos
                  - knn_mean_similarity(query[None, :], table.vectors, metric.csls_k)[0]
                  - knn_mean_similarity(table.vectors, ref, metric.csls_k))
    order = np.lexsort((np.arange(len(scores)), -scores))[:k]
    return [(table.words[i], float(scores[i])) for i in order]


def mean_cosine(mapped_source, target, pairs):
    """Mean cosine similarity over ``(src_idx, tgt_idx)`` pairs."""
    if len(pairs) == 0:
        raise ValueError("mean_cosine needs at least one pair")
    src = np.asarray(mapped_source, dtype=np.float64)
    tgt = np.asarray(target, dtype=np.float64)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if pairs.min() < 0 or pairs[:, 0].max() >= len(src) or pairs[:, 1].max() >= len(tgt):
        raise IndexError("pair index out of range")
    a = src[pairs[:, 0]]
    b = tgt[pairs[:, 1]]
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    if np.any(na == 0) or np.any(nb == 0):
        raise ValueError("zero-norm vector in a cosine pair")
    cos = np.einsum("ij,ij->i", a, b) / (na * nb)
    return float(np.clip(cos.mean(), -1.0, 1.0))
