"""tf-idf term weighting and per-trait lexicon extraction."""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .traits import POSITIVE, check_trait

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TfIdfModel:
    vocabulary: dict
    idf: np.ndarray
    doc_count: int

    @property
    def terms(self):
        return sorted(self.vocabulary, key=self.vocabulary.__getitem__)

    def transform(self, documents):
        """Dense ``(n_docs, n_terms)`` matrix of ``tf * idf`` weights.

        ``tf`` is the term count over the full document length, so terms
        dropped by ``min_df`` still count towards ``|d|``.
        """
        out = np.zeros((len(documents), len(self.vocabulary)))
        for i, doc in enumerate(documents):
            if not doc:
                continue
            n = len(doc)
            for term, c in Counter(doc).items():
                j = self.vocabulary.get(term)
                if j is not None:
                    out[i, j] = (c / n) * self.idf[j]
        return out


def fit_tfidf(documents, min_df=2):
    """Smoothed idf ``ln((1 + N) / (1 + df)) + 1`` over terms with ``df >= min_df``."""
    if not documents:
        raise ValueError("fit_tfidf needs at least one document")
    if all(len(d) == 0 for d in documents):
        raise ValueError("all documents are empty")
    df = Counter()
    for doc in documents:
        df.update(set(doc))
    n = len(documents)
    terms = sorted(t for t, c in df.items() if c >= min_df)
    vocab = {t: i for i, t in enumerate(terms)}
    idf = np.array([math.log((1 + n) / (1 + df[t])) + 1 for t in terms])
    return TfIdfModel(vocab, idf, n)


@dataclass(frozen=True)
class TraitLexicon:
    trait: str
    language: str
    ranked_words: tuple

    def __post_init__(self):
        words = [w for w, _ in self.ranked_words]
        if len(set(words)) != len(words):
            raise ValueError("lexicon words must be unique")
        weights = [w for _, w in self.ranked_words]
        if any(a < b for a, b in zip(weights, weights[1:])):
            raise ValueError("lexicon weights must be non-increasing")

    @property
    def words(self):
        return [w for w, _ in self.ranked_words]

    def __len__(self):
        return len(self.ranked_words)

    def to_json(self):
        return {"trait": self.trait, "language": self.language,
                "words": [[w, float(x)] for w, x in self.ranked_words]}

    @classmethod
    def from_json(cls, obj):
        return cls(obj["trait"], obj["language"],
                   tuple((w, float(x)) for w, x in obj["words"]))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), ensure_ascii=False, indent=1),
                              encoding="utf-8")

    @classmethod
    def load(cls, path):
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def trait_term_scores(corpus, trait, min_df=2, mode="contrastive"):
    """``(terms, scores)`` where a score is the positive-class mean tf-idf,
    minus the negative-class mean in ``contrastive`` mode."""
    check_trait(trait)
    if mode not in ("contrastive", "positive"):
        raise ValueError(f"unknown ranking mode {mode!r}")
    labels = corpus.labels(trait)
    if not np.any(labels == POSITIVE):
        raise ValueError(f"no positive users for trait {trait}")
    docs = corpus.documents
    model = fit_tfidf(docs, min_df=min_df)
    weights = model.transform(docs)
    pos = labels == POSITIVE
    scores = weights[pos].mean(axis=0)
    if mode == "contrastive" and np.any(~pos):
        scores = scores - weights[~pos].mean(axis=0)
    return model.terms, scores


def extract_trait_words(corpus, trait, embedding_table, n, min_df=2, mode="contrastive"):
    """Top-``n`` words corresponding positively to ``trait``.

    Terms without a vector in ``embedding_table`` are skipped; ties are
    broken by ascending word.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    terms, scores = trait_term_scores(corpus, trait, min_df, mode)
    order = sorted(range(len(terms)), key=lambda i: (-scores[i], terms[i]))
    ranked = []
    for i in order:
        if terms[i] in embedding_table:
            ranked.append((terms[i], float(scores[i])))
            if len(ranked) == n:
                break
    if len(ranked) < n:
        log.warning("trait %s (%s): only %d embeddable terms, wanted %d",
                    trait, corpus.language, len(ranked), n)
    return TraitLexicon(trait, corpus.language, tuple(ranked))
