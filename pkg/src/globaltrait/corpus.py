"""Personality-labelled user corpora: tokenization, loading, median split, folds."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .traits import NEGATIVE, POSITIVE, TRAITS, check_trait

log = logging.getLogger(__name__)

PROVENANCES = ("pan2015-like", "pretokenized", "synthetic")
TIE_RULE = "positive iff score >= median"

_URL = r"(?:https?://|www\.)\S+"
_EMOTICON = r"(?:[:;=][-o*']?[)\](\[dDpP/\\|@3*]+|[)\](\[dD/\\|]+[-o*']?[:;=]|<3+)"
_TOKEN_RE = re.compile(
    rf"(?P<url>{_URL})|(?P<mention>@\w*)|(?P<hashtag>#\w+)|(?P<emo>{_EMOTICON})"
    r"|(?P<word>\w+(?:['’]\w+)*)|(?P<punct>[^\w\s]+)",
    re.IGNORECASE | re.UNICODE,
)
_URL_RE = re.compile(_URL, re.IGNORECASE)


def normalize_token(token):
    """Mention/URL replacement and lowercasing for one already-split token."""
    if token.startswith("@"):
        return "@username"
    if _URL_RE.match(token):
        return "@url"
    return token.lower()


def tokenize_tweet(text):
    """Split a tweet into lowercase tokens.

    Hashtags and emoticons stay single tokens, ``@`` mentions become
    ``@username`` and links become ``@url``.
    """
    out = []
    for m in _TOKEN_RE.finditer(text):
        kind = m.lastgroup
        if kind == "url":
            out.append("@url")
        elif kind == "mention":
            out.append("@username")
        else:
            out.append(m.group().lower())
    return out


@dataclass(frozen=True)
class UserDocument:
    user_id: str
    language: str
    tokens: tuple
    scores: dict
    labels: dict | None = None

    def __post_init__(self):
        if not self.tokens:
            raise ValueError(f"user {self.user_id}: empty token stream")
        missing = [t for t in TRAITS if t not in self.scores]
        if missing:
            raise SchemaError(f"user {self.user_id}: missing trait scores {missing}")


@dataclass(frozen=True)
class Corpus:
    language: str
    users: tuple
    split_thresholds: dict = field(default_factory=dict)
    provenance: str = "pan2015-like"
    tie_rule: str = TIE_RULE

    def __post_init__(self):
        ids = [u.user_id for u in self.users]
        if len(set(ids)) != len(ids):
            raise ValueError("user ids must be unique")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")

    def __len__(self):
        return len(self.users)

    def by_id(self):
        return {u.user_id: u for u in self.users}

    def labels(self, trait):
        return np.array([u.labels[trait] for u in self.users], dtype=np.int64)

    def scores(self, trait):
        return np.array([u.scores[trait] for u in self.users], dtype=np.float64)

    @property
    def documents(self):
        return [list(u.tokens) for u in self.users]

    def subset(self, user_ids):
        keep = set(user_ids)
        return replace(self, users=tuple(u for u in self.users if u.user_id in keep))


def _read_records(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None


def load_corpus(path, format="pan2015-like", language=None):
    """Load a line-delimited JSON manifest.

    Each record holds ``user_id``, ``language``, ``scores`` (all five
    traits) and either ``tweets`` (raw strings) or ``tokens`` (one token
    list per tweet). When the manifest mixes languages, ``language``
    selects one.
    """
    if format not in ("pan2015-like", "pretokenized"):
        raise ValueError(f"unknown corpus format {format!r}")
    users = []
    langs = set()
    for lineno, rec in _read_records(path):
        uid = rec.get("user_id")
        if uid is None:
            raise SchemaError(f"{path}:{lineno}: record without user_id")
        uid = str(uid)
        lang = rec.get("language")
        if not lang:
            raise SchemaError(f"user {uid}: missing language")
        if language is not None and lang != language:
            continue
        scores = rec.get("scores") or {}
        missing = [t for t in TRAITS if t not in scores]
        if missing:
            raise SchemaError(f"user {uid}: missing trait score(s) {', '.join(missing)}")
        try:
            scores = {t: float(scores[t]) for t in TRAITS}
        except (TypeError, ValueError):
            raise SchemaError(f"user {uid}: trait scores must be numbers") from None
        if format == "pan2015-like":
            tweets = rec.get("tweets")
            if tweets is None:
                raise SchemaError(f"user {uid}: 'tweets' field required for pan2015-like")
            tokens = [tok for tw in tweets for tok in tokenize_tweet(tw)]
        else:
            tweets = rec.get("tokens")
            if tweets is None:
                raise SchemaError(f"user {uid}: 'tokens' field required for pretokenized")
            tokens = [normalize_token(tok) for tw in tweets for tok in tw if tok.strip()]
        if not tweets or not tokens:
            log.warning("user %s has no tweets; skipped", uid)
            continue
        langs.add(lang)
        users.append(UserDocument(uid, lang, tuple(tokens), scores))
    if len(langs) > 1:
        raise SchemaError(f"{path}: mixed languages {sorted(langs)}; pass language=")
    lang = language or (langs.pop() if langs else "xx")
    return Corpus(lang, tuple(users), provenance=format)


def median_split(corpus):
    """Binary labels per trait: positive iff score >= the trait's median."""
    if len(corpus.users) < 2:
        raise ValueError("median split needs at least two users")
    thresholds = {t: float(np.median(corpus.scores(t))) for t in TRAITS}
    users = tuple(
        replace(u, labels={t: POSITIVE if u.scores[t] >= thresholds[t] else NEGATIVE
                           for t in TRAITS})
        for u in corpus.users)
    return replace(corpus, users=users, split_thresholds=thresholds)


@dataclass(frozen=True)
class FoldPlan:
    trait: str
    k: int
    seed: int
    assignments: dict

    def validation_ids(self, fold):
        return [u for u, f in self.assignments.items() if f == fold]

    def train_ids(self, fold):
        return [u for u, f in self.assignments.items() if f != fold]

    def folds(self):
        for f in range(self.k):
            yield self.train_ids(f), self.validation_ids(f)


def stratified_kfold(corpus, trait, k=5, seed=0):
    """Assign each user to one of ``k`` folds, stratified on the trait label.

    Each class is shuffled and dealt round-robin; the second class continues
    the deal where the first stopped so overall fold sizes differ by at most
    one.
    """
    check_trait(trait)
    if k < 2:
        raise ValueError("k must be at least 2")
    ids = sorted(u.user_id for u in corpus.users)
    by_id = corpus.by_id()
    if any(by_id[i].labels is None for i in ids):
        raise ValueError("corpus is unlabelled; run median_split first")
    pos = [i for i in ids if by_id[i].labels[trait] == POSITIVE]
    neg = [i for i in ids if by_id[i].labels[trait] == NEGATIVE]
    minority = min(len(pos), len(neg))
    if k > minority:
        raise ValueError(f"k={k} exceeds the minority class size {minority} for {trait}")
    rng = np.random.default_rng(seed)
    assignments = {}
    offset = 0
    for group in (pos, neg):
        order = rng.permutation(len(group))
        for j, idx in enumerate(order):
            assignments[group[idx]] = (offset + j) % k
        offset = (offset + len(group)) % k
    return FoldPlan(trait, k, seed, assignments)


def write_manifest(corpus, path, tweets=None):
    """Write a corpus as a manifest; ``tweets`` maps user id to raw strings."""
    with open(path, "w", encoding="utf-8") as fh:
        for u in corpus.users:
            rec = {"user_id": u.user_id, "language": u.language,
                   "scores": {t: u.scores[t] for t in TRAITS}}
            if tweets is not None:
                rec["tweets"] = tweets[u.user_id]
            else:
                rec["tokens"] = [list(u.tokens)]
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    return Path(path)
