"""Synthetic multilingual worlds with planted rotations and planted trait words.

The target language's embeddings are drawn from an anisotropic Gaussian
mixture on the unit sphere; every other language is a planted orthogonal
rotation of it (plus optional noise), so word ``i`` of each language
translates to word ``i`` of the target. Per trait, a set of planted words
is over-sampled in the documents of users with high scores for that trait.

With ``trait_rotations`` the source languages use *different* words for a
trait than the target does, and those words sit at a planted per-trait
rotation of the target's trait words in the shared space: semantic
alignment alone then does not bring trait words together, a trait map does.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Corpus, UserDocument, median_split, tokenize_tweet, write_manifest
from .embeddings import EmbeddingTable, save_vec, unit_rows
from .errors import SpecError
from .traits import TRAITS


@dataclass(frozen=True)
class SyntheticSpec:
    languages: tuple = ("en", "xa")
    users_per_language: int | tuple = 40
    vocab_size: int = 500
    dim: int = 16
    planted_rotation_seed: int = 0
    trait_signal_strength: float = 1.0
    trait_words_per_trait: int = 10
    tokens_per_user: int = 200
    tweet_length: int = 20
    trait_rate: float = 0.03
    noise: float = 0.0
    trait_rotations: bool = False
    seed: int = 0

    def __post_init__(self):
        if len(self.languages) < 1 or len(set(self.languages)) != len(self.languages):
            raise SpecError("languages must be non-empty and distinct")
        counts = self.user_counts()
        if any(c < 2 for c in counts.values()):
            raise SpecError("each language needs at least two users")
        for name in ("vocab_size", "dim", "trait_words_per_trait", "tokens_per_user", "tweet_length"):
            if getattr(self, name) < 1:
                raise SpecError(f"{name} must be positive")
        if not 0 <= self.trait_signal_strength <= 1:
            raise SpecError("trait_signal_strength must lie in [0, 1]")
        if not 0 < self.trait_rate * len(TRAITS) * 2 < 1:
            raise SpecError("trait_rate too large")
        if self.noise < 0:
            raise SpecError("noise must be non-negative")
        planted = len(TRAITS) * self.trait_words_per_trait
        if self.vocab_size < 10 * planted:
            raise SpecError(
                f"vocab_size {self.vocab_size} < 10 x {planted} planted trait words")

    def user_counts(self):
        n = self.users_per_language
        if isinstance(n, int):
            return {lang: n for lang in self.languages}
        if len(n) != len(self.languages):
            raise SpecError("users_per_language must match languages")
        return dict(zip(self.languages, n))

    @property
    def target(self):
        return self.languages[0]


@dataclass
class SyntheticWorld:
    spec: SyntheticSpec
    corpora: dict
    tweets: dict
    tables: dict
    semantic_maps: dict
    trait_words: dict
    trait_maps: dict
    planted_labels: dict = field(default_factory=dict)

    @property
    def target(self):
        return self.spec.target

    @property
    def sources(self):
        return [lang for lang in self.spec.languages if lang != self.target]


def haar_rotation(dim, rng):
    """Uniformly random orthogonal matrix."""
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def clustered_vectors(n, dim, rng, clusters=None, spread=0.3):
    """Unit vectors from an anisotropic Gaussian mixture.

    Anisotropy and uneven cluster masses give the cloud enough structure for
    distribution matching to pin down a rotation.
    """
    clusters = clusters or max(4, n // 40)
    scales = np.exp(-2.4 * np.arange(dim) / dim)
    centers = rng.standard_normal((clusters, dim)) * scales
    weights = rng.dirichlet(np.ones(clusters))
    lab = rng.choice(clusters, n, p=weights)
    return unit_rows(centers[lab] + spread * rng.standard_normal((n, dim)) * scales)


def word_form(lang, i):
    return f"{lang}_{i:04d}"


def generate_synthetic_corpus(spec=None):
    """Build corpora, monolingual tables and ground truth for ``spec``."""
    spec = spec or SyntheticSpec()
    erng = np.random.default_rng(spec.planted_rotation_seed)
    drng = np.random.default_rng(spec.seed)
    V, d, m = spec.vocab_size, spec.dim, spec.trait_words_per_trait
    target = spec.target
    sources = [lang for lang in spec.languages if lang != target]

    base = clustered_vectors(V, d, erng)
    # planted word ids avoid the 20 most frequent ranks
    n_sets = 1 + (len(sources) if spec.trait_rotations else 0)
    needed = n_sets * len(TRAITS) * m
    if needed > V - 20:
        raise SpecError("vocabulary too small for the planted trait words")
    pool = erng.choice(np.arange(20, V), size=needed, replace=False)
    ids = {target: {t: pool[i * m:(i + 1) * m] for i, t in enumerate(TRAITS)}}
    trait_maps = {}
    for s_i, lang in enumerate(sources):
        if spec.trait_rotations:
            off = (s_i + 1) * len(TRAITS) * m
            ids[lang] = {t: pool[off + i * m: off + (i + 1) * m] for i, t in enumerate(TRAITS)}
            trait_maps[lang] = {}
            for t in TRAITS:
                q = haar_rotation(d, erng)
                base[ids[lang][t]] = base[ids[target][t]] @ q.T
                # the trait map takes the source words back onto the target's
                trait_maps[lang][t] = q.T
        else:
            ids[lang] = ids[target]
            trait_maps[lang] = {t: np.eye(d) for t in TRAITS}

    tables, semantic_maps = {}, {}
    for lang in spec.languages:
        words = tuple(word_form(lang, i) for i in range(V))
        if lang == target:
            vec = base
            semantic_maps[lang] = np.eye(d)
        else:
            r = haar_rotation(d, erng)
            vec = base @ r.T
            if spec.noise > 0:
                vec = vec + spec.noise * erng.standard_normal(vec.shape)
            semantic_maps[lang] = r.T
        tables[lang] = EmbeddingTable(lang, "mono", words, vec)

    planted = set(int(i) for i in pool)
    background = np.array([i for i in range(V) if i not in planted])
    zipf = 1.0 / (np.arange(len(background)) + 1.0)
    zipf /= zipf.sum()

    corpora, tweets, planted_labels = {}, {}, {}
    for lang, n_users in spec.user_counts().items():
        labels = {}
        for t in TRAITS:
            lab = np.zeros(n_users, dtype=np.int64)
            lab[drng.permutation(n_users)[:math.ceil(n_users / 2)]] = 1
            labels[t] = lab
        users, user_tweets = [], {}
        for u in range(n_users):
            uid = f"{lang}-{u:03d}"
            scores = {}
            for t in TRAITS:
                dev = drng.uniform(0.05, 0.45)
                scores[t] = 0.5 + dev if labels[t][u] else 0.5 - dev
            rates = np.array([spec.trait_rate * (1 + spec.trait_signal_strength
                                                 * np.clip((scores[t] - 0.5) / 0.45, -1, 1))
                              for t in TRAITS])
            probs = np.append(rates, 1 - rates.sum())
            source = drng.choice(len(probs), size=spec.tokens_per_user, p=probs)
            token_ids = np.empty(spec.tokens_per_user, dtype=np.int64)
            for k, t in enumerate(TRAITS):
                sel = source == k
                token_ids[sel] = drng.choice(ids[lang][t], size=sel.sum())
            sel = source == len(TRAITS)
            token_ids[sel] = drng.choice(background, size=sel.sum(), p=zipf)
            words = [word_form(lang, i) for i in token_ids]
            texts = []
            for start in range(0, len(words), spec.tweet_length):
                chunk = words[start:start + spec.tweet_length]
                if drng.random() < 0.2:
                    chunk = [f"@friend{drng.integers(100)}"] + chunk
                if drng.random() < 0.1:
                    chunk = chunk + [f"http://t.co/{drng.integers(10**6)}"]
                texts.append(" ".join(chunk))
            user_tweets[uid] = texts
            tokens = tuple(tok for tw in texts for tok in tokenize_tweet(tw))
            users.append(UserDocument(uid, lang, tokens, scores))
        corpora[lang] = median_split(Corpus(lang, tuple(users), provenance="synthetic"))
        tweets[lang] = user_tweets
        planted_labels[lang] = {t: labels[t].tolist() for t in TRAITS}

    trait_words = {lang: {t: [word_form(lang, i) for i in ids[lang][t]] for t in TRAITS}
                   for lang in spec.languages}
    return SyntheticWorld(spec, corpora, tweets, tables, semantic_maps, trait_words,
                          trait_maps, planted_labels)


def write_world(world, directory):
    """Write ``.vec`` tables, JSONL manifests and a ground-truth sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {"embeddings": {}, "corpora": {}}
    for lang in world.spec.languages:
        p = directory / f"{lang}.vec"
        save_vec(world.tables[lang], p)
        paths["embeddings"][lang] = p
        c = directory / f"{lang}.jsonl"
        write_manifest(world.corpora[lang], c, tweets=world.tweets[lang])
        paths["corpora"][lang] = c
    truth = {
        "spec": asdict(world.spec),
        "target_language": world.target,
        "semantic_maps": {k: v.tolist() for k, v in world.semantic_maps.items()},
        "trait_maps": {lang: {t: m.tolist() for t, m in maps.items()}
                       for lang, maps in world.trait_maps.items()},
        "trait_words": world.trait_words,
        "planted_labels": world.planted_labels,
    }
    sidecar = directory / "ground_truth.json"
    sidecar.write_text(json.dumps(truth, indent=1))
    paths["ground_truth"] = sidecar
    return paths


def planted_trait_fixture(words_per_trait=400, dim=16, seed=0, target="en", source="xa"):
    """Multilingual tables where each trait's source words are a planted
    rotation of the target's trait words.

    Returns ``(multi_src, multi_tgt, words_src, words_tgt, truth)`` where the
    word dicts map trait -> ranked word list and ``truth`` maps trait -> the
    map taking source trait vectors onto target trait vectors.
    """
    rng = np.random.default_rng(seed)
    src_words, tgt_words, truth = {}, {}, {}
    src_rows, tgt_rows, sw_all, tw_all = [], [], [], []
    for t in TRAITS:
        x = clustered_vectors(words_per_trait, dim, rng, clusters=max(4, words_per_trait // 20))
        q = haar_rotation(dim, rng)
        src_words[t] = [f"{source}_{t.lower()}{i:03d}" for i in range(words_per_trait)]
        tgt_words[t] = [f"{target}_{t.lower()}{i:03d}" for i in range(words_per_trait)]
        # shuffle the target order so row positions carry no pairing
        perm = rng.permutation(words_per_trait)
        tgt_words[t] = [tgt_words[t][i] for i in perm]
        y = x @ q.T
        src_rows.append(x)
        tgt_rows.append(y[perm])
        sw_all.extend(src_words[t])
        tw_all.extend(tgt_words[t])
        truth[t] = q
    multi_src = EmbeddingTable(source, "multi", tuple(sw_all), np.vstack(src_rows))
    multi_tgt = EmbeddingTable(target, "multi", tuple(tw_all), np.vstack(tgt_rows))
    return multi_src, multi_tgt, src_words, tgt_words, truth
