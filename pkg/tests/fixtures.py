"""Small shared builders for the model and acceptance tests."""

import numpy as np

from globaltrait.align import OrthogonalMap, TraitAlignment
from globaltrait.corpus import UserDocument
from globaltrait.embeddings import EmbeddingTable
from globaltrait.models import CnnModel, FeatureVectorizer, TrainConfig
from globaltrait.synthetic import haar_rotation
from globaltrait.traits import TRAITS

SMALL = TrainConfig(epochs=1, max_tokens=12, filters=4, widths=(3, 4, 5), fc_hidden=6,
                    init_scale=0.5)


def two_language_setup(d=8, vocab=30, seed=0):
    """Tables for en and xa plus planted semantic and trait maps."""
    rng = np.random.default_rng(seed)
    tables = {}
    for lang in ("en", "xa"):
        words = tuple(f"{lang}{i}" for i in range(vocab))
        tables[lang] = EmbeddingTable(lang, "mono", words, rng.standard_normal((vocab, d)))
    sem = {"xa": OrthogonalMap(haar_rotation(d, rng), "planted", "xa", "en")}
    ta = {"xa": TraitAlignment("xa", "en", {
        t: OrthogonalMap(haar_rotation(d, rng), "planted", "xa", "en", t) for t in TRAITS})}
    return tables, sem, ta


def random_docs(n, lang="xa", vocab=30, length=(4, 15), seed=0, oov=True):
    rng = np.random.default_rng(seed)
    docs = []
    for i in range(n):
        k = int(rng.integers(*length))
        toks = [f"{lang}{j}" for j in rng.integers(0, vocab, size=k)]
        if oov:
            toks.append("unknown_token")
        scores = {t: float(rng.random()) for t in TRAITS}
        labels = {t: int(i % 2) for t in TRAITS}
        docs.append(UserDocument(f"{lang}_u{i}", lang, tuple(toks), scores, labels=labels))
    return docs


def pad_entries(model):
    """Flat indices of the fixed zero padding row of ``emb``."""
    d = model.params["emb"].shape[1]
    return {"emb": np.arange(model.encoder.pad * d, (model.encoder.pad + 1) * d)}


def small_cnn(two_channel=True, loss="bce", seed=0):
    tables, sem, ta = two_language_setup(seed=seed)
    docs = random_docs(6, seed=seed) + random_docs(3, "en", seed=seed + 1)
    dyn = FeatureVectorizer("multi", tables, "en", sem, ta)
    stat = FeatureVectorizer("global_trait", tables, "en", sem, ta, "Extr") if two_channel else None
    cfg = TrainConfig(**{**SMALL.to_dict(), "widths": SMALL.widths, "loss": loss, "seed": seed})
    model = CnnModel.create(docs, dyn, stat, cfg)
    # zero biases put windows over padding exactly on the ReLU kink; move
    # off it so finite differences see a differentiable point
    rng = np.random.default_rng(seed + 100)
    for name, v in model.params.items():
        if name.endswith("_b"):
            v[:] = rng.uniform(0.05, 0.2, size=v.shape)
    return model, docs


def finite_difference_errors(params, loss_fn, grads, h=1e-4, per_param=25, seed=0, exclude=None):
    """Worst relative error per parameter name over sampled entries.

    ``exclude`` maps a name to flat indices that are fixed constants.
    """
    exclude = exclude or {}
    rng = np.random.default_rng(seed)
    worst = {}
    for name, g in grads.items():
        arr = params[name]
        flat = arr.reshape(-1)
        nz = np.flatnonzero(np.abs(g.reshape(-1)) > 1e-10)
        picks = nz if len(nz) <= per_param else rng.choice(nz, per_param, replace=False)
        # a few arbitrary entries too, so a wrongly zeroed gradient shows up
        picks = np.union1d(picks, rng.choice(flat.size, min(flat.size, 10), replace=False))
        picks = np.setdiff1d(picks, exclude.get(name, []))
        errs = [0.0]
        for j in picks:
            old = flat[j]
            flat[j] = old + h
            lp = loss_fn()
            flat[j] = old - h
            lm = loss_fn()
            flat[j] = old
            num = (lp - lm) / (2 * h)
            a = g.reshape(-1)[j]
            if abs(a) + abs(num) > 1e-10:
                errs.append(abs(a - num) / (abs(a) + abs(num)))
        worst[name] = max(errs)
    return worst
