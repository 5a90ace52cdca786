"""Metrics and the cross-validated model grid."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .corpus import stratified_kfold
from .errors import MissingArtifactError
from .models import (CnnModel, FeatureVectorizer, LogisticModel, TrainConfig, logistic_train,
                     train_model, vectorize_average)
from .traits import NEGATIVE, POSITIVE, TRAITS

log = logging.getLogger(__name__)

MODELS = ("Lgr-mono", "Lgr-multi", "Lgr-GlobalTrait", "CNN-mono", "CNN-GlobalTrait")
MONO_MODELS = ("Lgr-mono", "CNN-mono")
TASKS = {"classification": "f1", "regression": "rmse"}


def f1_score(predictions, labels, average="positive", return_flag=False):
    """F1 of the positive class, or the mean over both classes (``macro``).

    An undefined precision or recall counts as 0; ``flag`` reports it.
    """
    p = np.asarray(predictions)
    y = np.asarray(labels)
    if p.shape != y.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {y.shape}")
    if p.size == 0:
        raise ValueError("f1_score of an empty set")
    if average == "macro":
        a, fa = f1_score(p, y, return_flag=True)
        b, fb = f1_score(1 - p, 1 - y, return_flag=True)
        out, flagged = (a + b) / 2, fa or fb
    elif average == "positive":
        tp = int(np.sum((p == POSITIVE) & (y == POSITIVE)))
        fp = int(np.sum((p == POSITIVE) & (y == NEGATIVE)))
        fn = int(np.sum((p == NEGATIVE) & (y == POSITIVE)))
        flagged = tp + fp == 0 or tp + fn == 0
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        out = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    else:
        raise ValueError(f"unknown F1 average {average!r}")
    return (out, flagged) if return_flag else out


def rmse(predicted, actual):
    p = np.asarray(predicted, dtype=np.float64)
    a = np.asarray(actual, dtype=np.float64)
    if p.shape != a.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {a.shape}")
    if p.size == 0:
        raise ValueError("rmse needs at least one user")
    return float(np.sqrt(np.mean((a - p) ** 2)))


def config_digest(obj):
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class ExperimentReport:
    language: str
    model: str
    task: str
    metric: str
    values: dict
    folds: dict
    seed: int
    config_digest: str
    average: float = field(init=False)
    predictions: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if set(self.values) != set(TRAITS):
            raise ValueError("a report needs a value for every trait")
        self.average = float(np.mean([self.values[t] for t in TRAITS]))

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, obj):
        obj = dict(obj)
        obj.pop("average", None)
        return cls(**obj)


# --------------------------------------------------------------- the grid

def _vectorizer(mode, tables, target, semantic_maps, trait_alignments, trait):
    return FeatureVectorizer(mode, tables, target, semantic_maps, trait_alignments,
                             trait if mode == "global_trait" else None)


def _needs(model):
    if model.endswith("mono"):
        return ("mono",)
    if model == "Lgr-multi":
        return ("multi",)
    if model == "Lgr-GlobalTrait":
        return ("global_trait",)
    return ("multi", "global_trait")


def _fit_predict(model, task, train_docs, train_y, test_docs, vzs, lgr_cfg, cnn_cfg):
    """Train ``model`` on the given docs and return predictions for ``test_docs``."""
    if model.startswith("Lgr"):
        vz = vzs[0]
        X = np.stack([vectorize_average(d, vz) for d in train_docs])
        Xt = np.stack([vectorize_average(d, vz) for d in test_docs])
        if task == "regression":
            lm = LogisticModel.init(X.shape[1], lgr_cfg)
            train_model(lm, X, train_y, lgr_cfg)
        else:
            lm = logistic_train(X, train_y, lgr_cfg)
        out = lm.probabilities(Xt)
    else:
        cm = CnnModel.create(list(train_docs) + list(test_docs), vzs[0],
                             vzs[1] if len(vzs) > 1 else None, cnn_cfg)
        train_model(cm, train_docs, train_y)
        out = cm.predict_proba(cm.encode(test_docs))
    if task == "regression":
        return out.astype(np.float64)
    return (out >= 0.5).astype(np.int64)


def run_experiment(corpora, tables, semantic_maps=None, trait_alignments=None, target="en",
                   models=MODELS, languages=None, task="classification", k=5, seed=0,
                   cnn_config=None, lgr_config=None, f1_average="positive", traits=TRAITS):
    """Cross-validated grid over languages, models and traits.

    ``corpora`` and ``tables`` are keyed by language (tables are
    monolingual); ``semantic_maps`` maps each source language to its
    OrthogonalMap into the target space and ``trait_alignments`` to its
    TraitAlignment. For a source language the -multi and -GlobalTrait
    models also train on the whole target-language corpus. The target
    language only runs the mono models.
    """
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    loss = "bce" if task == "classification" else "mse"
    cnn_config = replace(cnn_config or TrainConfig(), loss=loss, seed=seed)
    lgr_config = replace(lgr_config or TrainConfig(), loss=loss, seed=seed)
    semantic_maps = semantic_maps or {}
    trait_alignments = trait_alignments or {}
    languages = list(languages or corpora)
    unknown = [m for m in models if m not in MODELS]
    if unknown:
        raise ValueError(f"unknown models {unknown}")
    if target not in corpora:
        raise MissingArtifactError(f"no corpus for target language {target!r}", step="synth")
    digest = config_digest({"task": task, "k": k, "seed": seed, "models": list(models),
                            "cnn": cnn_config.to_dict(), "lgr": lgr_config.to_dict(),
                            "f1_average": f1_average})

    reports = []
    for lang in languages:
        if lang not in tables:
            raise MissingArtifactError(f"no embeddings for language {lang!r}", step="synth")
        for model in models:
            if lang == target and model not in MONO_MODELS:
                continue
            needs = _needs(model)
            if "multi" in needs and lang not in semantic_maps:
                raise MissingArtifactError(f"no semantic map for {lang}", step="align")
            if "global_trait" in needs and lang not in trait_alignments:
                raise MissingArtifactError(f"no trait maps for {lang}", step="globaltrait")
            use_tables = {lang: tables[lang]} if model in MONO_MODELS else \
                {lang: tables[lang], target: tables[target]}
            values, folds, preds = {}, {}, {}
            for trait in TRAITS:
                if trait not in traits:
                    values[trait] = float("nan")
                    folds[trait] = []
                    continue
                corpus = corpora[lang]
                plan = stratified_kfold(corpus, trait, k=k, seed=seed)
                by_id = corpus.by_id()
                vzs = [_vectorizer(mode, use_tables, target, semantic_maps,
                                   trait_alignments, trait) for mode in needs]
                extra = [] if model in MONO_MODELS else list(corpora[target].users)
                fold_vals, trait_preds = [], {}
                for f, (train_ids, val_ids) in enumerate(plan.folds()):
                    train_docs = [by_id[i] for i in train_ids] + extra
                    test_docs = [by_id[i] for i in val_ids]
                    if task == "classification":
                        ty = np.array([d.labels[trait] for d in train_docs], dtype=np.float64)
                        vy = np.array([d.labels[trait] for d in test_docs])
                    else:
                        ty = np.array([d.scores[trait] for d in train_docs])
                        vy = np.array([d.scores[trait] for d in test_docs])
                    pred = _fit_predict(model, task, train_docs, ty, test_docs, vzs,
                                        lgr_config, cnn_config)
                    if task == "classification":
                        fold_vals.append(f1_score(pred, vy, average=f1_average))
                    else:
                        fold_vals.append(rmse(pred, vy))
                    trait_preds.update({d.user_id: float(p) for d, p in zip(test_docs, pred)})
                values[trait] = float(np.mean(fold_vals))
                folds[trait] = fold_vals
                preds[trait] = trait_preds
                log.info("%s %s %s: %.4f", lang, model, trait, values[trait])
            reports.append(ExperimentReport(
                lang, model, task, TASKS[task], values, folds, seed, digest,
                predictions=preds,
                metadata={"f1_average": f1_average, "k": k,
                          "average": "arithmetic mean of the five trait values",
                          "augmented_with": None if model in MONO_MODELS else target}))
    return reports


# ------------------------------------------------------------ rendering

def render_table(reports, language=None, title=None):
    """Aligned text table: one row per model, columns the traits then Average."""
    rows = [r for r in reports if language is None or r.language == language]
    if not rows:
        return ""
    name_w = max(len("Model"), *(len(r.model) for r in rows))
    head = "Model".ljust(name_w) + "".join(c.rjust(9) for c in (*TRAITS, "Average"))
    lines = [title] if title else []
    lines += [head, "-" * len(head)]
    for r in rows:
        cells = [r.values[t] for t in TRAITS] + [r.average]
        scale = 100.0 if r.metric == "f1" else 1.0
        fmt = "{:9.2f}" if r.metric == "f1" else "{:9.4f}"
        lines.append(r.model.ljust(name_w) + "".join(
            fmt.format(c * scale) if math.isfinite(c) else "      n/a" for c in cells))
    return "\n".join(lines)


def write_reports(reports, directory):
    """Write ``reports.json`` plus one text table per language."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "reports.json").write_text(
        json.dumps([r.to_json() for r in reports], indent=1, sort_keys=True))
    paths = [directory / "reports.json"]
    for lang in sorted({r.language for r in reports}):
        task = next(r.task for r in reports if r.language == lang)
        p = directory / f"table_{task}_{lang}.txt"
        p.write_text(render_table(reports, lang, title=f"{lang} ({task})") + "\n")
        paths.append(p)
    return paths


def load_reports(path):
    return [ExperimentReport.from_json(o) for o in json.loads(Path(path).read_text())]


# ------------------------------------------------------- no-signal band

def permutation_null(report, corpus, n_permutations=200, seed=0):
    """Null distribution of a classification report's average F1.

    Labels are shuffled within each validation fold while the report's
    predictions stay fixed, so fold sizes, class counts and the model's
    predicted-positive rate are all preserved; only the pairing between
    prediction and label is broken. Returns an array of
    ``n_permutations`` averages over the traits the report covers.
    """
    if report.task != "classification":
        raise ValueError("the permutation null is defined for classification reports")
    k = report.metadata.get("k", 5)
    average = report.metadata.get("f1_average", "positive")
    by_id = corpus.by_id()
    rng = np.random.default_rng(seed)
    traits = [t for t in TRAITS if report.predictions.get(t)]
    if not traits:
        raise ValueError("report has no stored predictions")
    out = np.zeros((n_permutations, len(traits)))
    for j, trait in enumerate(traits):
        plan = stratified_kfold(corpus, trait, k=k, seed=report.seed)
        folds = []
        for f in range(plan.k):
            ids = plan.validation_ids(f)
            folds.append((np.array([report.predictions[trait][i] for i in ids]),
                          np.array([by_id[i].labels[trait] for i in ids])))
        for n in range(n_permutations):
            out[n, j] = np.mean([f1_score(p, rng.permutation(y), average=average)
                                 for p, y in folds])
    return out.mean(axis=1)


def no_signal_band(reports, corpora, n_permutations=200, seed=0, width=3.0):
    """Check that seed-averaged F1 sits inside the permutation band.

    ``reports`` are one model's reports over several seeds. ``corpora``
    is a language -> corpus dict, or a list with each report's own corpus.
    The null for the seed mean is the mean of independent per-seed nulls.
    Returns ``(observed, null_mean, null_sd, inside)``.
    """
    if isinstance(corpora, dict):
        corpora = [corpora[r.language] for r in reports]
    observed = float(np.mean([r.average for r in reports]))
    nulls = np.stack([permutation_null(r, c, n_permutations, seed + i)
                      for i, (r, c) in enumerate(zip(reports, corpora))])
    mean = float(nulls.mean(axis=1).mean())
    sd = float(np.sqrt(nulls.var(axis=1, ddof=1).sum()) / len(reports))
    inside = abs(observed - mean) <= width * sd + 1e-12
    return observed, mean, sd, inside
