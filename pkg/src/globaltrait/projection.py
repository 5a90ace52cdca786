"""Two-dimensional projections of word vectors (exact PCA and exact t-SNE)."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist, squareform

from . import _kernels

TSNE_DEFAULTS = {"perplexity": 30.0, "iterations": 1000, "learning_rate": 200.0,
                 "early_exaggeration": 12.0, "exaggeration_iters": 250}


def pca(X, n_components=2):
    """Projection on the top principal components (via SVD of the centred data)."""
    X = np.asarray(X, dtype=np.float64)
    Xc = X - X.mean(axis=0)
    _, _, vt = np.linalg.svd(Xc, full_matrices=False)
    # fix the sign so results do not depend on the LAPACK build
    vt = vt[:n_components]
    signs = np.sign(vt[np.arange(len(vt)), np.argmax(np.abs(vt), axis=1)])
    return Xc @ (vt * signs[:, None]).T


def _conditional_p(D2, perplexity, tol=1e-5, max_iter=100):
    """Row-wise Gaussian affinities whose entropy matches ``log(perplexity)``."""
    n = D2.shape[0]
    P = np.zeros((n, n))
    target = np.log(perplexity)
    for i in range(n):
        d = np.delete(D2[i], i)
        lo, hi, beta = 0.0, np.inf, 1.0
        for _ in range(max_iter):
            w = np.exp(-(d - d.min()) * beta)
            s = w.sum()
            h = np.log(s) + beta * np.sum((d - d.min()) * w) / s
            if abs(h - target) < tol:
                break
            if h > target:
                lo = beta
                beta = beta * 2 if hi == np.inf else (beta + hi) / 2
            else:
                hi = beta
                beta = (beta + lo) / 2
        P[i, np.arange(n) != i] = w / s
    return P


def joint_probabilities(X, perplexity=30.0):
    n = len(X)
    if n < 2:
        raise ValueError("t-SNE needs at least two points")
    perplexity = min(perplexity, (n - 1) / 3.0) if n > 4 else min(perplexity, n - 1.0)
    D2 = squareform(pdist(np.asarray(X, dtype=np.float64), "sqeuclidean"))
    P = _conditional_p(D2, perplexity)
    P = (P + P.T) / (2.0 * n)
    return np.maximum(P, 1e-12), perplexity


def tsne(X, seed=0, perplexity=30.0, iterations=1000, learning_rate=200.0,
         early_exaggeration=12.0, exaggeration_iters=250, return_kl=False):
    """Exact O(n^2) t-SNE with momentum and per-coordinate gains."""
    X = np.asarray(X, dtype=np.float64)
    P, _ = joint_probabilities(X, perplexity)
    n = len(X)
    rng = np.random.default_rng(seed)
    Y = 1e-4 * rng.standard_normal((n, 2))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    kl = float("nan")
    for it in range(iterations):
        exaggerate = it < exaggeration_iters
        Pe = np.ascontiguousarray(P * early_exaggeration if exaggerate else P)
        grad, kl = _kernels.tsne_gradient(np.ascontiguousarray(Y), Pe)
        momentum = 0.5 if it < exaggeration_iters else 0.8
        same = np.sign(grad) == np.sign(update)
        gains = np.where(same, gains * 0.8, gains + 0.2)
        np.maximum(gains, 0.01, out=gains)
        update = momentum * update - learning_rate * gains * grad
        Y = Y + update
        Y -= Y.mean(axis=0)
    return (Y, float(kl)) if return_kl else Y


def project(X, method="pca", seed=0, **kw):
    if method == "pca":
        return pca(X)
    if method == "tsne":
        return tsne(X, seed=seed, **kw)
    raise ValueError(f"unknown projection method {method!r}")


def centroid_separation(X, groups):
    """Mean pairwise distance between group centroids over the mean
    within-group spread (mean distance of members to their centroid)."""
    X = np.asarray(X, dtype=np.float64)
    groups = np.asarray(groups)
    labels = sorted(set(groups.tolist()))
    if len(labels) < 2:
        raise ValueError("need at least two groups")
    cents = np.stack([X[groups == g].mean(axis=0) for g in labels])
    spread = np.mean([np.linalg.norm(X[groups == g] - c, axis=1).mean()
                      for g, c in zip(labels, cents)])
    inter = pdist(cents).mean()
    return float(inter / spread)


def write_projection(path, words, languages, coords, metadata=None):
    """CSV with ``word,language,x,y`` rows; ``metadata`` goes in ``#`` comment lines."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for k, v in sorted((metadata or {}).items()):
            fh.write(f"# {k}={v}\n")
        w = csv.writer(fh)
        w.writerow(["word", "language", "x", "y"])
        for word, lang, (x, y) in zip(words, languages, coords):
            w.writerow([word, lang, f"{x:.10g}", f"{y:.10g}"])
    return Path(path)


def read_projection(path):
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    coords = np.array([[float(r["x"]), float(r["y"])] for r in rows])
    return [r["word"] for r in rows], [r["language"] for r in rows], coords
