import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm
from scipy.optimize import minimize

from globaltrait import align as al
from globaltrait.embeddings import EmbeddingTable
from globaltrait.errors import DivergenceError, OrthogonalityError, SpecError
from globaltrait.synthetic import clustered_vectors, haar_rotation
from globaltrait.traits import TRAITS

LN2 = math.log(2.0)


def rotation(d, seed):
    return haar_rotation(d, np.random.default_rng(seed))


def constant_discriminator(dim, p):
    D = al.Discriminator(dim, hidden=8, seed=0)
    D.params["W3"][:] = 0.0
    D.params["b3"][:] = math.log(p / (1 - p))
    return D


# ---------------------------------------------------------------- procrustes

def test_procrustes_identity():
    X = np.random.default_rng(0).standard_normal((20, 6))
    m = al.procrustes(X, X)
    assert np.abs(m.matrix - np.eye(6)).max() < 1e-12
    assert m.provenance == "procrustes"


def test_procrustes_exact_recovery():
    rng = np.random.default_rng(1)
    for seed in range(10):
        R = rotation(10, seed)
        X = rng.standard_normal((50, 10))
        m = al.procrustes(X, X @ R.T)
        assert np.linalg.norm(m.matrix - R) < 1e-8
        assert al.orthogonality_error(m.matrix) < 1e-10


def test_procrustes_noisy_matches_optimizer():
    rng = np.random.default_rng(2)
    d = 5
    R = rotation(d, 7)
    if np.linalg.det(R) < 0:
        R[:, 0] *= -1
    X = rng.standard_normal((30, d))
    Y = X @ R.T + 0.05 * rng.standard_normal((30, d))

    def objective(M):
        return float(np.sum((X @ M.T - Y) ** 2))

    iu = np.triu_indices(d, 1)

    def param(theta):
        A = np.zeros((d, d))
        A[iu] = theta
        return expm(A - A.T)

    # independent oracle: minimize over rotations exp(A - A^T) from several starts
    best = math.inf
    starts = [np.zeros(len(iu[0]))] + [rng.normal(0, 1, len(iu[0])) for _ in range(4)]
    for x0 in starts:
        res = minimize(lambda t: objective(param(t)), x0, method="BFGS", options={"gtol": 1e-10})
        best = min(best, res.fun)
    m = al.procrustes(X, Y)
    assert objective(m.matrix) == pytest.approx(best, abs=1e-6)


def test_procrustes_non_unique_flag():
    X = np.zeros((4, 3))
    X[:, 0] = [1, 2, 3, 4]
    m = al.procrustes(X, X)
    assert m.non_unique
    assert al.orthogonality_error(m.matrix) < 1e-10


def test_procrustes_errors():
    with pytest.raises(ValueError):
        al.procrustes(np.ones((3, 2)), np.ones((4, 2)))


# ------------------------------------------------------------ orthogonalize

def test_orthogonalize_fixed_point():
    R = rotation(6, 3)
    assert np.abs(al.orthogonalize(R, 0.01) - R).max() < 1e-12


def scalar_recurrence(s, beta, steps):
    for _ in range(steps):
        s = (1 + beta) * s - beta * s ** 3
    return s


def test_orthogonalize_scaled_identity_matches_recurrence():
    m = 1.01 * np.eye(4)
    for _ in range(50):
        m = al.orthogonalize(m, 0.01)
    s = scalar_recurrence(1.01, 0.01, 50)
    # on s*I the update acts on s alone; the error is 2 |s^2 - 1|
    assert np.abs(m - s * np.eye(4)).max() < 1e-13
    assert al.orthogonality_error(m) == pytest.approx(2 * abs(s * s - 1), rel=1e-9)
    # contraction 1 - 2 beta per step: the error after 50 steps is about 0.015
    assert 0.01 < al.orthogonality_error(m) < 0.02
    for _ in range(2000):
        m = al.orthogonalize(m, 0.01)
    assert al.orthogonality_error(m) < 1e-6


def test_orthogonalize_monotone_on_perturbation():
    rng = np.random.default_rng(4)
    for seed in range(5):
        m = rotation(8, seed) + 0.02 * rng.standard_normal((8, 8))
        errs = [al.orthogonality_error(m)]
        for _ in range(20):
            m = al.orthogonalize(m, 0.01)
            errs.append(al.orthogonality_error(m))
        assert all(b <= a + 1e-15 for a, b in zip(errs, errs[1:]))


def test_orthogonalize_divergence():
    with pytest.raises(DivergenceError, match="smaller"):
        al.orthogonalize(3.0 * np.eye(3), 0.01)


def test_reorthogonalize_reaches_tolerance():
    m = rotation(5, 0) + 0.01 * np.random.default_rng(0).standard_normal((5, 5))
    out = al.reorthogonalize(m, 0.01, tol=1e-4, max_passes=5000)
    assert al.orthogonality_error(out) <= 1e-4


# -------------------------------------------------------------------- maps

def test_orthogonal_map_invariant():
    with pytest.raises(OrthogonalityError):
        al.OrthogonalMap(np.diag([1.0, 1.1]))
    with pytest.raises(ValueError):
        al.OrthogonalMap(np.eye(2), provenance="bogus")


def test_map_save_load_round_trip(tmp_path):
    m = al.OrthogonalMap(rotation(7, 1), "procrustes", "es", "en", "Agr")
    p1, p2 = tmp_path / "a.map", tmp_path / "b.map"
    m.save(p1)
    back = al.OrthogonalMap.load(p1)
    np.testing.assert_array_equal(back.matrix, m.matrix)
    assert (back.provenance, back.source_language, back.trait) == ("procrustes", "es", "Agr")
    back.save(p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_map_load_rejects_non_orthogonal(tmp_path):
    p = tmp_path / "bad.map"
    m = al.OrthogonalMap.identity(3)
    m.save(p)
    raw = bytearray(p.read_bytes())
    header_end = raw.index(b"\n") + 1
    raw[header_end:header_end + 8] = np.float64(2.0).tobytes()
    p.write_bytes(bytes(raw))
    with pytest.raises(OrthogonalityError):
        al.OrthogonalMap.load(p)


def test_apply_map_examples():
    rng = np.random.default_rng(5)
    V = rng.standard_normal((10, 4))
    np.testing.assert_array_equal(al.apply_map(np.eye(4), V), V)
    R1, R2 = rotation(4, 1), rotation(4, 2)
    np.testing.assert_allclose(np.linalg.norm(al.apply_map(R1, V), axis=1),
                               np.linalg.norm(V, axis=1), atol=1e-12)
    two_step = al.apply_map(R2, al.apply_map(R1, V))
    m1 = al.OrthogonalMap(R1)
    np.testing.assert_allclose(two_step, al.apply_map(m1.then(al.OrthogonalMap(R2)), V), atol=1e-10)
    t = EmbeddingTable("en", "mono", tuple("abcdefghij"), V)
    np.testing.assert_allclose(al.apply_map(R1, t).vectors, V @ R1.T)
    with pytest.raises(ValueError):
        al.apply_map(np.eye(3), V)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_apply_map_preserves_cosines(seed):
    rng = np.random.default_rng(seed)
    V = rng.standard_normal((6, 5))
    M = al.apply_map(rotation(5, seed), V)

    def cos(A):
        U = A / np.linalg.norm(A, axis=1, keepdims=True)
        return U @ U.T

    assert np.abs(cos(M) - cos(V)).max() < 1e-6


# ------------------------------------------------------- discriminator/loss

def test_discriminator_shape_and_params():
    D = al.Discriminator(16, hidden=2048, seed=0)
    assert D.n_params == 16 * 2048 + 2048 + 2048 * 2048 + 2048 + 2048 + 1
    p = D(np.random.default_rng(0).standard_normal((5, 16)))
    assert p.shape == (5,) and np.all((p > 0) & (p < 1))


def test_discriminator_gradients_finite_difference():
    rng = np.random.default_rng(0)
    D = al.Discriminator(4, hidden=6, dropout=0.0, seed=1)
    z = rng.standard_normal((5, 4))
    t = np.array([1, 0, 1, 1, 0], dtype=float)

    def loss():
        p = D(z)
        return -np.mean(t * np.log(p) + (1 - t) * np.log(1 - p))

    p = D(z)
    grads, dz = D.backward((p - t) / len(t))
    h = 1e-6
    for name, g in grads.items():
        arr = D.params[name].reshape(-1)
        for j in range(0, arr.size, max(1, arr.size // 7)):
            old = arr[j]
            arr[j] = old + h
            lp = loss()
            arr[j] = old - h
            lm = loss()
            arr[j] = old
            num = (lp - lm) / (2 * h)
            assert g.reshape(-1)[j] == pytest.approx(num, rel=1e-5, abs=1e-9), name


@pytest.mark.parametrize("p", [0.3, 0.5, 0.7])
def test_losses_at_constant_discriminator(p):
    rng = np.random.default_rng(1)
    D = constant_discriminator(4, p)
    X, Y = rng.standard_normal((7, 4)), rng.standard_normal((9, 4))
    W = rotation(4, 0)
    ld = al.discriminator_loss(D, W, X, Y)
    lw = al.mapping_loss(D, W, X, Y)
    expected = -math.log(p) - math.log(1 - p)
    assert ld == pytest.approx(expected, abs=1e-12)
    assert lw == pytest.approx(expected, abs=1e-12)
    assert ld + lw >= 4 * LN2 - 1e-12
    if p == 0.5:
        assert abs(ld - 2 * LN2) < 1e-9 and abs(lw - 2 * LN2) < 1e-9


def test_losses_perfect_separation_clamped():
    ld = al.adversarial_loss_from_probs([1.0, 1.0], [0.0, 0.0], 1)
    assert ld == pytest.approx(-2 * math.log(1 - 1e-9), rel=1e-6)
    assert 0 <= ld < 3e-9


def test_mapping_loss_hand_case():
    lw = al.adversarial_loss_from_probs([0.8], [0.6], 0)
    assert lw == pytest.approx(-math.log(0.2) - math.log(0.6), abs=1e-12)
    assert lw == pytest.approx(2.1203, abs=1e-4)


def test_discriminator_loss_formula_oracle():
    rng = np.random.default_rng(3)
    D = al.Discriminator(3, hidden=5, seed=2)
    W = rotation(3, 4)
    X, Y = rng.standard_normal((4, 3)), rng.standard_normal((6, 3))
    # direct evaluation: mapped rows are class 1, target rows class 0
    pm = [D(np.array([W @ x]))[0] for x in X]
    pt = [D(np.array([y]))[0] for y in Y]
    direct = -sum(math.log(v) for v in pm) / 4 - sum(math.log(1 - v) for v in pt) / 6
    assert al.discriminator_loss(D, W, X, Y) == pytest.approx(direct, abs=1e-12)
    smooth = al.discriminator_loss(D, W, X, Y, smoothing=0.1)
    direct_s = (-sum(0.9 * math.log(v) + 0.1 * math.log(1 - v) for v in pm) / 4
                - sum(0.1 * math.log(v) + 0.9 * math.log(1 - v) for v in pt) / 6)
    assert smooth == pytest.approx(direct_s, abs=1e-12)


def test_empty_batches_rejected():
    with pytest.raises(ValueError):
        al.adversarial_loss_from_probs([], [0.5], 1)


# ------------------------------------------------------------------ config

def test_config_validation():
    with pytest.raises(SpecError):
        al.AdversarialConfig(beta=0.6)
    with pytest.raises(SpecError):
        al.AdversarialConfig(epochs=0)
    with pytest.raises(SpecError):
        al.AdversarialConfig(label_smoothing=0.3)
    with pytest.raises(SpecError):
        al.preset("huge")
    paper = al.preset("paper")
    assert (paper.epochs, paper.iterations_per_epoch, paper.disc_hidden) == (5, 100_000, 2048)
    desk = al.preset("desk")
    assert (desk.epochs, desk.iterations_per_epoch) == (5, 2000)


# ----------------------------------------------------------------- training

FAST = al.AdversarialConfig(epochs=2, iterations_per_epoch=150, disc_hidden=32, map_lr=0.02)


def test_adversarial_same_distribution_no_regression():
    X = clustered_vectors(300, 8, np.random.default_rng(0))
    m, hist = al.adversarial_train(X, X, FAST)
    identity_score = hist[0]["validation"]
    assert al.validation_score(m.matrix, X, X) >= identity_score - 1e-12
    assert identity_score == pytest.approx(1.0, abs=1e-12)
    assert m.provenance == "adversarial"


def test_adversarial_deterministic():
    rng = np.random.default_rng(1)
    X = clustered_vectors(200, 6, rng)
    Y = X @ rotation(6, 2).T
    a, ha = al.adversarial_train(X, Y, FAST)
    b, hb = al.adversarial_train(X, Y, FAST)
    assert a.matrix.tobytes() == b.matrix.tobytes()
    assert [h["validation"] for h in ha] == [h["validation"] for h in hb]


def test_adversarial_orthogonality_and_history():
    X = clustered_vectors(200, 6, np.random.default_rng(3))
    Y = X @ rotation(6, 5).T
    m, hist = al.adversarial_train(X, Y, FAST)
    assert len(hist) == FAST.epochs + 1
    for h in hist[1:]:
        assert h["max_ortho_error"] <= FAST.ortho_tol
        assert math.isfinite(h["disc_loss"]) and math.isfinite(h["map_loss"])
    assert hist.discriminator is not None
    assert al.orthogonality_error(m.matrix) <= al.ORTHO_TOL


def test_adversarial_euclidean_step_diverges_with_huge_lr():
    X = clustered_vectors(100, 4, np.random.default_rng(0))
    cfg = al.AdversarialConfig(epochs=1, iterations_per_epoch=50, disc_hidden=16, map_lr=1e4,
                               map_gradient="euclidean")
    with pytest.raises(DivergenceError):
        al.adversarial_train(X, X @ rotation(4, 1).T, cfg)


def test_adversarial_dim_mismatch():
    with pytest.raises(ValueError):
        al.adversarial_train(np.ones((3, 2)), np.ones((3, 3)), FAST)


def test_refinement():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((80, 6))
    R = rotation(6, 6)
    Y = X @ R.T
    pairs = np.stack([np.arange(80), np.arange(80)], axis=1)
    start = al.OrthogonalMap(rotation(6, 9))
    refined, score = al.refine_with_procrustes(start, X, Y, pairs)
    assert np.linalg.norm(refined.matrix - R) < 1e-8
    assert refined.provenance == "adversarial+refined"
    assert score >= al.validation_score(start.matrix, X, Y, pairs)
    with pytest.raises(ValueError):
        al.refine_with_procrustes(start, X, Y, np.zeros((0, 2), dtype=int))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_refinement_never_lowers_score(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((20, 4))
    Y = X @ rotation(4, seed).T + 0.3 * rng.standard_normal((20, 4))
    Y /= np.linalg.norm(Y, axis=1, keepdims=True)
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    pairs = np.stack([np.arange(20), np.arange(20)], axis=1)
    start = al.OrthogonalMap(rotation(4, seed + 1))
    _, score = al.refine_with_procrustes(start, X, Y, pairs)
    # unit rows: mean cosine is an affine function of the Procrustes objective
    assert score >= al.validation_score(start.matrix, X, Y, pairs) - 1e-12


def test_induce_dictionary_mutual():
    X = np.eye(3)
    Y = np.eye(3)[[2, 0, 1]]
    pairs = al.induce_dictionary(X, Y)
    assert pairs.tolist() == [[0, 1], [1, 2], [2, 0]]


# ------------------------------------------------------------ trait maps

def trait_tables(n=60, d=8, seed=0):
    rng = np.random.default_rng(seed)
    words = {t: [f"{t.lower()}{i}" for i in range(n)] for t in TRAITS}
    allw = [w for t in TRAITS for w in words[t]]
    vecs = np.vstack([clustered_vectors(n, d, rng) for _ in TRAITS])
    return EmbeddingTable("xa", "multi", tuple(allw), vecs), words


class Lex:
    def __init__(self, words):
        self.words = words


def test_train_global_trait_self_alignment():
    table, words = trait_tables()
    lex = {t: Lex(words[t]) for t in TRAITS}
    cfg = al.AdversarialConfig(epochs=1, iterations_per_epoch=100, disc_hidden=16, map_lr=0.02)
    alignment = al.train_global_trait(table, table, lex, lex, cfg)
    assert set(alignment.maps) == set(TRAITS)
    for t in TRAITS:
        X = table.rows(words[t])
        assert al.validation_score(alignment.maps[t].matrix, X, X) > 0.99
        assert alignment.maps[t].trait == t


def test_train_global_trait_too_few_words():
    table, words = trait_tables(n=20)
    lex = {t: Lex(words[t]) for t in TRAITS}
    with pytest.raises(ValueError, match="need at least 50"):
        al.train_global_trait(table, table, lex, lex, FAST)


def test_alignment_persistence(tmp_path):
    maps = {t: al.OrthogonalMap(rotation(4, i), "adversarial", "xa", "en", t)
            for i, t in enumerate(TRAITS)}
    alignment = al.TraitAlignment("xa", "en", maps)
    al.save_alignment(alignment, tmp_path)
    back = al.load_alignment(tmp_path, "xa", "en")
    for t in TRAITS:
        np.testing.assert_array_equal(back.maps[t].matrix, maps[t].matrix)
    with pytest.raises(ValueError):
        al.TraitAlignment("xa", "en", {"Extr": maps["Extr"]})
