import json
import os
import subprocess
import sys

import numpy as np
import pytest

from globaltrait import _kernels

BACKENDS = _kernels.backends()
needs_compiled = pytest.mark.skipif(not _kernels.compiled_available(),
                                    reason="compiled extension not built")


def conv_inputs(seed=0, B=4, T=15, d=6, w=3, F=5):
    rng = np.random.default_rng(seed)
    return (rng.standard_normal((B, T, d)), rng.standard_normal((w, d, F)),
            rng.standard_normal(F), rng.standard_normal((B, F)))


@needs_compiled
@pytest.mark.parametrize("seed", range(5))
def test_conv_backends_agree(seed):
    E, W, b, dp = conv_inputs(seed, w=2 + seed % 4)
    outs = {n: k.conv_maxpool_forward(E, W, b) for n, k in BACKENDS.items()}
    np.testing.assert_allclose(outs["cython"][0], outs["numpy"][0], atol=1e-12)
    np.testing.assert_array_equal(outs["cython"][1], outs["numpy"][1])
    pos = outs["numpy"][1]
    grads = {n: k.conv_maxpool_backward(E, W, pos, dp, True) for n, k in BACKENDS.items()}
    for a, c in zip(grads["numpy"], grads["cython"]):
        np.testing.assert_allclose(c, a, atol=1e-12)
    assert BACKENDS["cython"].conv_maxpool_backward(E, W, pos, dp, False)[2] is None


def test_conv_first_max_wins_ties():
    E = np.zeros((1, 6, 1))
    W = np.ones((2, 1, 1))
    for k in BACKENDS.values():
        pooled, pos = k.conv_maxpool_forward(E, W, np.array([0.5]))
        assert pooled[0, 0] == 0.5 and pos[0, 0] == 0


@needs_compiled
def test_tsne_backends_agree():
    rng = np.random.default_rng(1)
    Y = rng.standard_normal((30, 2))
    P = rng.random((30, 30))
    P = P + P.T
    np.fill_diagonal(P, 0)
    P /= P.sum()
    ga, ka = BACKENDS["numpy"].tsne_gradient(Y, P)
    gc, kc = BACKENDS["cython"].tsne_gradient(Y, P)
    np.testing.assert_allclose(gc, ga, atol=1e-12)
    assert kc == pytest.approx(ka, rel=1e-12)


def test_pure_python_switch():
    code = ("import json; from globaltrait import _kernels; "
            "print(json.dumps([_kernels.BACKEND, _kernels.compiled_available()]))")
    env = dict(os.environ, GLOBALTRAIT_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True)
    assert json.loads(out.stdout) == ["numpy", False]


def test_active_backend_named():
    assert _kernels.BACKEND in BACKENDS
