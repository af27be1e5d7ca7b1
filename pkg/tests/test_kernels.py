"""The compiled kernels and the numpy fallback must agree."""
import importlib
import os
import subprocess
import sys

import numpy as np
import pytest

from divine import _kernels_py as py

cy = pytest.importorskip("divine._kernels")


@pytest.fixture
def inst():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(80, 3))
    K = np.exp(-py.sq_dists(X) / 2.0)
    return X, K, K.sum(axis=0), rng.normal(size=80)


def test_sq_dists(inst):
    X = inst[0]
    assert np.allclose(cy.sq_dists(X), py.sq_dists(X), atol=1e-12)


@pytest.mark.parametrize("kind", [0, 1, 2])
@pytest.mark.parametrize("fixed", [0, 6])
def test_greedy_parity(inst, kind, fixed):
    _, K, cs, s = inst
    allowed = np.ones(80, dtype=np.uint8)
    allowed[::7] = 0
    a = cy.greedy(s, K, 0.4, 8, kind, cs, fixed, allowed)
    b = py.greedy(s, K, 0.4, 8, kind, cs, fixed, allowed)
    assert np.array_equal(a[0], b[0])
    assert np.allclose(a[1], b[1], atol=1e-12) and np.allclose(a[2], b[2], atol=1e-12)


@pytest.mark.parametrize("kind", [0, 1, 2])
def test_gain_and_add_parity(inst, kind):
    _, K, cs, _ = inst
    st_a, cm_a = np.zeros(80), np.zeros(80)
    st_b, cm_b = np.zeros(80), np.zeros(80)
    cross = intra = 0.0
    cand = np.arange(1, 80)
    for step, pick in enumerate([0, 5, 40]):
        ga = cy.div_gains(kind, K, cand, st_a, cm_a, cs, cross, intra, step, 0)
        gb = py.div_gains(kind, K, cand, st_b, cm_b, cs, cross, intra, step, 0)
        assert np.allclose(ga, gb, atol=1e-12)
        ia = cy.add_point(kind, K, pick, st_a, cm_a)
        ib = py.add_point(kind, K, pick, st_b, cm_b)
        assert ia == pytest.approx(ib)
        assert np.allclose(st_a, st_b) and np.allclose(cm_a, cm_b)
        intra += ia
        cross += cs[pick]
        cand = cand[cand != pick]


def test_env_forces_fallback():
    env = dict(os.environ, DIVINE_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from divine._backend import BACKEND; print(BACKEND)"],
                         env=env, capture_output=True, text=True)
    assert out.stdout.strip() == "python"
