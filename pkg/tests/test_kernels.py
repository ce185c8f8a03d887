import numpy as np
import pytest

from lopub import _kernels


def random_em_instance(rng, n=200, c=12):
    L = rng.random((n, c))
    L /= L.max(axis=1, keepdims=True)
    p0 = rng.dirichlet(np.ones(c))
    scale = -rng.random(n)
    return L, p0, scale


def random_cd_instance(rng, rows=20, cols=8):
    X = rng.normal(size=(rows, cols))
    y = rng.normal(size=rows)
    lam = 0.1 * float(np.abs(X.T @ y).max())
    return X, y, lam


@pytest.mark.skipif(not _kernels.USING_NUMBA, reason="numba backend not active")
class TestBackendEquivalence:
    def test_em_loop_matches_numpy(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            L, p0, scale = random_em_instance(rng)
            a = _kernels.em_loop_numpy(L, p0, scale, 1e-8, 200)
            b = _kernels.em_loop_numba(L, p0, scale, 1e-8, 200)
            assert a[1] == b[1]          # iteration count
            assert a[3] == b[3]          # skipped count
            assert np.allclose(a[0], b[0], atol=1e-12)
            assert np.allclose(a[2], b[2], rtol=1e-12)

    def test_em_loop_skips_zero_rows_identically(self):
        rng = np.random.default_rng(1)
        L, p0, scale = random_em_instance(rng, n=50)
        L[7] = 0.0
        L[23] = 0.0
        a = _kernels.em_loop_numpy(L, p0, scale, 1e-8, 100)
        b = _kernels.em_loop_numba(L, p0, scale, 1e-8, 100)
        assert a[3] == b[3] == 2
        assert np.allclose(a[0], b[0], atol=1e-12)

    def test_cd_matches_numpy(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            X, y, lam = random_cd_instance(rng)
            beta0 = np.zeros(X.shape[1])
            a = _kernels.cd_nnlasso_numpy(X, y, lam, beta0, 1e-10, 5000)
            b = _kernels.cd_nnlasso_numba(X, y, lam, beta0, 1e-10, 5000)
            assert a[2] == b[2]
            assert np.allclose(a[0], b[0], atol=1e-9)


def test_numpy_fallback_selected_by_env(monkeypatch):
    monkeypatch.setenv("LOPUB_DISABLE_NUMBA", "1")
    assert _kernels._want_numba() is False
    monkeypatch.delenv("LOPUB_DISABLE_NUMBA")
    # with numba installed the flag's absence enables it
    assert _kernels._want_numba() is True


def test_warmup_runs():
    _kernels.warmup()
    assert _kernels.backend_name() in ("numba", "numpy")


def test_em_loop_uniform_likelihood_stays_uniform():
    # every report equally likely under every candidate: the posterior never
    # moves off the uniform prior
    L = np.ones((40, 6))
    p0 = np.full(6, 1 / 6)
    p, iters, logliks, skipped = _kernels.em_loop(L, p0, np.zeros(40), 1e-6, 50)
    assert iters == 1
    assert skipped == 0
    assert np.allclose(p, p0)
