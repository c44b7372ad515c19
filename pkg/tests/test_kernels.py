import numpy as np
import pytest

from outcomewide._kernels import BACKEND, _fallback

cython_kernel = pytest.importorskip(
    "outcomewide._kernels._resample", reason="compiled kernel not built"
)


def problem(seed=0, n=250, p=5, k=12, b=100):
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(n), rng.integers(0, 2, n).astype(float),
                         rng.normal(size=(n, p - 2))])
    Y = rng.normal(size=(n, k)) + 0.1 * X[:, [1]]
    xtx_inv = np.linalg.inv(X.T @ X)
    pinv = xtx_inv @ X.T
    beta = pinv @ Y
    fitted = X @ beta
    resid = Y - fitted
    idx = rng.integers(0, n, size=(b, n), dtype=np.int64)
    return X, pinv, float(xtx_inv[1, 1]), n - X.shape[1], fitted, resid, idx


class TestBackendEquivalence:
    def test_identical_statistics(self):
        args = problem()
        b1, s1 = _fallback.linear_bootstrap_stats(*args, 1)
        b2, s2 = cython_kernel.linear_bootstrap_stats(*args, 1)
        assert np.array_equal(b1, b2)
        assert np.array_equal(s1, s2)

    def test_identity_resample_reproduces_observed(self):
        X, pinv, cjj, dof, fitted, resid, _ = problem()
        n = X.shape[0]
        idx = np.tile(np.arange(n, dtype=np.int64), (1, 1))
        beta_obs = (pinv @ (fitted + resid))[1]
        b, s = cython_kernel.linear_bootstrap_stats(X, pinv, cjj, dof, fitted, resid, idx, 1)
        assert np.allclose(b[0], beta_obs, atol=1e-12)

    def test_se_matches_direct_ols(self):
        X, pinv, cjj, dof, fitted, resid, idx = problem(seed=3, b=5)
        b, s = cython_kernel.linear_bootstrap_stats(X, pinv, cjj, dof, fitted, resid, idx, 1)
        for row in range(5):
            ystar = fitted + resid[idx[row]]
            bstar = pinv @ ystar
            rss = np.sum((ystar - X @ bstar) ** 2, axis=0)
            se = np.sqrt(cjj * rss / dof)
            assert np.allclose(s[row], se, atol=1e-12)

    def test_selected_backend_reported(self):
        assert BACKEND in ("cython", "python")
