"""Pure-numpy reference implementation of the resampling kernel."""

import numpy as np


def linear_bootstrap_stats(X, pinv, cjj, dof, yhat, resid, idx, jcol):
    """Exposure coefficient and OLS se for each outcome under each resample.

    Parameters
    ----------
    X : (n, p) design matrix (intercept first).
    pinv : (p, n) matrix ``(X'X)^-1 X'``.
    cjj : float, the (jcol, jcol) element of ``(X'X)^-1``.
    dof : residual degrees of freedom, n - p.
    yhat : (n, K) fitted values used as the resampling center.
    resid : (n, K) residual matrix; rows are resampled jointly.
    idx : (B, n) integer row indices, one resample per row.
    jcol : index of the exposure column.

    Returns
    -------
    beta : (B, K) resampled exposure coefficients.
    se : (B, K) their classical standard errors.
    """
    X = np.ascontiguousarray(X, dtype=float)
    pinv = np.ascontiguousarray(pinv, dtype=float)
    yhat = np.ascontiguousarray(yhat, dtype=float)
    resid = np.ascontiguousarray(resid, dtype=float)
    idx = np.asarray(idx)
    n_resamples = idx.shape[0]
    n_outcomes = yhat.shape[1]
    beta = np.empty((n_resamples, n_outcomes))
    se = np.empty((n_resamples, n_outcomes))
    scale = cjj / dof
    for b in range(n_resamples):
        ystar = yhat + resid[idx[b]]
        bstar = pinv @ ystar
        diff = ystar - X @ bstar
        rss = np.einsum("ik,ik->k", diff, diff)
        beta[b] = bstar[jcol]
        se[b] = np.sqrt(scale * rss)
    return beta, se
