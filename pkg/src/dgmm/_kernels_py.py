"""Pure numpy implementations of the hot kernels.

Used when the compiled extension is unavailable or when
``DGMM_PURE_PYTHON=1`` is set. Signatures and outputs mirror ``_ext.pyx``.
"""

import numpy as np
from scipy.linalg import solve_triangular

LOG_2PI = np.log(2.0 * np.pi)


def mvn_logpdf(X, means, chols):
    """Gaussian log densities of every row of ``X`` under every component.

    Parameters
    ----------
    X : ndarray of shape (n, d)
    means : ndarray of shape (K, d)
    chols : ndarray of shape (K, d, d)
        Lower Cholesky factors of the component covariances.

    Returns
    -------
    ndarray of shape (n, K)
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    n, d = X.shape
    K = means.shape[0]
    out = np.empty((n, K))
    for k in range(K):
        L = chols[k]
        sol = solve_triangular(L, (X - means[k]).T, lower=True, check_finite=False)
        maha = np.einsum("ij,ij->j", sol, sol)
        logdet = 2.0 * np.log(np.diag(L)).sum()
        out[:, k] = -0.5 * (d * LOG_2PI + logdet + maha)
    return out


def logsumexp_rows(A):
    A = np.asarray(A, dtype=np.float64)
    m = A.max(axis=1)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.exp(A - safe[:, None]).sum(axis=1)) + safe
    out[np.isneginf(m)] = -np.inf
    return out


def categorical(logw, u):
    """Draw one index per row from unnormalized log weights.

    ``u`` holds one uniform(0, 1) variate per row; the draw is the first
    index whose cumulative weight exceeds ``u * total``.
    """
    logw = np.asarray(logw, dtype=np.float64)
    m = logw.max(axis=1, keepdims=True)
    w = np.exp(logw - m)
    c = np.cumsum(w, axis=1)
    thresh = u * c[:, -1]
    idx = (c <= thresh[:, None]).sum(axis=1)
    return np.minimum(idx, logw.shape[1] - 1).astype(np.intp)


def affine_gather(z, A, b, L, idx, eps):
    """out[i, m] = A[idx[i]] @ z[i] + b[idx[i]] + L[idx[i]] @ eps[i, m]."""
    Ai = A[idx]
    Li = L[idx]
    mean = np.einsum("nij,nj->ni", Ai, z) + b[idx]
    return mean[:, None, :] + np.einsum("nij,nmj->nmi", Li, eps)


def affine_moments(z, A, b, L, idx, eps):
    """Monte Carlo moments of the draws ``affine_gather`` would return."""
    draws = affine_gather(z, A, b, L, idx, eps)
    M = draws.shape[1]
    return draws.mean(axis=1), np.einsum("nmi,nmj->nij", draws, draws) / M


def affine_moments_stats(z, A, b, L, idx, ebar, F):
    """Ez = A z + b + L ebar and Ezz = Ez Ez^T + (L F)(L F)^T, per observation."""
    Li = L[idx]
    ez = np.einsum("nij,nj->ni", A[idx], z) + b[idx] + np.einsum("nij,nj->ni", Li, ebar)
    G = np.einsum("nij,njq->niq", Li, F)
    return ez, np.einsum("ni,nj->nij", ez, ez) + np.einsum("niq,njq->nij", G, G)
