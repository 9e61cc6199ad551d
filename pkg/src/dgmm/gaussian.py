"""Multivariate Gaussian primitives: jittered Cholesky, log density, sampling.

All mixture arithmetic elsewhere in the package runs in log space on top of
these helpers.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels

LOG_2PI = float(np.log(2.0 * np.pi))
JITTER = (0.0, 1e-8, 1e-6)


class FactorizationError(np.linalg.LinAlgError):
    """Covariance could not be factorized even after jitter."""


def safe_cholesky(cov):
    """Lower Cholesky factor of ``cov`` with diagonal jitter.

    Well-conditioned input is factorized as is. On failure ``eps * mean(diag) * I``
    is added with eps = 1e-8, then once more with 1e-6, before giving up.
    Accepts a single (d, d) matrix or a stack (..., d, d); stacks are
    factorized in one batched call and only failing members are retried.
    """
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim == 2:
        return _chol_single(cov)
    d = cov.shape[-1]
    flat = cov.reshape(-1, d, d)
    try:
        L = np.linalg.cholesky(flat)
        if not np.all(np.isfinite(L)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        L = np.stack([_chol_single(c) for c in flat])
    return L.reshape(cov.shape)


def _chol_single(cov):
    d = cov.shape[0]
    scale = abs(np.trace(cov)) / d if d else 1.0
    if not scale > 0:
        scale = 1.0
    for eps in JITTER:
        try:
            L = np.linalg.cholesky(cov + eps * scale * np.eye(d))
        except np.linalg.LinAlgError:
            continue
        if np.all(np.isfinite(L)) and np.all(np.diag(L) > 0):
            return L
    raise FactorizationError("covariance is not positive definite after jitter")


def chol_inverse(L):
    """Inverse of ``L @ L.T`` given its (possibly stacked) Cholesky factor."""
    d = L.shape[-1]
    Linv = np.linalg.solve(L, np.broadcast_to(np.eye(d), L.shape))
    return np.swapaxes(Linv, -1, -2) @ Linv


@dataclass(frozen=True)
class Gaussian:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"cov shape {cov.shape} does not match mean length {mean.size}")
        tol = 1e-10 * max(1.0, np.abs(cov).max())
        if np.abs(cov - cov.T).max() > tol:
            raise ValueError("covariance is not symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self):
        return self.mean.size

    @property
    def chol(self):
        return safe_cholesky(self.cov)


def log_density(g, x):
    """log N(x; g.mean, g.cov) for one point (d,) or a batch (n, d)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] != g.dim:
        raise ValueError(f"point has dimension {X.shape[1]}, expected {g.dim}")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite input to log_density")
    out = _kernels.mvn_logpdf(X, g.mean[None, :], g.chol[None, :, :])[:, 0]
    return float(out[0]) if single else out


def sample(g, rng, m):
    """Draw ``m`` i.i.d. vectors from ``g``; returns shape (m, d)."""
    if m < 1:
        raise ValueError("sample count must be >= 1")
    L = g.chol
    eps = rng.standard_normal((m, g.dim))
    return g.mean + eps @ L.T


def log_sum_exp(v, axis=None):
    """Stable log(sum(exp(v))); all -inf input gives -inf."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("log_sum_exp of an empty array")
    if axis is None:
        m = v.max()
        if np.isneginf(m):
            return -np.inf
        return float(m + np.log(np.exp(v - m).sum()))
    if v.ndim == 2 and axis in (1, -1):
        return _kernels.logsumexp_rows(v)
    m = np.max(v, axis=axis, keepdims=True)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.exp(v - safe).sum(axis=axis, keepdims=True)) + safe
    return np.squeeze(out, axis=axis)
