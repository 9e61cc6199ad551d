"""Stochastic EM fitting of deep Gaussian mixtures.

One iteration, with all conditionals evaluated at the current parameters:

* path posteriors f(s | y) from the collapsed mixture;
* for each layer l and component j: draw ``z_{l-1}`` from its posterior
  given ``s_l = j`` (for l = 1 this is just ``y``), draw a tail sub-path,
  then draw ``M`` replicates of ``z_l`` from the Gaussian conditional
  N(rho, xi) (S-step) and average them (E-step);
* closed-form component updates weighted by f(s_l = j | y) (M-step);
* re-impose identifiability.

Estimates are the post-burn-in average of the iterates of the best of
several independently seeded chains.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from sklearn.cluster import KMeans

from . import _kernels
from .gaussian import FactorizationError, safe_cholesky
from .model import (
    PSI_FLOOR,
    DegeneratePosteriorError,
    DgmmParams,
    LayerParams,
    Network,
    layer_responsibilities,
    log_likelihood,
    normalize_log_rows,
    tail_moments,
)

log = logging.getLogger(__name__)

PI_FLOOR = 1e-12
MIN_WEIGHT = 1e-10
MODES = ("monte_carlo", "exact_moments")


class FitError(RuntimeError):
    """Every chain failed; ``failures`` lists (start, message) pairs."""

    def __init__(self, message, failures=()):
        super().__init__(message)
        self.failures = list(failures)


@dataclass
class FitConfig:
    m_replicates: int = 10
    max_iters: int = 200
    burn_in: int = 20
    n_starts: int = 10
    seed: int = 0
    tol: float = 1e-4
    e_step_mode: str = "monte_carlo"
    window: int = 20
    n_jobs: int = 1

    def __post_init__(self):
        if self.m_replicates < 1:
            raise ValueError("m_replicates must be >= 1")
        if not 0 <= self.burn_in < self.max_iters:
            raise ValueError("burn_in must be in [0, max_iters)")
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")
        if self.e_step_mode not in MODES:
            raise ValueError(f"e_step_mode must be one of {MODES}")


@dataclass
class FitResult:
    params: DgmmParams
    averaged_params: DgmmParams
    loglik_trace: np.ndarray
    loglik: float
    labels: np.ndarray
    path_posteriors: np.ndarray
    bic: float
    n_params: int
    converged: bool
    n_iter: int
    start: int
    start_logliks: list = field(default_factory=list)
    failures: list = field(default_factory=list)


# -- initialization ----------------------------------------------------------

def _kmeans(z, k, rng):
    if k == 1:
        return np.zeros(len(z), dtype=np.intp), z.mean(axis=0, keepdims=True)
    km = KMeans(n_clusters=k, init="k-means++", n_init=1,
                random_state=int(rng.integers(2**31 - 1)))
    labels = km.fit_predict(z)
    return labels, km.cluster_centers_


def init_params(spec, data, rng):
    """Layer-by-layer initialization from k-means++ clusters and local PCA.

    Each layer clusters its input, takes the top principal directions of
    the within-cluster residuals as loadings, and passes whitened principal
    scores down as the input of the next layer.
    """
    data = np.asarray(data, dtype=np.float64)
    n = data.shape[0]
    if n < max(spec.k) + 1:
        raise ValueError(f"need at least {max(spec.k) + 1} observations, got {n}")
    z = data
    layers = []
    for l, k in enumerate(spec.k, start=1):
        d, r = spec.dims[l - 1], spec.dims[l]
        labels, centers = _kmeans(z, k, rng)
        eta = np.array(centers, dtype=np.float64)
        lam = np.empty((k, d, r))
        psi = np.empty((k, d))
        scores = np.empty((n, r))
        global_cov = np.atleast_2d(np.cov(z, rowvar=False, bias=True))
        for j in range(k):
            members = labels == j
            resid = z[members] - eta[j]
            cov = resid.T @ resid / len(resid) if members.sum() > r + 1 else global_cov
            ev, V = np.linalg.eigh(cov)
            ev, V = ev[::-1], V[:, ::-1]
            sigma2 = max(ev[r:].mean(), 0.0)
            scale = np.sqrt(np.maximum(ev[:r] - sigma2, 1e-3 * max(ev[0], 1e-12)))
            lam[j] = V[:, :r] * scale
            var = np.diag(cov)
            psi[j] = np.maximum(var - (lam[j] ** 2).sum(axis=1), np.maximum(1e-2 * var, PSI_FLOOR))
            scores[members] = (resid @ V[:, :r]) / np.sqrt(np.maximum(ev[:r], 1e-12))
        layers.append(LayerParams(eta, lam, psi, np.full(k, 1.0 / k)))
        z = scores
    return DgmmParams(spec, layers)


# -- S / E / M steps -----------------------------------------------------------

def replicate_stats(rng, n, m, r):
    """Replicate mean and scatter of ``m`` iid N(0, I_r) vectors, per row.

    Returns ``ebar`` (n, r) and a factor ``F`` (n, r, q) such that
    ``F F^T`` is the average outer product about ``ebar``. When ``m > r``
    they are drawn directly: ``ebar`` is N(0, I/m) and ``m F F^T`` is an
    independent Wishart(m - 1, I) built by the Bartlett decomposition, which
    matches the joint law of the statistics of explicit draws.
    """
    if m - 1 < r:
        eps = rng.standard_normal((n, m, r))
        ebar = eps.mean(axis=1)
        return ebar, np.swapaxes(eps - ebar[:, None, :], 1, 2) / np.sqrt(m)
    scale = 1.0 / np.sqrt(m)
    ebar = rng.standard_normal((n, r)) * scale
    F = np.zeros((n, r * r))
    for a in range(r):
        F[:, a * (r + 1)] = np.sqrt(rng.chisquare(m - 1 - a, size=n)) * scale
    if r > 1:
        low = np.ravel_multi_index(np.tril_indices(r, -1), (r, r))
        F[:, low] = rng.standard_normal((n, low.size)) * scale
    return ebar, F.reshape(n, r, r)


def _draw(net, l, z_prev, tail_logw, offset, rng, m, moments_only=False):
    if not np.all(np.isfinite(tail_logw.max(axis=1))):
        raise DegeneratePosteriorError("tail posterior has no mass for some observation")
    n = z_prev.shape[0]
    u = rng.random(n)
    tails = _kernels.categorical(tail_logw, u) + offset
    r = net.spec.dims[l]
    maps = (z_prev, net.cond_A[l], net.cond_b[l], net.cond_chol[l], tails)
    if moments_only:
        return _kernels.affine_moments_stats(*maps, *replicate_stats(rng, n, m, r)), tails
    eps = rng.standard_normal((n, m, r))
    return _kernels.affine_gather(*maps, eps), tails


def s_step(params, l, z_prev, tail_posteriors, rng, m, net=None):
    """Draw ``m`` replicates of ``z_l`` per observation.

    Parameters
    ----------
    z_prev : ndarray (n, r_{l-1})
        ``y`` at layer 1, otherwise draws of ``z_{l-1}``.
    tail_posteriors : ndarray (n, T_l)
        Probabilities over the tails ``(s_l, ..., s_h)``. One tail is drawn
        per observation and shared by its replicates.

    Returns
    -------
    draws : ndarray (n, m, r_l)
    tails : ndarray (n,) of drawn tail indices
    """
    net = net or Network(params)
    z_prev = np.ascontiguousarray(z_prev, dtype=np.float64)
    with np.errstate(divide="ignore"):
        logw = np.log(np.asarray(tail_posteriors, dtype=np.float64))
    return _draw(net, l, z_prev, logw, 0, rng, m)


def e_step_moments(draws):
    """Monte Carlo first and second moments from (n, m, r) draws."""
    draws = np.asarray(draws, dtype=np.float64)
    m = draws.shape[1]
    return draws.mean(axis=1), np.einsum("nmi,nmj->nij", draws, draws) / m


def exact_moments(net, l, z_prev, tail_probs, offset=0):
    """Closed-form moments, mixing the Gaussian conditionals over the tails.

    ``tail_probs`` (n, B) covers the tails ``offset .. offset + B - 1``.
    """
    B = tail_probs.shape[1]
    sl = slice(offset, offset + B)
    A, b, xi = net.cond_A[l][sl], net.cond_b[l][sl], net.cond_cov[l][sl]
    rho = np.einsum("trd,nd->ntr", A, z_prev) + b[None]
    Ez = np.einsum("nt,ntr->nr", tail_probs, rho)
    Ezz = np.einsum("nt,trs->nrs", tail_probs, xi) + np.einsum("nt,ntr,nts->nrs", tail_probs, rho, rho)
    return Ez, Ezz


def m_step_layer(params, l, z_prev, moments, responsibilities):
    """Closed-form updates for the components of layer ``l``.

    Parameters
    ----------
    z_prev : ndarray (n, d) shared by all components, or (k, n, d)
    moments : tuple (Ez (k, n, r), Ezz (k, n, r, r))
        Moments of ``z_l`` given ``z_prev`` and ``s_l = j``.
    responsibilities : ndarray (n, k)
        f(s_l = j | y); also define the new mixing weights.
    """
    old = params.layers[l - 1]
    Ez, Ezz = moments
    k = old.k
    resp = np.asarray(responsibilities, dtype=np.float64)
    z_prev = np.asarray(z_prev, dtype=np.float64)
    new = old.copy()
    for j in range(k):
        zp = z_prev[j] if z_prev.ndim == 3 else z_prev
        w = resp[:, j]
        W = w.sum()
        if W < MIN_WEIGHT:
            continue
        eta = w @ (zp - Ez[j] @ old.lam[j].T) / W
        X = zp - eta
        Sxz = (w[:, None] * X).T @ Ez[j]
        Szz = np.einsum("n,nrs->rs", w, Ezz[j])
        Lc = safe_cholesky(0.5 * (Szz + Szz.T))
        lam = np.linalg.solve(Lc.T, np.linalg.solve(Lc, Sxz.T)).T
        psi = (w @ (X * X) - (lam * Sxz).sum(axis=1)) / W
        new.eta[j] = eta
        new.lam[j] = lam
        new.psi[j] = np.maximum(psi, PSI_FLOOR)
    pi = np.maximum(resp.mean(axis=0), PI_FLOOR)
    new.pi = pi / pi.sum()
    return new


# -- identifiability -----------------------------------------------------------

def enforce_identifiability(params):
    """Density-preserving canonical form.

    Interior latent variables ``z_1 .. z_{h-1}`` are shifted and rescaled to
    zero marginal mean and unit marginal variances (the compensating change
    lands on the layer below, keeping its noise diagonal). Innermost loadings,
    whose factor has an N(0, I) prior, are rotated so that
    ``Lambda' Psi^-1 Lambda`` is diagonal with decreasing entries, with the
    first non-negligible entry of every column made non-negative.
    """
    out = params.copy()
    spec = out.spec
    for l in range(1, spec.h):
        means, covs, logw = tail_moments(out)
        w = np.exp(logw[l + 1])
        mu, S = means[l + 1], covs[l + 1]
        m = w @ mu
        var = w @ (np.diagonal(S, axis1=1, axis2=2) + mu ** 2) - m ** 2
        D = np.sqrt(np.maximum(var, 1e-300))
        up, down = out.layers[l - 1], out.layers[l]
        up.eta = up.eta + up.lam @ m
        up.lam = up.lam * D
        down.eta = (down.eta - m) / D
        down.lam = down.lam / D[:, None]
        down.psi = down.psi / D ** 2
    inner = out.layers[-1]
    for j in range(inner.k):
        inner.lam[j] = _rotate(inner.lam[j], inner.psi[j])
    return out


def _rotate(lam, psi):
    M = lam.T @ (lam / psi[:, None])
    _, V = np.linalg.eigh(0.5 * (M + M.T))
    lam = lam @ V[:, ::-1]
    tol = 1e-12 * max(np.abs(lam).max(), 1e-300)
    for c in range(lam.shape[1]):
        nz = np.flatnonzero(np.abs(lam[:, c]) > tol)
        if nz.size and lam[nz[0], c] < 0:
            lam[:, c] = -lam[:, c]
    return lam


# -- one SEM sweep -----------------------------------------------------------

def sem_sweep(params, data, rng, config, net=None, log_post=None):
    """One S/E/M pass over all layers; returns (new params, layer timings)."""
    spec = params.spec
    net = net or Network(params)
    if log_post is None:
        lj = net.log_joint(data)
        log_post = lj - _kernels.logsumexp_rows(lj)[:, None]
    n = data.shape[0]
    resp = layer_responsibilities(spec, np.exp(log_post))
    exact = config.e_step_mode == "exact_moments"
    layers, timings = [], {}
    for l in range(1, spec.h + 1):
        t0 = time.perf_counter()
        k, d, r = spec.k[l - 1], spec.dims[l - 1], spec.dims[l]
        B = spec.n_tails(l + 1)
        head = int(np.prod(spec.k[: l - 1]))
        lp = log_post.reshape(n, head, k, B)
        Zp = np.empty((k, n, d)) if l > 1 else data
        Ez = np.empty((k, n, r))
        Ezz = np.empty((k, n, r, r))
        for j in range(k):
            if l == 1:
                zp = data
                tail_logw = lp[:, 0, j, :]
            else:
                zp = _posterior_chain(net, data, lp[:, :, j, :].reshape(n, head * B), l, j, rng)
                Zp[j] = zp
                tail_logw = net.tail_log_joint(l, zp, slice(j * B, (j + 1) * B))
            if exact:
                probs, _ = normalize_log_rows(tail_logw)
                Ez[j], Ezz[j] = exact_moments(net, l, zp, probs, offset=j * B)
            else:
                (Ez[j], Ezz[j]), _ = _draw(net, l, zp, tail_logw, j * B, rng,
                                           config.m_replicates, moments_only=True)
        layers.append(m_step_layer(params, l, Zp, (Ez, Ezz), resp[l - 1]))
        timings[f"layer{l}"] = time.perf_counter() - t0
    return DgmmParams(spec, layers), timings


def _posterior_chain(net, data, path_logw, l, j, rng):
    """Draw ``z_{l-1}`` from its posterior given ``y`` and ``s_l = j``.

    A full path is drawn from f(s | y, s_l = j), then ``z_1 .. z_{l-1}``
    ancestrally along that path from the Gaussian conditionals.
    """
    spec = net.spec
    n = data.shape[0]
    k, B = spec.k[l - 1], spec.n_tails(l + 1)
    pick = _kernels.categorical(path_logw, rng.random(n))
    a, b = np.divmod(pick, B)
    full = (a * k + j) * B + b
    z = data
    for m in range(1, l):
        tails = full % spec.n_tails(m)
        eps = rng.standard_normal((n, 1, spec.dims[m]))
        z = _kernels.affine_gather(z, net.cond_A[m], net.cond_b[m], net.cond_chol[m], tails, eps)[:, 0, :]
    return z


# -- chains ------------------------------------------------------------------

@dataclass
class _Chain:
    start: int
    params: DgmmParams
    averaged: DgmmParams
    trace: np.ndarray
    loglik: float
    converged: bool
    n_iter: int


def _average(acc, count, spec):
    layers = []
    for eta, lam, psi, pi in acc:
        pi = pi / count
        layers.append(LayerParams(eta / count, lam / count, np.maximum(psi / count, PSI_FLOOR), pi / pi.sum()))
    return enforce_identifiability(DgmmParams(spec, layers))


def run_chain(spec, data, config, seed, start=0, callback=None):
    """One SEM chain from one initialization."""
    rng = np.random.default_rng(seed)
    params = enforce_identifiability(init_params(spec, data, rng))
    trace = []
    acc, count = None, 0
    converged = False
    w = config.window
    for it in range(config.max_iters):
        net = Network(params)
        lj = net.log_joint(data)
        norm = _kernels.logsumexp_rows(lj)
        ll = float(norm.sum())
        if not np.isfinite(ll):
            raise FloatingPointError(f"non-finite log-likelihood at iteration {it}")
        trace.append(ll)
        params, timings = sem_sweep(params, data, rng, config, net=net, log_post=lj - norm[:, None])
        params = enforce_identifiability(params)
        if it >= config.burn_in:
            arrays = [(L.eta, L.lam, L.psi, L.pi) for L in params.layers]
            if acc is None:
                acc = [tuple(a.copy() for a in t) for t in arrays]
            else:
                acc = [tuple(a + b for a, b in zip(s, t)) for s, t in zip(acc, arrays)]
            count += 1
        if callback is not None:
            callback(it, ll, timings)
        if count >= w and len(trace) >= 2 * w:
            prev = np.mean(trace[-2 * w:-w])
            cur = np.mean(trace[-w:])
            if abs(cur - prev) <= config.tol * abs(prev):
                converged = True
                break
    averaged = _average(acc, count, spec) if count else params
    ll_avg = log_likelihood(averaged, data)
    return _Chain(start, params, averaged, np.asarray(trace), ll_avg, converged, len(trace))


def _safe_chain(spec, data, config, seed, start, callback):
    try:
        return run_chain(spec, data, config, seed, start, callback)
    except (np.linalg.LinAlgError, FloatingPointError, DegeneratePosteriorError, FactorizationError) as exc:
        return (start, f"{type(exc).__name__}: {exc}")


def degenerate_components(params, factor=10.0):
    """(layer, component) pairs with a noise variance within ``factor`` of the floor.

    Such components usually sit on a handful of points spanned exactly by
    their loadings, a spurious spike of the unbounded mixture likelihood.
    """
    return [(l, j) for l, L in enumerate(params.layers, start=1)
            for j in range(L.k) if L.psi[j].min() <= factor * PSI_FLOOR]


def fit(spec, data, config=None, callback=None):
    """Fit ``spec`` to ``data`` with ``config.n_starts`` independent chains.

    The chain with the highest log-likelihood at its averaged parameters is
    kept (at a fixed architecture this is also the lowest BIC).
    """
    from .selection import bic, count_params

    config = config or FitConfig()
    data = np.ascontiguousarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != spec.p:
        raise ValueError(f"data must be (n, {spec.p}), got {data.shape}")
    if not np.all(np.isfinite(data)):
        raise ValueError("data contains non-finite values")
    if data.shape[0] <= spec.k[0]:
        raise ValueError(f"need more than k1={spec.k[0]} observations")
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_starts)
    if config.n_jobs == 1:
        outcomes = [_safe_chain(spec, data, config, s, i, callback) for i, s in enumerate(seeds)]
    else:
        outcomes = Parallel(n_jobs=config.n_jobs)(
            delayed(_safe_chain)(spec, data, config, s, i, None) for i, s in enumerate(seeds)
        )
    chains = [c for c in outcomes if isinstance(c, _Chain) and np.isfinite(c.loglik)]
    failures = [c for c in outcomes if not isinstance(c, _Chain)]
    failures += [(c.start, "non-finite averaged log-likelihood")
                 for c in outcomes if isinstance(c, _Chain) and not np.isfinite(c.loglik)]
    if not chains:
        raise FitError(f"all {config.n_starts} chains failed for {spec}", failures)
    best = max(chains, key=lambda c: c.loglik)
    net = Network(best.averaged)
    post, _ = normalize_log_rows(net.log_joint(data))
    labels = np.argmax(layer_responsibilities(spec, post)[0], axis=1) + 1
    n_params = count_params(spec)
    log.debug("best of %d chains for %s: loglik %.4f", len(chains), spec, best.loglik)
    degenerate = degenerate_components(best.averaged)
    if degenerate:
        log.warning("%s: noise variances at the floor in (layer, component) %s; "
                    "the likelihood may be a degenerate spike", spec, degenerate)
    return FitResult(
        params=best.params,
        averaged_params=best.averaged,
        loglik_trace=best.trace,
        loglik=best.loglik,
        labels=labels,
        path_posteriors=post,
        bic=bic(best.loglik, n_params, data.shape[0]),
        n_params=n_params,
        converged=best.converged,
        n_iter=best.n_iter,
        start=best.start,
        start_logliks=[c.loglik if isinstance(c, _Chain) else float("nan") for c in outcomes],
        failures=failures,
    )
