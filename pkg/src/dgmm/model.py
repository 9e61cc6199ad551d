"""Deep Gaussian mixture model: architecture, parameters and collapsed densities.

A model with ``h`` layers generates data top-down::

    z_h ~ N(0, I_{r_h})
    z_{l-1} = eta_j + Lambda_j z_l + u,   u ~ N(0, diag(psi_j)),  j ~ pi^(l)

with ``z_0 = y``. Marginally ``y`` is a Gaussian mixture over all paths
``(s_1, ..., s_h)``. Paths are indexed lexicographically with ``s_1`` the
most significant digit, so the tail ``(s_l, ..., s_h)`` of path index ``i``
is ``i % prod(k[l-1:])``. All indices in this module are 0-based; cluster
labels returned by :func:`classify` are 1-based.
"""

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from . import _kernels
from .gaussian import Gaussian, chol_inverse, safe_cholesky

PSI_FLOOR = 1e-6


class DegeneratePosteriorError(ValueError):
    """Every path has zero density at some observation."""


@dataclass(frozen=True)
class DgmmSpec:
    """Architecture: observed dimension ``p``, per-layer component counts
    ``k`` and latent dimensions ``r`` (outermost layer first)."""

    p: int
    k: tuple
    r: tuple

    def __post_init__(self):
        k = tuple(int(v) for v in self.k)
        r = tuple(int(v) for v in self.r)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "r", r)
        if len(k) == 0 or len(k) != len(r):
            raise ValueError(f"k and r must be non-empty and of equal length, got k={k}, r={r}")
        if any(v < 1 for v in k):
            raise ValueError(f"component counts must be >= 1, got k={k}")
        chain = (int(self.p),) + r
        if chain[-1] < 1 or any(a <= b for a, b in zip(chain, chain[1:])):
            raise ValueError(
                f"latent dimensions must satisfy p > r1 > ... > rh >= 1; got p={self.p}, r={r}"
            )

    @property
    def h(self):
        return len(self.k)

    @property
    def dims(self):
        """(p, r_1, ..., r_h)."""
        return (self.p,) + self.r

    @property
    def n_paths(self):
        return int(np.prod(self.k))

    def n_tails(self, l):
        """Number of sub-paths (s_l, ..., s_h); 1 for l = h + 1."""
        return int(np.prod(self.k[l - 1:])) if l <= self.h else 1

    def __str__(self):
        ks = ",".join(map(str, self.k))
        rs = ",".join(map(str, self.r))
        return f"h={self.h} k=({ks}) r=({rs})"


@dataclass
class LayerParams:
    """Stacked parameters of the ``k`` components of one layer.

    eta: (k, d), lam: (k, d, r), psi: (k, d) diagonal noise variances,
    pi: (k,) mixing weights. ``d`` is the input dimension of the layer
    (p at layer 1) and ``r`` its latent dimension.
    """

    eta: np.ndarray
    lam: np.ndarray
    psi: np.ndarray
    pi: np.ndarray

    def __post_init__(self):
        self.eta = np.asarray(self.eta, dtype=np.float64)
        self.lam = np.asarray(self.lam, dtype=np.float64)
        self.psi = np.asarray(self.psi, dtype=np.float64)
        self.pi = np.asarray(self.pi, dtype=np.float64)

    @property
    def k(self):
        return self.pi.shape[0]

    def copy(self):
        return LayerParams(self.eta.copy(), self.lam.copy(), self.psi.copy(), self.pi.copy())


@dataclass
class DgmmParams:
    spec: DgmmSpec
    layers: list = field(default_factory=list)

    def __post_init__(self):
        self.validate()

    def validate(self):
        spec = self.spec
        if len(self.layers) != spec.h:
            raise ValueError(f"expected {spec.h} layers, got {len(self.layers)}")
        for l, (L, k) in enumerate(zip(self.layers, spec.k), start=1):
            d, r = spec.dims[l - 1], spec.dims[l]
            expected = {"eta": (k, d), "lam": (k, d, r), "psi": (k, d), "pi": (k,)}
            for name, shape in expected.items():
                got = getattr(L, name).shape
                if got != shape:
                    raise ValueError(f"layer {l} {name} has shape {got}, expected {shape}")
            if np.any(L.psi <= 0):
                raise ValueError(f"layer {l} has non-positive noise variances")
            if np.any(L.pi < 0) or abs(L.pi.sum() - 1.0) > 1e-10:
                raise ValueError(f"layer {l} weights do not form a probability vector")

    def copy(self):
        return DgmmParams(self.spec, [L.copy() for L in self.layers])


def random_params(spec, rng, loading_scale=1.0, mean_scale=2.0, psi_range=(0.2, 1.0)):
    """Random well-conditioned parameters; mostly useful for tests and demos."""
    layers = []
    for l, k in enumerate(spec.k, start=1):
        d, r = spec.dims[l - 1], spec.dims[l]
        pi = rng.dirichlet(np.full(k, 3.0))
        layers.append(LayerParams(
            eta=mean_scale * rng.standard_normal((k, d)),
            lam=loading_scale * rng.standard_normal((k, d, r)),
            psi=rng.uniform(*psi_range, size=(k, d)),
            pi=pi / pi.sum(),
        ))
    return DgmmParams(spec, layers)


# -- paths -------------------------------------------------------------------

@dataclass(frozen=True)
class PathTable:
    paths: np.ndarray  # (K, h), 0-based component indices
    weights: np.ndarray  # (K,)

    def __len__(self):
        return self.paths.shape[0]


def path_index(spec, path):
    idx = 0
    for s, k in zip(path, spec.k):
        if not 0 <= s < k:
            raise ValueError(f"path {tuple(path)} is invalid for k={spec.k}")
        idx = idx * k + int(s)
    return idx


def enumerate_paths(params):
    """All paths in lexicographic order with weights prod_l pi^(l)_{s_l}."""
    spec = params.spec
    paths = np.array(list(product(*[range(k) for k in spec.k])), dtype=np.intp)
    w = np.ones(len(paths))
    for l, L in enumerate(params.layers):
        w = w * L.pi[paths[:, l]]
    return PathTable(paths, w)


@dataclass(frozen=True)
class CollapsedComponent:
    path: tuple
    weight: float
    mean: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True)
class SubPathComponent:
    layer: int
    subpath: tuple
    weight: float
    mean: np.ndarray
    cov: np.ndarray


def collapse_path(params, path):
    """Mean and covariance of ``y`` given one path, by nested composition."""
    spec = params.spec
    path = tuple(int(s) for s in path)
    if len(path) != spec.h:
        raise ValueError(f"path must have length {spec.h}")
    path_index(spec, path)
    mean = np.zeros(spec.r[-1])
    cov = np.eye(spec.r[-1])
    weight = 1.0
    for l in range(spec.h, 0, -1):
        L, j = params.layers[l - 1], path[l - 1]
        lam = L.lam[j]
        mean = L.eta[j] + lam @ mean
        cov = lam @ cov @ lam.T + np.diag(L.psi[j])
        weight *= L.pi[j]
    return CollapsedComponent(path, weight, mean, 0.5 * (cov + cov.T))


def tail_moments(params):
    """Moments of ``z_{l-1}`` given each tail ``(s_l, ..., s_h)``, for l = 1..h+1.

    Returns lists ``means``, ``covs``, ``log_weights`` indexed by layer
    (entry 0 unused); tails are ordered lexicographically, and l = h+1 holds
    the single N(0, I) prior of ``z_h``.
    """
    spec = params.spec
    h = spec.h
    means = [None] * (h + 2)
    covs = [None] * (h + 2)
    log_weights = [None] * (h + 2)
    means[h + 1] = np.zeros((1, spec.r[-1]))
    covs[h + 1] = np.eye(spec.r[-1])[None]
    log_weights[h + 1] = np.zeros(1)
    with np.errstate(divide="ignore"):
        for l in range(h, 0, -1):
            L = params.layers[l - 1]
            mu = L.eta[:, None, :] + np.einsum("kdr,tr->ktd", L.lam, means[l + 1])
            S = np.einsum("kdr,trs,kes->ktde", L.lam, covs[l + 1], L.lam)
            d = L.eta.shape[1]
            S[..., np.arange(d), np.arange(d)] += L.psi[:, None, :]
            S = 0.5 * (S + np.swapaxes(S, -1, -2))
            means[l] = mu.reshape(-1, d)
            covs[l] = S.reshape(-1, d, d)
            log_weights[l] = (np.log(L.pi)[:, None] + log_weights[l + 1][None, :]).reshape(-1)
    return means, covs, log_weights


class Network:
    """Cached per-tail moments and conditional-posterior maps for one parameter set.

    ``means[l]``, ``covs[l]``, ``chols[l]``, ``log_weights[l]`` describe the
    distribution of ``z_{l-1}`` given each tail ``(s_l, ..., s_h)``, for
    l = 1..h+1 (l = h+1 is the N(0, I) prior of z_h). ``cond_A[l]``,
    ``cond_b[l]``, ``cond_cov[l]``, ``cond_chol[l]`` give the Gaussian
    posterior of ``z_l`` given ``z_{l-1}`` and the tail at layer l as
    ``N(A z + b, cov)``.
    """

    def __init__(self, params):
        self.params = params
        spec = self.spec = params.spec
        h = spec.h
        self.means, self.covs, self.log_weights = tail_moments(params)
        self.chols = [None] * (h + 2)
        self.chols[h + 1] = self.covs[h + 1].copy()
        for l in range(1, h + 1):
            self.chols[l] = safe_cholesky(self.covs[l])
        self.cond_A = [None] * (h + 1)
        self.cond_b = [None] * (h + 1)
        self.cond_cov = [None] * (h + 1)
        self.cond_chol = [None] * (h + 1)
        for l in range(1, h + 1):
            self._conditional(l)

    def _conditional(self, l):
        L = self.params.layers[l - 1]
        prior_prec = chol_inverse(self.chols[l + 1])  # (T', r, r)
        prior_mu = self.means[l + 1]
        lt_pinv = np.swapaxes(L.lam, 1, 2) / L.psi[:, None, :]  # (k, r, d)
        G = lt_pinv @ L.lam  # (k, r, r)
        P = prior_prec[None] + G[:, None]  # (k, T', r, r)
        P = 0.5 * (P + np.swapaxes(P, -1, -2))
        xi = chol_inverse(safe_cholesky(P))
        xi = 0.5 * (xi + np.swapaxes(xi, -1, -2))
        A = xi @ lt_pinv[:, None]  # (k, T', r, d)
        prior_term = np.einsum("trs,ts->tr", prior_prec, prior_mu)  # (T', r)
        data_term = np.einsum("krd,kd->kr", lt_pinv, L.eta)  # (k, r)
        b = np.einsum("ktrs,kts->ktr", xi, prior_term[None] - data_term[:, None])
        r, d = A.shape[-2], A.shape[-1]
        self.cond_A[l] = np.ascontiguousarray(A.reshape(-1, r, d))
        self.cond_b[l] = np.ascontiguousarray(b.reshape(-1, r))
        self.cond_cov[l] = xi.reshape(-1, r, r)
        self.cond_chol[l] = np.ascontiguousarray(safe_cholesky(self.cond_cov[l]))

    def log_joint(self, y):
        """(n, K) array of log pi_s + log N(y_i; mu_s, Sigma_s)."""
        y = _check_data(y, self.spec.p)
        return _kernels.mvn_logpdf(y, self.means[1], self.chols[1]) + self.log_weights[1][None, :]

    def tail_log_joint(self, l, z, tails=slice(None)):
        """log pi_t + log N(z; mu_t, Sigma_t) over (a slice of) the tails at layer l."""
        lw = self.log_weights[l][tails]
        return _kernels.mvn_logpdf(z, self.means[l][tails], self.chols[l][tails]) + lw[None, :]


def _check_data(y, p):
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[None, :]
    if y.ndim != 2 or y.shape[1] != p:
        raise ValueError(f"data must have {p} columns, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError("data contains non-finite values")
    return np.ascontiguousarray(y)


def marginal_components(params, l):
    """Gaussian-mixture components of the marginal of ``z_l`` (``z_0 = y``)."""
    spec = params.spec
    if not 0 <= l <= spec.h - 1:
        raise ValueError(f"layer index must be in 0..{spec.h - 1}, got {l}")
    net = Network(params)
    subpaths = list(product(*[range(k) for k in spec.k[l:]]))
    w = np.exp(net.log_weights[l + 1])
    return [
        SubPathComponent(l, sp, float(w[t]), net.means[l + 1][t], net.covs[l + 1][t])
        for t, sp in enumerate(subpaths)
    ]


def log_likelihood(params, data, net=None):
    net = net or Network(params)
    return float(_kernels.logsumexp_rows(net.log_joint(data)).sum())


def normalize_log_rows(logp):
    """Row-normalize log weights into probabilities; raises on all -inf rows."""
    norm = _kernels.logsumexp_rows(logp)
    if not np.all(np.isfinite(norm)):
        raise DegeneratePosteriorError("all paths have zero density for some observation")
    return np.exp(logp - norm[:, None]), norm


def path_posterior(params, y, net=None):
    """Posterior path probabilities f(s | y); shape (K,) or (n, K)."""
    net = net or Network(params)
    single = np.asarray(y).ndim == 1
    post, _ = normalize_log_rows(net.log_joint(y))
    return post[0] if single else post


def layer_responsibilities(spec, post):
    """Marginalize (n, K) path posteriors into per-layer (n, k_l) arrays."""
    n = post.shape[0]
    cube = post.reshape((n,) + spec.k)
    out = []
    for l in range(spec.h):
        axes = tuple(a + 1 for a in range(spec.h) if a != l)
        out.append(cube.sum(axis=axes) if axes else cube)
    return out


def conditional_posterior(params, l, z_prev, path, net=None):
    """Gaussian posterior of ``z_l`` given ``z_{l-1}`` and the path.

    ``path`` is either the full path or its tail ``(s_l, ..., s_h)``.
    """
    spec = params.spec
    if not 1 <= l <= spec.h:
        raise ValueError(f"layer must be in 1..{spec.h}, got {l}")
    path = tuple(path)
    tail = path[l - 1:] if len(path) == spec.h else path
    if len(tail) != spec.h - l + 1:
        raise ValueError("path length does not match the layer")
    z_prev = np.asarray(z_prev, dtype=np.float64)
    if z_prev.shape != (spec.dims[l - 1],):
        raise ValueError(f"z_prev must have length {spec.dims[l - 1]}")
    t = 0
    for s, k in zip(tail, spec.k[l - 1:]):
        t = t * k + int(s)
    net = net or Network(params)
    return Gaussian(net.cond_A[l][t] @ z_prev + net.cond_b[l][t], net.cond_cov[l][t])


def classify(params, data, net=None):
    """Cluster labels in 1..k_1 from the first-layer marginal posterior."""
    post = path_posterior(params, np.atleast_2d(data), net=net)
    resp = layer_responsibilities(params.spec, post)[0]
    return np.argmax(resp, axis=1) + 1


def sample_dgmm(params, n, rng, path=None):
    """Ancestral draws of ``y``; returns (y, path indices).

    With ``path`` given every draw follows that fixed path.
    """
    spec = params.spec
    if path is None:
        comps = np.column_stack([rng.choice(k, size=n, p=L.pi) for k, L in zip(spec.k, params.layers)])
    else:
        comps = np.tile(np.asarray(path, dtype=np.intp), (n, 1))
    z = rng.standard_normal((n, spec.r[-1]))
    for l in range(spec.h, 0, -1):
        L = params.layers[l - 1]
        j = comps[:, l - 1]
        noise = rng.standard_normal((n, spec.dims[l - 1])) * np.sqrt(L.psi[j])
        z = L.eta[j] + np.einsum("ndr,nr->nd", L.lam[j], z) + noise
    idx = np.zeros(n, dtype=np.intp)
    for l, k in enumerate(spec.k):
        idx = idx * k + comps[:, l]
    return z, idx
