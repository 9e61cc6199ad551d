"""Parameter counting, BIC and architecture grid search."""

import csv
import logging
import time
import zlib
from dataclasses import dataclass, field
from itertools import combinations, product

import numpy as np
from joblib import Parallel, delayed

from .metrics import adjusted_rand_index
from .model import DgmmSpec
from .sem import FitConfig, FitError, fit

log = logging.getLogger(__name__)


def count_params(spec):
    """Free parameters of ``spec``: means, loadings net of rotations,
    diagonal noise variances, and mixing weights at every layer."""
    total = 0
    for l, k in enumerate(spec.k, start=1):
        d, r = spec.dims[l - 1], spec.dims[l]
        total += k * (d + d * r - r * (r - 1) // 2 + d) + (k - 1)
    return total


def bic(loglik, n_params, n):
    """-2 loglik + n_params log n (smaller is better)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return float(-2.0 * loglik + n_params * np.log(n))


@dataclass
class ModelScore:
    spec: DgmmSpec
    loglik: float
    n_params: int
    bic: float
    ari: float = float("nan")
    runtime_s: float = 0.0
    fit: object = None
    error: str = ""


@dataclass
class SearchSpace:
    """Candidate architectures for a fixed first-layer component count.

    ``h`` lists the depths to try, ``k_hidden`` the component counts tried
    at every layer below the first, and ``r_chains`` optionally pins the
    latent dimension chains (otherwise every strictly decreasing chain
    below ``p`` is used).
    """

    h: tuple = (2,)
    k_hidden: tuple = (1, 2, 3, 4, 5)
    r_chains: tuple = None

    def specs(self, p, k1):
        out = []
        for h in self.h:
            if self.r_chains is not None:
                chains = [tuple(c) for c in self.r_chains if len(c) == h]
            else:
                chains = [tuple(sorted(c, reverse=True)) for c in combinations(range(1, p), h)]
                chains.sort(reverse=True)
            for r in chains:
                if len(r) != h or not all(a > b for a, b in zip((p,) + r, r)) or r[-1] < 1:
                    continue
                for ks in product(self.k_hidden, repeat=h - 1):
                    out.append(DgmmSpec(p, (k1,) + ks, r))
        return out


@dataclass
class SearchResult:
    best: ModelScore
    table: list = field(default_factory=list)

    def write_csv(self, path):
        write_score_table(self.table, path)


def spec_seed(seed, spec):
    key = f"{spec.p}|{spec.k}|{spec.r}".encode()
    return [int(s) for s in np.ravel(seed)] + [zlib.crc32(key)]


def _score(spec, data, config, labels):
    t0 = time.perf_counter()
    cfg = FitConfig(**{**config.__dict__, "seed": spec_seed(config.seed, spec), "n_jobs": 1})
    try:
        res = fit(spec, data, cfg)
    except (FitError, ValueError) as exc:
        return ModelScore(spec, float("nan"), count_params(spec), float("inf"),
                          runtime_s=time.perf_counter() - t0, error=str(exc))
    ari = adjusted_rand_index(labels, res.labels) if labels is not None else float("nan")
    return ModelScore(spec, res.loglik, res.n_params, res.bic, ari, time.perf_counter() - t0, res)


def model_search(data, k1, search_space=None, config=None, labels=None, n_jobs=1):
    """Fit every admissible architecture and rank by BIC.

    The table is sorted by ascending BIC (failed fits last, with infinite
    BIC) and is identical for identical inputs regardless of ``n_jobs``.
    """
    data = np.asarray(data, dtype=np.float64)
    search_space = search_space or SearchSpace()
    config = config or FitConfig()
    specs = search_space.specs(data.shape[1], k1)
    if not specs:
        raise ValueError("search space is empty after applying p > r1 > ... > rh >= 1")
    if n_jobs == 1:
        rows = [_score(s, data, config, labels) for s in specs]
    else:
        rows = Parallel(n_jobs=n_jobs)(delayed(_score)(s, data, config, labels) for s in specs)
    order = sorted(range(len(rows)), key=lambda i: (rows[i].bic, i))
    table = [rows[i] for i in order]
    if not np.isfinite(table[0].bic):
        raise FitError("every candidate architecture failed to fit")
    return SearchResult(table[0], table)


COLUMNS = ["h", "k", "r", "loglik", "n_params", "bic", "ari", "runtime_s"]


def write_score_table(table, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        for row in table:
            w.writerow([
                row.spec.h,
                "-".join(map(str, row.spec.k)),
                "-".join(map(str, row.spec.r)),
                repr(row.loglik),
                row.n_params,
                repr(row.bic),
                "" if np.isnan(row.ari) else repr(row.ari),
                f"{row.runtime_s:.3f}",
            ])
