"""Acceptance criteria 1-10.

Each test records one pass/fail line that is printed in the terminal
summary under "acceptance criteria". Criteria 6, 7, 8 and 10 share the
slow benchmark runs through module-scoped fixtures and are marked ``slow``.
"""

import os
import time
from fractions import Fraction
from itertools import combinations, permutations, product

import numpy as np
import pytest
from sklearn.datasets import load_wine
from sklearn.mixture import GaussianMixture

from dgmm.cli import smiley_protocol, write_labels
from dgmm.metrics import adjusted_rand_index, misclassification_rate
from dgmm.model import (
    DgmmParams,
    DgmmSpec,
    LayerParams,
    collapse_path,
    conditional_posterior,
    log_likelihood,
    random_params,
    sample_dgmm,
)
from dgmm.selection import SearchSpace, model_search
from dgmm.sem import FitConfig, degenerate_components, enforce_identifiability, fit

from conftest import ACCEPTANCE, brute_collapse, flat_gmm_loglik, random_model
from test_model import schur_conditional


def record(number, ok, detail):
    ACCEPTANCE[number] = (bool(ok), detail)
    assert ok, f"criterion {number}: {detail}"


# -- 1. flat-mixture oracle --------------------------------------------------------

def test_criterion_1_flat_mixture_oracle():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        params = random_model(rng, max_p=6, max_h=3, max_k=3)
        y = rng.standard_normal((100, params.spec.p)) * 2
        weights, means, covs = [], [], []
        for path in product(*(range(k) for k in params.spec.k)):
            mu, cov = brute_collapse(params, path)
            weights.append(np.prod([L.pi[s] for L, s in zip(params.layers, path)]))
            means.append(mu)
            covs.append(cov)
        worst = max(worst, abs(log_likelihood(params, y) - flat_gmm_loglik(weights, means, covs, y)))
    secs = time.perf_counter() - t0
    record(1, worst < 1e-10 and secs < 10, f"max |diff| {worst:.2e} (< 1e-10), {secs:.1f} s (< 10 s)")


# -- 2. generative moments ----------------------------------------------------------

def test_criterion_2_generative_moments():
    rng = np.random.default_rng(0)
    m = 1_000_000
    t0 = time.perf_counter()
    worst, checked = 0.0, 0
    for _ in range(10):
        params = random_params(DgmmSpec(3, (2, 2), (2, 1)), rng)
        for path in product(*(range(k) for k in params.spec.k)):
            y, _ = sample_dgmm(params, m, rng, path=path)
            c = collapse_path(params, path)
            d = np.diag(c.cov)
            z_mean = np.abs(y.mean(axis=0) - c.mean) / np.sqrt(d / m)
            z_cov = np.abs(np.cov(y, rowvar=False) - c.cov) / np.sqrt((np.outer(d, d) + c.cov ** 2) / m)
            worst = max(worst, z_mean.max(), z_cov.max())
            checked += 1
    secs = time.perf_counter() - t0
    record(2, worst < 3 and secs < 120,
           f"{checked} paths, largest deviation {worst:.2f} SE (< 3), {secs:.1f} s (< 120 s)")


# -- 3. posterior oracle -----------------------------------------------------------

def test_criterion_3_conditional_posterior_oracle():
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    worst, checked = 0.0, 0
    while checked < 100:
        params = random_model(rng)
        spec = params.spec
        l = int(rng.integers(1, spec.h + 1))
        tail = tuple(int(rng.integers(k)) for k in spec.k[l - 1:])
        z = rng.standard_normal(spec.dims[l - 1]) * 2
        g = conditional_posterior(params, l, z, tail)
        mean, cov = schur_conditional(params, l, tail, z)
        worst = max(worst, np.abs(g.mean - mean).max(), np.abs(g.cov - cov).max())
        checked += 1
    secs = time.perf_counter() - t0
    record(3, worst < 1e-8 and secs < 5, f"max-norm error {worst:.2e} (< 1e-8), {secs:.2f} s (< 5 s)")


# -- 4. identifiability ------------------------------------------------------------

def test_criterion_4_identifiability():
    rng = np.random.default_rng(4)
    worst_ll, bad = 0.0, []
    for i in range(50):
        params = random_model(rng)
        y = rng.standard_normal((100, params.spec.p)) * 2
        out = enforce_identifiability(params)
        worst_ll = max(worst_ll, abs(log_likelihood(out, y) - log_likelihood(params, y)))
        for l, L in enumerate(out.layers, start=1):
            for lam, psi in zip(L.lam, L.psi):
                M = lam.T @ (lam / psi[:, None])
                off = np.abs(M - np.diag(np.diag(M))).max()
                if off > 1e-8 or np.any(np.diff(np.diag(M)) > 1e-12):
                    bad.append((i, params.spec.h, l))
    failing_layers = sorted({(h, l) for _, h, l in bad})
    detail = (f"max loglik change {worst_ll:.2e} (< 1e-9); "
              f"{len({i for i, _, _ in bad})}/50 sets with a non-diagonal loading Gram matrix")
    if failing_layers:
        detail += f" at (h, layer) {failing_layers}"
    record(4, worst_ll < 1e-9 and not bad, detail)


# -- 5. factor analysis recovery --------------------------------------------------

FA_TRUTH = DgmmParams(DgmmSpec(3, (1,), (1,)), [LayerParams(
    eta=np.array([[1.0, -1.0, 0.5]]),
    lam=np.array([[[0.9], [0.6], [0.3]]]),
    psi=np.array([[0.2, 0.5, 0.4]]),
    pi=np.array([1.0]),
)])


@pytest.fixture(scope="module")
def fa_run():
    y, _ = sample_dgmm(FA_TRUTH, 5000, np.random.default_rng(5))
    t0 = time.perf_counter()
    res = fit(FA_TRUTH.spec, y, FitConfig(seed=5))
    return res, time.perf_counter() - t0


def test_criterion_5_factor_analysis_recovery(fa_run):
    res, secs = fa_run
    truth = collapse_path(FA_TRUTH, (0,)).cov
    got = collapse_path(res.averaged_params, (0,)).cov
    rel = np.abs(got - truth).max() / np.abs(truth).max()
    record(5, rel <= 0.10 and secs < 30, f"relative max-norm error {rel:.3f} (<= 0.10), {secs:.1f} s (< 30 s)")


# -- 6. smiley benchmark ----------------------------------------------------------

@pytest.fixture(scope="module")
def smiley_runs():
    t0 = time.perf_counter()
    rows = smiley_protocol(replicates=25, seed=0, n_starts=10, n_jobs=os.cpu_count() or 1)
    return rows, time.perf_counter() - t0


@pytest.mark.slow
def test_criterion_6_smiley_benchmark(smiley_runs):
    rows, secs = smiley_runs
    ari = np.median([r["ari"] for r in rows])
    mr = np.median([r["misclassification_rate"] for r in rows])
    k2 = np.bincount([r["k2"] for r in rows], minlength=6)[1:].tolist()
    record(6, ari >= 0.70 and mr <= 0.12 and secs < 1800,
           f"median ARI {ari:.3f} (>= 0.70), median m.r. {mr:.3f} (<= 0.12), "
           f"k2 counts {k2}, {secs / 60:.1f} min (< 30 min)")


# -- 7. wine -----------------------------------------------------------------------

WINE_SPACE = SearchSpace(h=(2,), k_hidden=(1, 2, 3, 4, 5),
                         r_chains=tuple((a, b) for a in range(2, 5) for b in range(1, a)))


@pytest.fixture(scope="module")
def wine_runs():
    wine = load_wine()
    x = (wine.data - wine.data.mean(axis=0)) / wine.data.std(axis=0, ddof=1)
    t0 = time.perf_counter()
    result = model_search(x, 3, WINE_SPACE, FitConfig(seed=0), labels=wine.target,
                          n_jobs=os.cpu_count() or 1)
    secs = time.perf_counter() - t0
    gmm = GaussianMixture(3, covariance_type="full", n_init=10, random_state=0).fit(x)
    flat_ari = adjusted_rand_index(wine.target, gmm.predict(x))
    return result, secs, flat_ari, wine


@pytest.mark.slow
def test_criterion_7_wine(wine_runs):
    result, secs, flat_ari, wine = wine_runs
    best = result.best
    ari = adjusted_rand_index(wine.target, best.fit.labels)
    assert wine.data.shape == (178, 13)  # the 27-variable version is not available offline
    record(7, ari >= flat_ari and secs < 900,
           f"13-attribute substitute: DGMM ARI {ari:.3f} >= flat GMM ARI {flat_ari:.3f}; "
           f"selected r={best.spec.r} k={best.spec.k}, {len(result.table)} candidates, "
           f"{secs / 60:.1f} min (< 15 min); components at the noise floor "
           f"{degenerate_components(best.fit.averaged_params)}")


# -- 8. likelihood trend -----------------------------------------------------------

@pytest.mark.slow
def test_criterion_8_likelihood_trend(fa_run, smiley_runs, wine_runs):
    traces = [fa_run[0].loglik_trace]
    for row in smiley_runs[0]:
        traces.extend(row["traces"])
    traces.extend(row.fit.loglik_trace for row in wine_runs[0].table if row.fit is not None)
    bad = [i for i, t in enumerate(traces) if np.mean(t[-10:]) < np.mean(t[:10])]
    record(8, not bad, f"{len(traces) - len(bad)}/{len(traces)} retained chains end above their start")


# -- 9. metrics --------------------------------------------------------------------

def brute_ari(a, b):
    n = len(a)
    pairs = list(combinations(range(n), 2))
    same_a = [a[i] == a[j] for i, j in pairs]
    same_b = [b[i] == b[j] for i, j in pairs]
    both = sum(x and y for x, y in zip(same_a, same_b))
    sa, sb, total = sum(same_a), sum(same_b), len(pairs)
    expected = Fraction(sa * sb, total)
    denom = Fraction(sa + sb, 2) - expected
    if denom == 0:
        return 1.0
    return float((both - expected) / denom)


def brute_mr(t, p):
    ut, up = sorted(set(t)), sorted(set(p))
    best = 0
    if len(up) <= len(ut):
        for image in permutations(ut, len(up)):
            m = dict(zip(up, image))
            best = max(best, sum(m[x] == y for x, y in zip(p, t)))
    else:
        for image in permutations(up, len(ut)):
            m = dict(zip(image, ut))
            best = max(best, sum(m.get(x) == y for x, y in zip(p, t)))
    return (len(t) - best) / len(t)


def test_criterion_9_metrics():
    t0 = time.perf_counter()
    hand = [
        adjusted_rand_index([1, 1, 2, 2], [1, 1, 2, 2]) == 1.0,
        adjusted_rand_index([1, 1, 2, 2], [1, 2, 1, 2]) == -0.5,
        adjusted_rand_index([1, 1, 2, 2], [2, 2, 1, 1]) == 1.0,
        misclassification_rate([1, 1, 2, 2], [1, 1, 2, 2]) == 0.0,
        misclassification_rate([1, 1, 2, 2], [2, 2, 1, 1]) == 0.0,
        misclassification_rate([1, 1, 1, 2], [1, 2, 2, 2]) == 0.5,
    ]
    rng = np.random.default_rng(9)
    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(2, 9))
        a = rng.integers(0, int(rng.integers(1, 4)), n).tolist()
        b = rng.integers(0, int(rng.integers(1, 4)), n).tolist()
        mismatches += adjusted_rand_index(a, b) != brute_ari(a, b)
        mismatches += misclassification_rate(a, b) != brute_mr(a, b)
    secs = time.perf_counter() - t0
    record(9, all(hand) and mismatches == 0 and secs < 5,
           f"{sum(hand)}/{len(hand)} hand values, {mismatches} mismatches over 1000 pairs, {secs:.2f} s (< 5 s)")


# -- 10. determinism ---------------------------------------------------------------

@pytest.mark.slow
def test_criterion_10_determinism(smiley_runs, tmp_path):
    first = smiley_runs[0][0]
    again = smiley_protocol(replicates=1, seed=0, n_starts=10, n_jobs=1)[0]
    write_labels(tmp_path / "a.csv", first["labels"])
    write_labels(tmp_path / "b.csv", again["labels"])
    same = (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    record(10, same, "replicate 0 label CSV " + ("byte-identical on rerun" if same else "differs on rerun"))
