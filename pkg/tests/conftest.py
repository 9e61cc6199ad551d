import numpy as np
import pytest

from dgmm.model import DgmmSpec, random_params


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_spec(rng, max_p=6, max_h=3, max_k=3):
    """Random admissible architecture with p <= max_p, h <= max_h, k_l <= max_k."""
    p = int(rng.integers(2, max_p + 1))
    h = int(rng.integers(1, min(max_h, p - 1) + 1))
    r = tuple(sorted(rng.choice(np.arange(1, p), size=h, replace=False), reverse=True))
    k = tuple(int(v) for v in rng.integers(1, max_k + 1, size=h))
    return DgmmSpec(p, k, r)


def random_model(rng, **kw):
    return random_params(random_spec(rng, **kw), rng)


def flat_gmm_loglik(weights, means, covs, y):
    """Independent flat-mixture log-likelihood via scipy."""
    from scipy.special import logsumexp
    from scipy.stats import multivariate_normal

    comp = np.column_stack([
        np.log(w) + multivariate_normal(m, c).logpdf(y) for w, m, c in zip(weights, means, covs)
    ])
    return float(logsumexp(comp, axis=1).sum())


def brute_collapse(params, path):
    """Mean and covariance of y along a path from the prefix-product expansion.

    mu = eta_1 + sum_l (Lam_1 ... Lam_{l-1}) eta_l and
    Sigma = sum_l P_l Psi_l P_l^T + P_{h+1} P_{h+1}^T with P_l = Lam_1 ... Lam_{l-1}.
    """
    spec = params.spec
    P = np.eye(spec.p)
    mu = np.zeros(spec.p)
    Sigma = np.zeros((spec.p, spec.p))
    for l, s in enumerate(path):
        L = params.layers[l]
        mu = mu + P @ L.eta[s]
        Sigma = Sigma + P @ np.diag(L.psi[s]) @ P.T
        P = P @ L.lam[s]
    Sigma = Sigma + P @ P.T
    return mu, Sigma


# One summary line per acceptance criterion, filled in by test_acceptance.py.
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
