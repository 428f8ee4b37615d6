import numpy as np
import pytest

from cmcvar import glmm


@pytest.fixture(scope="session")
def small_glmm_fixture():
    """10 clusters x 5 observations with an intercept and one covariate."""
    rng = np.random.default_rng(2024)
    n_clusters, per = 10, 5
    n = n_clusters * per
    X = np.column_stack([np.ones(n), rng.normal(0.0, 1.0, n)])
    clusters = np.repeat(np.arange(n_clusters), per)
    b = rng.normal(0.0, 0.7, n_clusters)
    eta = X @ np.array([-0.4, 0.8]) + b[clusters]
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-eta))).astype(float)
    return glmm.make_data(y, X, clusters, ["(intercept)", "x"])


def trapezoid_marginal_loglik(data, beta, sigma, n_points=2001, span=10.0):
    """Brute-force quadrature oracle: per cluster, a trapezoid rule over the
    random intercept on [-span, span]."""
    beta = np.asarray(beta, dtype=float)
    eta = data.X @ beta
    grid = np.linspace(-span, span, n_points)
    total = 0.0
    for c in range(data.n_clusters):
        mask = data.clusters == c
        yc, ec = data.y[mask], eta[mask]
        log_vals = np.empty(n_points)
        for i, b in enumerate(grid):
            z = ec + b
            ll = np.sum(yc * z - np.logaddexp(0.0, z))
            log_vals[i] = ll - 0.5 * b * b / sigma**2 - 0.5 * np.log(2 * np.pi * sigma**2)
        peak = log_vals.max()
        integral = np.trapezoid(np.exp(log_vals - peak), grid)
        total += peak + np.log(integral)
    return total
