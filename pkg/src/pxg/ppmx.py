"""Covariate-dependent product partition prior.

A partition S_1, ..., S_k of the observations has prior mass
proportional to prod_j c(S_j) g(X_j), where c(S) = alpha * (|S|-1)!
is the cohesion and g(X_j) is the marginal density of the cluster's
covariates under an exchangeable Gaussian auxiliary model:

    x_i | mu, s2 ~ N_p(mu, s2 I)
    mu | s2      ~ N_p(mu0, sigma0sq * s2 * I)
    s2           ~ InvGamma(b1, b2)

All integrals below are available in closed form; the posterior over
(mu, s2) given a cluster's covariates stays in the same family.
"""

import numpy as np
from scipy.special import gammaln

from .model import LOG_2PI


def log_cohesion(cluster_size, alpha):
    """log c(S) = log(alpha) + log((|S| - 1)!) for one nonempty cluster."""
    if cluster_size < 1:
        raise ValueError(f"cluster size must be positive, got {cluster_size}")
    return float(np.log(alpha) + gammaln(cluster_size))


def _suffstats(Xc, prior):
    """kappa, v = sum(x) + mu0/sigma0sq, and the residual sum S."""
    m = Xc.shape[0]
    kappa = m + 1.0 / prior.sigma0sq
    v = Xc.sum(axis=0) + prior.mu0 / prior.sigma0sq
    S = (
        float(np.sum(Xc * Xc))
        + float(prior.mu0 @ prior.mu0) / prior.sigma0sq
        - float(v @ v) / kappa
    )
    return kappa, v, S


def log_similarity(Xc, prior):
    """Log marginal density of a cluster's covariate rows.

    Xc is (m, p); an empty cluster contributes 0 (similarity 1).
    """
    Xc = np.atleast_2d(np.asarray(Xc, dtype=float))
    m, p = Xc.shape
    if m == 0:
        return 0.0
    if p != prior.p:
        raise ValueError(f"covariates have {p} columns, prior expects {prior.p}")
    _, _, S = _suffstats(Xc, prior)
    half_mp = 0.5 * m * p
    return float(
        -half_mp * LOG_2PI
        - 0.5 * p * np.log(m * prior.sigma0sq + 1.0)
        + prior.b1 * np.log(prior.b2)
        - gammaln(prior.b1)
        + gammaln(prior.b1 + half_mp)
        - (prior.b1 + half_mp) * np.log(prior.b2 + 0.5 * S)
    )


def covariate_posterior(Xc, prior):
    """Posterior (mu_star, shrink, b1_star, b2_star) for one cluster.

    Given the cluster covariates, mu | s2 ~ N_p(mu_star, shrink*s2*I)
    and s2 ~ InvGamma(b1_star, b2_star).  An empty cluster returns the
    prior.
    """
    Xc = np.atleast_2d(np.asarray(Xc, dtype=float))
    m, p = Xc.shape
    if m == 0:
        return prior.mu0.copy(), prior.sigma0sq, prior.b1, prior.b2
    if p != prior.p:
        raise ValueError(f"covariates have {p} columns, prior expects {prior.p}")
    kappa, v, S = _suffstats(Xc, prior)
    mu_star = v / kappa
    shrink = 1.0 / kappa  # = sigma0sq / (m * sigma0sq + 1)
    b1_star = prior.b1 + 0.5 * m * p
    b2_star = prior.b2 + 0.5 * S
    return mu_star, shrink, b1_star, b2_star


def draw_covariate_params(rng, Xc, prior):
    """Draw (mu, s2) from the cluster posterior (prior if Xc is empty)."""
    mu_star, shrink, b1_star, b2_star = covariate_posterior(Xc, prior)
    s2 = 1.0 / rng.gamma(b1_star, 1.0 / b2_star)
    mu = mu_star + np.sqrt(shrink * s2) * rng.standard_normal(mu_star.shape[0])
    return mu, s2


def log_covariate_density(X, mu, s2):
    """log N_p(x; mu, s2 I) for each row of X."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    p = X.shape[1]
    d2 = np.sum((X - mu) ** 2, axis=1)
    return -0.5 * (p * (LOG_2PI + np.log(s2)) + d2 / s2)


def log_partition_mass(labels, X, prior, alpha):
    """Unnormalized log prior mass of a partition given covariates.

    sum over nonempty clusters of log cohesion + log similarity.
    """
    labels = np.asarray(labels)
    X = np.asarray(X, dtype=float)
    total = 0.0
    for j in np.unique(labels):
        Xc = X[labels == j]
        total += log_cohesion(Xc.shape[0], alpha) + log_similarity(Xc, prior)
    return float(total)
