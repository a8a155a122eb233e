"""Pseudo-likelihood backend: node-wise spike-and-slab regressions.

Each response column s is regressed on the remaining columns with
coefficient prior beta_st ~ g_st N(0, eta1 tau_s) + (1-g_st) N(0, eta0 tau_s)
and residual variance tau_s ~ InvGamma(a1, a2).  The indicator matrix
g is left unconstrained across (s, t) during sampling; symmetry is
restored afterwards by the union or intersection rule.
"""

import numpy as np
import scipy.linalg
from scipy.special import gammaln

from .model import LOG_2PI


def _log_normal_pdf(x, var):
    return -0.5 * (LOG_2PI + np.log(var) + x * x / var)


def update_edge_indicator(beta_st, tau_s, hyper, rng):
    """Draw one inclusion indicator from its two-point conditional."""
    ag = hyper.alpha_g
    if ag >= 1.0:
        return True
    if ag <= 0.0:
        return False
    ss = hyper.spike_slab
    log1 = np.log(ag) + _log_normal_pdf(beta_st, ss.eta1 * tau_s)
    log0 = np.log1p(-ag) + _log_normal_pdf(beta_st, ss.eta0 * tau_s)
    p1 = 1.0 / (1.0 + np.exp(log0 - log1))
    return bool(rng.random() < p1)


def _spike_slab_variances(indicators, hyper):
    ss = hyper.spike_slab
    return np.where(np.asarray(indicators, dtype=bool), ss.eta1, ss.eta0)


def update_tau(s, cluster_data, beta_s, indicators, hyper, rng):
    """Draw tau_s ~ IG(a1 + n/2 + (q-1)/2, a2 + RSS/2 + beta'A beta/2)."""
    Yc = np.atleast_2d(np.asarray(cluster_data, dtype=float))
    beta_s = np.asarray(beta_s, dtype=float)
    q = beta_s.shape[0] + 1
    if Yc.size == 0:
        Yc = Yc.reshape(0, q)
    n = Yc.shape[0]
    ss = hyper.spike_slab
    eta = _spike_slab_variances(indicators, hyper)
    if n > 0:
        resid = Yc[:, s] - np.delete(Yc, s, axis=1) @ beta_s
        rss = float(resid @ resid)
    else:
        rss = 0.0
    shape = ss.a1 + 0.5 * n + 0.5 * (q - 1)
    rate = ss.a2 + 0.5 * rss + 0.5 * float(np.sum(beta_s * beta_s / eta))
    return 1.0 / rng.gamma(shape, 1.0 / rate)


def update_beta(s, cluster_data, tau_s, indicators, hyper, rng):
    """Draw beta_s ~ N(m, tau_s M^{-1}) with M = X'X + diag(1/eta_g)."""
    Yc = np.atleast_2d(np.asarray(cluster_data, dtype=float))
    indicators = np.asarray(indicators, dtype=bool)
    q = indicators.shape[0] + 1
    if Yc.size == 0:
        Yc = Yc.reshape(0, q)
    eta = _spike_slab_variances(indicators, hyper)
    if Yc.shape[0] > 0:
        X = np.delete(Yc, s, axis=1)
        M = X.T @ X + np.diag(1.0 / eta)
        Xty = X.T @ Yc[:, s]
    else:
        M = np.diag(1.0 / eta)
        Xty = np.zeros(q - 1)
    L = scipy.linalg.cholesky(M, lower=True)
    mean = scipy.linalg.cho_solve((L, True), Xty)
    z = rng.standard_normal(q - 1)
    return mean + np.sqrt(tau_s) * scipy.linalg.solve_triangular(L.T, z, lower=False)


def draw_node_prior(q, hyper, rng):
    """(indicators, tau, beta) for one node drawn from the prior."""
    ss = hyper.spike_slab
    indicators = rng.random(q - 1) < hyper.alpha_g
    tau = 1.0 / rng.gamma(ss.a1, 1.0 / ss.a2)
    eta = _spike_slab_variances(indicators, hyper)
    beta = rng.standard_normal(q - 1) * np.sqrt(tau * eta)
    return indicators, tau, beta


def symmetrize(edge_prob, rule="union"):
    """Symmetrize an edge-probability matrix.

    union: element-wise max of (p_st, p_ts); intersection: element-wise
    min.  Diagonal is zeroed.
    """
    P = np.asarray(edge_prob, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError(f"edge_prob must be square, got shape {P.shape}")
    if np.any(P < 0) or np.any(P > 1):
        raise ValueError("edge probabilities must lie in [0, 1]")
    if rule == "union":
        out = np.maximum(P, P.T)
    elif rule == "intersection":
        out = np.minimum(P, P.T)
    else:
        raise ValueError(f"unknown symmetrization rule {rule!r}")
    np.fill_diagonal(out, 0.0)
    return out


def log_pseudo_marginal(indicators, cluster_data, hyper):
    """Sum over nodes of log p(Y_s | Y_{-s}, g_s); beta and tau integrated out.

    ``indicators`` is a q x q boolean matrix whose row s holds the slab
    indicators of node s's regression (diagonal ignored).  Each node
    marginal is in closed Normal-inverse-Gamma form.
    """
    G = np.asarray(indicators, dtype=bool)
    q = G.shape[0]
    Yc = np.atleast_2d(np.asarray(cluster_data, dtype=float))
    if Yc.size == 0:
        Yc = Yc.reshape(0, q)
    n = Yc.shape[0]
    if n == 0:
        return 0.0
    if Yc.shape[1] != q:
        raise ValueError(f"data has {Yc.shape[1]} columns, indicators imply {q}")
    ss = hyper.spike_slab
    total = 0.0
    for s in range(q):
        ind = np.delete(G[s], s)
        eta = np.where(ind, ss.eta1, ss.eta0)
        X = np.delete(Yc, s, axis=1)
        y = Yc[:, s]
        A = np.diag(1.0 / eta)
        M = X.T @ X + A
        L = scipy.linalg.cholesky(M, lower=True)
        mean = scipy.linalg.cho_solve((L, True), X.T @ y)
        S = float(y @ y - mean @ M @ mean)
        log_det_ratio = -float(np.sum(np.log(eta))) - 2.0 * float(
            np.sum(np.log(np.diag(L)))
        )
        total += (
            -0.5 * n * LOG_2PI
            + 0.5 * log_det_ratio
            + ss.a1 * np.log(ss.a2)
            - gammaln(ss.a1)
            + gammaln(ss.a1 + 0.5 * n)
            - (ss.a1 + 0.5 * n) * np.log(ss.a2 + 0.5 * max(S, 0.0))
        )
    return float(total)


def reconstruct_proxy_precision(beta, tau):
    """Symmetric precision-like summary matrix from node regressions.

    Diagonal entries are 1/tau_s.  Off-diagonals encode the
    partial-correlation estimate rho_st = sign(beta_st) sqrt(beta_st beta_ts)
    (zero when the two coefficients disagree in sign) so that the usual
    partial-correlation formula applied to this matrix recovers rho.
    """
    beta = np.asarray(beta, dtype=float)
    tau = np.asarray(tau, dtype=float)
    q = tau.shape[0]
    full = np.zeros((q, q))
    for s in range(q):
        full[s, np.delete(np.arange(q), s)] = beta[s]
    prod = full * full.T
    rho = np.where(prod > 0, np.sign(full) * np.sqrt(np.maximum(prod, 0.0)), 0.0)
    d = 1.0 / tau
    out = -rho * np.sqrt(np.outer(d, d))
    out[np.diag_indices(q)] = d
    return out
