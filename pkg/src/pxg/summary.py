"""Posterior summaries: point partition, edge fields, prediction, DIC.

All summaries are partition-averaged: each retained draw assigns every
observation the graph and precision of its cluster, and quantities are
averaged over draws.  The point partition is Dahl's least-squares draw
against the posterior co-clustering matrix.
"""

from dataclasses import dataclass
import numpy as np
from scipy.special import logsumexp

from . import ppmx
from .gibbs import backend_from_meta
from .model import LOG_2PI, hyper_from_config
from .seeding import substream


@dataclass
class EdgeProbabilityField:
    """Per-observation posterior edge summaries.

    probs        : (n, q, q) edge inclusion probabilities, zero diagonal
    omega_hat    : (n, q, q) posterior mean precision
    partial_corr : (n, q, q) posterior mean partial correlations, unit diagonal
    graphs       : (n, q, q) probs thresholded at cutoff
    """

    probs: np.ndarray
    omega_hat: np.ndarray
    partial_corr: np.ndarray
    graphs: np.ndarray
    cutoff: float

    @property
    def n(self):
        return self.probs.shape[0]

    @property
    def q(self):
        return self.probs.shape[1]


def _symmetrize_stack(P, rule):
    if rule == "union":
        return np.maximum(P, np.transpose(P, (0, 2, 1)))
    if rule == "intersection":
        return np.minimum(P, np.transpose(P, (0, 2, 1)))
    raise ValueError(f"rule must be 'union' or 'intersection', got {rule!r}")


def _partial_corr_stack(omegas):
    """Partial correlations for a (K, q, q) stack of precisions."""
    d = np.diagonal(omegas, axis1=1, axis2=2)
    pc = -omegas / np.sqrt(d[:, :, None] * d[:, None, :])
    q = omegas.shape[1]
    pc[:, np.arange(q), np.arange(q)] = 1.0
    return pc


def dahl_partition(trace):
    """Least-squares point partition.

    Returns (labels, draw_index): the retained draw whose co-clustering
    matrix is closest in squared Frobenius distance to the posterior
    mean co-clustering matrix.  Labels are relabeled by first
    appearance; ties keep the earliest draw.
    """
    z = trace.z
    R, n = z.shape
    pbar = np.zeros((n, n))
    for r in range(R):
        pbar += z[r][:, None] == z[r][None, :]
    pbar /= R
    best_loss = np.inf
    best_r = 0
    for r in range(R):
        A = (z[r][:, None] == z[r][None, :]).astype(float)
        loss = float(np.sum((A - pbar) ** 2))
        if loss < best_loss:
            best_loss = loss
            best_r = r
    raw = z[best_r]
    mapping = {}
    labels = np.empty(n, dtype=np.int64)
    for i, c in enumerate(raw.tolist()):
        if c not in mapping:
            mapping[c] = len(mapping)
        labels[i] = mapping[c]
    return labels, best_r


def partition_average(trace, cutoff=0.5, rule="union"):
    """Average per-observation graphs and precisions over retained draws."""
    R = trace.n_draws
    n, q = trace.n, trace.q
    sum_probs = np.zeros((n, q, q))
    sum_omega = np.zeros((n, q, q))
    sum_pc = np.zeros((n, q, q))
    for r in range(R):
        zr = trace.z[r]
        sum_probs += trace.graphs[r].astype(float)[zr]
        om = trace.omegas[r]
        sum_omega += om[zr]
        sum_pc += _partial_corr_stack(om)[zr]
    probs = sum_probs / R
    if trace.backend == "pseudo":
        probs = _symmetrize_stack(probs, rule)
    probs[:, np.arange(q), np.arange(q)] = 0.0
    pc = sum_pc / R
    pc[:, np.arange(q), np.arange(q)] = 1.0
    return EdgeProbabilityField(
        probs=probs,
        omega_hat=sum_omega / R,
        partial_corr=pc,
        graphs=probs >= cutoff,
        cutoff=float(cutoff),
    )


def cluster_point_graphs(field, labels, cutoff=0.5):
    """Median-probability graph per point-partition cluster.

    Averages the per-observation edge probabilities over each cluster's
    members and thresholds.  Returns (graphs, members): a (k, q, q)
    boolean array and the member index list per cluster.
    """
    ids = np.unique(labels)
    graphs = []
    members = []
    for c in ids:
        rows = np.flatnonzero(labels == c)
        mean_p = field.probs[rows].mean(axis=0)
        graphs.append(mean_p >= cutoff)
        members.append(rows)
    return np.array(graphs), members


def predict_graph(trace, x_new, mode="rao_blackwell", cutoff=0.5,
                  rule="union", rng=None):
    """Posterior predictive edge field at new covariate values.

    For each retained draw the new point is weighted across all K
    mixture components by pi_j * N(x_new; mu_j, sigmasq_j I); empty
    clusters carry prior draws and stand in for "new cluster" mass.
    rao_blackwell averages over the weights; sampled draws one
    component per draw (requires rng).
    """
    if mode not in ("rao_blackwell", "sampled"):
        raise ValueError(f"mode must be 'rao_blackwell' or 'sampled', got {mode!r}")
    if mode == "sampled" and rng is None:
        raise ValueError("sampled mode needs an rng")
    x_new = np.atleast_2d(np.asarray(x_new, dtype=float))
    m, p = x_new.shape
    if p != trace.p:
        raise ValueError(f"x_new has {p} columns, trace covariates have {trace.p}")
    q = trace.q
    R = trace.n_draws
    if m == 0:
        empty = np.zeros((0, q, q))
        return EdgeProbabilityField(empty, empty.copy(), empty.copy(),
                                    empty.astype(bool), float(cutoff))

    sum_probs = np.zeros((m, q, q))
    sum_omega = np.zeros((m, q, q))
    sum_pc = np.zeros((m, q, q))
    for r in range(R):
        mu = trace.mu[r]
        s2 = trace.sigmasq[r]
        d2 = np.sum((x_new[:, None, :] - mu[None, :, :]) ** 2, axis=2)
        with np.errstate(divide="ignore"):
            logw = np.log(trace.pi[r])[None, :] - 0.5 * (
                p * (LOG_2PI + np.log(s2))[None, :] + d2 / s2[None, :]
            )
        W = np.exp(logw - logsumexp(logw, axis=1, keepdims=True))
        if mode == "sampled":
            cum = np.cumsum(W, axis=1)
            picks = np.minimum(
                np.sum(cum < rng.random(m)[:, None], axis=1), trace.K - 1
            )
            W = np.zeros_like(W)
            W[np.arange(m), picks] = 1.0
        g = trace.graphs[r].astype(float)
        om = trace.omegas[r]
        sum_probs += np.einsum("mk,kab->mab", W, g)
        sum_omega += np.einsum("mk,kab->mab", W, om)
        sum_pc += np.einsum("mk,kab->mab", W, _partial_corr_stack(om))
    probs = sum_probs / R
    if trace.backend == "pseudo":
        probs = _symmetrize_stack(probs, rule)
    probs[:, np.arange(q), np.arange(q)] = 0.0
    pc = sum_pc / R
    pc[:, np.arange(q), np.arange(q)] = 1.0
    return EdgeProbabilityField(
        probs=probs,
        omega_hat=sum_omega / R,
        partial_corr=pc,
        graphs=probs >= cutoff,
        cutoff=float(cutoff),
    )


def _draw_variance(values):
    values = np.asarray(values, dtype=float)
    if values.shape[0] < 2:
        return 0.0
    return float(np.var(values, ddof=1))


def _point_estimate_terms(trace, cutoff):
    """Per-cluster log marginals at the point partition and point graphs.

    Returns (sum_log_y, sum_log_x) evaluated at the Dahl partition with
    each cluster's median-probability graph.
    """
    labels, _ = dahl_partition(trace)
    field = partition_average(trace, cutoff=cutoff)
    graphs, members = cluster_point_graphs(field, labels, cutoff=cutoff)
    hyper = hyper_from_config(trace.meta["config"])
    backend = backend_from_meta(trace.meta)
    seed = trace.meta.get("seed", 0)
    backend.setup(hyper, trace.q, seed)
    sum_y = 0.0
    sum_x = 0.0
    for c, rows in enumerate(members):
        rng = substream(seed, "dic", c)
        sum_y += backend.cluster_log_marginal(graphs[c], trace.Y[rows], rng)
        sum_x += ppmx.log_similarity(trace.X[rows], hyper.covariate)
    return sum_y, sum_x


def dic_full(trace, cutoff=0.5):
    """DIC of the full model: deviance at the point partition and point
    graphs plus the sample variance of the per-draw log likelihood."""
    sum_y, sum_x = _point_estimate_terms(trace, cutoff)
    penalty = _draw_variance(trace.loglik_y + trace.loglik_x)
    return -2.0 * (sum_y + sum_x) + penalty


def dic_graph_only(trace, cutoff=0.5):
    """DIC of the graph part, covariates pooled into a single cluster.

    The covariate term log g(X) is parameter-free, so it enters the
    deviance as a constant with no variance penalty.
    """
    sum_y, _ = _point_estimate_terms(trace, cutoff)
    penalty = _draw_variance(trace.loglik_y)
    hyper = hyper_from_config(trace.meta["config"])
    pooled_x = ppmx.log_similarity(trace.X, hyper.covariate)
    return -2.0 * sum_y + penalty - 2.0 * pooled_x


def dic_cov_only(trace, pooled_trace=None, cutoff=0.5):
    """DIC of the covariate-partition part, graphs pooled.

    Needs a companion single-graph fit of the same data (fit with
    --pooled) for the pooled log p(Y | G) draws.
    """
    if pooled_trace is None:
        raise ValueError(
            "covariate-only DIC needs a pooled companion fit: rerun the fit "
            "with --pooled on the same data and pass its trace"
        )
    if not pooled_trace.meta.get("pooled", False):
        raise ValueError("companion trace was not produced by a pooled fit")
    if pooled_trace.Y.shape != trace.Y.shape or not np.allclose(
        pooled_trace.Y, trace.Y
    ):
        raise ValueError("pooled companion trace was fit to different data")

    _, sum_x = _point_estimate_terms(trace, cutoff)
    penalty_x = _draw_variance(trace.loglik_x)

    probs = pooled_trace.graphs[:, 0].astype(float).mean(axis=0)
    if pooled_trace.backend == "pseudo":
        probs = _symmetrize_stack(probs[None], "union")[0]
    np.fill_diagonal(probs, 0.0)
    g_pooled = probs >= cutoff

    hyper = hyper_from_config(pooled_trace.meta["config"])
    backend = backend_from_meta(pooled_trace.meta)
    seed = pooled_trace.meta.get("seed", 0)
    backend.setup(hyper, pooled_trace.q, seed)
    log_y = backend.cluster_log_marginal(
        g_pooled, pooled_trace.Y, substream(seed, "dic", 0)
    )
    penalty_y = _draw_variance(pooled_trace.loglik_y)
    return -2.0 * sum_x + penalty_x - 2.0 * log_y + penalty_y
