"""Blocked Gibbs sampler for the covariate-dependent graphical mixture.

One iteration performs, in order: (1) stick-breaking weight updates,
(2) mixture weights from the sticks, (3) cluster allocation of every
observation, (4) conjugate covariate-parameter updates per cluster,
(5) backend-specific graph/precision updates per cluster.  Empty
clusters are refreshed from their priors, which keeps the truncated
mixture a valid target.

Every random draw comes from a substream keyed by (seed, step, ids),
so results do not depend on execution order and a worker pool yields
exactly the serial output.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import numpy as np
import scipy.linalg
from scipy.special import logsumexp

from . import gwishart as gw
from . import ppmx
from . import pseudo as ps
from .model import (
    LOG_2PI,
    Dataset,
    chol_lower,
    gaussian_loglik_rows,
    hyper_to_config,
)
from .seeding import substream


@dataclass
class Schedule:
    """Iteration counts: total sweeps, burn-in discarded, thinning stride."""

    iterations: int
    burn_in: int = 0
    thin: int = 1

    def __post_init__(self):
        if self.burn_in < 0:
            raise ValueError(f"burn_in must be nonnegative, got {self.burn_in}")
        if self.iterations <= self.burn_in:
            raise ValueError(
                f"iterations ({self.iterations}) must exceed burn_in ({self.burn_in})"
            )
        if self.thin < 1:
            raise ValueError(f"thin must be at least 1, got {self.thin}")

    def is_retained(self, it):
        return it > self.burn_in and (it - self.burn_in - 1) % self.thin == 0

    @property
    def n_retained(self):
        return (self.iterations - self.burn_in + self.thin - 1) // self.thin


@dataclass
class ChainState:
    """Mutable sampler state; arrays indexed by cluster."""

    V: np.ndarray          # (K,) stick variables, V[K-1] = 1
    pi: np.ndarray         # (K,) mixture weights
    z: np.ndarray          # (n,) cluster labels in 0..K-1
    mu: np.ndarray         # (K, p) covariate means
    sigmasq: np.ndarray    # (K,) covariate variances
    graphs: np.ndarray     # (K, q, q) edge indicators (row-wise for pseudo)
    omegas: np.ndarray | None = None   # (K, q, q), gwishart backend
    beta: np.ndarray | None = None     # (K, q, q-1), pseudo backend
    tau: np.ndarray | None = None      # (K, q), pseudo backend
    iteration: int = 0

    @property
    def K(self):
        return self.pi.shape[0]

    def copy(self):
        return ChainState(
            V=self.V.copy(),
            pi=self.pi.copy(),
            z=self.z.copy(),
            mu=self.mu.copy(),
            sigmasq=self.sigmasq.copy(),
            graphs=self.graphs.copy(),
            omegas=None if self.omegas is None else self.omegas.copy(),
            beta=None if self.beta is None else self.beta.copy(),
            tau=None if self.tau is None else self.tau.copy(),
            iteration=self.iteration,
        )


@dataclass
class TraceStore:
    """Retained draws plus the data and resolved configuration.

    Embedding Y and X makes the trace self-contained for all
    post-processing (summaries, prediction, DIC).
    """

    z: np.ndarray          # (R, n) int32
    pi: np.ndarray         # (R, K)
    mu: np.ndarray         # (R, K, p)
    sigmasq: np.ndarray    # (R, K)
    graphs: np.ndarray     # (R, K, q, q) uint8
    omegas: np.ndarray     # (R, K, q, q) float64
    loglik_y: np.ndarray   # (R,) sum over clusters of log p(Y*_j | G_j)
    loglik_x: np.ndarray   # (R,) sum over clusters of log g(X*_j)
    Y: np.ndarray          # (n, q)
    X: np.ndarray          # (n, p)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        R = self.z.shape[0]
        for name in ("pi", "mu", "sigmasq", "graphs", "omegas", "loglik_y", "loglik_x"):
            if getattr(self, name).shape[0] != R:
                raise ValueError(f"trace array {name} does not have {R} draws")
        if self.z.shape[1] != self.Y.shape[0] or self.Y.shape[0] != self.X.shape[0]:
            raise ValueError("trace z/Y/X row counts disagree")

    @property
    def n_draws(self):
        return self.z.shape[0]

    @property
    def n(self):
        return self.Y.shape[0]

    @property
    def q(self):
        return self.Y.shape[1]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def K(self):
        return self.pi.shape[1]

    @property
    def backend(self):
        return self.meta.get("backend", "gwishart")


def _triu_pairs(q):
    si, ti = np.triu_indices(q, 1)
    return list(zip(si.tolist(), ti.tolist()))


class GWishartBackend:
    """Gaussian likelihood with G-Wishart graph/precision updates."""

    kind = "gwishart"

    def __init__(self, mc_edge=100, mc_marginal=200):
        self.mc_edge = int(mc_edge)
        self.mc_marginal = int(mc_marginal)
        self.cache = None
        self.hyper = None
        self.q = None

    @property
    def options(self):
        return {"mc_edge": self.mc_edge, "mc_marginal": self.mc_marginal}

    def setup(self, hyper, q, seed):
        self.hyper = hyper
        self.q = q
        self.cache = gw.NormalizingConstantCache(
            hyper.gwishart, seed, mc_samples=self.mc_edge
        )

    def init_state_arrays(self, K):
        return {
            "graphs": np.zeros((K, self.q, self.q), dtype=bool),
            "omegas": np.stack([np.eye(self.q)] * K),
        }

    def prior_cluster_draw(self, state, j, rng):
        q = self.q
        adj = np.zeros((q, q), dtype=bool)
        if q > 1:
            u = rng.random(q * (q - 1) // 2)
            draws = u < self.hyper.alpha_g
            adj[np.triu_indices(q, 1)] = draws
            adj |= adj.T
        state.graphs[j] = adj
        state.omegas[j] = gw.sample_gwishart(adj, self.hyper.gwishart, rng)

    def refresh_cluster(self, state, j, Yc, rng):
        if Yc.shape[0] == 0:
            self.prior_cluster_draw(state, j, rng)
            return
        adj = state.graphs[j].copy()
        omega = state.omegas[j].copy()
        for s, t in _triu_pairs(self.q):
            adj, omega, _ = gw.update_edge_and_omega(
                (adj, omega), Yc, self.hyper, (s, t), rng,
                constants=self.cache, mc_samples=self.mc_edge,
            )
        omega = gw.draw_posterior_omega(adj, Yc, self.hyper, rng)
        state.graphs[j] = adj
        state.omegas[j] = omega

    def row_logliks(self, state, Y):
        n = Y.shape[0]
        out = np.empty((n, state.K))
        for j in range(state.K):
            out[:, j] = gaussian_loglik_rows(Y, state.omegas[j])
        return out

    def cluster_log_marginal(self, adj, Yc, rng):
        return gw.log_marginal_gwishart(
            adj.astype(bool), Yc, self.hyper,
            mc_samples=self.mc_marginal, rng=rng, constants=self.cache,
        )

    def trace_omegas(self, state):
        return state.omegas.copy()


class PseudoBackend:
    """Node-wise spike-and-slab regressions in place of the joint Gaussian."""

    kind = "pseudo"

    def __init__(self, allocation_likelihood="pseudo"):
        if allocation_likelihood not in ("pseudo", "gaussian"):
            raise ValueError(
                f"allocation_likelihood must be 'pseudo' or 'gaussian', "
                f"got {allocation_likelihood!r}"
            )
        self.allocation_likelihood = allocation_likelihood
        self.hyper = None
        self.q = None
        self._others = None

    @property
    def options(self):
        return {"allocation_likelihood": self.allocation_likelihood}

    def setup(self, hyper, q, seed):
        self.hyper = hyper
        self.q = q
        self._others = [np.delete(np.arange(q), s) for s in range(q)]

    def init_state_arrays(self, K):
        q = self.q
        return {
            "graphs": np.zeros((K, q, q), dtype=bool),
            "beta": np.zeros((K, q, q - 1)),
            "tau": np.ones((K, q)),
            "omegas": None,
        }

    def prior_cluster_draw(self, state, j, rng):
        children = rng.spawn(self.q)
        for s in range(self.q):
            ind, tau, beta = ps.draw_node_prior(self.q, self.hyper, children[s])
            state.graphs[j, s, self._others[s]] = ind
            state.graphs[j, s, s] = False
            state.tau[j, s] = tau
            state.beta[j, s] = beta

    def refresh_cluster(self, state, j, Yc, rng):
        if Yc.shape[0] == 0:
            self.prior_cluster_draw(state, j, rng)
            return
        ss = self.hyper.spike_slab
        ag = self.hyper.alpha_g
        children = rng.spawn(self.q)
        for s in range(self.q):
            r = children[s]
            beta_s = state.beta[j, s]
            tau_s = state.tau[j, s]
            # indicators given (beta, tau): two-point conditionals, vectorized
            log1 = np.log(ag) + _normal_logpdf_vec(beta_s, ss.eta1 * tau_s)
            log0 = np.log1p(-ag) + _normal_logpdf_vec(beta_s, ss.eta0 * tau_s)
            p1 = 1.0 / (1.0 + np.exp(log0 - log1))
            ind = r.random(self.q - 1) < p1
            tau_s = ps.update_tau(s, Yc, beta_s, ind, self.hyper, r)
            beta_s = ps.update_beta(s, Yc, tau_s, ind, self.hyper, r)
            state.graphs[j, s, self._others[s]] = ind
            state.graphs[j, s, s] = False
            state.tau[j, s] = tau_s
            state.beta[j, s] = beta_s

    def _pseudo_rows(self, state, j, Y):
        total = np.zeros(Y.shape[0])
        for s in range(self.q):
            resid = Y[:, s] - Y[:, self._others[s]] @ state.beta[j, s]
            tau = state.tau[j, s]
            total += -0.5 * (LOG_2PI + np.log(tau) + resid * resid / tau)
        return total

    def _gaussian_proxy(self, state, j):
        q = self.q
        d = 1.0 / state.tau[j]
        om = np.zeros((q, q))
        for s in range(q):
            om[s, self._others[s]] = -state.beta[j, s] * d[s]
        om = 0.5 * (om + om.T)
        om[np.diag_indices(q)] = d
        return om

    def row_logliks(self, state, Y):
        n = Y.shape[0]
        out = np.empty((n, state.K))
        for j in range(state.K):
            if self.allocation_likelihood == "gaussian":
                om = self._gaussian_proxy(state, j)
                try:
                    out[:, j] = gaussian_loglik_rows(Y, om)
                    continue
                except Exception:
                    pass  # proxy not PD for this cluster; use the pseudo rows
            out[:, j] = self._pseudo_rows(state, j, Y)
        return out

    def cluster_log_marginal(self, adj, Yc, rng):
        return ps.log_pseudo_marginal(adj.astype(bool), Yc, self.hyper)

    def trace_omegas(self, state):
        return np.stack(
            [ps.reconstruct_proxy_precision(state.beta[j], state.tau[j])
             for j in range(state.K)]
        )


def _normal_logpdf_vec(x, var):
    return -0.5 * (LOG_2PI + np.log(var) + x * x / var)


def make_backend(kind, **kwargs):
    if kind == "gwishart":
        return GWishartBackend(**kwargs)
    if kind == "pseudo":
        return PseudoBackend(**kwargs)
    raise ValueError(f"unknown backend {kind!r}")


def backend_from_meta(meta):
    """Rebuild the backend a trace was produced with, ready for setup()."""
    return make_backend(meta.get("backend", "gwishart"), **meta.get("options", {}))


def update_sticks(z, alpha, K, rng):
    """Draw stick variables from their Beta conditionals and fold to weights."""
    counts = np.bincount(np.asarray(z), minlength=K).astype(float)
    total = counts.sum()
    tail = total - np.cumsum(counts)  # tail[j] = sum of counts above j
    V = np.empty(K)
    if K > 1:
        V[:-1] = rng.beta(1.0 + counts[:-1], alpha + tail[:-1])
    V[-1] = 1.0
    lead = np.concatenate(([1.0], np.cumprod(1.0 - V[:-1])))
    pi = V * lead
    return V, pi


def update_allocation(dataset, state, backend, rng):
    """Draw every z_i from its categorical conditional, vectorized over rows."""
    Y, X = dataset.Y, dataset.X
    n, p = X.shape
    K = state.K
    loglik = backend.row_logliks(state, Y)
    d2 = np.sum((X[:, None, :] - state.mu[None, :, :]) ** 2, axis=2)
    covll = -0.5 * (p * (LOG_2PI + np.log(state.sigmasq))[None, :] + d2 / state.sigmasq[None, :])
    with np.errstate(divide="ignore"):
        logits = np.log(state.pi)[None, :] + loglik + covll
    norm = logsumexp(logits, axis=1)
    if not np.all(np.isfinite(norm)):
        bad = int(np.flatnonzero(~np.isfinite(norm))[0])
        raise RuntimeError(f"allocation probabilities degenerate for observation {bad}")
    probs = np.exp(logits - norm[:, None])
    cum = np.cumsum(probs, axis=1)
    u = rng.random(n)
    z = np.sum(cum < u[:, None], axis=1)
    return np.minimum(z, K - 1).astype(np.int64)


def refresh_clusters(dataset, state, backend, hyper, rng, pool=None):
    """Steps 4-5: per-cluster covariate and graph-parameter updates.

    Each cluster gets its own spawned rng, so mapping the loop over a
    worker pool reproduces the serial draws.
    """
    K = state.K
    rng_cov, rng_clus = rng.spawn(2)
    cov_children = rng_cov.spawn(K)
    clus_children = rng_clus.spawn(K)
    members = [np.flatnonzero(state.z == j) for j in range(K)]

    def one_cluster(j):
        Xc = dataset.X[members[j]]
        mu_j, s2_j = ppmx.draw_covariate_params(cov_children[j], Xc, hyper.covariate)
        state.mu[j] = mu_j
        state.sigmasq[j] = s2_j
        backend.refresh_cluster(state, j, dataset.Y[members[j]], clus_children[j])

    if pool is None:
        for j in range(K):
            one_cluster(j)
    else:
        list(pool.map(one_cluster, range(K)))
    return state


def prior_state(dataset, hyper, backend, rng):
    """Draw a full chain state from the prior (also the chain initializer)."""
    K = hyper.K
    n, p = dataset.X.shape
    r_sticks, r_z, r_cov, r_clus = rng.spawn(4)
    V = np.empty(K)
    if K > 1:
        V[:-1] = r_sticks.beta(1.0, hyper.alpha, size=K - 1)
    V[-1] = 1.0
    lead = np.concatenate(([1.0], np.cumprod(1.0 - V[:-1])))
    pi = V * lead
    cum = np.cumsum(pi)
    z = np.minimum(np.sum(cum < r_z.random(n)[:, None], axis=1), K - 1).astype(np.int64)

    mu = np.empty((K, p))
    sigmasq = np.empty(K)
    cov_children = r_cov.spawn(K)
    empty = np.empty((0, p))
    for j in range(K):
        mu[j], sigmasq[j] = ppmx.draw_covariate_params(cov_children[j], empty, hyper.covariate)

    state = ChainState(
        V=V, pi=pi, z=z, mu=mu, sigmasq=sigmasq,
        **backend.init_state_arrays(K),
    )
    clus_children = r_clus.spawn(K)
    for j in range(K):
        backend.prior_cluster_draw(state, j, clus_children[j])
    return state


def simulate_from_state(state, rng, n=None):
    """Draw (Y, X) given the state: the data-generation half of the model.

    Only defined for states carrying precision matrices (gwishart
    backend); used by prior-reproduction tests.
    """
    if state.omegas is None:
        raise ValueError("state has no precision matrices to simulate from")
    if n is None:
        n = state.z.shape[0]
    p = state.mu.shape[1]
    q = state.omegas.shape[1]
    r_x, r_y = rng.spawn(2)
    X = state.mu[state.z] + np.sqrt(state.sigmasq[state.z])[:, None] * r_x.standard_normal((n, p))
    Y = np.empty((n, q))
    zstd = r_y.standard_normal((n, q))
    for j in np.unique(state.z):
        rows = np.flatnonzero(state.z == j)
        L = chol_lower(state.omegas[j])
        Y[rows] = scipy.linalg.solve_triangular(L.T, zstd[rows].T, lower=False).T
    return Y, X


def gibbs_scan(dataset, state, hyper, backend, rng, pool=None):
    """One full sweep of steps 1-5, mutating and returning the state."""
    r_sticks, r_alloc, r_refresh = rng.spawn(3)
    state.V, state.pi = update_sticks(state.z, hyper.alpha, state.K, r_sticks)
    state.z = update_allocation(dataset, state, backend, r_alloc)
    refresh_clusters(dataset, state, backend, hyper, r_refresh, pool=pool)
    state.iteration += 1
    return state


def _record_logliks(dataset, state, backend, hyper, seed, it):
    ll_y = 0.0
    ll_x = 0.0
    for j in np.unique(state.z):
        rows = np.flatnonzero(state.z == j)
        rng = substream(seed, "marg", it, int(j))
        ll_y += backend.cluster_log_marginal(state.graphs[j], dataset.Y[rows], rng)
        ll_x += ppmx.log_similarity(dataset.X[rows], hyper.covariate)
    return ll_y, ll_x


def run_chain(dataset, hyper, backend, schedule, seed, threads=1):
    """Run the blocked Gibbs sampler and collect the retained draws."""
    if not isinstance(dataset, Dataset):
        dataset = Dataset(Y=np.asarray(dataset[0]), X=np.asarray(dataset[1]))
    backend.setup(hyper, dataset.q, seed)
    state = prior_state(dataset, hyper, backend, substream(seed, "init"))

    R = schedule.n_retained
    K, n, p, q = hyper.K, dataset.n, dataset.p, dataset.q
    out = TraceStore(
        z=np.empty((R, n), dtype=np.int32),
        pi=np.empty((R, K)),
        mu=np.empty((R, K, p)),
        sigmasq=np.empty((R, K)),
        graphs=np.empty((R, K, q, q), dtype=np.uint8),
        omegas=np.empty((R, K, q, q)),
        loglik_y=np.empty(R),
        loglik_x=np.empty(R),
        Y=dataset.Y,
        X=dataset.X,
        meta={
            "backend": backend.kind,
            "seed": int(seed),
            "schedule": {
                "iterations": schedule.iterations,
                "burn_in": schedule.burn_in,
                "thin": schedule.thin,
            },
            "pooled": False,
            "threads": int(threads),
            "config": hyper_to_config(hyper),
            "options": backend.options,
        },
    )

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        r = 0
        for it in range(1, schedule.iterations + 1):
            gibbs_scan(dataset, state, hyper, backend, substream(seed, "scan", it), pool=pool)
            if schedule.is_retained(it):
                out.z[r] = state.z
                out.pi[r] = state.pi
                out.mu[r] = state.mu
                out.sigmasq[r] = state.sigmasq
                out.graphs[r] = state.graphs
                out.omegas[r] = backend.trace_omegas(state)
                out.loglik_y[r], out.loglik_x[r] = _record_logliks(
                    dataset, state, backend, hyper, seed, it
                )
                r += 1
        assert r == R
    finally:
        if pool is not None:
            pool.shutdown()
    return out


def run_pooled_chain(dataset, hyper, backend, schedule, seed):
    """Single-cluster companion fit: one graph for all observations.

    Produces the per-draw log p(Y | G_l) record that the covariate-only
    DIC requires.
    """
    if not isinstance(dataset, Dataset):
        dataset = Dataset(Y=np.asarray(dataset[0]), X=np.asarray(dataset[1]))
    backend.setup(hyper, dataset.q, seed)
    n, p, q = dataset.n, dataset.p, dataset.q

    arrays = backend.init_state_arrays(1)
    state = ChainState(
        V=np.ones(1),
        pi=np.ones(1),
        z=np.zeros(n, dtype=np.int64),
        mu=np.zeros((1, p)),
        sigmasq=np.ones(1),
        **arrays,
    )
    backend.prior_cluster_draw(state, 0, substream(seed, "pooled-init"))
    mu0, s20 = ppmx.draw_covariate_params(
        substream(seed, "pooled-cov", 0), dataset.X, hyper.covariate
    )
    state.mu[0], state.sigmasq[0] = mu0, s20

    R = schedule.n_retained
    out = TraceStore(
        z=np.zeros((R, n), dtype=np.int32),
        pi=np.ones((R, 1)),
        mu=np.empty((R, 1, p)),
        sigmasq=np.empty((R, 1)),
        graphs=np.empty((R, 1, q, q), dtype=np.uint8),
        omegas=np.empty((R, 1, q, q)),
        loglik_y=np.empty(R),
        loglik_x=np.empty(R),
        Y=dataset.Y,
        X=dataset.X,
        meta={
            "backend": backend.kind,
            "seed": int(seed),
            "schedule": {
                "iterations": schedule.iterations,
                "burn_in": schedule.burn_in,
                "thin": schedule.thin,
            },
            "pooled": True,
            "threads": 1,
            "config": hyper_to_config(hyper),
            "options": backend.options,
        },
    )
    log_gx = ppmx.log_similarity(dataset.X, hyper.covariate)
    r = 0
    for it in range(1, schedule.iterations + 1):
        rng = substream(seed, "pooled-scan", it)
        r_cov, r_clus = rng.spawn(2)
        state.mu[0], state.sigmasq[0] = ppmx.draw_covariate_params(
            r_cov, dataset.X, hyper.covariate
        )
        backend.refresh_cluster(state, 0, dataset.Y, r_clus)
        state.iteration += 1
        if schedule.is_retained(it):
            out.z[r] = 0
            out.mu[r] = state.mu
            out.sigmasq[r] = state.sigmasq
            out.graphs[r] = state.graphs
            out.omegas[r] = backend.trace_omegas(state)
            out.loglik_y[r] = backend.cluster_log_marginal(
                state.graphs[0], dataset.Y, substream(seed, "pooled-marg", it)
            )
            out.loglik_x[r] = log_gx
            r += 1
    assert r == R
    return out
