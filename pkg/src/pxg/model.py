"""Core data structures and density computations.

The sampling model is a finite mixture of mean-zero Gaussians whose
precision matrices are constrained by (cluster-specific) undirected
graphs.  This module holds the shared vocabulary: datasets, graphs,
precision matrices, node-wise regression parametrizations, and the
hyperparameter bundle consumed by the samplers.
"""

from dataclasses import dataclass, field
import numpy as np
import scipy.linalg
import scipy.special

LOG_2PI = float(np.log(2.0 * np.pi))

SYMMETRY_RTOL = 1e-10
EDGE_ZERO_TOL = 1e-8


class NotPositiveDefiniteError(ValueError):
    """A matrix required to be positive definite failed its factorization.

    ``minor`` is the 1-based index of the leading principal minor that
    is not positive.
    """

    def __init__(self, minor, message=None):
        self.minor = int(minor)
        if message is None:
            message = (
                f"matrix is not positive definite: leading minor of order "
                f"{self.minor} is not positive"
            )
        super().__init__(message)


def chol_lower(a):
    """Lower-triangular Cholesky factor of ``a``.

    Raises NotPositiveDefiniteError (carrying the failing minor) instead
    of the generic LinAlgError so callers can report which submatrix broke.
    """
    a = np.ascontiguousarray(a, dtype=float)
    c, info = scipy.linalg.lapack.dpotrf(a, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        raise NotPositiveDefiniteError(info)
    if info < 0:
        raise ValueError(f"illegal value in argument {-info} of dpotrf")
    return c


def logdet_pd(a):
    """log-determinant of a positive definite matrix via Cholesky."""
    return 2.0 * float(np.sum(np.log(np.diag(chol_lower(a)))))


def validate_graph(adj):
    """Check an adjacency matrix: square, 0/1, symmetric, zero diagonal.

    Returns the adjacency as a boolean array.
    """
    adj = np.asarray(adj)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ValueError(f"adjacency must be square, got shape {adj.shape}")
    if adj.dtype != bool:
        vals = np.unique(adj)
        if not np.all(np.isin(vals, (0, 1))):
            raise ValueError("adjacency entries must be 0 or 1")
        adj = adj.astype(bool)
    if np.any(adj != adj.T):
        raise ValueError("adjacency must be symmetric")
    if np.any(np.diag(adj)):
        raise ValueError("adjacency diagonal must be zero")
    return adj


def validate_precision(omega, graph=None, zero_tol=EDGE_ZERO_TOL):
    """Check symmetry and positive definiteness of a precision matrix.

    If ``graph`` is given, off-diagonal entries without an edge must be
    zero to within ``zero_tol``.  Returns the matrix as float64.
    """
    omega = np.asarray(omega, dtype=float)
    if omega.ndim != 2 or omega.shape[0] != omega.shape[1]:
        raise ValueError(f"precision must be square, got shape {omega.shape}")
    if not np.all(np.isfinite(omega)):
        raise ValueError("precision contains non-finite entries")
    scale = max(1.0, float(np.max(np.abs(omega))))
    if np.max(np.abs(omega - omega.T)) > SYMMETRY_RTOL * scale:
        raise ValueError("precision is not symmetric")
    chol_lower(omega)  # raises NotPositiveDefiniteError on failure
    if graph is not None:
        adj = validate_graph(graph)
        if adj.shape != omega.shape:
            raise ValueError("graph and precision dimensions differ")
        off = ~adj & ~np.eye(omega.shape[0], dtype=bool)
        worst = np.max(np.abs(omega[off])) if np.any(off) else 0.0
        if worst > zero_tol:
            raise ValueError(
                f"precision has magnitude {worst:.3g} on a missing edge "
                f"(tolerance {zero_tol:.1g})"
            )
    return omega


def partial_correlations(omega):
    """Partial correlation matrix from a precision matrix.

    rho[s, t] = -omega[s, t] / sqrt(omega[s, s] * omega[t, t]), with a
    unit diagonal.
    """
    d = np.sqrt(np.diag(omega))
    rho = -omega / np.outer(d, d)
    np.fill_diagonal(rho, 1.0)
    return rho


@dataclass(frozen=True)
class Dataset:
    """Observed responses and covariates, one row per observation.

    Y : (n, q) response matrix
    X : (n, p) covariate matrix
    """

    Y: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=float)
        X = np.asarray(self.X, dtype=float)
        if Y.ndim != 2:
            raise ValueError(f"Y must be 2-d, got shape {Y.shape}")
        if X.ndim != 2:
            raise ValueError(f"X must be 2-d, got shape {X.shape}")
        if Y.shape[0] != X.shape[0]:
            raise ValueError(
                f"Y has {Y.shape[0]} rows but X has {X.shape[0]}"
            )
        if Y.shape[0] < 1:
            raise ValueError("need at least one observation")
        if Y.shape[1] < 2:
            raise ValueError("need at least two response variables")
        if X.shape[1] < 1:
            raise ValueError("need at least one covariate")
        if not np.all(np.isfinite(Y)):
            raise ValueError("Y contains non-finite entries")
        if not np.all(np.isfinite(X)):
            raise ValueError("X contains non-finite entries")
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "X", X)

    @property
    def n(self):
        return self.Y.shape[0]

    @property
    def q(self):
        return self.Y.shape[1]

    @property
    def p(self):
        return self.X.shape[1]


@dataclass(frozen=True)
class NodeRegression:
    """Node-wise regression parameters for one response variable.

    The conditional of node s given the rest is
    N(Y[-s] @ beta, tau); ``indicators`` flags which coefficients are
    currently in the slab component.
    """

    beta: np.ndarray
    tau: float
    indicators: np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        ind = np.asarray(self.indicators, dtype=bool)
        if beta.ndim != 1 or ind.shape != beta.shape:
            raise ValueError("beta and indicators must be 1-d with equal length")
        if not np.all(np.isfinite(beta)):
            raise ValueError("beta contains non-finite entries")
        if not (self.tau > 0 and np.isfinite(self.tau)):
            raise ValueError(f"tau must be positive and finite, got {self.tau}")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "indicators", ind)
        object.__setattr__(self, "tau", float(self.tau))


@dataclass(frozen=True)
class GWishartPrior:
    """G-Wishart prior GW(b, D): density proportional to
    |Omega|^((b-2)/2) exp(-tr(D Omega)/2) on graph-constrained
    positive definite matrices."""

    b: float = 3.0
    D: np.ndarray | None = None

    def __post_init__(self):
        if not self.b > 2:
            raise ValueError(f"degrees of freedom b must exceed 2, got {self.b}")
        if self.D is not None:
            D = validate_precision(self.D)
            object.__setattr__(self, "D", D)

    def scale(self, q):
        if self.D is None:
            return np.eye(q)
        if self.D.shape[0] != q:
            raise ValueError(f"scale matrix is {self.D.shape[0]}x{self.D.shape[0]}, need {q}x{q}")
        return self.D


@dataclass(frozen=True)
class SpikeSlabPrior:
    """Spike-and-slab prior for node-wise regression coefficients.

    Coefficients get variance eta1*tau (slab, edge present) or eta0*tau
    (spike, edge absent); tau has an inverse-gamma(a1, a2) prior.  The
    slab/spike variance ratio must be at least 100 so the spike is a
    genuine near-zero component.
    """

    eta1: float = 1.0
    eta0: float = 0.01
    a1: float = 1.0
    a2: float = 1.0

    def __post_init__(self):
        for name in ("eta1", "eta0", "a1", "a2"):
            v = getattr(self, name)
            if not (v > 0 and np.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if self.eta1 / self.eta0 < 100.0:
            raise ValueError(
                f"slab/spike ratio eta1/eta0 = {self.eta1 / self.eta0:.3g} "
                "is below the required minimum of 100"
            )


@dataclass(frozen=True)
class CovariatePrior:
    """Gaussian-inverse-gamma prior for the cluster covariate model.

    Within a cluster, x_i ~ N_p(mu, sigma^2 I) with
    mu | sigma^2 ~ N_p(mu0, sigma0^2 sigma^2 I) and
    sigma^2 ~ IG(b1, b2).
    """

    mu0: np.ndarray
    sigma0sq: float = 1.0
    b1: float = 2.0
    b2: float = 1.0

    def __post_init__(self):
        mu0 = np.atleast_1d(np.asarray(self.mu0, dtype=float))
        if mu0.ndim != 1 or not np.all(np.isfinite(mu0)):
            raise ValueError("mu0 must be a finite 1-d vector")
        for name in ("sigma0sq", "b1", "b2"):
            v = getattr(self, name)
            if not (v > 0 and np.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        object.__setattr__(self, "mu0", mu0)

    @property
    def p(self):
        return self.mu0.shape[0]


@dataclass(frozen=True)
class Hyperparameters:
    """Everything the samplers need beyond the data.

    alpha    : concentration of the partition cohesion, c(S) = alpha*(|S|-1)!
    alpha_g  : prior edge-inclusion probability
    K        : truncation level of the stick-breaking representation
    """

    alpha: float
    alpha_g: float
    K: int
    covariate: CovariatePrior
    gwishart: GWishartPrior = field(default_factory=GWishartPrior)
    spike_slab: SpikeSlabPrior = field(default_factory=SpikeSlabPrior)

    def __post_init__(self):
        if not (self.alpha > 0 and np.isfinite(self.alpha)):
            raise ValueError(f"alpha must be positive and finite, got {self.alpha}")
        if not 0.0 <= self.alpha_g <= 1.0:
            raise ValueError(f"alpha_g must lie in [0, 1], got {self.alpha_g}")
        if self.K < 2:
            raise ValueError(f"truncation K must be at least 2, got {self.K}")


def default_hyperparameters(dataset, alpha=1.0, alpha_g=None, K=None,
                            b=3.0, D=None, eta1=1.0, eta0=None,
                            a1=1.0, a2=1.0, mu0=None, sigma0sq=1.0,
                            b1=2.0, b2=1.0):
    """Hyperparameters with data-driven defaults.

    alpha_g defaults to 1/2 for q <= 10 and 2/(q-1) above, pushing the
    prior toward sparse graphs in higher dimensions.  K defaults to
    min(n, 20).  mu0 defaults to the covariate column means.
    """
    q = dataset.q
    if alpha_g is None:
        alpha_g = 0.5 if q <= 10 else 2.0 / (q - 1)
    if K is None:
        K = min(dataset.n, 20)
    if mu0 is None:
        mu0 = dataset.X.mean(axis=0)
    if eta0 is None:
        eta0 = 0.01 * eta1 / q if q > 1 else 0.01 * eta1
        # keep the mandated slab/spike separation for tiny q
        eta0 = min(eta0, eta1 / 100.0)
    return Hyperparameters(
        alpha=alpha,
        alpha_g=alpha_g,
        K=int(K),
        covariate=CovariatePrior(mu0=mu0, sigma0sq=sigma0sq, b1=b1, b2=b2),
        gwishart=GWishartPrior(b=b, D=D),
        spike_slab=SpikeSlabPrior(eta1=eta1, eta0=eta0, a1=a1, a2=a2),
    )


def hyper_to_config(hyper):
    """Flatten Hyperparameters into a JSON-serializable dict."""
    D = hyper.gwishart.D
    return {
        "alpha": float(hyper.alpha),
        "alpha_g": float(hyper.alpha_g),
        "K": int(hyper.K),
        "b": float(hyper.gwishart.b),
        "D": None if D is None else np.asarray(D, dtype=float).tolist(),
        "eta1": float(hyper.spike_slab.eta1),
        "eta0": float(hyper.spike_slab.eta0),
        "a1": float(hyper.spike_slab.a1),
        "a2": float(hyper.spike_slab.a2),
        "mu0": np.asarray(hyper.covariate.mu0, dtype=float).tolist(),
        "sigma0sq": float(hyper.covariate.sigma0sq),
        "b1": float(hyper.covariate.b1),
        "b2": float(hyper.covariate.b2),
    }


def hyper_from_config(config):
    """Inverse of hyper_to_config."""
    D = config.get("D")
    return Hyperparameters(
        alpha=config["alpha"],
        alpha_g=config["alpha_g"],
        K=int(config["K"]),
        covariate=CovariatePrior(
            mu0=np.asarray(config["mu0"], dtype=float),
            sigma0sq=config["sigma0sq"],
            b1=config["b1"],
            b2=config["b2"],
        ),
        gwishart=GWishartPrior(
            b=config["b"],
            D=None if D is None else np.asarray(D, dtype=float),
        ),
        spike_slab=SpikeSlabPrior(
            eta1=config["eta1"],
            eta0=config["eta0"],
            a1=config["a1"],
            a2=config["a2"],
        ),
    )


def gaussian_loglik(y, omega):
    """log N(y; 0, Omega^{-1}) for one observation vector."""
    y = np.asarray(y, dtype=float)
    q = y.shape[0]
    return 0.5 * (logdet_pd(omega) - q * LOG_2PI - y @ omega @ y)


def gaussian_loglik_rows(Y, omega):
    """log N(y_i; 0, Omega^{-1}) for each row of Y, vectorized."""
    Y = np.asarray(Y, dtype=float)
    q = Y.shape[1]
    quad = np.einsum("ij,jk,ik->i", Y, omega, Y)
    return 0.5 * (logdet_pd(omega) - q * LOG_2PI - quad)


def pseudo_loglik(y, regressions):
    """Node-wise pseudo-log-likelihood of one observation.

    Sum over nodes s of log N(y_s; y_{-s} @ beta_s, tau_s).
    """
    y = np.asarray(y, dtype=float)
    q = y.shape[0]
    if len(regressions) != q:
        raise ValueError(f"need {q} node regressions, got {len(regressions)}")
    total = 0.0
    for s, reg in enumerate(regressions):
        rest = np.delete(y, s)
        resid = y[s] - rest @ reg.beta
        total += -0.5 * (LOG_2PI + np.log(reg.tau) + resid * resid / reg.tau)
    return total


def pseudo_loglik_rows(Y, regressions):
    """Pseudo-log-likelihood of each row of Y, vectorized over rows."""
    Y = np.asarray(Y, dtype=float)
    n, q = Y.shape
    total = np.zeros(n)
    for s, reg in enumerate(regressions):
        rest = np.delete(Y, s, axis=1)
        resid = Y[:, s] - rest @ reg.beta
        total += -0.5 * (LOG_2PI + np.log(reg.tau) + resid * resid / reg.tau)
    return total


def omega_to_regressions(omega, graph=None, zero_tol=EDGE_ZERO_TOL):
    """Node-wise regression parametrization of a precision matrix.

    For each node s: beta_s[t] = -omega[s, t] / omega[s, s] and
    tau_s = 1 / omega[s, s].  Indicators come from ``graph`` when given,
    otherwise from |omega[s, t]| > zero_tol.
    """
    omega = validate_precision(omega)
    q = omega.shape[0]
    if graph is not None:
        adj = validate_graph(graph)
    regs = []
    for s in range(q):
        others = np.delete(np.arange(q), s)
        beta = -omega[s, others] / omega[s, s]
        tau = 1.0 / omega[s, s]
        if graph is not None:
            ind = adj[s, others]
        else:
            ind = np.abs(omega[s, others]) > zero_tol
        regs.append(NodeRegression(beta=beta, tau=tau, indicators=ind))
    return regs


def mixture_density(y, weights, omegas):
    """Density of y under a finite mixture of mean-zero Gaussians.

    ``weights`` must be a probability vector; ``omegas`` a matching
    sequence of precision matrices.
    """
    weights = np.asarray(weights, dtype=float)
    if len(weights) != len(omegas):
        raise ValueError("weights and precision list lengths differ")
    if np.any(weights < 0) or not np.isclose(weights.sum(), 1.0, atol=1e-8):
        raise ValueError("weights must be nonnegative and sum to one")
    logs = np.array([gaussian_loglik(y, om) for om in omegas])
    with np.errstate(divide="ignore"):
        logw = np.where(weights > 0, np.log(np.maximum(weights, 1e-300)), -np.inf)
    return float(np.exp(scipy.special.logsumexp(logw + logs)))
