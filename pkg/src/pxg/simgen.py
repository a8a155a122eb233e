"""Ground-truth simulation designs.

Three benchmark designs: a 3-node model whose graph switches across
three covariate regions, a 5-node chain whose edge weights vary
linearly in the covariate while the graph stays fixed, and a
two-cluster random sparse-graph design with multivariate covariates.
"""

from dataclasses import dataclass
import numpy as np
import scipy.linalg

from .model import Dataset, GWishartPrior, chol_lower
from .gwishart import sample_gwishart
from .seeding import substream

# covariate breakpoints of the 3-region design, as printed in the
# design (not rounded thirds); intervals are half-open on the right
REGION_BREAKS = (-0.33, 0.33)


@dataclass(frozen=True)
class SimTruth:
    """Per-observation ground truth attached to a simulated dataset."""

    labels: np.ndarray   # (n,) region/cluster index, 0-based
    omegas: np.ndarray   # (n, q, q) true precision per observation
    graphs: np.ndarray   # (n, q, q) true edge indicators

    def cluster_graph(self, k):
        rows = np.flatnonzero(self.labels == k)
        if rows.size == 0:
            raise ValueError(f"no observations in cluster {k}")
        return self.graphs[rows[0]]


def _support(omega, tol=1e-12):
    g = np.abs(omega) > tol
    np.fill_diagonal(g, False)
    return g


def example1_precision(x):
    """3-node precision at covariate x: the graph switches by region.

    Region 1 (x < -0.33) drops edge 1-2, region 2 drops 1-3, region 3
    drops 2-3; the surviving entries are linear in x.
    """
    x = float(x)
    if not -1.0 < x < 1.0:
        raise ValueError(f"covariate must lie in (-1, 1), got {x}")
    omega = np.full((3, 3), 0.0)
    np.fill_diagonal(omega, 1.2)
    if x < REGION_BREAKS[0]:
        omega[0, 2] = omega[2, 0] = -0.75 * x + 0.25
        omega[1, 2] = omega[2, 1] = 0.75 * x + 1.25
    elif x < REGION_BREAKS[1]:
        omega[0, 1] = omega[1, 0] = 0.75 * x + 0.75
        omega[1, 2] = omega[2, 1] = -0.75 * x + 0.75
    else:
        omega[0, 1] = omega[1, 0] = -0.75 * x + 1.25
        omega[0, 2] = omega[2, 0] = 0.75 * x + 0.25
    return omega, _support(omega)


def example1_region(x):
    """Region index (0, 1, 2) of a covariate value in (-1, 1)."""
    x = float(x)
    if not -1.0 < x < 1.0:
        raise ValueError(f"covariate must lie in (-1, 1), got {x}")
    if x < REGION_BREAKS[0]:
        return 0
    if x < REGION_BREAKS[1]:
        return 1
    return 2


def example2_precision(x):
    """5-node chain precision: diagonal 1.4, first off-diagonal x.

    The graph is the same 4-edge chain for every admissible x; only
    the edge weights (and their sign) vary.
    """
    x = float(x)
    if x == 0.0 or not -0.8 < x < 0.8:
        raise ValueError(
            f"covariate must lie in (-0.8, 0) or (0, 0.8), got {x}"
        )
    omega = np.diag(np.full(5, 1.4))
    idx = np.arange(4)
    omega[idx, idx + 1] = x
    omega[idx + 1, idx] = x
    return omega, _support(omega)


def example3_truth(q=20, p=10, sparsity=0.02, df=3.0, seed=0):
    """Two random sparse graphs with G-Wishart precisions.

    Returns (graphs, omegas, means): (2, q, q) edge indicators,
    (2, q, q) precisions drawn from a G-Wishart(df, I) on each graph,
    and the two covariate means (0 and 2 in every coordinate, unit
    isotropic covariance).
    """
    if not 0.0 <= sparsity < 1.0:
        raise ValueError(f"sparsity must lie in [0, 1), got {sparsity}")
    if df <= 2.0:
        raise ValueError(f"degrees of freedom must exceed 2, got {df}")
    rng = substream(seed, "simtruth")
    prior = GWishartPrior(b=df)
    graphs = np.zeros((2, q, q), dtype=bool)
    omegas = np.zeros((2, q, q))
    iu = np.triu_indices(q, 1)
    for k in range(2):
        adj = np.zeros((q, q), dtype=bool)
        adj[iu] = rng.random(iu[0].size) < sparsity
        adj |= adj.T
        graphs[k] = adj
        omegas[k] = sample_gwishart(adj, prior, rng)
    means = np.vstack([np.zeros(p), np.full(p, 2.0)])
    return graphs, omegas, means


def _draw_rows(omegas, rng):
    """One N(0, Omega_i^{-1}) row per precision matrix in the stack."""
    n, q = omegas.shape[0], omegas.shape[1]
    Y = np.empty((n, q))
    zstd = rng.standard_normal((n, q))
    for i in range(n):
        L = chol_lower(omegas[i])
        Y[i] = scipy.linalg.solve_triangular(L.T, zstd[i], lower=False)
    return Y


def _open_uniform(rng, lo, hi, size):
    """Uniform draws in the open interval (lo, hi)."""
    x = lo + (hi - lo) * rng.random(size)
    while np.any(x <= lo):
        redo = x <= lo
        x[redo] = lo + (hi - lo) * rng.random(int(redo.sum()))
    return x


def generate(example, n_per=100, seed=0, q=20, p=10, sparsity=0.02,
             df=3.0, truth=None):
    """Simulate a dataset from one of the three designs.

    n_per is the number of observations per region: 3 regions for
    example 1, a single region (the whole covariate domain) for
    example 2, and 2 clusters for example 3.  For example 3 the
    (graphs, omegas, means) triple can be passed via `truth` to reuse
    a fixed ground truth.
    """
    if example not in (1, 2, 3):
        raise ValueError(f"example must be 1, 2, or 3, got {example}")
    if n_per < 1:
        raise ValueError(f"n_per must be positive, got {n_per}")
    rng = substream(seed, "simgen", example)

    if example == 1:
        bounds = [(-1.0, REGION_BREAKS[0]), (REGION_BREAKS[0], REGION_BREAKS[1]),
                  (REGION_BREAKS[1], 1.0)]
        xs = []
        labels = []
        for r, (lo, hi) in enumerate(bounds):
            xs.append(_open_uniform(rng, lo, hi, n_per))
            labels.append(np.full(n_per, r))
        x = np.concatenate(xs)
        labels = np.concatenate(labels)
        pieces = [example1_precision(v) for v in x]
        omegas = np.stack([om for om, _ in pieces])
        graphs = np.stack([g for _, g in pieces])
        Y = _draw_rows(omegas, rng)
        return Dataset(Y=Y, X=x[:, None]), SimTruth(labels, omegas, graphs)

    if example == 2:
        x = _open_uniform(rng, -0.8, 0.8, n_per)
        while np.any(x == 0.0):
            redo = x == 0.0
            x[redo] = _open_uniform(rng, -0.8, 0.8, int(redo.sum()))
        pieces = [example2_precision(v) for v in x]
        omegas = np.stack([om for om, _ in pieces])
        graphs = np.stack([g for _, g in pieces])
        Y = _draw_rows(omegas, rng)
        labels = (x > 0).astype(np.int64)
        return Dataset(Y=Y, X=x[:, None]), SimTruth(labels, omegas, graphs)

    # example 3
    if truth is None:
        truth = example3_truth(q=q, p=p, sparsity=sparsity, df=df, seed=seed)
    cl_graphs, cl_omegas, means = truth
    q = cl_graphs.shape[1]
    p = means.shape[1]
    labels = np.repeat(np.arange(2), n_per)
    X = means[labels] + rng.standard_normal((2 * n_per, p))
    omegas = cl_omegas[labels]
    graphs = cl_graphs[labels]
    Y = np.empty((2 * n_per, q))
    zstd = rng.standard_normal((2 * n_per, q))
    for k in range(2):
        rows = np.flatnonzero(labels == k)
        L = chol_lower(cl_omegas[k])
        Y[rows] = scipy.linalg.solve_triangular(L.T, zstd[rows].T, lower=False).T
    return Dataset(Y=Y, X=X), SimTruth(labels, omegas, graphs)
