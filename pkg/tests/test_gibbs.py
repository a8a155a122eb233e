import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings, strategies as st

from pxg.gibbs import (
    ChainState,
    GWishartBackend,
    PseudoBackend,
    Schedule,
    backend_from_meta,
    gibbs_scan,
    make_backend,
    prior_state,
    refresh_clusters,
    run_chain,
    run_pooled_chain,
    simulate_from_state,
    update_allocation,
    update_sticks,
)
from pxg.model import CovariatePrior, Dataset, Hyperparameters, hyper_from_config
from pxg.seeding import substream


def _hyper(K=4, p=1, alpha=1.0, alpha_g=0.5):
    return Hyperparameters(alpha=alpha, alpha_g=alpha_g, K=K,
                           covariate=CovariatePrior(mu0=np.zeros(p)))


def _dataset(n=40, q=3, p=1, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(Y=rng.standard_normal((n, q)), X=rng.standard_normal((n, p)))


class TestSchedule:
    def test_validation(self):
        with pytest.raises(ValueError):
            Schedule(iterations=0)
        with pytest.raises(ValueError):
            Schedule(iterations=10, burn_in=-1)
        with pytest.raises(ValueError):
            Schedule(iterations=10, burn_in=10)
        with pytest.raises(ValueError):
            Schedule(iterations=10, thin=0)

    def test_retention_pattern(self):
        sch = Schedule(iterations=10, burn_in=4, thin=2)
        kept = [it for it in range(1, 11) if sch.is_retained(it)]
        assert kept == [5, 7, 9]
        assert sch.n_retained == 3

    @given(st.integers(min_value=1, max_value=200),
           st.integers(min_value=0, max_value=100),
           st.integers(min_value=1, max_value=7))
    def test_n_retained_matches_pattern(self, iters, burn, thin):
        if burn >= iters:
            return
        sch = Schedule(iterations=iters, burn_in=burn, thin=thin)
        kept = sum(sch.is_retained(it) for it in range(1, iters + 1))
        assert kept == sch.n_retained


class TestSticks:
    def test_weights_sum_to_one(self):
        rng = substream(1, "st")
        for _ in range(50):
            z = rng.integers(0, 5, size=30)
            V, pi = update_sticks(z, 1.3, 5, rng)
            assert V[-1] == 1.0
            assert abs(pi.sum() - 1.0) < 1e-12
            assert np.all(pi >= 0)

    def test_tiny_alpha_concentrates_first_stick(self):
        z = np.zeros(100, dtype=int)
        rng = substream(2, "st")
        pis = np.array([update_sticks(z, 1e-8, 3, rng)[1] for _ in range(200)])
        assert pis[:, 0].mean() > 0.99

    def test_beta_conditional_moments(self):
        # counts (3, 2, 1, 0): V_j ~ Beta(1 + n_j, alpha + tail_j)
        z = np.array([0, 0, 0, 1, 1, 2])
        alpha = 1.5
        rng = substream(3, "st")
        draws = np.stack([update_sticks(z, alpha, 4, rng)[0] for _ in range(20000)])
        expected = [(1 + 3) / (1 + 3 + alpha + 3),
                    (1 + 2) / (1 + 2 + alpha + 1),
                    (1 + 1) / (1 + 1 + alpha + 0)]
        for j, target in enumerate(expected):
            se = draws[:, j].std(ddof=1) / np.sqrt(draws.shape[0])
            assert abs(draws[:, j].mean() - target) < 4 * se
        assert np.all(draws[:, 3] == 1.0)


def _two_cluster_state(pi, mu, sigmasq, omegas):
    K = len(pi)
    q = omegas.shape[1]
    graphs = np.abs(omegas) > 1e-12
    for g in graphs:
        np.fill_diagonal(g, False)
    return ChainState(
        V=np.asarray(pi), pi=np.asarray(pi, dtype=float),
        z=np.zeros(1, dtype=np.int64),
        mu=np.asarray(mu, dtype=float).reshape(K, -1),
        sigmasq=np.asarray(sigmasq, dtype=float),
        graphs=graphs, omegas=np.asarray(omegas, dtype=float),
    )


class TestAllocation:
    def test_identical_clusters_follow_weights(self):
        # indistinguishable clusters: allocation must follow pi alone
        q = 3
        omega = np.eye(q)
        state = _two_cluster_state(
            pi=[0.7, 0.3], mu=[[0.0], [0.0]], sigmasq=[1.0, 1.0],
            omegas=np.stack([omega, omega]),
        )
        backend = GWishartBackend()
        backend.setup(_hyper(K=2), q, seed=0)
        ds = _dataset(n=2000, q=q, p=1, seed=4)
        z = update_allocation(ds, state, backend, substream(5, "al"))
        frac = (z == 0).mean()
        assert abs(frac - 0.7) < 4 * np.sqrt(0.7 * 0.3 / 2000)

    def test_separated_covariates_allocate_correctly(self):
        q = 3
        omega = np.eye(q)
        state = _two_cluster_state(
            pi=[0.5, 0.5], mu=[[0.0], [10.0]], sigmasq=[1.0, 1.0],
            omegas=np.stack([omega, omega]),
        )
        backend = GWishartBackend()
        backend.setup(_hyper(K=2), q, seed=0)
        rng = np.random.default_rng(6)
        n = 400
        truth = rng.integers(0, 2, size=n)
        X = truth[:, None] * 10.0 + rng.standard_normal((n, 1))
        ds = Dataset(Y=rng.standard_normal((n, q)), X=X)
        z = update_allocation(ds, state, backend, substream(7, "al"))
        assert (z != truth).mean() < 0.01

    def test_degenerate_likelihood_raises(self):
        q = 2
        state = _two_cluster_state(
            pi=[1.0, 0.0], mu=[[0.0], [0.0]], sigmasq=[1.0, 1.0],
            omegas=np.stack([np.eye(q), np.eye(q)]),
        )
        state.pi = np.zeros(2)  # impossible weights
        backend = GWishartBackend()
        backend.setup(_hyper(K=2), q, seed=0)
        ds = _dataset(n=5, q=q)
        with pytest.raises(RuntimeError, match="observation"):
            update_allocation(ds, state, backend, substream(8, "al"))


class TestPriorState:
    @pytest.mark.parametrize("kind", ["gwishart", "pseudo"])
    def test_shapes_and_invariants(self, kind):
        ds = _dataset(n=25, q=4, p=2, seed=9)
        hyper = Hyperparameters(alpha=1.0, alpha_g=0.5, K=5,
                                covariate=CovariatePrior(mu0=np.zeros(2)))
        backend = make_backend(kind)
        backend.setup(hyper, 4, seed=0)
        state = prior_state(ds, hyper, backend, substream(10, "ps"))
        assert state.K == 5
        assert abs(state.pi.sum() - 1.0) < 1e-12
        assert state.z.min() >= 0 and state.z.max() < 5
        assert state.mu.shape == (5, 2)
        assert np.all(state.sigmasq > 0)
        assert state.graphs.shape == (5, 4, 4)
        assert not np.any(state.graphs[:, np.arange(4), np.arange(4)])
        if kind == "gwishart":
            # gwishart graphs are undirected; pseudo rows are per-node
            # indicator sets and need not be symmetric
            assert np.array_equal(state.graphs,
                                  np.transpose(state.graphs, (0, 2, 1)))
            for om in state.omegas:
                assert np.all(np.linalg.eigvalsh(om) > 0)
        else:
            assert state.omegas is None
            assert state.beta.shape == (5, 4, 3)
            assert np.all(state.tau > 0)

    def test_empty_cluster_refresh_draws_from_prior(self):
        # cluster 2 never has members: refreshed parameters must follow
        # the prior laws
        ds = _dataset(n=4, q=3, p=1, seed=11)
        hyper = _hyper(K=3)
        backend = GWishartBackend()
        backend.setup(hyper, 3, seed=0)
        rng = substream(12, "empty")
        state = prior_state(ds, hyper, backend, rng)
        state.z = np.zeros(4, dtype=np.int64)
        s2, zscores, edges = [], [], []
        for _ in range(3000):
            refresh_clusters(ds, state, backend, hyper, rng)
            s2.append(state.sigmasq[2])
            zscores.append(state.mu[2, 0] / np.sqrt(
                hyper.covariate.sigma0sq * state.sigmasq[2]))
            edges.append(state.graphs[2][np.triu_indices(3, 1)])
        cp = hyper.covariate
        stat = scipy.stats.kstest(np.array(s2),
                                  scipy.stats.invgamma(cp.b1, scale=cp.b2).cdf)
        assert stat.pvalue > 1e-3
        stat = scipy.stats.kstest(np.array(zscores), scipy.stats.norm.cdf)
        assert stat.pvalue > 1e-3
        frac = np.array(edges).mean()
        assert abs(frac - hyper.alpha_g) < 4 * np.sqrt(0.25 / (3000 * 3))


class TestSimulateFromState:
    def test_moments_match_state(self):
        omega = np.array([[2.0, 0.8, 0.0],
                          [0.8, 1.5, 0.0],
                          [0.0, 0.0, 1.0]])
        state = _two_cluster_state(pi=[1.0], mu=[[3.0]], sigmasq=[4.0],
                                   omegas=omega[None])
        state.z = np.zeros(20000, dtype=np.int64)
        Y, X = simulate_from_state(state, substream(13, "sim"))
        assert X.shape == (20000, 1) and Y.shape == (20000, 3)
        assert abs(X.mean() - 3.0) < 4 * 2.0 / np.sqrt(20000)
        assert abs(X.var(ddof=1) - 4.0) < 0.2
        emp = np.cov(Y.T)
        assert np.allclose(emp, np.linalg.inv(omega), atol=0.05)

    def test_requires_precisions(self):
        state = _two_cluster_state(pi=[1.0], mu=[[0.0]], sigmasq=[1.0],
                                   omegas=np.eye(2)[None])
        state.omegas = None
        with pytest.raises(ValueError):
            simulate_from_state(state, substream(14, "sim"))


class TestRunChain:
    def _run(self, kind, seed=123, threads=1, n=30, q=3):
        ds = _dataset(n=n, q=q, p=1, seed=15)
        hyper = _hyper(K=3)
        backend = make_backend(kind)
        sch = Schedule(iterations=8, burn_in=2, thin=2)
        return run_chain(ds, hyper, backend, sch, seed=seed, threads=threads)

    @pytest.mark.parametrize("kind", ["gwishart", "pseudo"])
    def test_deterministic_rerun(self, kind):
        t1 = self._run(kind)
        t2 = self._run(kind)
        assert np.array_equal(t1.z, t2.z)
        assert np.array_equal(t1.graphs, t2.graphs)
        assert np.array_equal(t1.omegas, t2.omegas)
        assert np.array_equal(t1.loglik_y, t2.loglik_y)
        assert np.array_equal(t1.loglik_x, t2.loglik_x)

    def test_threads_match_serial(self):
        t1 = self._run("gwishart", threads=1)
        t2 = self._run("gwishart", threads=2)
        assert np.array_equal(t1.z, t2.z)
        assert np.array_equal(t1.omegas, t2.omegas)
        assert np.array_equal(t1.loglik_y, t2.loglik_y)

    def test_trace_contents(self):
        t = self._run("gwishart")
        assert t.n_draws == 3  # iterations 3, 5, 7 retained
        assert t.z.shape == (3, 30)
        assert t.graphs.dtype == np.uint8
        assert np.all(np.isfinite(t.loglik_y)) and np.all(np.isfinite(t.loglik_x))
        assert t.meta["backend"] == "gwishart"
        assert t.meta["pooled"] is False
        assert np.array_equal(t.Y, _dataset(n=30, q=3, p=1, seed=15).Y)
        rebuilt = hyper_from_config(t.meta["config"])
        assert rebuilt.alpha == 1.0 and rebuilt.K == 3
        assert isinstance(backend_from_meta(t.meta), GWishartBackend)

    def test_pseudo_trace_has_proxy_precisions(self):
        t = self._run("pseudo")
        assert t.meta["backend"] == "pseudo"
        assert t.omegas.shape == (3, 3, 3, 3)
        diags = t.omegas[:, :, np.arange(3), np.arange(3)]
        assert np.all(diags > 0)
        assert isinstance(backend_from_meta(t.meta), PseudoBackend)

    def test_different_seeds_differ(self):
        t1 = self._run("gwishart", seed=123)
        t2 = self._run("gwishart", seed=124)
        assert not np.array_equal(t1.omegas, t2.omegas)


class TestPooledChain:
    def test_single_cluster_and_deterministic(self):
        ds = _dataset(n=25, q=3, p=1, seed=16)
        hyper = _hyper(K=5)
        sch = Schedule(iterations=6, burn_in=1, thin=1)
        t1 = run_pooled_chain(ds, hyper, GWishartBackend(), sch, seed=7)
        t2 = run_pooled_chain(ds, hyper, GWishartBackend(), sch, seed=7)
        assert t1.K == 1
        assert np.all(t1.z == 0)
        assert t1.meta["pooled"] is True
        assert np.array_equal(t1.omegas, t2.omegas)
        # covariate term is the whole-sample similarity, constant over draws
        assert np.ptp(t1.loglik_x) == 0.0


@pytest.mark.slow
def test_cost_scales_subquadratically_in_n():
    import time

    hyper = _hyper(K=4)
    sch = Schedule(iterations=4)
    times = []
    for n in (200, 400, 800):
        ds = _dataset(n=n, q=5, p=1, seed=17)
        best = np.inf
        for _ in range(3):
            t0 = time.perf_counter()
            run_chain(ds, hyper, PseudoBackend(), sch, seed=1)
            best = min(best, time.perf_counter() - t0)
        times.append(best)
    r1 = times[1] / times[0]
    r2 = times[2] / times[1]
    # linear-in-n design: doubling n must not approach quadratic cost
    assert r1 < 3.5 and r2 < 3.5, f"scaling ratios {r1:.2f}, {r2:.2f}"
