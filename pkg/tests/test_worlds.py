import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from validity_audit.errors import PreconditionError, RankDeficientError, WorldRejected
from validity_audit.graph import SampleGraph
from validity_audit.worlds import (ECDF, World, WorldGenerator, WorldWeights, determined_columns,
                                   disagreement_stats, fit_base_factorization, fit_residual,
                                   generate_ensemble, generate_world, load_ensemble, nae,
                                   orthonormal_subspace, project_observed, rank_residual,
                                   save_ensemble)


def rank2_instance(seed=0, m=10, n=10, p=0.6):
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(-1, 1, m), rng.uniform(-1, 1, n)
    F = 3 + 1.8 * np.outer(a, b)
    M = rng.random((m, n)) < p
    return F, M


def graph_from(F, M, label_range=(1.0, 5.0)):
    r, c = np.nonzero(M)
    return SampleGraph.from_interactions(r.tolist(), c.tolist(), F[r, c], label_range=label_range,
                                         left_ids=range(F.shape[0]), right_ids=range(F.shape[1]))


class TestSubspace:
    def test_orthonormal(self, rng):
        Q = orthonormal_subspace(rng.normal(size=(9, 3)))
        np.testing.assert_allclose(Q.T @ Q, np.eye(3), atol=1e-12)

    def test_rank_deficient_names_count(self, rng):
        U = rng.normal(size=(9, 2))
        U = np.column_stack([U, U[:, 0], U[:, 0] + U[:, 1]])
        with pytest.raises(RankDeficientError, match="2 of 4"):
            orthonormal_subspace(U)

    def test_residuals(self, rng):
        Q = orthonormal_subspace(rng.normal(size=(6, 2)))
        X = Q @ rng.normal(size=(2, 5))
        assert rank_residual(Q, X) < 1e-12
        assert rank_residual(Q, np.zeros((6, 5))) == 0.0
        M = rng.random((6, 5)) < 0.5
        r, c = np.nonzero(M)
        assert fit_residual(X, r, c, X[r, c]) == 0.0
        np.testing.assert_array_equal(project_observed(M, X), np.where(M, X, 0))


class TestBaseFit:
    @pytest.mark.parametrize("method", ["impute", "als", "gauss_newton"])
    def test_fully_observed_exact(self, method):
        F, _ = rank2_instance(1)
        g = graph_from(F, np.ones_like(F, dtype=bool))
        fac = fit_base_factorization(g, 2, seed=0, method=method)
        assert fac.converged and fac.fit_residual <= 1e-3
        np.testing.assert_allclose(fac.U @ fac.V.T, F, atol=1e-2)

    def test_impute_returns_feasible_completion(self):
        F, M = rank2_instance(2)
        g = graph_from(F, M)
        fac = fit_base_factorization(g, 2, seed=0)
        C = fac.completion
        assert C.min() >= 1 and C.max() <= 5
        np.testing.assert_array_equal(C[M], F[M])

    def test_bad_arguments(self):
        F, M = rank2_instance(3)
        g = graph_from(F, M)
        with pytest.raises(ValueError):
            fit_base_factorization(g, 0)
        with pytest.raises(ValueError):
            fit_base_factorization(g, 2, method="sgd")
        with pytest.raises(PreconditionError):
            fit_base_factorization(SampleGraph.from_interactions([], []), 1)


class TestWorld:
    def test_rejections(self):
        X = np.full((3, 3), 2.0)
        World(X, 1, 0.0, 0.0, (1.0, 5.0))
        with pytest.raises(WorldRejected):
            World(X + 10, 1, 0.0, 0.0, (1.0, 5.0))
        with pytest.raises(WorldRejected):
            World(X, 1, 0.1, 0.0, (1.0, 5.0))
        with pytest.raises(WorldRejected) as exc:
            World(X, 1, 0.0, 0.5, (1.0, 5.0))
        assert exc.value.rank_residual == 0.5 and exc.value.matrix is X

    def test_determined_columns(self):
        Q = np.linalg.qr(np.random.default_rng(0).normal(size=(5, 2)))[0]
        rows = np.array([0, 1, 2, 3])
        cols = np.array([0, 0, 1, 2])
        assert determined_columns(Q, rows, cols, 4).tolist() == [True, False, False, False]


class TestGeneration:
    def test_witness_single_observation_column(self):
        """A column with one observation cannot pin a rank-2 completion."""
        F, M = rank2_instance(0)
        M[:, 0] = False
        M[3, 0] = True
        g = graph_from(F, M)
        fac = fit_base_factorization(g, 2, seed=0)
        Q = orthonormal_subspace(fac.U)
        ens = generate_ensemble(g, Q, 2, seed=1, base=fac.completion)
        assert len(ens) == 2
        a, b = (w.matrix for w in ens)
        un = ~M
        assert np.sqrt(np.mean((a[un] - b[un]) ** 2)) > 1e-3
        # columns pinned by their observations agree; column 0 is free
        det = determined_columns(Q, g.rows, g.cols, g.n_right)
        assert not det[0] and det.sum() >= 5
        np.testing.assert_allclose(a[:, det], b[:, det], atol=1e-3)
        assert np.sqrt(np.mean((a[:, 0] - b[:, 0]) ** 2)) > 1e-3

    def test_fully_observed_worlds_agree(self):
        F, _ = rank2_instance(0)
        g = graph_from(F, np.ones_like(F, dtype=bool))
        fac = fit_base_factorization(g, 2, seed=0)
        ens = generate_ensemble(g, orthonormal_subspace(fac.U), 3, seed=1, base=fac.completion)
        assert len(ens) == 3
        for w in ens:
            np.testing.assert_allclose(w.matrix, F, atol=1e-3)

    def test_worlds_keep_observations_and_box(self):
        F, M = rank2_instance(5, 12, 15, 0.4)
        g = graph_from(F, M)
        fac = fit_base_factorization(g, 2, seed=0)
        Q = orthonormal_subspace(fac.U)
        ens = generate_ensemble(g, Q, 4, seed=2, base=fac.completion)
        for X in ens.matrices(include_rejected=True):
            np.testing.assert_allclose(X[M], F[M], atol=1e-12)
            assert X.min() >= 1 and X.max() <= 5

    def test_generator_without_base(self):
        F, M = rank2_instance(6)
        g = graph_from(F, M)
        Q = orthonormal_subspace(fit_base_factorization(g, 2, seed=0).U)
        w = generate_world([], g, Q, seed=0)
        assert w.rank_residual <= 1e-2 and w.fit_residual == 0.0

    def test_non_orthonormal_q(self):
        F, M = rank2_instance(6)
        with pytest.raises(PreconditionError):
            WorldGenerator(graph_from(F, M), np.ones((10, 2)))

    def test_infeasible_tolerance_keeps_candidates(self):
        F, M = rank2_instance(7)
        g = graph_from(F, M)
        Q = orthonormal_subspace(np.random.default_rng(0).normal(size=(10, 1)))
        ens = generate_ensemble(g, Q, 3, seed=0)
        assert len(ens) == 0 and len(ens.candidates) == 3
        # with an unreachable floor each slot gets a single attempt
        assert len(ens.rejected) == 3
        stats = disagreement_stats(ens, include_rejected=True)
        assert len(stats.pairs) == 3

    def test_n_worlds_positive(self):
        F, M = rank2_instance(7)
        with pytest.raises(ValueError):
            generate_ensemble(graph_from(F, M), np.eye(10)[:, :2], 0)


class TestECDF:
    def test_step_values(self):
        e = ECDF([0.1, 0.1, 0.3, 0.7])
        assert e(0.0) == 0 and e(0.1) == 0.5 and e(0.5) == 0.75 and e(1.0) == 1.0
        assert e.median() == 0.1 and e.quantile(0.75) == 0.3

    def test_validation(self):
        with pytest.raises(ValueError):
            ECDF([])
        with pytest.raises(ValueError):
            ECDF(x=[0, 1], F=[0.8, 0.2])

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=1, max_size=300))
    def test_area_equals_mean(self, vals):
        assert ECDF(vals).area_over() == pytest.approx(np.mean(vals), abs=1e-12)

    def test_thinned_keeps_knot_values(self):
        rng = np.random.default_rng(0)
        e = ECDF(rng.random(5000))
        t = e.thinned(100)
        assert len(t.x) <= 100
        np.testing.assert_allclose(t(t.x), e(t.x))

    def test_nae(self):
        assert nae(1.0, 5.0, 1.0, 5.0) == 1.0
        np.testing.assert_allclose(nae(np.array([1, 2]), np.array([2, 2]), 1, 5), [0.25, 0])
        with pytest.raises(ValueError):
            nae(1, 2, 3, 3)


class TestDisagreement:
    def test_risk_is_mean_pairwise_nae(self):
        rng = np.random.default_rng(0)
        mask = rng.random((7, 8)) < 0.3
        mats = [rng.uniform(1, 5, (7, 8)) for _ in range(5)]
        stats = disagreement_stats(mats, mask, (1.0, 5.0), ecdf_points=None)
        assert len(stats.pairs) == 10
        for (i, j), r in zip(stats.pairs, stats.expected_risk_per_pair):
            assert r == pytest.approx(np.mean(np.abs(mats[i] - mats[j])[~mask]) / 4, abs=1e-12)
        R = stats.risk_matrix(5)
        np.testing.assert_allclose(R, R.T)
        # per-entry maximum dominates every pair
        for e in stats.pairwise_nae_ecdf:
            assert stats.max_nae_ecdf.area_over() >= e.area_over() - 1e-12

    def test_needs_two_worlds(self):
        with pytest.raises(PreconditionError):
            disagreement_stats([np.zeros((2, 2))], np.zeros((2, 2), bool), (0, 1))

    def test_max_pairs(self):
        rng = np.random.default_rng(1)
        mats = [rng.random((4, 4)) for _ in range(6)]
        stats = disagreement_stats(mats, np.zeros((4, 4), bool), (0, 1), max_pairs=5, seed=0)
        assert len(stats.pairs) == 5


class TestPersistence:
    def test_round_trip(self, tmp_path):
        F, M = rank2_instance(0)
        M[:, 0] = False
        M[3, 0] = True
        g = graph_from(F, M)
        fac = fit_base_factorization(g, 2, seed=0)
        ens = generate_ensemble(g, orthonormal_subspace(fac.U), 3, seed=4, base=fac.completion)
        manifest = save_ensemble(ens, tmp_path, dtype=np.float64)
        assert manifest["n_worlds"] == 3
        back = load_ensemble(tmp_path)
        assert len(back) == 3 and back.seed == 4
        for a, b in zip(ens, back):
            np.testing.assert_array_equal(a.matrix, b.matrix)
        np.testing.assert_array_equal(back.mask, ens.mask)

    def test_float32_and_candidates(self, tmp_path):
        F, M = rank2_instance(7)
        g = graph_from(F, M)
        Q = orthonormal_subspace(np.random.default_rng(0).normal(size=(10, 1)))
        ens = generate_ensemble(g, Q, 2, seed=0)
        save_ensemble(ens, tmp_path, name="bad")
        back = load_ensemble(tmp_path, name="bad", mmap=False)
        assert len(back) == 0 and len(back.candidates) == 2
        np.testing.assert_allclose(back.candidates[0].matrix, ens.candidates[0].matrix, atol=1e-5)

    def test_bad_magic(self, tmp_path):
        F, M = rank2_instance(0)
        g = graph_from(F, np.ones_like(M))
        fac = fit_base_factorization(g, 2, seed=0)
        save_ensemble(generate_ensemble(g, orthonormal_subspace(fac.U), 2, seed=0), tmp_path)
        raw = (tmp_path / "worlds.bin").read_bytes()
        (tmp_path / "worlds.bin").write_bytes(b"XXXXXXXX" + raw[8:])
        with pytest.raises(ValueError):
            load_ensemble(tmp_path)
