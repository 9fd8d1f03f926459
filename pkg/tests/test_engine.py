import numpy as np
import pytest

from glimg.clustering import kmeans_cluster
from glimg.engine import (
    HyperParams,
    build_local_graphs,
    build_solve_operator,
    combine_normalize,
    fit,
    load_model,
    predict_all,
    predict_row,
    predict_user,
    save_model,
    stationarity_residual,
)
from glimg.errors import DataError, ModelFormatError
from glimg.itemgraph import build_item_graph

from conftest import dense, random_matrix


def naive_combine(w_global, w_local, g):
    """Scalar-loop reference for the blend-and-normalize step."""
    n = w_global.shape[0]
    M = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            M[i, j] = g * w_global[i, j] + (1 - g) * w_local[i, j]
    D = M.sum(axis=1)
    S = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if D[i] > 0 and D[j] > 0:
                S[i, j] = M[i, j] / np.sqrt(D[i] * D[j])
    return S, D


def toy_two_item_model():
    """Hand-worked 2-item instance: W=[[0,1],[1,0]], g=1, mu=1, gamma=1.

    D=(1,1), S=W, so I + alpha*(D - S) = [[1.5,-0.5],[-0.5,1.5]] with
    inverse [[0.75,0.25],[0.25,0.75]].
    """
    W = np.array([[0.0, 1.0], [1.0, 0.0]])
    params = HyperParams(sigma=1.0, mu=1.0, gamma=1.0, g=1.0, k=1)
    S, D = combine_normalize(W, W, params.g)
    op = build_solve_operator(S, D, params.alpha, params.gamma)
    return S, D, op, params


class TestHyperParams:
    def test_alpha_beta(self):
        p = HyperParams(mu=3.0)
        assert p.alpha == 1.0 / 4.0
        assert p.beta == 3.0 / 4.0

    def test_validation(self):
        with pytest.raises(DataError):
            HyperParams(mu=-1.0)
        with pytest.raises(DataError):
            HyperParams(g=1.5)
        with pytest.raises(DataError):
            HyperParams(k=0)
        with pytest.raises(DataError):
            HyperParams(sigma=-0.1)


class TestCombineNormalize:
    def test_g_one_uses_global_only(self, rng):
        wg = build_item_graph(rng.random((6, 5)), 0.5).weights
        wl = build_item_graph(rng.random((6, 5)), 0.5).weights
        S1, D1 = combine_normalize(wg, wl, 1.0)
        S2, D2 = combine_normalize(wg, np.zeros_like(wl), 1.0)
        assert np.array_equal(S1, S2) and np.array_equal(D1, D2)

    def test_identical_operands_independent_of_g(self, rng):
        w = build_item_graph(rng.random((6, 5)), 0.5).weights
        outputs = [combine_normalize(w, w, g) for g in (0.0, 0.35, 1.0)]
        for S, D in outputs[1:]:
            assert np.allclose(S, outputs[0][0], atol=1e-14)
            assert np.allclose(D, outputs[0][1], atol=1e-14)

    def test_matches_scalar_oracle(self, rng):
        wg = build_item_graph(rng.random((10, 8)), 0.7).weights
        wl = build_item_graph(rng.random((10, 8)) * (rng.random((10, 8)) < 0.6), 0.7).weights
        S, D = combine_normalize(wg, wl, 0.35)
        S_ref, D_ref = naive_combine(wg, wl, 0.35)
        assert np.max(np.abs(S - S_ref)) < 1e-12
        assert np.max(np.abs(D - D_ref)) < 1e-12

    def test_isolated_items_zero_rows(self):
        w = np.zeros((3, 3))
        w[0, 1] = w[1, 0] = 1.0
        S, D = combine_normalize(w, w, 0.5)
        assert np.all(S[2, :] == 0.0) and np.all(S[:, 2] == 0.0)
        assert D[2] == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(DataError):
            combine_normalize(np.zeros((2, 2)), np.zeros((3, 3)), 0.5)


class TestSolveOperator:
    def test_two_item_hand_inverse(self):
        S, D, op, _ = toy_two_item_model()
        assert np.max(np.abs(op - np.array([[0.75, 0.25], [0.25, 0.75]]))) < 1e-12

    def test_scalar_case(self):
        op = build_solve_operator(np.zeros((1, 1)), np.array([2.0]), alpha=0.5, gamma=1.0)
        assert op[0, 0] == pytest.approx(1.0 / (1.0 + 0.5 * 2.0), abs=1e-15)

    def test_residual_identity(self, rng):
        matrix = random_matrix(rng, num_users=12, num_items=15)
        graph = build_item_graph(matrix, 0.5)
        S, D = combine_normalize(graph.weights, graph.weights, 0.5)
        p = HyperParams(mu=1.0, gamma=1.0)
        op = build_solve_operator(S, D, p.alpha, p.gamma)
        n = S.shape[0]
        A = np.eye(n) + p.alpha * (p.gamma * np.diag(D) - S)
        assert np.max(np.abs(A @ op - np.eye(n))) < 1e-8

    def test_diagonal_dominance_on_fitted_instance(self, rng):
        # with gamma >= 1 the degree term dominates the normalized rows
        matrix = random_matrix(rng, num_users=15, num_items=10)
        graph = build_item_graph(matrix, 0.5)
        S, D = combine_normalize(graph.weights, graph.weights, 1.0)
        p = HyperParams(mu=1.0, gamma=1.0)
        n = S.shape[0]
        A = np.eye(n) + p.alpha * (p.gamma * np.diag(D) - S)
        diag = np.abs(np.diag(A))
        offsum = np.abs(A).sum(axis=1) - diag
        assert np.all(diag >= offsum - 1e-9)


class TestLocalGraphs:
    def test_single_cluster_equals_global(self, rng):
        matrix = random_matrix(rng, num_users=8, num_items=6)
        assignment = kmeans_cluster(matrix.matrix, 1, seed=0)
        [local] = build_local_graphs(matrix, assignment, 0.5)
        assert np.array_equal(local.weights, build_item_graph(matrix, 0.5).weights)

    def test_cluster_missing_item_gets_zero_row(self, rng):
        matrix = random_matrix(rng, num_users=20, num_items=10, density=0.4)
        assignment = kmeans_cluster(matrix.matrix, 2, seed=1)
        locals_ = build_local_graphs(matrix, assignment, 0.5)
        for c, local in enumerate(locals_):
            sub = dense(matrix)[assignment.members(c)]
            unrated = np.flatnonzero(np.abs(sub).sum(axis=0) == 0)
            for i in unrated:
                assert np.all(local.weights[i, :] == 0.0)
                assert np.all(local.weights[:, i] == 0.0)

    def test_matches_pairwise_oracle_per_cluster(self, rng):
        from test_itemgraph import naive_item_graph

        matrix = random_matrix(rng, num_users=20, num_items=10, density=0.5)
        assignment = kmeans_cluster(matrix.matrix, 2, seed=0)
        locals_ = build_local_graphs(matrix, assignment, 0.5)
        for c, local in enumerate(locals_):
            sub = dense(matrix)[assignment.members(c)]
            assert np.max(np.abs(local.weights - naive_item_graph(sub, 0.5))) < 1e-12


class TestFitPredict:
    def test_two_item_toy_prediction(self):
        _, _, op, _ = toy_two_item_model()
        scores = np.array([4.0, 0.0]) @ op
        assert np.max(np.abs(scores - np.array([3.0, 1.0]))) < 1e-12

    def test_zero_row_zero_scores(self, rng):
        matrix = random_matrix(rng)
        model = fit(matrix, HyperParams(k=2, seed=0))
        scores = predict_user(model, np.zeros(matrix.num_items), 0).scores
        assert np.all(scores == 0.0)

    def test_scaling_linearity(self, rng):
        matrix = random_matrix(rng)
        model = fit(matrix, HyperParams(k=2, seed=0))
        row = matrix.user_row(1)
        base = predict_user(model, row, 1).scores
        scaled = predict_user(model, 3.0 * row, 1).scores
        assert np.allclose(scaled, 3.0 * base, atol=1e-10)
        assert np.array_equal(np.argsort(-base), np.argsort(-scaled))

    def test_predict_all_matches_row_loop(self, rng):
        matrix = random_matrix(rng, num_users=10, num_items=8)
        model = fit(matrix, HyperParams(k=2, seed=1))
        all_scores = predict_all(model, matrix)
        for u in range(matrix.num_users):
            row_scores = predict_user(model, matrix.user_row(u), u).scores
            assert np.max(np.abs(all_scores[u] - row_scores)) < 1e-10

    def test_reduction_g1_equals_k1(self, rng):
        matrix = random_matrix(rng, num_users=15, num_items=10)
        global_only = fit(matrix, HyperParams(g=1.0, k=3, seed=0))
        single = fit(matrix, HyperParams(g=1.0, k=1, seed=0))
        assert np.max(np.abs(predict_all(global_only, matrix) - predict_all(single, matrix))) < 1e-10

    def test_stationarity_random_instances(self, rng):
        for trial in range(5):
            matrix = random_matrix(rng, num_users=12, num_items=9)
            params = HyperParams(mu=[0.1, 1.0, 10.0][trial % 3], gamma=1.0,
                                 g=[0.0, 0.5, 1.0][trial % 3], k=2, seed=trial)
            model = fit(matrix, params)
            for c in range(params.k):
                assert stationarity_residual(model, matrix, c) < 1e-8

    def test_mu_zero_residual(self, rng):
        matrix = random_matrix(rng)
        model = fit(matrix, HyperParams(mu=0.0, k=1, seed=0))
        # beta = 0 makes the scaled solution identically zero
        assert stationarity_residual(model, matrix, 0) == 0.0

    def test_cluster_symmetry(self, rng):
        matrix = random_matrix(rng, num_users=15, num_items=10)
        model = fit(matrix, HyperParams(k=3, seed=0))
        for cm in model.clusters:
            assert np.max(np.abs(cm.combined - cm.combined.T)) < 1e-10

    def test_cold_start_routes_to_nearest_centroid(self, rng):
        matrix = random_matrix(rng, num_users=10, num_items=8)
        model = fit(matrix, HyperParams(k=2, seed=0))
        row = matrix.user_row(3)
        scores = predict_row(model, row)
        assert scores.shape == (8,)
        assert np.all(predict_row(model, np.zeros(8)) == 0.0)

    def test_empty_training_matrix(self, rng):
        import scipy.sparse as sp

        from glimg.dataset import RatingMatrix

        empty = RatingMatrix(sp.csr_matrix((2, 2)), ("a", "b"), ("x", "y"))
        with pytest.raises(DataError):
            fit(empty, HyperParams(k=1))


class TestModelIO:
    def test_round_trip_identical_predictions(self, tmp_path, rng):
        matrix = random_matrix(rng)
        model = fit(matrix, HyperParams(k=2, seed=0))
        path = tmp_path / "model.bin"
        save_model(model, path)
        loaded = load_model(path)
        assert np.array_equal(predict_all(model, matrix), predict_all(loaded, matrix))
        assert loaded.params == model.params
        assert loaded.user_ids == model.user_ids

    def test_bad_magic(self, tmp_path, rng):
        matrix = random_matrix(rng)
        model = fit(matrix, HyperParams(k=1, seed=0))
        path = tmp_path / "model.bin"
        save_model(model, path)
        data = bytearray(path.read_bytes())
        data[:4] = b"XXXX"
        path.write_bytes(bytes(data))
        with pytest.raises(ModelFormatError):
            load_model(path)

    def test_truncated(self, tmp_path, rng):
        matrix = random_matrix(rng)
        model = fit(matrix, HyperParams(k=1, seed=0))
        path = tmp_path / "model.bin"
        save_model(model, path)
        path.write_bytes(path.read_bytes()[:-100])
        with pytest.raises(ModelFormatError):
            load_model(path)
