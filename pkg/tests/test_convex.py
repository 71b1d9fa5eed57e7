import numpy as np
import pytest

from ordembed.convex import (
    GramState,
    centering_matrix,
    classical_mds,
    convex_solve,
    distance_to_gram,
    gram_loss_grad,
    gram_to_distance,
    gram_to_embedding,
    project_psd_centered,
)
from ordembed.core import Comparison, ComparisonSet, Embedding
from ordembed.data import sample_triplets, split_comparisons, SplitSpec
from ordembed.evaluate import generalization_error, procrustes_align
from ordembed.losses import LossKind, LossModel, batch_losses, full_gradient


def random_centered_gram(n: int, p: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((p, n))
    X = X - X.mean(axis=1, keepdims=True)
    return X, X.T @ X


ALL_MODELS = [
    LossModel(LossKind.GNMDS),
    LossModel(LossKind.CKL),
    LossModel(LossKind.STE),
    LossModel(LossKind.TSTE, alpha=2.0),
]


class TestGramEmbeddingEquivalence:
    """At G = X'X the Gram-domain losses equal the embedding-domain losses."""

    @pytest.mark.parametrize("model", ALL_MODELS, ids=lambda m: m.kind.name)
    def test_objective_identity_over_random_instances(self, model):
        rng = np.random.default_rng(0)
        for trial in range(25):
            n = int(rng.integers(5, 10))
            X, G = random_centered_gram(n, 3, seed=100 + trial)
            qs = []
            while len(qs) < 8:
                i, j, l, k = rng.choice(n, size=4, replace=False)
                qs.append(Comparison(int(i), int(j), int(l), int(k)))
            Q = ComparisonSet(qs, n)
            val_gram, _ = gram_loss_grad(model, GramState(G, 3), Q)
            val_emb = float(np.mean(batch_losses(model, Embedding(X), Q)))
            assert val_gram == pytest.approx(val_emb, abs=1e-10)

    def test_chain_rule_consistency(self):
        # dL/dX = 2 X dL/dG when G = X'X
        model = LossModel(LossKind.STE)
        X, G = random_centered_gram(7, 3, seed=5)
        Q = ComparisonSet([Comparison(0, 1, 2, 3), Comparison(4, 5, 4, 6)], 7)
        _, gG = gram_loss_grad(model, GramState(G, 3), Q)
        gX = full_gradient(model, Embedding(X), Q)
        np.testing.assert_allclose(gX, 2.0 * X @ gG, atol=1e-12)


class TestPsdProjection:
    def test_matches_eigen_clamp_oracle(self):
        rng = np.random.default_rng(1)
        for trial in range(20):
            n = int(rng.integers(4, 12))
            M = rng.standard_normal((n, n))
            M = 0.5 * (M + M.T)
            state = project_psd_centered(M)
            # oracle: center, eigendecompose, clamp, reconstruct
            C = centering_matrix(n)
            Mc = C @ M @ C
            w, V = np.linalg.eigh(0.5 * (Mc + Mc.T))
            expected = (V * np.maximum(w, 0.0)) @ V.T
            np.testing.assert_allclose(state.G, expected, atol=1e-8)

    def test_output_is_psd_and_centered(self):
        rng = np.random.default_rng(2)
        M = rng.standard_normal((8, 8))
        M = 0.5 * (M + M.T)
        G = project_psd_centered(M).G
        w = np.linalg.eigvalsh(G)
        assert w.min() >= -1e-10
        np.testing.assert_allclose(G @ np.ones(8), 0.0, atol=1e-10)

    def test_idempotent(self):
        X, G = random_centered_gram(6, 2, seed=3)
        np.testing.assert_allclose(project_psd_centered(G).G, G, atol=1e-10)

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            project_psd_centered(np.arange(9.0).reshape(3, 3))


class TestGramDistanceBijection:
    def test_round_trip_from_gram(self):
        _, G = random_centered_gram(9, 3, seed=4)
        np.testing.assert_allclose(
            distance_to_gram(gram_to_distance(G)), G, atol=1e-10
        )

    def test_round_trip_from_distance(self):
        X, _ = random_centered_gram(9, 3, seed=5)
        sq = np.sum(X * X, axis=0)
        D = sq[:, None] + sq[None, :] - 2.0 * X.T @ X
        np.fill_diagonal(D, 0.0)
        np.testing.assert_allclose(
            gram_to_distance(distance_to_gram(D)), D, atol=1e-10
        )

    def test_two_points_unit_distance(self):
        D = np.array([[0.0, 1.0], [1.0, 0.0]])
        G = distance_to_gram(D)
        np.testing.assert_allclose(G, np.array([[0.25, -0.25], [-0.25, 0.25]]), atol=1e-12)

    def test_nonzero_diagonal_rejected(self):
        with pytest.raises(ValueError):
            distance_to_gram(np.eye(3))


class TestGramToEmbedding:
    def test_exact_recovery_up_to_similarity(self):
        X, G = random_centered_gram(10, 2, seed=6)
        emb = gram_to_embedding(GramState(G, 2), 2)
        _, residual = procrustes_align(emb.data, X, allow_scaling=False)
        assert residual < 1e-8

    def test_deterministic_signs(self):
        _, G = random_centered_gram(10, 3, seed=7)
        e1 = gram_to_embedding(GramState(G, 3), 3)
        e2 = gram_to_embedding(GramState(G, 3), 3)
        np.testing.assert_array_equal(e1.data, e2.data)

    def test_p_out_of_range(self):
        _, G = random_centered_gram(5, 2, seed=8)
        with pytest.raises(ValueError):
            gram_to_embedding(GramState(G, 2), 6)


class TestClassicalMds:
    def test_recovers_planted_configuration(self):
        X, _ = random_centered_gram(12, 2, seed=9)
        sq = np.sum(X * X, axis=0)
        D = sq[:, None] + sq[None, :] - 2.0 * X.T @ X
        np.fill_diagonal(D, 0.0)
        emb = classical_mds(D, 2)
        _, residual = procrustes_align(emb.data, X, allow_scaling=False)
        assert residual < 1e-8


class TestConvexSolve:
    def test_planted_recovery(self):
        # 10 points in the plane, every noiseless triplet: the convex fit
        # should order held-out triplets almost perfectly
        rng = np.random.default_rng(10)
        X_true = Embedding(rng.standard_normal((2, 10)))
        Q = sample_triplets(X_true, None, seed=0)  # all 360 triplets
        train, test = split_comparisons(
            Q, SplitSpec(train_count=300, test_count=60, seed=0)
        )
        emb, trace = convex_solve(
            LossModel(LossKind.STE), train, n=10, p=2, iterations=500, seed=0
        )
        assert generalization_error(emb, test) < 0.05
        assert trace[-1].objective < trace[0].objective

    def test_trace_accounting(self):
        rng = np.random.default_rng(11)
        X_true = Embedding(rng.standard_normal((2, 8)))
        Q = sample_triplets(X_true, 100, seed=1)
        _, trace = convex_solve(
            LossModel(LossKind.STE), Q, n=8, p=2, iterations=10, seed=0
        )
        assert [t.evals for t in trace] == [100 * (i + 1) for i in range(10)]
