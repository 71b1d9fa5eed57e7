import numpy as np
import pytest
from hypothesis import given, strategies as st

from ordembed.core import (
    Comparison,
    ComparisonSet,
    Embedding,
    center,
    comparison_margin,
    squared_distance,
)


class TestComparison:
    def test_canonical_positive_label_is_identity(self):
        q = Comparison(0, 1, 2, 3, 1)
        assert q.canonical() == q

    def test_canonical_negative_label_swaps_pairs(self):
        q = Comparison(0, 1, 2, 3, -1)
        assert q.canonical() == Comparison(2, 3, 0, 1, 1)

    def test_is_triplet(self):
        assert Comparison(0, 1, 0, 2).is_triplet
        assert not Comparison(0, 1, 2, 3).is_triplet

    @given(st.integers(0, 9), st.integers(0, 9), st.integers(0, 9), st.integers(0, 9))
    def test_canonical_is_idempotent(self, i, j, l, k):
        q = Comparison(i, j, l, k, -1)
        assert q.canonical().canonical() == q.canonical()


class TestEmbedding:
    def test_shape_and_readonly(self):
        emb = Embedding(np.zeros((2, 5)))
        assert emb.p == 2 and emb.n == 5
        with pytest.raises(ValueError):
            emb.data[0, 0] = 1.0

    def test_rejects_single_point(self):
        with pytest.raises(ValueError):
            Embedding(np.zeros((2, 1)))

    def test_rejects_nonfinite(self):
        bad = np.zeros((2, 3))
        bad[0, 0] = np.nan
        with pytest.raises(ValueError):
            Embedding(bad)

    def test_center_flag_checked(self):
        with pytest.raises(ValueError):
            Embedding(np.ones((2, 3)), centered=True)

    def test_center(self):
        emb = center(np.arange(6, dtype=float).reshape(2, 3))
        assert emb.centered
        np.testing.assert_allclose(emb.data.mean(axis=1), 0.0, atol=1e-15)


class TestGeometry:
    def test_squared_distance(self):
        X = np.array([[0.0, 3.0], [0.0, 4.0]])
        assert squared_distance(X, 0, 1) == pytest.approx(25.0)

    def test_margin_sign(self):
        # x0 close to x1, far from x2
        X = np.array([[0.0, 0.1, 5.0]])
        q = Comparison(0, 1, 0, 2, 1)
        assert comparison_margin(X, q) < 0  # satisfied comparison

    def test_margin_label_swap_antisymmetry(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((3, 6))
        q = Comparison(0, 1, 2, 3, 1)
        q_flip = Comparison(0, 1, 2, 3, -1)
        assert comparison_margin(X, q) == pytest.approx(-comparison_margin(X, q_flip))

    def test_symmetric_configuration_margin_zero(self):
        X = np.array([[0.0, 1.0, 2.0, 3.0]])
        q = Comparison(0, 1, 2, 3, 1)  # both pairs at distance 1
        assert comparison_margin(X, q) == pytest.approx(0.0)


class TestComparisonSet:
    def test_parallel_arrays_in_positive_form(self):
        qs = [Comparison(0, 1, 2, 3, -1)]
        cs = ComparisonSet(qs, 4)
        assert cs.i[0] == 2 and cs.j[0] == 3 and cs.l[0] == 0 and cs.k[0] == 1

    def test_duplicate_dropped(self):
        qs = [Comparison(0, 1, 0, 2), Comparison(0, 1, 0, 2)]
        assert len(ComparisonSet(qs, 3)) == 1

    def test_contradiction_keeps_first(self):
        qs = [Comparison(0, 1, 0, 2, 1), Comparison(0, 2, 0, 1, 1)]
        cs = ComparisonSet(qs, 3)
        assert len(cs) == 1
        assert cs[0] == Comparison(0, 1, 0, 2, 1)

    def test_negative_label_duplicate_of_mirror_dropped(self):
        qs = [Comparison(0, 1, 0, 2, 1), Comparison(0, 1, 0, 2, -1)]
        assert len(ComparisonSet(qs, 3)) == 1

    def test_index_bounds(self):
        with pytest.raises(IndexError):
            ComparisonSet([Comparison(0, 1, 0, 5)], 3)

    def test_degenerate_pair_rejected(self):
        with pytest.raises(ValueError):
            ComparisonSet([Comparison(0, 0, 0, 1)], 3)

    def test_triplet_mode(self):
        assert ComparisonSet([Comparison(0, 1, 0, 2)], 3).triplet_mode
        assert not ComparisonSet([Comparison(0, 1, 2, 3)], 4).triplet_mode

    def test_subset(self):
        qs = [Comparison(0, 1, 0, 2), Comparison(1, 2, 1, 0), Comparison(2, 0, 2, 1)]
        cs = ComparisonSet(qs, 3)
        sub = cs.subset(np.array([2, 0]))
        assert len(sub) == 2
        assert sub[0] == qs[2] and sub[1] == qs[0]
