"""Top-k selection, overlap ratio, and the surrogate loss.

The selection oracle enumerates every candidate index set; values are drawn
from dyadic grids so sums compare exactly.
"""

import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from faithgat.errors import StructuralError
from faithgat.topk import (
    top_k_indices,
    top_k_overlap,
    topk_surrogate_grad,
    topk_surrogate_loss,
)
from conftest import fd_grad, rel_err


def brute_force_topk(x, k):
    """Best sum over all C(n, k) index sets; lexicographically smallest wins ties."""
    best_set, best_sum = None, None
    for combo in itertools.combinations(range(len(x)), min(k, len(x))):
        s = sum(x[i] for i in combo)
        if best_sum is None or s > best_sum:
            best_set, best_sum = combo, s
    return set(best_set)


class TestTopKIndices:
    def test_sorted_input(self):
        assert set(top_k_indices((0.5, 0.3, 0.2), 2).indices) == {0, 1}

    def test_tie_breaks_to_lower_index(self):
        assert set(top_k_indices((0.4, 0.4, 0.2), 1).indices) == {0}

    def test_k_clamped_to_length(self):
        ts = top_k_indices((1.0, 2.0, 3.0), 5)
        assert set(ts.indices) == {0, 1, 2}
        assert ts.k == 3

    def test_k_zero_rejected(self):
        with pytest.raises(StructuralError):
            top_k_indices((1.0, 2.0), 0)

    def test_rank_order(self):
        assert top_k_indices((0.1, 0.9, 0.5), 3).indices.tolist() == [1, 2, 0]

    def test_matches_brute_force_enumeration(self):
        # dyadic values make sums exact, so tie behavior is comparable
        rng = np.random.default_rng(5)
        for n in range(1, 13):
            for _ in range(4):
                x = rng.integers(0, 8, size=n) / 4.0
                for k in range(1, n + 1):
                    got = set(top_k_indices(x, k).indices.tolist())
                    assert got == brute_force_topk(x, k), (x, k)


class TestTopKOverlap:
    def test_motivating_pair_keeps_full_overlap(self):
        # sharpened distribution with the same leading order
        assert top_k_overlap((0.5, 0.3, 0.2), (0.9, 0.051, 0.049), 2).ratio == 1.0

    def test_disjoint_tops(self):
        assert top_k_overlap((0.6, 0.4), (0.4, 0.6), 1).ratio == 0.0

    def test_half_overlap(self):
        # T_2 sets are {1, 2} and {0, 1}
        assert top_k_overlap((0.1, 0.4, 0.5), (0.5, 0.4, 0.1), 2).ratio == 0.5

    def test_self_overlap_is_one_even_with_large_k(self):
        x = (0.2, 0.5, 0.3)
        assert top_k_overlap(x, x, 10).ratio == 1.0

    @given(
        st.lists(st.floats(-5, 5), min_size=1, max_size=12),
        st.lists(st.floats(-5, 5), min_size=1, max_size=12),
        st.integers(1, 15),
    )
    def test_symmetry(self, xs, ys, k):
        assert top_k_overlap(xs, ys, k).ratio == top_k_overlap(ys, xs, k).ratio

    @given(
        st.lists(st.integers(-96, 96), min_size=2, max_size=10),
        st.integers(1, 10),
        st.sampled_from([0.25, 0.5, 1.0, 2.0, 4.0]),
        st.integers(-32, 32),
    )
    def test_selection_scale_shift_invariant(self, xs, k, scale, shift):
        # dyadic values keep c*x + b exact, so ties stay ties and gaps stay gaps
        x = np.asarray(xs, dtype=np.float64) / 32.0
        base = set(top_k_indices(x, k).indices.tolist())
        moved = set(top_k_indices(scale * x + shift / 8.0, k).indices.tolist())
        assert base == moved


class TestSurrogateLoss:
    def test_zero_on_equal(self):
        w = np.array([0.2, 0.5, 0.3])
        for k in (1, 2, 3):
            assert topk_surrogate_loss(w, w, k) == 0.0

    def test_hand_value_k1(self):
        assert topk_surrogate_loss((0.6, 0.4), (0.4, 0.6), 1) == pytest.approx(0.2, abs=1e-12)

    def test_hand_value_k2(self):
        assert topk_surrogate_loss((0.7, 0.3), (0.2, 0.8), 2) == pytest.approx(0.5, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(StructuralError):
            topk_surrogate_loss((1.0, 2.0), (1.0, 2.0, 3.0), 1)

    @given(
        st.lists(st.floats(-2, 2), min_size=2, max_size=9),
        st.lists(st.floats(-2, 2), min_size=2, max_size=9),
        st.integers(1, 9),
    )
    def test_zero_iff_agreement_on_top_union(self, xs, ys, k):
        n = min(len(xs), len(ys))
        w = np.asarray(xs[:n])
        w2 = np.asarray(ys[:n])
        kk = min(k, n)
        union = set(top_k_indices(w, kk).indices.tolist()) | set(
            top_k_indices(w2, kk).indices.tolist()
        )
        loss = topk_surrogate_loss(w, w2, kk)
        agrees = all(w[i] == w2[i] for i in union)
        assert (loss == 0.0) == agrees

    def test_zero_loss_with_strict_top_gap_forces_full_overlap(self):
        rng = np.random.default_rng(17)
        for _ in range(30):
            n, k = 8, 3
            w = np.sort(rng.random(n))[::-1] + np.arange(n, 0, -1)  # strictly decreasing
            w2 = rng.random(n)
            top = top_k_indices(w, k).indices
            w2[top] = w[top]  # force agreement on w's strict top-k
            w2[np.setdiff1d(np.arange(n), top)] = np.minimum(
                w2[np.setdiff1d(np.arange(n), top)], w[top].min() - 1.0
            )
            if topk_surrogate_loss(w, w2, k) == 0.0:
                assert top_k_overlap(w, w2, k).ratio == 1.0


class TestSurrogateGrad:
    def test_zero_at_equal(self):
        w = np.array([0.3, 0.2, 0.5])
        assert np.all(topk_surrogate_grad(w, w.copy(), 2) == 0.0)

    def test_outside_both_sets_is_zero(self):
        w = np.array([5.0, 4.0, 0.1, 0.2])
        w2 = np.array([4.5, 5.5, 0.3, 0.0])
        g = topk_surrogate_grad(w, w2, 2)
        assert g[2] == 0.0 and g[3] == 0.0

    def test_both_returns_opposite_signs(self):
        w = np.array([1.0, 0.2, 0.4])
        w2 = np.array([0.1, 0.8, 0.4])
        g1, g2 = topk_surrogate_grad(w, w2, 2, wrt="both")
        assert np.allclose(g1, -g2)

    def test_matches_finite_differences_away_from_ties(self):
        rng = np.random.default_rng(23)
        checked = 0
        while checked < 10:
            w = rng.standard_normal(10)
            w2 = rng.standard_normal(10)
            # keep every entry pair and every selection margin away from the
            # fd step so the frozen sets are valid within +-h
            if np.min(np.abs(w - w2)) < 1e-3:
                continue
            if min(np.min(np.abs(np.diff(np.sort(w)))), np.min(np.abs(np.diff(np.sort(w2))))) < 1e-3:
                continue
            analytic = topk_surrogate_grad(w, w2, 4)
            numeric = fd_grad(lambda: topk_surrogate_loss(w, w2, 4), w2)
            assert rel_err(analytic, numeric) <= 1e-4
            checked += 1
