"""Support selection and the three pruners.

The error-compensating pruner is checked against its two exact reductions
(identity Hessian -> magnitude, diagonal Hessian -> scored selection) and
against the exhaustive-support oracle on a tiny correlated instance.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slrd import (
    Dense,
    SemiStructured,
    SparseComponent,
    Unstructured,
    mask_satisfies,
    quad_form,
)
from slrd.gram import dampen, hessian_from_matrix
from slrd.pruners import (
    OBS,
    Magnitude,
    Wanda,
    prune_magnitude,
    prune_obs,
    prune_wanda,
    run_pruner,
    select_support,
)
from slrd.oracle import exhaustive_sparse_oracle


def _obs_objective(h: np.ndarray, w: np.ndarray, sparse: SparseComponent) -> float:
    return quad_form(h, w - sparse.values)


class TestSelectSupport:
    def test_ties_go_to_lowest_flat_index(self):
        scores = np.ones((2, 3))
        mask = select_support(scores, Unstructured(k=2))
        expected = np.zeros((2, 3), dtype=bool)
        expected[0, 0] = expected[0, 1] = True
        np.testing.assert_array_equal(mask, expected)

    def test_semi_structured_keeps_top_n_per_group(self):
        scores = np.array([[3.0], [1.0], [2.0], [0.5]])
        mask = select_support(scores, SemiStructured(2, 4))
        np.testing.assert_array_equal(mask[:, 0], [True, False, True, False])

    def test_per_column_budget(self):
        scores = np.array([[1.0, 5.0], [2.0, 4.0], [3.0, 6.0]])
        mask = select_support(scores, Unstructured(k=1, granularity="per-column"))
        np.testing.assert_array_equal(mask, [[False, False], [False, False], [True, True]])


class TestMagnitude:
    def test_semi_structured_group_example(self):
        w = np.array([[3.0], [-1.0], [2.0], [0.5]])
        s = prune_magnitude(w, SemiStructured(2, 4))
        np.testing.assert_array_equal(s.values[:, 0], [3.0, 0.0, 2.0, 0.0])

    def test_global_top_two(self):
        w = np.array([[1.0, -3.0], [2.0, -0.5]])
        s = prune_magnitude(w, Unstructured(k=2))
        np.testing.assert_array_equal(s.values, [[0.0, -3.0], [2.0, 0.0]])

    def test_full_budget_is_identity(self):
        rng = np.random.default_rng(3)
        w = rng.standard_normal((3, 4))
        s = prune_magnitude(w, Unstructured(k=12))
        np.testing.assert_array_equal(s.values, w)

    def test_kept_values_are_untouched(self):
        rng = np.random.default_rng(4)
        w = rng.standard_normal((4, 4))
        s = prune_magnitude(w, SemiStructured(1, 4))
        np.testing.assert_array_equal(s.values[s.mask], w[s.mask])


class TestWanda:
    def test_score_flips_magnitude_ranking(self):
        # diag scale 2 lifts row 0 past the larger raw weight in row 1
        d = np.array([2.0, 1.0])
        w = np.array([[1.0, 1.0], [1.5, 1.0]])
        s = prune_wanda(w, d, Unstructured(k=2))
        np.testing.assert_array_equal(s.values, [[1.0, 1.0], [0.0, 0.0]])

    def test_identity_scale_reduces_to_magnitude(self):
        rng = np.random.default_rng(5)
        for pattern in (SemiStructured(2, 4), Unstructured(k=9), Unstructured(k=2, granularity="per-column")):
            w = rng.standard_normal((8, 5))
            a = prune_wanda(w, np.ones(8), pattern)
            b = prune_magnitude(w, pattern)
            np.testing.assert_array_equal(a.mask, b.mask)
            np.testing.assert_array_equal(a.values, b.values)

    def test_dense_pattern_is_noop(self):
        w = np.array([[1.0, -2.0]]).T
        s = prune_wanda(w, np.array([3.0, 4.0]), Dense())
        np.testing.assert_array_equal(s.values, w)
        assert s.mask.all()


class TestOBS:
    def test_identity_hessian_reduces_to_magnitude(self):
        rng = np.random.default_rng(6)
        w = rng.standard_normal((16, 6))
        gram = hessian_from_matrix(3.7 * np.eye(16))
        for pattern in (SemiStructured(2, 4), Unstructured(k=40), Unstructured(k=5, granularity="per-column")):
            got = prune_obs(w, gram, pattern)
            want = prune_magnitude(w, pattern)
            np.testing.assert_array_equal(got.mask, want.mask)
            np.testing.assert_array_equal(got.values, want.values)

    def test_keep_one_of_two_matches_exhaustive_optimum(self):
        h = np.array([[1.0, 0.9], [0.9, 1.0]])
        gram = hessian_from_matrix(h)
        w = np.array([[1.0], [1.0]])
        s = prune_obs(w, gram, Unstructured(k=1, granularity="per-column"))
        got = _obs_objective(h, w, s)
        best, _ = exhaustive_sparse_oracle(w, h, Unstructured(k=1, granularity="per-column"))
        # compensation pushes the kept weight to 1.9; either support is optimal
        assert got == pytest.approx(0.19, abs=1e-12)
        assert got == pytest.approx(best, rel=1e-12)
        assert s.nonzeros == 1

    def test_dense_pattern_returns_input(self):
        rng = np.random.default_rng(7)
        w = rng.standard_normal((4, 3))
        gram = dampen(build_gram_of(rng, 4))
        s = prune_obs(w, gram, Dense())
        np.testing.assert_array_equal(s.values, w)
        assert _obs_objective(gram.h, w, s) == 0.0

    def test_block_boundaries_do_not_change_budgets(self):
        rng = np.random.default_rng(8)
        w = rng.standard_normal((32, 5))
        gram = dampen(build_gram_of(rng, 32))
        for pattern in (SemiStructured(2, 4), Unstructured(k=80), Unstructured(k=11, granularity="per-column")):
            for bs in (4, 7, 32, 128):
                s = prune_obs(w, gram, pattern, blocksize=bs)
                assert mask_satisfies(pattern, s.mask)
                if isinstance(pattern, Unstructured) and pattern.granularity == "per-matrix":
                    assert s.nonzeros == pattern.k
                if isinstance(pattern, Unstructured) and pattern.granularity == "per-column":
                    assert (s.mask.sum(axis=0) == pattern.k).all()

    def test_compensation_beats_plain_magnitude_on_correlated_hessian(self):
        # qualifies the whole point of the sweep: lower error than magnitude
        rng = np.random.default_rng(9)
        wins = 0
        for trial in range(20):
            n_in = 16
            x = correlated(rng, n_in)
            gram = dampen(x.T @ x)
            w = rng.standard_normal((n_in, 8))
            obs = prune_obs(w, gram, SemiStructured(2, 4))
            mag = prune_magnitude(w, SemiStructured(2, 4))
            wins += _obs_objective(gram.h, w, obs) <= _obs_objective(gram.h, w, mag) + 1e-12
        assert wins >= 18


def build_gram_of(rng: np.random.Generator, n: int) -> np.ndarray:
    x = rng.standard_normal((4 * n, n))
    return x.T @ x


def correlated(rng: np.random.Generator, n: int) -> np.ndarray:
    idx = np.arange(n)
    k = 0.85 ** np.abs(np.subtract.outer(idx, idx))
    x = rng.standard_normal((4 * n, n)) @ np.linalg.cholesky(k).T
    return x * np.logspace(0, -1.5, n)[rng.permutation(n)][None, :]


class TestRunPruner:
    def test_dispatch_matches_direct_calls(self):
        rng = np.random.default_rng(10)
        w = rng.standard_normal((8, 4))
        gram = dampen(build_gram_of(rng, 8))
        pattern = SemiStructured(2, 4)
        np.testing.assert_array_equal(
            run_pruner(Magnitude(), w, gram, pattern).values,
            prune_magnitude(w, pattern).values,
        )
        np.testing.assert_array_equal(
            run_pruner(Wanda(), w, gram, pattern).values,
            prune_wanda(w, gram.d, pattern).values,
        )
        np.testing.assert_array_equal(
            run_pruner(OBS(blocksize=4), w, gram, pattern).values,
            prune_obs(w, gram, pattern, blocksize=4).values,
        )


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    n_groups=st.integers(1, 4),
    n_out=st.integers(1, 6),
    keep=st.integers(1, 4),
)
def test_magnitude_masks_are_always_feasible(seed, n_groups, n_out, keep):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((4 * n_groups, n_out))
    pattern = SemiStructured(keep, 4)
    s = prune_magnitude(w, pattern)
    assert mask_satisfies(pattern, s.mask)
    np.testing.assert_array_equal(s.values[~s.mask], 0.0)
    np.testing.assert_array_equal(s.values[s.mask], w[s.mask])
