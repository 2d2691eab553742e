"""The alternating loop, its baseline variant, and sequential propagation."""

import numpy as np
import pytest

from slrd import (
    AltMinConfig,
    ContractError,
    Dense,
    DenseWeights,
    SemiStructured,
    Wanda,
    decompose_layer,
    get_lr,
    mask_satisfies,
    oats_baseline,
    quad_form,
    sequential_decompose,
)
from slrd.gram import build_gram, dampen
from slrd.pruners import select_support
from slrd.types import CalibrationActivations

from conftest import correlated_activations, damped_gram


def planted_instance(seed: int, n_in: int = 16, n_out: int = 12, r: int = 2):
    """Weights that are exactly a feasible 2:4 term plus a rank-r term.

    The sparse magnitudes sit at least 4 sigma-units above the low-rank
    entries (std 0.25), so every pruner recovers the support exactly and
    the loop reduces to completing the low-rank term from its off-support
    entries.
    """
    rng = np.random.default_rng(seed)
    mask = select_support(rng.standard_normal((n_in, n_out)) ** 2, SemiStructured(2, 4))
    mag = 4.0 + np.abs(rng.standard_normal((n_in, n_out)))
    s0 = np.where(mask, np.sign(rng.standard_normal((n_in, n_out))) * mag, 0.0)
    l0 = 0.25 * rng.standard_normal((n_in, r)) @ rng.standard_normal((r, n_out)) / np.sqrt(r)
    x = rng.standard_normal((16 * n_in, n_in))
    return s0 + l0, x


class TestStepSize:
    def test_decay_schedule_values(self):
        assert get_lr(1, 1e-2) == pytest.approx(1.0 / 1100.0)
        assert get_lr(70, 1e-2) == pytest.approx(1.25e-4)

    def test_config_rejects_zero_eta(self):
        with pytest.raises(ContractError):
            AltMinConfig(eta=0.0)

    def test_config_rejects_unknown_mode(self):
        with pytest.raises(ContractError):
            AltMinConfig(lowrank_mode="qr")
        with pytest.raises(ContractError):
            AltMinConfig(t_am=0)


class TestDecomposeLayer:
    def test_dense_rank0_is_exact_immediately(self):
        rng = np.random.default_rng(0)
        w = rng.standard_normal((6, 4))
        gram = damped_gram(rng.standard_normal((30, 6)))
        res = decompose_layer(gram, DenseWeights(w), Dense(), 0, AltMinConfig(t_am=3))
        np.testing.assert_array_equal(res.sparse.values, w)
        assert res.objective_trace[0].objective_damped == 0.0
        assert res.objective_trace[-1].objective_damped == 0.0
        assert res.objective_trace[-1].objective_raw == 0.0

    def test_trace_has_two_entries_per_iteration(self):
        rng = np.random.default_rng(1)
        w = rng.standard_normal((8, 5))
        gram = damped_gram(rng.standard_normal((40, 8)))
        res = decompose_layer(gram, DenseWeights(w), SemiStructured(2, 4), 2, AltMinConfig(t_am=7, t_lr=3))
        assert len(res.objective_trace) == 14
        halves = [e.half_step for e in res.objective_trace]
        assert halves == ["P1", "P2"] * 7
        iters = [e.iteration for e in res.objective_trace]
        assert iters == [t for t in range(1, 8) for _ in range(2)]

    def test_config_echo_round_trips_the_run(self):
        rng = np.random.default_rng(2)
        w = rng.standard_normal((8, 4))
        gram = damped_gram(rng.standard_normal((40, 8)))
        cfg = AltMinConfig(t_am=2, t_lr=4, eta=0.02, seed=11, lowrank_mode="diag")
        res = decompose_layer(gram, DenseWeights(w), SemiStructured(1, 4), 3, cfg)
        echo = res.config_echo
        assert echo["t_am"] == 2 and echo["t_lr"] == 4
        assert echo["eta"] == 0.02 and echo["seed"] == 11
        assert echo["lowrank_mode"] == "diag" and echo["pruner"] == "obs"
        assert echo["lam"] == gram.lam
        assert echo["rank"] == 3

    def test_infeasible_rank_rejected(self):
        rng = np.random.default_rng(3)
        gram = damped_gram(rng.standard_normal((20, 4)))
        w = DenseWeights(rng.standard_normal((4, 6)))
        with pytest.raises(ContractError):
            decompose_layer(gram, w, Dense(), 5)
        with pytest.raises(ContractError):
            decompose_layer(gram, w, Dense(), -1)

    def test_observer_sees_feasible_sparse_at_every_half_step(self):
        rng = np.random.default_rng(4)
        w = rng.standard_normal((8, 6))
        gram = damped_gram(rng.standard_normal((40, 8)))
        pattern = SemiStructured(2, 4)
        calls = []

        def watch(t, half, sparse, factors):
            calls.append(half)
            assert mask_satisfies(pattern, sparse.mask)

        decompose_layer(gram, DenseWeights(w), pattern, 2, AltMinConfig(t_am=4, t_lr=2), observer=watch)
        assert calls == ["P1", "P2"] * 4

    def test_rank_zero_keeps_zero_factors(self):
        rng = np.random.default_rng(5)
        w = rng.standard_normal((8, 4))
        gram = damped_gram(rng.standard_normal((40, 8)))
        res = decompose_layer(gram, DenseWeights(w), SemiStructured(2, 4), 0, AltMinConfig(t_am=2))
        np.testing.assert_array_equal(res.lowrank.product(), np.zeros((8, 4)))
        assert len(res.objective_trace) == 4


class TestPlantedRecovery:
    def test_exact_structure_is_recovered_to_one_percent(self):
        # truncation mode: each refit is the exact rank-r projection, so the
        # loop behaves like alternating-projection matrix completion
        cfg = AltMinConfig(lowrank_mode="svd")
        for seed in range(10):
            w, x = planted_instance(seed)
            gram = damped_gram(x)
            weights = DenseWeights(w)
            full = decompose_layer(gram, weights, SemiStructured(2, 4), 2, cfg)
            prune_only = decompose_layer(gram, weights, SemiStructured(2, 4), 0, cfg)
            final = full.objective_trace[-1].objective_damped
            base = prune_only.objective_trace[-1].objective_damped
            assert final <= 1e-2 * base, f"seed {seed}: {final:.3e} vs base {base:.3e}"


class TestAgainstDiagonalBaseline:
    def test_full_hessian_loop_wins_on_correlated_instances(self):
        # ten-seed spot check; the 50-seed run lives in the acceptance suite
        wins = 0
        for seed in range(1, 11):
            x = correlated_activations(seed)
            rng = np.random.default_rng(seed + 10_000)
            w = DenseWeights(rng.standard_normal((64, 48)))
            gram = damped_gram(x)
            ours = decompose_layer(gram, w, SemiStructured(2, 4), 8, AltMinConfig())
            base = oats_baseline(gram, w, SemiStructured(2, 4), 8)
            wins += (
                ours.objective_trace[-1].objective_raw
                <= base.objective_trace[-1].objective_raw
            )
        assert wins >= 9

    def test_baseline_is_the_wanda_diag_configuration(self):
        rng = np.random.default_rng(6)
        w = DenseWeights(rng.standard_normal((16, 8)))
        gram = damped_gram(rng.standard_normal((64, 16)))
        a = oats_baseline(gram, w, SemiStructured(2, 4), 3, t_am=9)
        b = decompose_layer(
            gram, w, SemiStructured(2, 4), 3,
            AltMinConfig(t_am=9, pruner=Wanda(), lowrank_mode="diag"),
        )
        np.testing.assert_array_equal(a.sparse.mask, b.sparse.mask)
        np.testing.assert_allclose(a.sparse.values, b.sparse.values, atol=1e-10)
        np.testing.assert_allclose(a.lowrank.product(), b.lowrank.product(), atol=1e-10)

    def test_baseline_surrogate_never_increases(self):
        # both half-steps minimize the diagonal surrogate exactly
        for seed in (0, 1, 2):
            x = correlated_activations(seed, n_in=32, samples=128)
            rng = np.random.default_rng(seed)
            w_hat = rng.standard_normal((32, 12))
            gram = damped_gram(x)
            d = gram.d
            surrogate = []

            def watch(t, half, sparse, factors):
                delta = w_hat - sparse.values - factors.product()
                surrogate.append(float(((d[:, None] * delta) ** 2).sum()))

            oats_baseline(gram, DenseWeights(w_hat), SemiStructured(2, 4), 4, t_am=20, observer=watch)
            for prev, cur in zip(surrogate, surrogate[1:]):
                assert cur <= prev + 1e-10 * max(1.0, prev)

    def test_baseline_dense_rank0_recovers_input(self):
        rng = np.random.default_rng(7)
        w = rng.standard_normal((6, 4))
        gram = damped_gram(rng.standard_normal((30, 6)))
        res = oats_baseline(gram, DenseWeights(w), Dense(), 0, t_am=2)
        np.testing.assert_array_equal(res.sparse.values, w)


class TestSequentialDecompose:
    def test_single_layer_matches_direct_call(self):
        rng = np.random.default_rng(8)
        w = rng.standard_normal((8, 5))
        x0 = rng.standard_normal((40, 8))
        cfg = AltMinConfig(t_am=4, t_lr=3, seed=21)
        chain = sequential_decompose([w], x0, SemiStructured(2, 4), 2, cfg)
        gram = dampen(build_gram(x0), cfg.percdamp, cfg.damp_convention)
        direct = decompose_layer(gram, DenseWeights(w), SemiStructured(2, 4), 2, cfg)
        assert len(chain) == 1
        np.testing.assert_array_equal(chain[0].sparse.values, direct.sparse.values)
        np.testing.assert_array_equal(chain[0].lowrank.u, direct.lowrank.u)

    def test_identity_chain_is_lossless(self):
        x0 = np.random.default_rng(9).standard_normal((20, 4))
        eye = np.eye(4)
        results = sequential_decompose([eye, eye], x0, Dense(), 0, AltMinConfig(t_am=2))
        for res in results:
            assert res.objective_trace[-1].objective_damped == 0.0
            np.testing.assert_array_equal(res.sparse.values, eye)

    def test_second_layer_sees_compressed_activations(self):
        rng = np.random.default_rng(10)
        w1 = rng.standard_normal((8, 6))
        w2 = rng.standard_normal((6, 5))
        x0 = rng.standard_normal((48, 8))
        cfg = AltMinConfig(t_am=3, t_lr=2, seed=5)
        chain = sequential_decompose(
            [w1, w2], x0, [SemiStructured(2, 4), SemiStructured(1, 2)], [2, 1], cfg
        )
        # layer 1 is lossy here, so layer 2 must have been calibrated on the
        # compressed propagation, not the dense one
        compressed1 = chain[0].sparse.values + chain[0].lowrank.product()
        x1 = x0 @ compressed1
        gram2 = dampen(build_gram(x1), cfg.percdamp, cfg.damp_convention)
        cfg2 = AltMinConfig(t_am=3, t_lr=2, seed=6)
        direct = decompose_layer(gram2, DenseWeights(w2), SemiStructured(1, 2), 1, cfg2)
        np.testing.assert_allclose(chain[1].sparse.values, direct.sparse.values, atol=1e-12)
        np.testing.assert_allclose(chain[1].lowrank.product(), direct.lowrank.product(), atol=1e-12)

    def test_relu_propagation(self):
        rng = np.random.default_rng(11)
        w1 = rng.standard_normal((6, 4))
        w2 = rng.standard_normal((4, 3))
        x0 = rng.standard_normal((30, 6))
        cfg = AltMinConfig(t_am=2, t_lr=2, seed=0, nonlinearity="relu")
        chain = sequential_decompose([w1, w2], x0, Dense(), 0, cfg)
        x1 = np.maximum(x0 @ w1, 0.0)  # dense layer 1 is exact, relu applies after it
        gram2 = dampen(build_gram(x1), cfg.percdamp, cfg.damp_convention)
        cfg2 = AltMinConfig(t_am=2, t_lr=2, seed=1, nonlinearity="relu")
        direct = decompose_layer(gram2, DenseWeights(w2), Dense(), 0, cfg2)
        np.testing.assert_allclose(
            chain[1].objective_trace[-1].objective_damped,
            direct.objective_trace[-1].objective_damped,
            atol=1e-12,
        )

    def test_chain_dimension_mismatch_rejected(self):
        rng = np.random.default_rng(12)
        w1 = rng.standard_normal((4, 5))
        w2 = rng.standard_normal((6, 3))  # 5 != 6
        x0 = rng.standard_normal((20, 4))
        with pytest.raises(ContractError):
            sequential_decompose([w1, w2], x0, Dense(), 0, AltMinConfig(t_am=1))
        with pytest.raises(ContractError):
            sequential_decompose([w1], rng.standard_normal((20, 3)), Dense(), 0, AltMinConfig(t_am=1))
        with pytest.raises(ContractError):
            sequential_decompose([w1], x0, [Dense(), Dense()], 0, AltMinConfig(t_am=1))
