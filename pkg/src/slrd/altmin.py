"""Alternating minimization between the sparse and low-rank subproblems.

One outer iteration prunes the low-rank-corrected weights (P1), then
refits the low-rank factors against the sparse-corrected weights (P2)
with a decaying step size. Both half-step objectives are recorded under
the damped Hessian, with the undamped Gram value alongside.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .gram import DAMP_CONVENTIONS, build_gram, dampen
from .lowrank import diag_weighted_lowrank, lowrank_gd, lowrank_gd_scaled, truncated_svd
from .pruners import OBS, PrunerKind, Wanda, run_pruner
from .types import (
    CalibrationActivations,
    ContractError,
    DecompositionResult,
    DenseWeights,
    GramHessian,
    LowRankFactors,
    SparseComponent,
    SparsityPattern,
    TraceEntry,
    objective_pair,
    validate_pattern,
)

LOWRANK_MODES = ("gd", "diag", "svd")
NONLINEARITIES = ("identity", "relu")

StepObserver = Callable[[int, str, SparseComponent, LowRankFactors], None]


@dataclass(frozen=True)
class AltMinConfig:
    """Hyperparameters for one decomposition run.

    Defaults are the reference setting: error-compensating pruner, scaled
    first-order low-rank refits, 80 outer iterations of 50 descent steps
    at base step size 1e-2, damping at 1% of the mean Gram diagonal.
    """

    t_am: int = 80
    t_lr: int = 50
    eta: float = 1e-2
    pruner: PrunerKind = OBS()
    lowrank_mode: str = "gd"
    is_scaled: bool = True
    percdamp: float = 0.01
    damp_convention: str = "mean-diag"
    seed: int = 0
    nonlinearity: str = "identity"

    def __post_init__(self):
        if self.t_am < 1:
            raise ContractError(f"t_am must be >= 1, got {self.t_am}")
        if self.t_lr < 1:
            raise ContractError(f"t_lr must be >= 1, got {self.t_lr}")
        if self.eta <= 0:
            raise ContractError(f"eta must be > 0, got {self.eta}")
        if self.lowrank_mode not in LOWRANK_MODES:
            raise ContractError(f"lowrank_mode must be one of {LOWRANK_MODES}, got {self.lowrank_mode!r}")
        if self.percdamp <= 0:
            raise ContractError(f"percdamp must be > 0, got {self.percdamp}")
        if self.damp_convention not in DAMP_CONVENTIONS:
            raise ContractError(f"unknown damping convention {self.damp_convention!r}")
        if self.nonlinearity not in NONLINEARITIES:
            raise ContractError(f"nonlinearity must be one of {NONLINEARITIES}, got {self.nonlinearity!r}")


def get_lr(t: int, eta: float) -> float:
    """Step size for outer iteration t >= 1: eta / (t + 10)."""
    if not isinstance(t, (int, np.integer)) or isinstance(t, bool) or t < 1:
        raise ContractError(f"iteration index must be an int >= 1, got {t!r}")
    if eta <= 0:
        raise ContractError(f"eta must be > 0, got {eta}")
    return eta / (t + 10)


def _init_factors(n_in: int, n_out: int, r: int, seed: int) -> LowRankFactors:
    # U starts at zero so the first prune sees the raw weights; V is a
    # seeded Gaussian with std 1/sqrt(r) to keep ||U V^T|| scale-free.
    if r == 0:
        return LowRankFactors.zero(n_in, n_out, 0)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((n_out, r)) / np.sqrt(r)
    return LowRankFactors(np.zeros((n_in, r)), v)


def decompose_layer(
    gram: GramHessian,
    weights: DenseWeights,
    pattern: SparsityPattern,
    rank: int,
    config: AltMinConfig = AltMinConfig(),
    observer: Optional[StepObserver] = None,
) -> DecompositionResult:
    """Decompose one layer into a pattern-feasible sparse term plus rank-<=rank factors.

    The Hessian arrives already damped and factorized; this loop performs
    no further factorizations. The observer, if given, is called after
    every half-step with (iteration, "P1"|"P2", sparse, factors).
    """
    if not isinstance(weights, DenseWeights):
        weights = DenseWeights(weights)
    w_hat = weights.data
    n_in, n_out = w_hat.shape
    if gram.n != n_in:
        raise ContractError(f"Hessian size {gram.n} != n_in {n_in}")
    validate_pattern(pattern, (n_in, n_out))
    if not isinstance(rank, (int, np.integer)) or isinstance(rank, bool):
        raise ContractError(f"rank must be an int, got {rank!r}")
    if rank < 0 or rank > min(n_in, n_out):
        raise ContractError(f"rank must be in [0, {min(n_in, n_out)}], got {rank}")

    factors = _init_factors(n_in, n_out, rank, config.seed)
    sparse = SparseComponent.zero(n_in, n_out)
    trace: list[TraceEntry] = []

    def record(t: int, half_step: str) -> None:
        damped, raw = objective_pair(gram, w_hat, sparse, factors)
        trace.append(TraceEntry(t, half_step, damped, raw))
        if observer is not None:
            observer(t, half_step, sparse, factors)

    for t in range(1, config.t_am + 1):
        w_tilde = w_hat - factors.product()
        sparse = run_pruner(config.pruner, w_tilde, gram, pattern)
        record(t, "P1")

        if rank > 0:
            eta_t = get_lr(t, config.eta)
            w_bar = w_hat - sparse.values
            if config.lowrank_mode == "gd":
                if config.is_scaled:
                    factors = lowrank_gd_scaled(gram, w_bar, factors, config.t_lr, eta_t)
                else:
                    factors = lowrank_gd(
                        gram.h, w_bar, factors.u, factors.v, config.t_lr, eta_t
                    )
            elif config.lowrank_mode == "diag":
                factors = diag_weighted_lowrank(w_bar, gram.d, rank)
            else:
                factors = truncated_svd(w_bar, rank)
        record(t, "P2")

    echo = {
        "t_am": config.t_am,
        "t_lr": config.t_lr,
        "eta": config.eta,
        "pruner": type(config.pruner).__name__.lower(),
        "lowrank_mode": config.lowrank_mode,
        "is_scaled": config.is_scaled,
        "percdamp": config.percdamp,
        "damp_convention": config.damp_convention,
        "seed": config.seed,
        "lam": gram.lam,
        "pattern": repr(pattern),
        "rank": rank,
    }
    return DecompositionResult(sparse, factors, tuple(trace), echo)


def oats_baseline(
    gram: GramHessian,
    weights: DenseWeights,
    pattern: SparsityPattern,
    rank: int,
    t_am: int = 80,
    observer: Optional[StepObserver] = None,
) -> DecompositionResult:
    """Diagonal-surrogate baseline: Wanda pruning alternated with the diagonal closed form.

    This is decompose_layer with pruner=Wanda and lowrank_mode="diag"; both
    half-steps exactly minimize the surrogate Tr(Delta^T D^2 Delta), so the
    surrogate objective never increases.
    """
    cfg = AltMinConfig(t_am=t_am, pruner=Wanda(), lowrank_mode="diag")
    return decompose_layer(gram, weights, pattern, rank, cfg, observer=observer)


def _apply_nonlinearity(x: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(x, 0.0)
    return x


def sequential_decompose(
    layers: Sequence[DenseWeights],
    x0: CalibrationActivations,
    patterns,
    ranks,
    config: AltMinConfig = AltMinConfig(),
) -> list[DecompositionResult]:
    """Decompose a chain of layers, propagating compressed activations.

    Layer l+1 is calibrated on the outputs of the already-compressed layers
    1..l (not the dense originals), so its Hessian reflects upstream
    compression error. `patterns`/`ranks` may be single values broadcast to
    every layer or per-layer sequences. Layer l uses seed config.seed + l.
    """
    layers = [w if isinstance(w, DenseWeights) else DenseWeights(w) for w in layers]
    if not layers:
        raise ContractError("sequential_decompose needs at least one layer")
    if not isinstance(x0, CalibrationActivations):
        x0 = CalibrationActivations(x0)

    n_layers = len(layers)
    if not isinstance(patterns, (list, tuple)):
        patterns = [patterns] * n_layers
    if not isinstance(ranks, (list, tuple)):
        ranks = [ranks] * n_layers
    if len(patterns) != n_layers or len(ranks) != n_layers:
        raise ContractError("patterns and ranks must match the number of layers")

    if x0.n_in != layers[0].n_in:
        raise ContractError(f"activations width {x0.n_in} != first layer n_in {layers[0].n_in}")
    for l in range(n_layers - 1):
        if layers[l].n_out != layers[l + 1].n_in:
            raise ContractError(
                f"layer {l} n_out {layers[l].n_out} != layer {l + 1} n_in {layers[l + 1].n_in}"
            )

    x = x0.data
    results: list[DecompositionResult] = []
    for l, weights in enumerate(layers):
        gram = dampen(build_gram(x), config.percdamp, config.damp_convention)
        layer_cfg = replace(config, seed=config.seed + l)
        res = decompose_layer(gram, weights, patterns[l], ranks[l], layer_cfg)
        results.append(res)
        compressed = res.sparse.values + res.lowrank.product()
        x = _apply_nonlinearity(x @ compressed, config.nonlinearity)
    return results
