"""Brute-force reference solvers for testing.

Deliberately naive and independent of the production modules: objectives
are evaluated as explicit trace products, supports by exhaustive
enumeration, and restricted refits by dense solves. Nothing here shares
code with the solvers it checks. Sizes are capped so enumeration stays
exact and fast.
"""

from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np

from .types import (
    ContractError,
    Dense,
    SemiStructured,
    SparseComponent,
    SparsityPattern,
    Unstructured,
    as_matrix,
)

MAX_ORACLE_DIM = 8
MAX_SEARCH_DIM = 16


def _objective(h: np.ndarray, delta: np.ndarray) -> float:
    # direct trace evaluation, on purpose not the production path
    return float(np.trace(delta.T @ h @ delta))


def _column_supports(pattern: SparsityPattern, n_in: int):
    """All candidate keep-sets for one column, in deterministic order."""
    if isinstance(pattern, Unstructured):
        size = min(pattern.k, n_in)
        yield from itertools.combinations(range(n_in), size)
        return
    groups = [range(g * pattern.m, (g + 1) * pattern.m) for g in range(n_in // pattern.m)]
    per_group = [list(itertools.combinations(g, pattern.n)) for g in groups]
    for combo in itertools.product(*per_group):
        yield tuple(idx for chosen in combo for idx in chosen)


def exhaustive_sparse_oracle(
    w_tilde, h: np.ndarray, pattern: SparsityPattern
) -> tuple[float, SparseComponent]:
    """Optimal pattern-feasible sparse fit by enumerating every support.

    For each column and support S the restricted minimizer solves
    H[S,S] w_S = H[S,:] w_col; the best support (first found on ties) wins.
    Only column-separable patterns are accepted, and n_in is capped at 8.
    """
    w = as_matrix(w_tilde, "weights")
    h = as_matrix(h, "hessian")
    n_in, n_out = w.shape
    if n_in > MAX_ORACLE_DIM:
        raise ContractError(f"oracle refuses n_in={n_in} > {MAX_ORACLE_DIM}")
    if h.shape != (n_in, n_in):
        raise ContractError(f"hessian shape {h.shape} does not match n_in={n_in}")
    if isinstance(pattern, Dense):
        mask = np.ones(w.shape, dtype=bool)
        return 0.0, SparseComponent(w, mask)
    if isinstance(pattern, Unstructured) and pattern.granularity != "per-column":
        raise ContractError("oracle needs a column-separable pattern (per-column or n:m)")
    if isinstance(pattern, SemiStructured) and n_in % pattern.m != 0:
        raise ContractError(f"n_in={n_in} not divisible by group size {pattern.m}")

    values = np.zeros_like(w)
    mask = np.zeros(w.shape, dtype=bool)
    total = 0.0
    supports = list(_column_supports(pattern, n_in))
    for j in range(n_out):
        col = w[:, j]
        best_val = np.inf
        best_support: tuple[int, ...] = ()
        best_weights = np.zeros(0)
        for support in supports:
            idx = list(support)
            full = np.zeros(n_in)
            if idx:
                restricted = np.linalg.solve(h[np.ix_(idx, idx)], h[idx, :] @ col)
                full[idx] = restricted
            val = float((col - full) @ h @ (col - full))
            if val < best_val:
                best_val = val
                best_support = support
                best_weights = full[idx].copy()
        idx = list(best_support)
        values[idx, j] = best_weights
        mask[idx, j] = True
        total += best_val
    return total, SparseComponent(values, mask)


def random_search_lowrank_oracle(
    w_bar, h: np.ndarray, r: int, trials: int, seed: int
) -> float:
    """Minimum weighted objective over sampled rank-r candidates.

    Candidates alternate between fresh Gaussian factor pairs and random
    invertible recombinations of a diagonal-closed-form guess (which leave
    its product unchanged, so the search is sharp whenever that guess is
    optimal). Returns +inf for trials = 0.
    """
    w = as_matrix(w_bar, "target")
    h = as_matrix(h, "hessian")
    n_in, n_out = w.shape
    if max(n_in, n_out) > MAX_SEARCH_DIM:
        raise ContractError(f"oracle refuses dimensions above {MAX_SEARCH_DIM}, got {w.shape}")
    if h.shape != (n_in, n_in):
        raise ContractError(f"hessian shape {h.shape} does not match n_in={n_in}")
    if r < 0 or r > min(n_in, n_out):
        raise ContractError(f"rank must be in [0, {min(n_in, n_out)}], got {r}")
    if trials < 0:
        raise ContractError(f"trials must be >= 0, got {trials}")
    if trials == 0:
        return np.inf
    if r == 0:
        return _objective(h, w)

    rng = np.random.default_rng(seed)
    d = np.sqrt(np.clip(np.diag(h), 1e-300, None))
    us, ss, vts = np.linalg.svd(d[:, None] * w)
    guess_u = (us[:, :r] * ss[:r]) / d[:, None]
    guess_v = vts[:r].T

    scale = max(float(np.abs(w).max()), 1e-12)
    best = np.inf
    for trial in range(trials):
        if trial % 2 == 0:
            u = rng.standard_normal((n_in, r)) * np.sqrt(scale)
            v = rng.standard_normal((n_out, r)) * np.sqrt(scale)
        else:
            g = rng.standard_normal((r, r))
            while abs(np.linalg.det(g)) < 1e-6:
                g = rng.standard_normal((r, r))
            u = guess_u @ g
            v = guess_v @ np.linalg.inv(g).T
        best = min(best, _objective(h, w - u @ v.T))
    return best


def finite_difference_gradient(
    f: Callable[..., float], mats: Sequence[np.ndarray], eps: float = 1e-6
) -> list[np.ndarray]:
    """Central finite differences of f at `mats`, one gradient per argument."""
    if eps <= 0:
        raise ContractError(f"eps must be > 0, got {eps}")
    base = [np.array(m, dtype=np.float64, copy=True) for m in mats]
    grads = []
    for a, mat in enumerate(base):
        grad = np.zeros_like(mat)
        it = np.nditer(mat, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            plus = [m.copy() for m in base]
            minus = [m.copy() for m in base]
            plus[a][idx] += eps
            minus[a][idx] -= eps
            grad[idx] = (f(*plus) - f(*minus)) / (2.0 * eps)
        grads.append(grad)
    return grads
