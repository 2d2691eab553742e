"""Sparse-subproblem solvers.

Three pruners of increasing Hessian awareness:

  * magnitude      -- score |w|; exact when the Hessian is a multiple of I.
  * wanda          -- score d_i * |w_ij| with d = sqrt(diag(H)); exact for
                      diagonal Hessians, keeps surviving weights unchanged.
  * obs            -- blocked sweep along the input dimension that zeroes
                      low-saliency weights and folds the induced error into
                      the not-yet-processed rows via the Cholesky factor of
                      H^-1 (SparseGPT-style error compensation).

All support selections break score ties toward the lowest flat (row-major)
index, which keeps every pruner deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .types import (
    ContractError,
    Dense,
    GramHessian,
    SemiStructured,
    SparseComponent,
    SparsityPattern,
    Unstructured,
    as_matrix,
    validate_pattern,
)


@dataclass(frozen=True)
class Magnitude:
    """Keep the largest-magnitude weights; ignores the Hessian."""


@dataclass(frozen=True)
class Wanda:
    """Activation-scaled magnitude scores; no weight update."""


@dataclass(frozen=True)
class OBS:
    """Error-compensating sweep; `blocksize` rows are processed per block."""

    blocksize: int = 128

    def __post_init__(self):
        if self.blocksize < 1:
            raise ContractError(f"blocksize must be >= 1, got {self.blocksize}")


PrunerKind = Union[Magnitude, Wanda, OBS]


# ---------------------------------------------------------------------------
# support selection
# ---------------------------------------------------------------------------


def _keep_flat(scores: np.ndarray, k: int) -> np.ndarray:
    """Keep the k largest scores over the whole array."""
    flat = scores.ravel()
    keep = np.zeros(flat.size, dtype=bool)
    if k >= flat.size:
        keep[:] = True
    elif k > 0:
        order = np.argsort(-flat, kind="stable")
        keep[order[:k]] = True
    return keep.reshape(scores.shape)


def _keep_per_column(scores: np.ndarray, k: int) -> np.ndarray:
    """Keep the k largest scores in every column."""
    n_in, _ = scores.shape
    keep = np.zeros(scores.shape, dtype=bool)
    if k >= n_in:
        keep[:] = True
    elif k > 0:
        order = np.argsort(-scores, axis=0, kind="stable")
        np.put_along_axis(keep, order[:k], True, axis=0)
    return keep


def _keep_per_column_quota(scores: np.ndarray, k_vec: np.ndarray) -> np.ndarray:
    """Keep the k_vec[j] largest scores in column j."""
    order = np.argsort(-scores, axis=0, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.arange(scores.shape[0])[:, None], axis=0)
    return ranks < k_vec[None, :]


def _keep_groups(scores: np.ndarray, n: int, m: int) -> np.ndarray:
    """Keep the n largest scores inside every group of m consecutive rows."""
    n_in, n_out = scores.shape
    grouped = scores.reshape(n_in // m, m, n_out)
    order = np.argsort(-grouped, axis=1, kind="stable")
    keep = np.zeros(grouped.shape, dtype=bool)
    np.put_along_axis(keep, order[:, :n], True, axis=1)
    return keep.reshape(n_in, n_out)


def select_support(scores: np.ndarray, pattern: SparsityPattern) -> np.ndarray:
    """Boolean keep-mask of the highest-scoring entries satisfying `pattern`."""
    scores = np.asarray(scores, dtype=np.float64)
    validate_pattern(pattern, scores.shape)
    if isinstance(pattern, Dense):
        return np.ones(scores.shape, dtype=bool)
    if isinstance(pattern, Unstructured):
        if pattern.granularity == "per-matrix":
            return _keep_flat(scores, pattern.k)
        return _keep_per_column(scores, pattern.k)
    return _keep_groups(scores, pattern.n, pattern.m)


# ---------------------------------------------------------------------------
# pruners
# ---------------------------------------------------------------------------


def prune_magnitude(w_tilde, pattern: SparsityPattern) -> SparseComponent:
    """Keep the largest |w| under `pattern`; surviving values are unchanged."""
    w = as_matrix(w_tilde, "weights")
    mask = select_support(np.abs(w), pattern)
    return SparseComponent(np.where(mask, w, 0.0), mask)


def prune_wanda(w_tilde, d: np.ndarray, pattern: SparsityPattern) -> SparseComponent:
    """Keep the largest d_i * |w_ij| under `pattern`; no weight update.

    For a diagonal Hessian D^2 the zeroing cost of entry (i, j) is exactly
    (d_i w_ij)^2, so this selection is optimal there.
    """
    w = as_matrix(w_tilde, "weights")
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 1 or d.shape[0] != w.shape[0]:
        raise ContractError(f"scaler d has shape {d.shape}, expected ({w.shape[0]},)")
    if not np.all(np.isfinite(d)) or np.any(d <= 0):
        raise ContractError("scaler d must be finite and strictly positive")
    mask = select_support(np.abs(w) * d[:, None], pattern)
    return SparseComponent(np.where(mask, w, 0.0), mask)


def prune_obs(
    w_tilde,
    gram: GramHessian,
    pattern: SparsityPattern,
    blocksize: int = 128,
) -> SparseComponent:
    """Blocked error-compensating prune against the full damped Hessian.

    Sweeps input rows left to right in blocks. When a weight is zeroed, the
    induced reconstruction error err = w / L_ii (L the lower Cholesky factor
    of H^-1) is subtracted from later rows via the corresponding column of
    L, which is what makes the surviving weights re-fit the target. Saliency
    for selection is (w / L_ii)^2.

    Semi-structured groups are decided as the sweep reaches them, using the
    already-compensated weights; blocks are group-aligned. Unstructured
    budgets are split across blocks by ranking the pre-sweep saliencies
    globally; each block then re-selects its share from the compensated
    weights. With isotropic H the compensation vanishes and the whole sweep
    collapses to plain magnitude pruning, masks and values alike.
    """
    w = as_matrix(w_tilde, "weights")
    validate_pattern(pattern, w.shape)
    n_in, n_out = w.shape
    if gram.n != n_in:
        raise ContractError(f"Hessian size {gram.n} != n_in {n_in}")
    if isinstance(pattern, Dense):
        return SparseComponent(w, np.ones(w.shape, dtype=bool))
    if blocksize < 1:
        raise ContractError(f"blocksize must be >= 1, got {blocksize}")

    L = gram.inv_chol
    ld = np.ascontiguousarray(np.diag(L))

    bs = int(blocksize)
    if isinstance(pattern, SemiStructured):
        m = pattern.m
        bs = max(m, ((bs + m - 1) // m) * m)  # keep groups inside one block

    if isinstance(pattern, Unstructured):
        planned = select_support((w / ld[:, None]) ** 2, pattern)

    wk = w.copy()
    keep = np.ones(w.shape, dtype=bool)

    for i1 in range(0, n_in, bs):
        i2 = min(i1 + bs, n_in)
        cnt = i2 - i1
        zero_block = np.zeros((cnt, n_out), dtype=bool)

        if isinstance(pattern, Unstructured):
            # this block's keep budget comes from the pre-sweep global plan
            sal = (wk[i1:i2] / ld[i1:i2, None]) ** 2
            if pattern.granularity == "per-matrix":
                zero_block = ~_keep_flat(sal, int(planned[i1:i2].sum()))
            else:
                zero_block = ~_keep_per_column_quota(sal, planned[i1:i2].sum(axis=0))

        err_block = np.empty((cnt, n_out))
        for i in range(cnt):
            gi = i1 + i
            if isinstance(pattern, SemiStructured) and gi % pattern.m == 0:
                gsal = (wk[gi : gi + pattern.m] / ld[gi : gi + pattern.m, None]) ** 2
                zero_block[i : i + pattern.m] = ~_keep_groups(gsal, pattern.n, pattern.m)
            row = wk[gi].copy()
            q = np.where(zero_block[i], 0.0, row)
            err = (row - q) / ld[gi]
            wk[gi:i2] -= np.outer(L[gi:i2, gi], err)
            wk[gi] = q
            err_block[i] = err
            keep[gi] = ~zero_block[i]
        if i2 < n_in:
            wk[i2:] -= L[i2:, i1:i2] @ err_block

    return SparseComponent(np.where(keep, wk, 0.0), keep)


def run_pruner(
    kind: PrunerKind,
    w_tilde,
    gram: GramHessian,
    pattern: SparsityPattern,
) -> SparseComponent:
    """Dispatch on the pruner kind; the uniform entry point the AM loop uses."""
    if isinstance(kind, Magnitude):
        return prune_magnitude(w_tilde, pattern)
    if isinstance(kind, Wanda):
        return prune_wanda(w_tilde, gram.d, pattern)
    if isinstance(kind, OBS):
        return prune_obs(w_tilde, gram, pattern, blocksize=kind.blocksize)
    raise ContractError(f"unknown pruner kind {kind!r}")
