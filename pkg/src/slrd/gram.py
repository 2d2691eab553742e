"""Gram/Hessian construction: streamed accumulation, damping, factorization.

The inverse (and both Cholesky factors) are computed once here and cached
on the GramHessian, so downstream solvers never refactorize. A module
counter tracks factorizations; runs over a single layer must show exactly
one.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np
import scipy.linalg

from .types import CalibrationActivations, ContractError, GramHessian, NumericError, as_matrix

GRAM_BLOCK_ROWS = 8192

DAMP_CONVENTIONS = ("mean-diag", "trace")

_inversions = 0


def inversion_count() -> int:
    """Number of Hessian factorizations performed since the last reset."""
    return _inversions


def reset_inversion_count() -> None:
    global _inversions
    _inversions = 0


def accumulate_gram(blocks: Iterable[np.ndarray], n_in: int) -> np.ndarray:
    """Sum X_b^T X_b over row blocks, then symmetrize exactly.

    Accumulation is sequential, so the result is bit-identical for a fixed
    blocking of the same data.
    """
    if n_in < 1:
        raise ContractError(f"n_in must be >= 1, got {n_in}")
    h = np.zeros((n_in, n_in))
    for block in blocks:
        b = np.asarray(block, dtype=np.float64)
        if b.ndim != 2 or b.shape[1] != n_in:
            raise ContractError(f"activation block has shape {b.shape}, expected (*, {n_in})")
        if not np.all(np.isfinite(b)):
            raise NumericError("activation block contains non-finite entries")
        h += b.T @ b
    return (h + h.T) / 2.0


def build_gram(x, block_rows: int = GRAM_BLOCK_ROWS) -> np.ndarray:
    """Raw Gram matrix X^T X from in-memory activations."""
    data = x.data if isinstance(x, CalibrationActivations) else as_matrix(x, "activations")
    if block_rows < 1:
        raise ContractError(f"block_rows must be >= 1, got {block_rows}")
    blocks = (data[i : i + block_rows] for i in range(0, data.shape[0], block_rows))
    return accumulate_gram(blocks, data.shape[1])


def dampen(h: np.ndarray, percdamp: float = 0.01, convention: str = "mean-diag") -> GramHessian:
    """Add lam*I to a raw Gram matrix and factorize.

    lam = percdamp * mean(diag(H)) under the default convention, or
    percdamp * trace(H) under "trace". The damped matrix must be positive
    definite; failure to factorize raises NumericError.
    """
    h = as_matrix(h, "gram matrix")
    n = h.shape[0]
    if h.shape[1] != n:
        raise ContractError(f"gram matrix must be square, got {h.shape}")
    if not np.allclose(h, h.T, rtol=1e-10, atol=1e-12):
        raise ContractError("gram matrix must be symmetric")
    if percdamp <= 0:
        raise ContractError(f"percdamp must be > 0, got {percdamp}")
    if convention not in DAMP_CONVENTIONS:
        raise ContractError(f"damping convention must be one of {DAMP_CONVENTIONS}, got {convention!r}")
    diag_mean = float(np.mean(np.diag(h)))
    lam = percdamp * (diag_mean if convention == "mean-diag" else diag_mean * n)
    if lam <= 0:
        raise NumericError(f"degenerate gram matrix: damping lam={lam} is not positive")
    h = (h + h.T) / 2.0
    damped = h + lam * np.eye(n)
    return _factorize(damped, lam)


def hessian_from_matrix(h: np.ndarray, lam: float = 0.0) -> GramHessian:
    """Wrap an already-damped (or synthetic) PD matrix as a GramHessian."""
    h = as_matrix(h, "hessian")
    if h.shape[0] != h.shape[1]:
        raise ContractError(f"hessian must be square, got {h.shape}")
    if not np.allclose(h, h.T, rtol=1e-10, atol=1e-12):
        raise ContractError("hessian must be symmetric")
    if lam < 0:
        raise ContractError(f"lam must be >= 0, got {lam}")
    return _factorize((h + h.T) / 2.0, float(lam))


def _factorize(damped: np.ndarray, lam: float) -> GramHessian:
    global _inversions
    n = damped.shape[0]
    diag = np.diag(damped)
    try:
        chol = np.linalg.cholesky(damped)
    except np.linalg.LinAlgError as exc:
        raise NumericError(
            f"Cholesky failed on damped Hessian (n={n}, lam={lam:.6g}, "
            f"diag range [{diag.min():.6g}, {diag.max():.6g}]): {exc}"
        ) from exc
    h_inv = scipy.linalg.cho_solve((chol, True), np.eye(n))
    h_inv = (h_inv + h_inv.T) / 2.0
    try:
        inv_chol = np.linalg.cholesky(h_inv)
    except np.linalg.LinAlgError as exc:
        raise NumericError(
            f"Cholesky of the inverse failed (n={n}, lam={lam:.6g}); "
            f"the Hessian is too ill-conditioned"
        ) from exc
    if np.any(diag <= 0):
        raise NumericError("damped Hessian has a non-positive diagonal entry")
    d = np.sqrt(diag)
    _inversions += 1
    return GramHessian(h=damped, lam=lam, d=d, h_inv=h_inv, inv_chol=inv_chol)


def diag_scaler(gram: GramHessian) -> np.ndarray:
    """The diagonal scaling vector d with d_i = sqrt(H_ii)."""
    return gram.d
