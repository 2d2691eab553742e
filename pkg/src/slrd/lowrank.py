"""Low-rank-subproblem solvers.

Closed forms for identity and diagonal Hessians (truncated SVD and its
diagonally reweighted variant), plus factored first-order descent for the
general case, optionally run in diagonally preconditioned coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal, Optional

import numpy as np

from .types import ContractError, GramHessian, LowRankFactors, NumericError, as_matrix, quad_form

OptimizerKind = Literal["adam", "sgd"]

Observer = Callable[[int, np.ndarray, np.ndarray, float], None]


def _svd_sign_fixed(a: np.ndarray):
    """SVD with a deterministic sign convention.

    Each right singular vector is flipped so its first entry of nontrivial
    magnitude is positive; the matching left vector flips with it.
    """
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"SVD failed to converge: {exc}") from exc
    for j in range(vt.shape[0]):
        row = vt[j]
        tol = 1e-12 * max(np.abs(row).max(), 1e-300)
        idx = int(np.argmax(np.abs(row) > tol))
        if row[idx] < 0:
            vt[j] = -row
            u[:, j] = -u[:, j]
    return u, s, vt


def truncated_svd(w_bar, r: int) -> LowRankFactors:
    """Best rank-r approximation in the Frobenius norm, singular values folded into U."""
    w = as_matrix(w_bar, "target")
    if not isinstance(r, (int, np.integer)) or isinstance(r, bool):
        raise ContractError(f"rank must be an int, got {r!r}")
    if r < 0 or r > min(w.shape):
        raise ContractError(f"rank must be in [0, {min(w.shape)}], got {r}")
    if r == 0:
        return LowRankFactors.zero(w.shape[0], w.shape[1], 0)
    u, s, vt = _svd_sign_fixed(w)
    return LowRankFactors(u[:, :r] * s[:r], vt[:r].T)


def diag_weighted_lowrank(w_bar, d: np.ndarray, r: int) -> LowRankFactors:
    """Exact minimizer of Tr((W - M)^T D^2 (W - M)) over rank-r M.

    Substituting M' = D M turns the problem into plain truncation of D W,
    so the minimizer is D^-1 C_r(D W) with C_r the rank-r SVD truncation.
    """
    w = as_matrix(w_bar, "target")
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 1 or d.shape[0] != w.shape[0]:
        raise ContractError(f"scaler d has shape {d.shape}, expected ({w.shape[0]},)")
    if not np.all(np.isfinite(d)) or np.any(d <= 0):
        raise ContractError("scaler d must be finite and strictly positive")
    scaled = truncated_svd(d[:, None] * w, r)
    return LowRankFactors(scaled.u / d[:, None], scaled.v)


# ---------------------------------------------------------------------------
# first-order descent
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    """First/second moment accumulators; `t` counts completed steps."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, shape) -> "AdamState":
        return cls(np.zeros(shape), np.zeros(shape), 0)


def adam_step(
    param: np.ndarray,
    grad: np.ndarray,
    state: AdamState,
    eta: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[np.ndarray, AdamState]:
    """One Adam update; returns the new parameter and advanced state."""
    if param.shape != grad.shape or param.shape != state.m.shape:
        raise ContractError("adam_step: parameter, gradient and state shapes must agree")
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * grad
    v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    new_param = param - eta * m_hat / (np.sqrt(v_hat) + eps)
    return new_param, AdamState(m, v, t)


def lowrank_gradients(h: np.ndarray, w_target: np.ndarray, u: np.ndarray, v: np.ndarray):
    """Analytic gradients of Tr((W - U V^T)^T H (W - U V^T)) in U and V."""
    delta = w_target - u @ v.T
    hd = h @ delta
    return -2.0 * hd @ v, -2.0 * hd.T @ u


def lowrank_gd(
    h: np.ndarray,
    w_target,
    u_init: np.ndarray,
    v_init: np.ndarray,
    t_lr: int,
    eta: float,
    optimizer: OptimizerKind = "adam",
    observer: Optional[Observer] = None,
) -> LowRankFactors:
    """Minimize the weighted objective over factors (U, V) by joint descent.

    Optimizer state starts fresh on every call; warm starting happens only
    through `u_init`/`v_init`. The iterate with the lowest observed
    objective is returned, so the result is never worse than the start.
    The observer, if given, sees (iteration, u, v, objective) for iteration
    0 (the start) through t_lr.
    """
    w = as_matrix(w_target, "target")
    h = as_matrix(h, "hessian")
    if h.shape != (w.shape[0], w.shape[0]):
        raise ContractError(f"hessian shape {h.shape} does not match target {w.shape}")
    u = np.array(u_init, dtype=np.float64, copy=True)
    v = np.array(v_init, dtype=np.float64, copy=True)
    if u.ndim != 2 or v.ndim != 2 or u.shape[1] != v.shape[1]:
        raise ContractError("u_init and v_init must be 2-d with a common rank")
    if u.shape[0] != w.shape[0] or v.shape[0] != w.shape[1]:
        raise ContractError("factor shapes do not match the target")
    if t_lr < 1:
        raise ContractError(f"t_lr must be >= 1, got {t_lr}")
    if eta <= 0:
        raise ContractError(f"eta must be > 0, got {eta}")
    if optimizer not in ("adam", "sgd"):
        raise ContractError(f"unknown optimizer {optimizer!r}")

    su = AdamState.zeros(u.shape)
    sv = AdamState.zeros(v.shape)
    best_obj = np.inf
    best = (u, v)
    for it in range(t_lr + 1):
        delta = w - u @ v.T
        hd = h @ delta
        obj = float(np.sum(delta * hd))
        if not np.isfinite(obj):
            raise NumericError(f"objective diverged at descent iteration {it}")
        if obj < best_obj:
            best_obj = obj
            best = (u, v)
        if observer is not None:
            observer(it, u, v, obj)
        if it == t_lr:
            break
        gu = -2.0 * hd @ v
        gv = -2.0 * hd.T @ u
        if not (np.all(np.isfinite(gu)) and np.all(np.isfinite(gv))):
            raise NumericError(f"non-finite gradient at descent iteration {it + 1}")
        if optimizer == "adam":
            u, su = adam_step(u, gu, su, eta)
            v, sv = adam_step(v, gv, sv, eta)
        else:
            u = u - eta * gu
            v = v - eta * gv
    return LowRankFactors(best[0], best[1])


def lowrank_gd_scaled(
    gram: GramHessian,
    w_target,
    factors_prev: LowRankFactors,
    t_lr: int,
    eta: float,
    optimizer: OptimizerKind = "adam",
    observer: Optional[Observer] = None,
) -> LowRankFactors:
    """Run lowrank_gd in diagonally rescaled coordinates.

    With d = sqrt(diag(H)) the problem is mapped to the effective Hessian
    D^-1 H D^-1 (unit diagonal) and target D W, warm-started at (D U, V);
    the solution maps back through U = D^-1 U'. Objectives agree exactly
    between the two coordinate systems at every iterate, and D = I
    reproduces the unscaled trajectory bit for bit.
    """
    w = as_matrix(w_target, "target")
    if gram.n != w.shape[0]:
        raise ContractError(f"Hessian size {gram.n} != n_in {w.shape[0]}")
    d = gram.d
    scale = d[:, None]
    h_eff = gram.h / np.outer(d, d)
    result = lowrank_gd(
        h_eff,
        scale * w,
        scale * factors_prev.u,
        factors_prev.v,
        t_lr,
        eta,
        optimizer=optimizer,
        observer=observer,
    )
    return LowRankFactors(result.u / scale, result.v)


def numeric_rank(a: np.ndarray, rtol: float = 1e-10) -> int:
    """Count singular values above rtol * sigma_max."""
    a = as_matrix(a, "matrix")
    s = np.linalg.svd(a, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))
