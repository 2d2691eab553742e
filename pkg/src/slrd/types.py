"""Shared value types and the layer-wise reconstruction objective.

All matrices are float64 internally. Weight matrices are oriented with
inputs along rows: a layer mapping n_in features to n_out features is
stored as an (n_in, n_out) array, and activations as (samples, n_in).
Instances are immutable; wrapped arrays are marked read-only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np


class SlrdError(Exception):
    """Base class for library errors."""


class ContractError(SlrdError):
    """An argument violates a documented precondition (shape, range, feasibility)."""


class NumericError(SlrdError):
    """A numerical operation failed or produced non-finite values."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def as_matrix(a, name: str, *, dtype=np.float64, require_finite: bool = True) -> np.ndarray:
    """Copy `a` into a fresh 2-d array of `dtype`, validating finiteness."""
    arr = np.array(a, dtype=dtype, copy=True)
    if arr.ndim != 2:
        raise ContractError(f"{name} must be 2-d, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ContractError(f"{name} must have positive dimensions, got {arr.shape}")
    if require_finite and not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class DenseWeights:
    """A dense weight matrix of shape (n_in, n_out)."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _freeze(as_matrix(self.data, "weights")))

    @property
    def n_in(self) -> int:
        return self.data.shape[0]

    @property
    def n_out(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class CalibrationActivations:
    """Calibration inputs of shape (samples, n_in)."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _freeze(as_matrix(self.data, "activations")))

    @property
    def samples(self) -> int:
        return self.data.shape[0]

    @property
    def n_in(self) -> int:
        return self.data.shape[1]


# ---------------------------------------------------------------------------
# sparsity patterns
# ---------------------------------------------------------------------------

_GRANULARITIES = ("per-matrix", "per-column")


@dataclass(frozen=True)
class Dense:
    """No sparsity constraint; every entry may be kept."""


@dataclass(frozen=True)
class Unstructured:
    """Keep at most `k` entries; `granularity` scopes the budget."""

    k: int
    granularity: str = "per-matrix"

    def __post_init__(self):
        if not isinstance(self.k, (int, np.integer)) or isinstance(self.k, bool):
            raise ContractError(f"unstructured budget k must be an int, got {self.k!r}")
        if self.k < 0:
            raise ContractError(f"unstructured budget k must be >= 0, got {self.k}")
        if self.granularity not in _GRANULARITIES:
            raise ContractError(f"granularity must be one of {_GRANULARITIES}, got {self.granularity!r}")


@dataclass(frozen=True)
class SemiStructured:
    """Keep at most `n` entries in each group of `m` consecutive entries.

    Groups run along the input dimension: each group is `m` consecutive
    rows within a single column, so n_in must be divisible by `m`.
    """

    n: int
    m: int

    def __post_init__(self):
        for v, label in ((self.n, "n"), (self.m, "m")):
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool):
                raise ContractError(f"pattern {label} must be an int, got {v!r}")
        if not (1 <= self.n <= self.m):
            raise ContractError(f"semi-structured pattern needs 1 <= n <= m, got {self.n}:{self.m}")


SparsityPattern = Union[Dense, Unstructured, SemiStructured]


def validate_pattern(pattern: SparsityPattern, shape: tuple[int, int]) -> None:
    """Raise ContractError if `pattern` is infeasible for a matrix of `shape`."""
    n_in, n_out = shape
    if isinstance(pattern, Dense):
        return
    if isinstance(pattern, Unstructured):
        limit = n_in * n_out if pattern.granularity == "per-matrix" else n_in
        if pattern.k > limit:
            raise ContractError(
                f"unstructured budget k={pattern.k} exceeds {pattern.granularity} "
                f"capacity {limit} for shape {shape}"
            )
        return
    if isinstance(pattern, SemiStructured):
        if n_in % pattern.m != 0:
            raise ContractError(
                f"semi-structured pattern {pattern.n}:{pattern.m} needs n_in divisible "
                f"by {pattern.m}, got n_in={n_in}"
            )
        return
    raise ContractError(f"unknown sparsity pattern {pattern!r}")


def mask_satisfies(pattern: SparsityPattern, mask: np.ndarray) -> bool:
    """True if the boolean keep-mask obeys `pattern`."""
    mask = np.asarray(mask)
    if mask.ndim != 2 or mask.dtype != np.bool_:
        raise ContractError("mask must be a 2-d boolean array")
    if isinstance(pattern, Dense):
        return True
    if isinstance(pattern, Unstructured):
        if pattern.granularity == "per-matrix":
            return int(mask.sum()) <= pattern.k
        return bool(np.all(mask.sum(axis=0) <= pattern.k))
    if isinstance(pattern, SemiStructured):
        n_in, n_out = mask.shape
        if n_in % pattern.m != 0:
            return False
        groups = mask.reshape(n_in // pattern.m, pattern.m, n_out)
        return bool(np.all(groups.sum(axis=1) <= pattern.n))
    raise ContractError(f"unknown sparsity pattern {pattern!r}")


# ---------------------------------------------------------------------------
# decomposition components
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SparseComponent:
    """Sparse term: explicit values plus the keep-mask that produced them.

    Entries outside the mask are exactly zero.
    """

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        values = as_matrix(self.values, "sparse values")
        mask = np.array(self.mask, copy=True)
        if mask.dtype != np.bool_:
            raise ContractError("sparse mask must be boolean")
        if mask.shape != values.shape:
            raise ContractError(f"mask shape {mask.shape} != values shape {values.shape}")
        if not np.all(values[~mask] == 0.0):
            raise ContractError("sparse values must be exactly zero outside the mask")
        object.__setattr__(self, "values", _freeze(values))
        object.__setattr__(self, "mask", _freeze(mask))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def nonzeros(self) -> int:
        return int(self.mask.sum())

    @classmethod
    def zero(cls, n_in: int, n_out: int) -> "SparseComponent":
        return cls(np.zeros((n_in, n_out)), np.zeros((n_in, n_out), dtype=bool))


@dataclass(frozen=True)
class LowRankFactors:
    """Low-rank term M = U V^T with U (n_in, r) and V (n_out, r)."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.array(self.u, dtype=np.float64, copy=True)
        v = np.array(self.v, dtype=np.float64, copy=True)
        if u.ndim != 2 or v.ndim != 2:
            raise ContractError("factors must be 2-d arrays")
        if u.shape[1] != v.shape[1]:
            raise ContractError(f"factor ranks disagree: U has {u.shape[1]}, V has {v.shape[1]}")
        if u.shape[1] > min(u.shape[0], v.shape[0]):
            raise ContractError(
                f"rank {u.shape[1]} exceeds min dimension {min(u.shape[0], v.shape[0])}"
            )
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise NumericError("factors contain non-finite entries")
        object.__setattr__(self, "u", _freeze(u))
        object.__setattr__(self, "v", _freeze(v))

    @property
    def r(self) -> int:
        return self.u.shape[1]

    @property
    def n_in(self) -> int:
        return self.u.shape[0]

    @property
    def n_out(self) -> int:
        return self.v.shape[0]

    def product(self) -> np.ndarray:
        return self.u @ self.v.T

    @classmethod
    def zero(cls, n_in: int, n_out: int, r: int = 0) -> "LowRankFactors":
        return cls(np.zeros((n_in, r)), np.zeros((n_out, r)))


@dataclass(frozen=True)
class GramHessian:
    """Damped Gram matrix H = X^T X + lam*I with cached factorizations.

    Built by the gram module; `d` is sqrt(diag(H)), `h_inv` the explicit
    inverse and `inv_chol` the lower Cholesky factor of `h_inv` (the form
    the error-compensating pruner consumes).
    """

    h: np.ndarray
    lam: float
    d: np.ndarray
    h_inv: np.ndarray
    inv_chol: np.ndarray

    def __post_init__(self):
        for name in ("h", "h_inv", "inv_chol"):
            arr = as_matrix(getattr(self, name), name)
            if arr.shape[0] != arr.shape[1]:
                raise ContractError(f"{name} must be square, got {arr.shape}")
            object.__setattr__(self, name, _freeze(arr))
        d = np.array(self.d, dtype=np.float64, copy=True)
        if d.ndim != 1 or d.shape[0] != self.h.shape[0]:
            raise ContractError("d must be a vector matching H")
        if not np.all(d > 0):
            raise NumericError("diagonal scaler must be strictly positive")
        object.__setattr__(self, "d", _freeze(d))
        if self.lam < 0:
            raise ContractError(f"damping must be >= 0, got {self.lam}")

    @property
    def n(self) -> int:
        return self.h.shape[0]


@dataclass(frozen=True)
class TraceEntry:
    """Objective after one half-step: P1 = sparse update, P2 = low-rank update."""

    iteration: int
    half_step: str
    objective_damped: float
    objective_raw: float


@dataclass(frozen=True)
class DecompositionResult:
    """Output of an alternating-minimization run."""

    sparse: SparseComponent
    lowrank: LowRankFactors
    objective_trace: tuple[TraceEntry, ...]
    config_echo: dict = field(default_factory=dict)

    def __post_init__(self):
        for entry in self.objective_trace:
            for val in (entry.objective_damped, entry.objective_raw):
                if not np.isfinite(val) or val < 0:
                    raise NumericError(f"objective trace has invalid value {val!r}")
            if entry.half_step not in ("P1", "P2"):
                raise ContractError(f"unknown half-step label {entry.half_step!r}")

    @property
    def final_objective(self) -> float:
        return self.objective_trace[-1].objective_damped


# ---------------------------------------------------------------------------
# objective
# ---------------------------------------------------------------------------


def quad_form(h: np.ndarray, delta: np.ndarray) -> float:
    """Tr(delta^T H delta) without forming the n_out x n_out product."""
    val = float(np.sum(delta * (h @ delta)))
    if not np.isfinite(val):
        raise NumericError("objective evaluated to a non-finite value")
    return val


def _check_dims(gram: GramHessian, w_hat, sparse: SparseComponent, factors: LowRankFactors):
    w = w_hat.data if isinstance(w_hat, DenseWeights) else as_matrix(w_hat, "weights")
    if sparse.shape != w.shape:
        raise ContractError(f"sparse shape {sparse.shape} != weights shape {w.shape}")
    if (factors.n_in, factors.n_out) != w.shape:
        raise ContractError(
            f"factor shapes ({factors.n_in}, {factors.n_out}) != weights shape {w.shape}"
        )
    if gram.n != w.shape[0]:
        raise ContractError(f"Hessian size {gram.n} != n_in {w.shape[0]}")
    return w


def reconstruction_objective(
    gram: GramHessian,
    w_hat: DenseWeights | np.ndarray,
    sparse: SparseComponent,
    factors: LowRankFactors,
) -> float:
    """Tr(Delta^T H Delta) with Delta = W_hat - (W_S + U V^T), under the damped H."""
    w = _check_dims(gram, w_hat, sparse, factors)
    delta = w - sparse.values - factors.product()
    # PD Hessian makes this nonnegative; clamp float dust.
    return max(0.0, quad_form(gram.h, delta))


def objective_pair(
    gram: GramHessian,
    w_hat: DenseWeights | np.ndarray,
    sparse: SparseComponent,
    factors: LowRankFactors,
) -> tuple[float, float]:
    """(damped, raw) objectives; raw removes the lam * ||Delta||_F^2 damping term."""
    w = _check_dims(gram, w_hat, sparse, factors)
    delta = w - sparse.values - factors.product()
    damped = max(0.0, quad_form(gram.h, delta))
    raw = max(0.0, damped - gram.lam * float(np.sum(delta * delta)))
    return damped, raw
