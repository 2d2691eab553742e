"""Parameter budgets: translating compression targets into rank and sparsity."""

from __future__ import annotations

from .types import ContractError, Dense, SemiStructured, SparsityPattern, Unstructured

# tolerance for float dust in budget slack computations
_EPS = 1e-12


class BudgetError(ContractError):
    """The requested compression cannot be met by the given pattern."""


def _check_dims(n_in: int, n_out: int) -> None:
    for v, label in ((n_in, "n_in"), (n_out, "n_out")):
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            raise ContractError(f"{label} must be a positive int, got {v!r}")


def rank_for_fixed_compression(rho: float, n: int, m: int, n_in: int, n_out: int) -> int:
    """Largest rank that keeps n:m sparsity plus factors within (1-rho) of the dense size.

    Solves (n/m) * n_in * n_out + r * (n_in + n_out) <= (1-rho) * n_in * n_out
    for integer r. The n:m mask alone may already exceed the budget, in
    which case no rank is feasible.
    """
    _check_dims(n_in, n_out)
    if not (0.0 <= rho < 1.0):
        raise ContractError(f"rho must be in [0, 1), got {rho}")
    if not (isinstance(n, int) and isinstance(m, int)) or not (1 <= n <= m):
        raise ContractError(f"need integers 1 <= n <= m, got {n}:{m}")
    slack = 1.0 - rho - n / m
    if slack < -_EPS:
        raise BudgetError(
            f"{n}:{m} sparsity alone keeps {n / m:.4g} of the weights, over the "
            f"(1-rho)={1.0 - rho:.4g} budget"
        )
    return int(max(slack, 0.0) * (n_in * n_out) / (n_in + n_out))


def budget_for_rank_ratio(kappa: float, rho: float, n_in: int, n_out: int) -> tuple[int, int]:
    """Split a (1-rho) parameter budget: fraction kappa to the factors, rest to sparsity.

    Returns (r, k) with r = floor(kappa * (1-rho) * n_in * n_out / (n_in + n_out))
    and k = floor((1-kappa) * (1-rho) * n_in * n_out), k a per-matrix count.
    """
    _check_dims(n_in, n_out)
    if not (0.0 <= kappa <= 1.0):
        raise ContractError(f"kappa must be in [0, 1], got {kappa}")
    if not (0.0 <= rho < 1.0):
        raise ContractError(f"rho must be in [0, 1), got {rho}")
    keep = 1.0 - rho
    total = n_in * n_out
    r = int(kappa * keep * total / (n_in + n_out))
    k = int((1.0 - kappa) * keep * total)
    return r, k


def effective_params(pattern: SparsityPattern, r: int, n_in: int, n_out: int) -> int:
    """Stored parameter count of the (pattern, rank) compressed layer."""
    _check_dims(n_in, n_out)
    if not isinstance(r, int) or isinstance(r, bool) or r < 0:
        raise ContractError(f"rank must be an int >= 0, got {r!r}")
    factor_params = r * (n_in + n_out)
    if isinstance(pattern, Dense):
        return n_in * n_out + factor_params
    if isinstance(pattern, Unstructured):
        sparse_params = pattern.k if pattern.granularity == "per-matrix" else pattern.k * n_out
        return sparse_params + factor_params
    if isinstance(pattern, SemiStructured):
        if n_in % pattern.m != 0:
            raise ContractError(
                f"pattern {pattern.n}:{pattern.m} infeasible: n_in={n_in} not divisible"
            )
        return (n_in // pattern.m) * pattern.n * n_out + factor_params
    raise ContractError(f"unknown sparsity pattern {pattern!r}")


def fits_compression(
    pattern: SparsityPattern, r: int, n_in: int, n_out: int, rho: float
) -> bool:
    """True if the compressed layer stores at most (1-rho) of the dense parameters."""
    if not (0.0 <= rho < 1.0):
        raise ContractError(f"rho must be in [0, 1), got {rho}")
    bound = (1.0 - rho) * n_in * n_out
    return effective_params(pattern, r, n_in, n_out) <= bound * (1.0 + _EPS) + _EPS
