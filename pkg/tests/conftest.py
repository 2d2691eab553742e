"""Shared instance generators.

The correlated-activation generator is the workhorse for the solver
comparisons: it produces Gram matrices whose condition number is large
(>= 1e4) through per-column scale spread, not just rotation, so diagonal
preconditioning has real work to do.
"""

import numpy as np

from slrd import gram as gram_mod


def correlated_activations(seed: int, n_in: int = 64, samples: int = 256) -> np.ndarray:
    """Activations with AR(1) column correlation and a two-decade scale spread.

    Normalized by sqrt(max diag of X^T X) so rescaled coordinates never blow
    up relative to the raw ones.
    """
    rng = np.random.default_rng(seed)
    idx = np.arange(n_in)
    k = 0.9 ** np.abs(np.subtract.outer(idx, idx))
    x = rng.standard_normal((samples, n_in)) @ np.linalg.cholesky(k).T
    x *= np.logspace(0.0, -2.0, n_in)[rng.permutation(n_in)][None, :]
    x /= np.sqrt((x * x).sum(axis=0).max())
    return x


def random_pd_matrix(rng: np.random.Generator, n: int, jitter: float = 0.1) -> np.ndarray:
    """A generic symmetric positive definite matrix, moderately conditioned."""
    a = rng.standard_normal((n + 4, n))
    h = a.T @ a / (n + 4)
    return h + jitter * np.eye(n)


def damped_gram(x: np.ndarray, percdamp: float = 0.01):
    return gram_mod.dampen(gram_mod.build_gram(x), percdamp)
