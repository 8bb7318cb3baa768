"""Input coercion shared by the estimator layer and the CLI."""

from __future__ import annotations

import numbers

import numpy as np
import scipy.sparse as sp
from sklearn.utils.validation import check_array

from .diffusion import SparseSpd
from .linops import DenseOperator, DimensionError, LinearOperator


def check_operator(a) -> LinearOperator:
    """Accept a LinearOperator, a dense array or a scipy sparse matrix."""
    if isinstance(a, LinearOperator):
        return a
    if sp.issparse(a):
        return DenseOperator(check_array(a, accept_sparse="csr", dtype=float))
    return DenseOperator(check_array(a, dtype=float, ensure_min_samples=1))


def check_data(g, n_rows: int, name: str = "g") -> np.ndarray:
    g = np.asarray(g, dtype=float)
    if g.ndim == 2 and 1 in g.shape:
        g = g.ravel()
    if g.shape != (n_rows,):
        raise DimensionError(f"{name} has shape {g.shape}, expected ({n_rows},)")
    if not np.all(np.isfinite(g)):
        raise ValueError(f"{name} contains NaN or infinite values")
    return g


def check_prior(m, n: int) -> SparseSpd | None:
    """Coerce a prior precision matrix to :class:`SparseSpd` (None stays None)."""
    if m is None:
        return None
    if not isinstance(m, SparseSpd):
        m = SparseSpd.from_matrix(m)
    if m.shape != (n, n):
        raise DimensionError(f"prior has shape {m.shape}, operator has {n} columns")
    return m


def check_scalar(value, name: str, *, low=None, high=None, low_open=False,
                 integer=False):
    """Range-check a hyperparameter and return it unchanged."""
    kind = numbers.Integral if integer else numbers.Real
    if isinstance(value, bool) or not isinstance(value, kind):
        raise TypeError(f"{name} must be {'an integer' if integer else 'a real number'}, "
                        f"got {value!r}")
    if low is not None and (value <= low if low_open else value < low):
        raise ValueError(f"{name} must be {'>' if low_open else '>='} {low}, got {value}")
    if high is not None and value > high:
        raise ValueError(f"{name} must be <= {high}, got {value}")
    return value
