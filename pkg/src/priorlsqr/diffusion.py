"""Edge-based discretization of the inhomogeneous diffusion operator.

For every grid edge ``e = (i, j)`` with spacing ``h_e`` the difference
quotient ``d_e = (f_j - f_i) / h_e`` is formed. The discrete penalty is
``R(f) = sum_e w_e r(|d_e|)`` and its exact gradient is ``M_f f`` with

    M_f = sum_e (w_e c(|d_e|) / h_e^2) (e_i - e_j)(e_i - e_j)^T,

so the preconditioner and the penalty share one code path. Boundaries are
Neumann (no edges leave the grid), so the unshifted matrix annihilates
constants; ``epsilon`` is added to the diagonal to make it definite.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .penalty import PenaltySpec, diffusivity, r_value

__all__ = [
    "Grid",
    "SparseSpd",
    "EPSILON_FACTOR",
    "default_epsilon",
    "assemble_m",
    "penalty_functional",
    "penalty_gradient",
]

EPSILON_FACTOR = 1e-8


@dataclass(frozen=True)
class Grid:
    """Regular 1-D or 2-D grid with uniform spacing per axis.

    Nodes are ordered C-style (last axis fastest).
    """

    shape: tuple[int, ...]
    spacing: tuple[float, ...]

    def __post_init__(self):
        shape = tuple(int(s) for s in np.atleast_1d(self.shape))
        spacing = tuple(float(h) for h in np.atleast_1d(self.spacing))
        if len(shape) not in (1, 2):
            raise ValueError("only 1-D and 2-D grids are supported")
        if len(spacing) == 1 and len(shape) == 2:
            spacing = spacing * 2
        if len(spacing) != len(shape):
            raise ValueError("spacing must have one entry per axis")
        if min(shape) < 2:
            raise ValueError("every grid extent must be at least 2")
        if min(spacing) <= 0:
            raise ValueError("grid spacing must be positive")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "spacing", spacing)

    @classmethod
    def regular(cls, shape, lengths=1.0) -> "Grid":
        """Cell-centred grid covering ``[0, L]`` per axis with ``h = L / n``."""
        shape = tuple(int(s) for s in np.atleast_1d(shape))
        lengths = np.broadcast_to(np.asarray(lengths, dtype=float), (len(shape),))
        return cls(shape, tuple(L / n for L, n in zip(lengths, shape)))

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def coordinates(self) -> list[np.ndarray]:
        """Cell-centre coordinates per axis."""
        return [(np.arange(n) + 0.5) * h for n, h in zip(self.shape, self.spacing)]

    @cached_property
    def edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """``(i, j, h_e, w_e)`` arrays, one entry per nearest-neighbour edge."""
        idx = np.arange(self.size).reshape(self.shape)
        w = self.cell_volume
        heads, tails, hs = [], [], []
        for axis, h in enumerate(self.spacing):
            lo = [slice(None)] * self.ndim
            hi = [slice(None)] * self.ndim
            lo[axis] = slice(0, -1)
            hi[axis] = slice(1, None)
            heads.append(idx[tuple(lo)].ravel())
            tails.append(idx[tuple(hi)].ravel())
            hs.append(np.full(heads[-1].size, h))
        i = np.concatenate(heads)
        j = np.concatenate(tails)
        h_e = np.concatenate(hs)
        w_e = np.full(i.size, w)
        for a in (i, j, h_e, w_e):
            a.setflags(write=False)
        return i, j, h_e, w_e


@dataclass(frozen=True, eq=False)
class SparseSpd:
    """Symmetric positive (semi)definite CSR matrix plus its diagonal shift.

    ``matrix`` already contains the shift ``epsilon``.
    """

    matrix: sp.csr_matrix
    epsilon: float = 0.0
    _unshifted_diag_max: float = field(default=0.0, repr=False)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def matvec(self, x) -> np.ndarray:
        return self.matrix @ np.asarray(x, dtype=float)

    def __matmul__(self, x):
        return self.matvec(x)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    @classmethod
    def from_matrix(cls, matrix, epsilon: float = 0.0) -> "SparseSpd":
        """Wrap an explicit symmetric matrix, adding ``epsilon`` to its diagonal."""
        m = sp.csr_matrix(matrix, dtype=float)
        if m.shape[0] != m.shape[1]:
            raise ValueError("matrix must be square")
        if abs(m - m.T).max() > 0:
            raise ValueError("matrix must be symmetric")
        diag_max = float(m.diagonal().max())
        if epsilon:
            m = (m + epsilon * sp.identity(m.shape[0], format="csr")).tocsr()
        return cls(m, float(epsilon), diag_max)


def default_epsilon(diag_max: float) -> float:
    return EPSILON_FACTOR * diag_max


def _differences(grid: Grid, f):
    f = np.asarray(f, dtype=float)
    if f.shape != (grid.size,):
        raise ValueError(
            f"f has shape {f.shape}, grid has {grid.size} nodes")
    i, j, h_e, w_e = grid.edges
    return (f[j] - f[i]) / h_e, i, j, h_e, w_e


def assemble_m(grid: Grid, f, spec: PenaltySpec, epsilon: float | None = 0.0) -> SparseSpd:
    """Assemble ``M_f + epsilon I``.

    ``epsilon=None`` selects ``1e-8`` times the largest unshifted diagonal
    entry.
    """
    d, i, j, h_e, w_e = _differences(grid, f)
    k = w_e * diffusivity(spec, np.abs(d)) / h_e**2
    n = grid.size
    diag = np.bincount(i, weights=k, minlength=n) + np.bincount(j, weights=k, minlength=n)
    diag_max = float(diag.max())
    if epsilon is None:
        epsilon = default_epsilon(diag_max)
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    rows = np.concatenate([np.arange(n), i, j])
    cols = np.concatenate([np.arange(n), j, i])
    vals = np.concatenate([diag + epsilon, -k, -k])
    m = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    m.sort_indices()
    return SparseSpd(m, float(epsilon), diag_max)


def penalty_functional(grid: Grid, f, spec: PenaltySpec) -> float:
    d, _, _, _, w_e = _differences(grid, f)
    return float(np.sum(w_e * r_value(spec, np.abs(d))))


def penalty_gradient(grid: Grid, f, spec: PenaltySpec) -> np.ndarray:
    """Exact gradient of :func:`penalty_functional`, computed as ``M_f f``."""
    m = assemble_m(grid, f, spec, 0.0)
    return m.matvec(f)
