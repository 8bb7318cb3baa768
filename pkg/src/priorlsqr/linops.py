"""Matrix-free linear operators.

Every operator exposes ``shape = (n_rows, n_cols)`` together with
:meth:`LinearOperator.apply` and :meth:`LinearOperator.apply_adjoint`.
Operators are immutable after construction, so one instance may be shared
between threads.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

__all__ = [
    "DimensionError",
    "LinearOperator",
    "DenseOperator",
    "IdentityOperator",
    "ScaledOperator",
    "GaussianConvolution1D",
    "SeparableBlur2D",
    "gaussian_kernel",
    "make_gaussian_convolution",
    "apply",
    "apply_adjoint",
    "adjoint_probe",
]

KERNEL_RADIUS = 6.0


class DimensionError(ValueError):
    """Raised when a vector does not match the operator it is fed to."""


class LinearOperator:
    """Base class for a real linear map ``R^n_cols -> R^n_rows``.

    Subclasses implement ``_apply`` and ``_apply_adjoint`` on validated
    1-D float arrays.
    """

    shape: tuple[int, int]

    def _apply(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _apply_adjoint(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def apply(self, x) -> np.ndarray:
        x = _as_vector(x, self.shape[1], "x")
        return self._apply(x)

    def apply_adjoint(self, y) -> np.ndarray:
        y = _as_vector(y, self.shape[0], "y")
        return self._apply_adjoint(y)

    def __matmul__(self, x):
        return self.apply(x)

    @property
    def T(self) -> "LinearOperator":
        return _Adjoint(self)

    def to_dense(self) -> np.ndarray:
        """Realize the operator column by column (small instances only)."""
        n_rows, n_cols = self.shape
        out = np.empty((n_rows, n_cols))
        e = np.zeros(n_cols)
        for j in range(n_cols):
            e[j] = 1.0
            out[:, j] = self._apply(e)
            e[j] = 0.0
        return out

    def __repr__(self):
        return f"{type(self).__name__}(shape={self.shape})"


def _as_vector(x, n: int, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != n:
        raise DimensionError(f"{name} has shape {x.shape}, expected ({n},)")
    return x


class _Adjoint(LinearOperator):
    def __init__(self, op: LinearOperator):
        self.op = op
        self.shape = (op.shape[1], op.shape[0])

    def _apply(self, x):
        return self.op._apply_adjoint(x)

    def _apply_adjoint(self, y):
        return self.op._apply(y)


class DenseOperator(LinearOperator):
    """Wraps an explicit matrix (dense ndarray or scipy sparse matrix)."""

    def __init__(self, matrix):
        if not hasattr(matrix, "tocsr"):
            matrix = np.array(matrix, dtype=float)
            if matrix.ndim != 2:
                raise DimensionError("matrix must be two-dimensional")
            matrix.setflags(write=False)
        self.matrix = matrix
        self.shape = (int(matrix.shape[0]), int(matrix.shape[1]))
        if min(self.shape) < 1:
            raise DimensionError("operator dimensions must be positive")

    def _apply(self, x):
        return np.asarray(self.matrix @ x, dtype=float)

    def _apply_adjoint(self, y):
        return np.asarray(self.matrix.T @ y, dtype=float)


class IdentityOperator(LinearOperator):
    def __init__(self, n: int):
        if n < 1:
            raise DimensionError("n must be positive")
        self.shape = (n, n)

    def _apply(self, x):
        return x.copy()

    def _apply_adjoint(self, y):
        return y.copy()


class ScaledOperator(LinearOperator):
    """``scale * op``; used to fold quadrature weights into the data space."""

    def __init__(self, op: LinearOperator, scale: float):
        self.op = op
        self.scale = float(scale)
        self.shape = op.shape

    def _apply(self, x):
        return self.scale * self.op._apply(x)

    def _apply_adjoint(self, y):
        return self.scale * self.op._apply_adjoint(y)


def gaussian_kernel(t, sigma_f: float) -> np.ndarray:
    """The blur kernel ``sqrt(2/(pi sigma^2)) exp(-t^2 / (2 sigma^2))``."""
    t = np.asarray(t, dtype=float)
    return np.sqrt(2.0 / (np.pi * sigma_f**2)) * np.exp(-(t**2) / (2.0 * sigma_f**2))


def _kernel_weights(n: int, h: float, sigma_f: float) -> np.ndarray:
    # symmetric stencil h*K(k*h) for |k| <= radius, radius capped at n-1
    radius = min(int(np.floor(KERNEL_RADIUS * sigma_f / h)), n - 1)
    offsets = np.arange(-radius, radius + 1)
    return h * gaussian_kernel(offsets * h, sigma_f)


class GaussianConvolution1D(LinearOperator):
    """Discretized stationary Gaussian convolution on ``[0, domain_length]``.

    Samples sit at cell centres ``x_i = (i + 1/2) h`` with ``h = L / n``;
    entries are ``A_ij = h K(|x_i - x_j|)`` (midpoint quadrature), the kernel
    is truncated at ``6 sigma_f`` and the signal is zero-extended outside the
    domain. With ``normalize=True`` every row is rescaled to sum to one; the
    adjoint then is the true transpose, so the operator stops being
    symmetric.
    """

    def __init__(self, n: int, sigma_f: float, domain_length: float = 1.0,
                 normalize: bool = False):
        if n < 2:
            raise ValueError("n must be at least 2")
        if not sigma_f > 0:
            raise ValueError(f"sigma_f must be positive, got {sigma_f}")
        if not domain_length > 0:
            raise ValueError("domain_length must be positive")
        self.n = int(n)
        self.sigma_f = float(sigma_f)
        self.domain_length = float(domain_length)
        self.normalize = bool(normalize)
        self.h = self.domain_length / self.n
        self.shape = (self.n, self.n)
        self.weights = _kernel_weights(self.n, self.h, self.sigma_f)
        self.weights.setflags(write=False)
        if self.normalize:
            rows = self._convolve(np.ones(self.n))
            self.row_sums = rows
        else:
            self.row_sums = None

    @property
    def coordinates(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.h

    def _convolve(self, x):
        return ndimage.correlate1d(x, self.weights, mode="constant", cval=0.0)

    def _apply(self, x):
        y = self._convolve(x)
        if self.row_sums is not None:
            y = y / self.row_sums
        return y

    def _apply_adjoint(self, y):
        if self.row_sums is not None:
            y = y / self.row_sums
        return self._convolve(y)


def make_gaussian_convolution(n: int, sigma_f: float, domain_length: float = 1.0,
                              normalize: bool = False) -> GaussianConvolution1D:
    return GaussianConvolution1D(n, sigma_f, domain_length, normalize=normalize)


class SeparableBlur2D(LinearOperator):
    """Gaussian blur of an ``nx x ny`` image stored in C order.

    Applies the 1-D convolution along both axes; the matrix is the Kronecker
    product of the two 1-D matrices.
    """

    def __init__(self, nx: int, ny: int, sigma_f: float,
                 lengths: tuple[float, float] = (1.0, 1.0)):
        self.rows = GaussianConvolution1D(nx, sigma_f, lengths[0])
        self.cols = GaussianConvolution1D(ny, sigma_f, lengths[1])
        self.nx, self.ny = int(nx), int(ny)
        self.sigma_f = float(sigma_f)
        self.shape = (self.nx * self.ny, self.nx * self.ny)

    def _blur(self, x):
        img = x.reshape(self.nx, self.ny)
        img = ndimage.correlate1d(img, self.rows.weights, axis=0, mode="constant")
        img = ndimage.correlate1d(img, self.cols.weights, axis=1, mode="constant")
        return img.ravel()

    def _apply(self, x):
        return self._blur(x)

    def _apply_adjoint(self, y):
        return self._blur(y)


def apply(op: LinearOperator, x) -> np.ndarray:
    return op.apply(x)


def apply_adjoint(op: LinearOperator, y) -> np.ndarray:
    return op.apply_adjoint(y)


def adjoint_probe(op: LinearOperator, n_probes: int = 16, seed: int = 0) -> float:
    """Largest relative defect ``|<Ax, y> - <x, A^T y>| / (|Ax| |y|)`` over
    seeded random probe pairs."""
    if n_probes < 1:
        raise ValueError("n_probes must be at least 1")
    rng = np.random.default_rng(seed)
    n_rows, n_cols = op.shape
    eps = np.finfo(float).eps
    worst = 0.0
    for _ in range(n_probes):
        x = rng.standard_normal(n_cols)
        y = rng.standard_normal(n_rows)
        ax = op.apply(x)
        aty = op.apply_adjoint(y)
        dev = abs(ax @ y - x @ aty) / (np.linalg.norm(ax) * np.linalg.norm(y) + eps)
        worst = max(worst, dev)
    return worst
