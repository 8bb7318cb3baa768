"""Fixed linear maps approximating ``M^{-1}`` for SPD ``M``.

The priorconditioned Krylov solver needs ``M^{-1}`` to be a *fixed*
symmetric positive definite linear map: the same input always gives the same
output and the map does not adapt to its argument. Two realizations are
provided:

* :class:`CholeskySolver` - exact, via a banded Cholesky factor after a
  reverse Cuthill-McKee reordering.
* :class:`ChebyshevSolver` - a fixed number of Chebyshev semi-iteration
  steps, i.e. a fixed polynomial ``q(M)``. This is the ``inner_cg`` mode:
  CG restarted on every right-hand side would pick new step lengths for
  every input and therefore not be linear, while the Chebyshev recurrence
  is CG's fixed-coefficient counterpart.
"""

from __future__ import annotations

import re
from enum import Enum

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.csgraph import reverse_cuthill_mckee

from .diffusion import SparseSpd
from .linops import DimensionError

__all__ = [
    "SpdMode",
    "FactorizationError",
    "SpdSolver",
    "IdentitySolver",
    "CholeskySolver",
    "ChebyshevSolver",
    "factorize",
    "make_inner_cg",
    "make_solver",
    "solve",
]

DEFAULT_K_INNER = 30
DEFAULT_LOWER_RATIO = 1e-4


class SpdMode(str, Enum):
    DIRECT = "direct"
    INNER_CG = "inner_cg"


class FactorizationError(np.linalg.LinAlgError):
    """Cholesky factorization hit a nonpositive pivot."""

    def __init__(self, pivot: int | None, message: str):
        super().__init__(message)
        self.pivot = pivot


class SpdSolver:
    n: int

    def _solve(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def solve(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if p.shape != (self.n,):
            raise DimensionError(f"p has shape {p.shape}, expected ({self.n},)")
        return self._solve(p)

    def __call__(self, p):
        return self.solve(p)


class IdentitySolver(SpdSolver):
    def __init__(self, n: int):
        self.n = int(n)

    def _solve(self, p):
        return p.copy()


def _as_csr(m) -> sp.csr_matrix:
    if isinstance(m, SparseSpd):
        return m.matrix
    return sp.csr_matrix(m, dtype=float)


class CholeskySolver(SpdSolver):
    """Exact solve with a banded Cholesky factor of the RCM-permuted matrix."""

    def __init__(self, m):
        a = _as_csr(m)
        if a.shape[0] != a.shape[1]:
            raise DimensionError("matrix must be square")
        self.n = a.shape[0]
        perm = reverse_cuthill_mckee(a, symmetric_mode=True).astype(np.intp)
        ap = a[perm][:, perm].tocoo()
        upper = ap.row <= ap.col
        rows, cols, vals = ap.row[upper], ap.col[upper], ap.data[upper]
        bw = int((cols - rows).max()) if rows.size else 0
        ab = np.zeros((bw + 1, self.n))
        ab[bw + rows - cols, cols] = vals
        try:
            self._factor = sla.cholesky_banded(ab, lower=False, check_finite=True)
        except np.linalg.LinAlgError as exc:
            match = re.search(r"(\d+)", str(exc))
            pivot = int(perm[int(match.group(1)) - 1]) if match else None
            raise FactorizationError(
                pivot, f"matrix is not positive definite (pivot at row {pivot})") from exc
        self.perm = perm
        self.bandwidth = bw

    def _solve(self, p):
        x = sla.cho_solve_banded((self._factor, False), p[self.perm], check_finite=False)
        out = np.empty_like(x)
        out[self.perm] = x
        return out


class ChebyshevSolver(SpdSolver):
    """``k_inner`` steps of Chebyshev semi-iteration on ``[lower, upper]``.

    ``upper`` is the Gershgorin bound, so it dominates every eigenvalue of
    ``M``; ``lower = upper * lower_ratio``. The residual polynomial then
    satisfies ``0 < r(lam) < 1`` on ``(0, lower]`` and ``|r(lam)| < 1`` on
    ``[lower, upper]``, so ``q(M) = (I - r(M)) M^{-1}`` is symmetric positive
    definite whatever the spectrum. Unlike CG restarted on each input, the
    step coefficients do not depend on ``p`` and the map is linear.

    With ``k_inner >= n`` a Krylov method terminates with the exact answer,
    and this case is delegated to the Cholesky solver.
    """

    def __init__(self, m, k_inner: int = DEFAULT_K_INNER, lower_ratio: float = DEFAULT_LOWER_RATIO):
        if k_inner < 1:
            raise ValueError("k_inner must be at least 1")
        if not 0 < lower_ratio < 1:
            raise ValueError("lower_ratio must lie in (0, 1)")
        self.matrix = _as_csr(m)
        self.n = self.matrix.shape[0]
        self.k_inner = int(k_inner)
        diag = self.matrix.diagonal()
        radius = np.asarray(abs(self.matrix).sum(axis=1)).ravel() - np.abs(diag)
        self.upper = float((diag + radius).max())
        if not self.upper > 0:
            raise FactorizationError(None, "matrix has no positive Gershgorin bound")
        # a positive Gershgorin lower bound is also a valid interval end
        self.lower = max(self.upper * lower_ratio, float((diag - radius).min()))
        self._exact = CholeskySolver(self.matrix) if self.k_inner >= self.n else None

    def _solve(self, p):
        if self._exact is not None:
            return self._exact.solve(p)
        if self.lower >= self.upper:
            # all Gershgorin discs are one point, so M = upper * I
            return p / self.upper
        a = self.matrix
        theta = 0.5 * (self.upper + self.lower)
        delta = 0.5 * (self.upper - self.lower)
        sigma = theta / delta
        rho = 1.0 / sigma
        x = np.zeros(self.n)
        r = p.copy()
        d = r / theta
        for step in range(self.k_inner):
            x += d
            if step == self.k_inner - 1:
                break
            r -= a @ d
            rho_next = 1.0 / (2.0 * sigma - rho)
            d = (rho_next * rho) * d + (2.0 * rho_next / delta) * r
            rho = rho_next
        return x


def factorize(m) -> CholeskySolver:
    return CholeskySolver(m)


def make_inner_cg(m, k_inner: int = DEFAULT_K_INNER,
                  lower_ratio: float = DEFAULT_LOWER_RATIO) -> ChebyshevSolver:
    return ChebyshevSolver(m, k_inner, lower_ratio)


def make_solver(m, mode: SpdMode | str = SpdMode.DIRECT, k_inner: int = DEFAULT_K_INNER) -> SpdSolver:
    mode = SpdMode(mode)
    if mode is SpdMode.DIRECT:
        return factorize(m)
    return make_inner_cg(m, k_inner)


def solve(s: SpdSolver, p) -> np.ndarray:
    return s.solve(p)
