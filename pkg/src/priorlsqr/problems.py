"""Reproducible test problems: 1-D deconvolution and 2-D deblurring.

Data live in the quadrature-weighted space: operator and data are scaled by
``sqrt(cell volume)`` so that Euclidean norms of residuals approximate L2
norms of functions. The expected residual norm of pure noise is then about
``sigma_n`` (times the square root of the domain measure), which is the
noise level ``delta`` used by the discrepancy principle.

Noise is drawn from numpy's PCG64 generator (``default_rng(seed)``) with its
ziggurat normal sampler, so bundles are a deterministic function of their
arguments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .diffusion import Grid, SparseSpd, assemble_m
from .linops import GaussianConvolution1D, LinearOperator, ScaledOperator, SeparableBlur2D
from .penalty import PenaltyKind, PenaltySpec
from .spdsolve import DEFAULT_K_INNER, SpdMode, SpdSolver, make_solver

__all__ = [
    "Phantom1D",
    "DEFAULT_JUMPS",
    "Shape2D",
    "DEFAULT_SHAPES",
    "ExperimentBundle",
    "make_deconv1d",
    "make_deblur2d",
    "make_ideal_preconditioner",
    "error_norm",
]

# Stand-in target: four plateaus, one of them narrow, on a zero background.
DEFAULT_JUMPS = ((0.12, 0.5), (0.30, 1.0), (0.45, 0.25), (0.62, 0.8), (0.68, 0.0))


@dataclass(frozen=True)
class Phantom1D:
    """Piecewise-constant function: ``level`` holds from ``position`` up to the
    next jump; the function is ``base`` left of the first jump."""

    jumps: tuple = DEFAULT_JUMPS
    base: float = 0.0

    def __post_init__(self):
        jumps = tuple((float(p), float(v)) for p, v in self.jumps)
        pos = [p for p, _ in jumps]
        if any(not 0.0 <= p <= 1.0 for p in pos):
            raise ValueError("jump positions must lie in [0, 1]")
        if any(b <= a for a, b in zip(pos, pos[1:])):
            raise ValueError("jump positions must be strictly increasing")
        object.__setattr__(self, "jumps", jumps)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, self.base)
        for pos, level in self.jumps:
            out[x >= pos] = level
        return out


@dataclass(frozen=True)
class Shape2D:
    """Rectangle ``(x0, x1, y0, y1)`` or disk ``(cx, cy, r)`` of constant level
    on ``[0, 1]^2`` (relative coordinates)."""

    kind: str
    params: tuple
    level: float

    def __post_init__(self):
        if self.kind == "rect":
            if len(self.params) != 4:
                raise ValueError("rect needs (x0, x1, y0, y1)")
            x0, x1, y0, y1 = self.params
            if not (x0 < x1 and y0 < y1):
                raise ValueError("rect corners must be ordered")
        elif self.kind == "disk":
            if len(self.params) != 3 or not self.params[2] > 0:
                raise ValueError("disk needs (cx, cy, r) with r > 0")
        else:
            raise ValueError(f"unknown shape kind {self.kind!r}")

    def mask(self, x, y) -> np.ndarray:
        if self.kind == "rect":
            x0, x1, y0, y1 = self.params
            return (x >= x0) & (x < x1) & (y >= y0) & (y < y1)
        cx, cy, r = self.params
        return (x - cx) ** 2 + (y - cy) ** 2 <= r**2


DEFAULT_SHAPES = (
    Shape2D("disk", (0.30, 0.32, 0.14), 0.06),
    Shape2D("disk", (0.68, 0.35, 0.11), 0.1),
    Shape2D("rect", (0.35, 0.75, 0.62, 0.80), 0.1),
)


@dataclass
class ExperimentBundle:
    operator: LinearOperator
    f_true: np.ndarray
    g: np.ndarray
    sigma_n: float
    seed: int
    grid: Grid
    noise_level: float
    blur: LinearOperator = field(repr=False, default=None)

    @property
    def data_weight(self) -> float:
        return float(np.sqrt(self.grid.cell_volume))


def _noise(rng: np.random.Generator, n: int, sigma_n: float) -> np.ndarray:
    return sigma_n * rng.standard_normal(n)


def make_deconv1d(n: int = 512, sigma_f: float = 0.03, sigma_n: float = 0.01,
                  phantom: Phantom1D | None = None, seed: int = 0,
                  domain_length: float = 1.0) -> ExperimentBundle:
    """Gaussian deconvolution on ``[0, L]`` sampled at ``n`` cell centres."""
    if n < 2:
        raise ValueError("n must be at least 2")
    if not sigma_n >= 0:
        raise ValueError("sigma_n must be nonnegative")
    phantom = phantom or Phantom1D()
    blur = GaussianConvolution1D(n, sigma_f, domain_length)
    grid = Grid.regular((n,), domain_length)
    f_true = phantom(grid.coordinates()[0] / domain_length)
    weight = np.sqrt(grid.cell_volume)
    op = ScaledOperator(blur, weight)
    rng = np.random.default_rng(seed)
    g = op.apply(f_true) + weight * _noise(rng, n, sigma_n)
    return ExperimentBundle(op, f_true, g, sigma_n, seed, grid,
                            noise_level=sigma_n * np.sqrt(domain_length), blur=blur)


def make_deblur2d(nx: int = 64, ny: int = 64, sigma_f: float = 0.02,
                  sigma_n: Optional[float] = None,
                  shapes: Sequence[Shape2D] | None = None, seed: int = 0) -> ExperimentBundle:
    """Separable Gaussian blur of a piecewise-constant image on ``[0, 1]^2``.

    ``sigma_n=None`` picks 1% of the largest blurred value.
    """
    if nx < 2 or ny < 2:
        raise ValueError("nx and ny must be at least 2")
    shapes = DEFAULT_SHAPES if shapes is None else tuple(shapes)
    blur = SeparableBlur2D(nx, ny, sigma_f)
    grid = Grid.regular((nx, ny), 1.0)
    x, y = np.meshgrid(*grid.coordinates(), indexing="ij")
    img = np.zeros((nx, ny))
    for s in shapes:
        img[s.mask(x, y)] = s.level
    f_true = img.ravel()
    clean = blur.apply(f_true)
    if sigma_n is None:
        sigma_n = 0.01 * float(np.abs(clean).max())
    if not sigma_n >= 0:
        raise ValueError("sigma_n must be nonnegative")
    weight = np.sqrt(grid.cell_volume)
    op = ScaledOperator(blur, weight)
    rng = np.random.default_rng(seed)
    g = weight * (clean + _noise(rng, grid.size, sigma_n))
    return ExperimentBundle(op, f_true, g, sigma_n, seed, grid,
                            noise_level=sigma_n, blur=blur)


def make_ideal_preconditioner(bundle: ExperimentBundle,
                              spec: PenaltySpec = PenaltySpec(PenaltyKind.PM_LOG, T=0.005),
                              epsilon: float | None = None,
                              mode: SpdMode | str = SpdMode.DIRECT,
                              k_inner: int = DEFAULT_K_INNER) -> tuple[SparseSpd, SpdSolver]:
    """``M`` assembled at the true solution, plus a solver for it."""
    m = assemble_m(bundle.grid, bundle.f_true, spec, epsilon)
    return m, make_solver(m, mode, k_inner)


def error_norm(f, f_true, cell_volume: float | None = None) -> float:
    """``||f - f_true||_2``; with ``cell_volume`` the L2-consistent
    ``sqrt(cell_volume) ||f - f_true||_2``."""
    f = np.asarray(f, dtype=float)
    f_true = np.asarray(f_true, dtype=float)
    if f.shape != f_true.shape:
        raise ValueError(f"shape mismatch {f.shape} vs {f_true.shape}")
    err = float(np.linalg.norm(f - f_true))
    return err if cell_volume is None else float(np.sqrt(cell_volume)) * err
