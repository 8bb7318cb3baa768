"""Lagged diffusivity fixed-point iteration with priorconditioned inner solves.

Each outer step freezes the diffusivity at the previous iterate, rebuilds
``M_{f^{k-1}}`` and its inverse, and solves the resulting linear problem with
:func:`~priorlsqr.krylov.mlsqr` started from zero. The loop stops when the
penalty ``R(f^k)`` no longer drops by the requested relative amount.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .diffusion import Grid, assemble_m, penalty_functional
from .krylov import SolveResult, StoppingConfig, mlsqr
from .linops import LinearOperator
from .penalty import PenaltySpec
from .spdsolve import DEFAULT_K_INNER, SpdMode, make_solver

__all__ = ["OuterConfig", "OuterStep", "OuterReport", "outer_stop_check", "solve_nonlinear"]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OuterConfig:
    """Settings for :func:`solve_nonlinear`.

    ``penalty.tau`` is the damping used in every inner solve. ``inner_stop``
    is applied identically in every outer step, with its iteration cap
    replaced by ``inner_cap``.
    """

    penalty: PenaltySpec
    inner_stop: StoppingConfig
    inner_cap: int = 20
    rel_decrease_threshold: float = 0.15
    max_outer: int = 25
    spd_mode: SpdMode = SpdMode.DIRECT
    k_inner: int = DEFAULT_K_INNER
    epsilon: Optional[float] = None
    store_iterates: bool = False

    def __post_init__(self):
        object.__setattr__(self, "spd_mode", SpdMode(self.spd_mode))
        if self.inner_cap < 1:
            raise ValueError("inner_cap must be at least 1")
        if not 0 < self.rel_decrease_threshold < 1:
            raise ValueError("rel_decrease_threshold must lie in (0, 1)")
        if self.max_outer < 1:
            raise ValueError("max_outer must be at least 1")

    @property
    def tau(self) -> float:
        return self.penalty.tau


@dataclass
class OuterStep:
    k: int
    penalty: float
    inner: SolveResult
    solution: np.ndarray

    @property
    def inner_iterations(self) -> int:
        return self.inner.iterations

    @property
    def residual(self) -> float:
        trace = self.inner.trace
        return trace.res_data[-1] if len(trace) else float("nan")


@dataclass
class OuterReport:
    """Outcome of the lagged diffusivity loop.

    ``solution`` is ``f^{returned_k}``; when the stagnation rule fires at
    step ``k`` that is ``f^{k-1}`` while ``steps[-1]`` still holds ``f^k``.
    """

    solution: np.ndarray
    steps: list = field(default_factory=list)
    stop_reason: str = "max_outer"
    returned_k: int = 0

    @property
    def penalties(self) -> list:
        return [s.penalty for s in self.steps]


def outer_stop_check(history, threshold: float) -> bool:
    """True once the relative change of the last two penalties exceeds
    ``-threshold`` (too small a decrease, or an increase)."""
    if len(history) < 2:
        return False
    prev, cur = history[-2], history[-1]
    if prev == 0:
        return True
    return (cur - prev) / prev > -threshold


def solve_nonlinear(a: LinearOperator, g, grid: Grid, cfg: OuterConfig) -> OuterReport:
    g = np.asarray(g, dtype=float)
    if a.shape[1] != grid.size:
        raise ValueError(f"operator has {a.shape[1]} columns, grid has {grid.size} nodes")
    inner_stop = dataclasses.replace(cfg.inner_stop, max_iters=cfg.inner_cap)
    f = np.zeros(grid.size)
    report = OuterReport(solution=f)
    history = []
    for k in range(1, cfg.max_outer + 1):
        m = assemble_m(grid, f, cfg.penalty, cfg.epsilon)
        msolver = make_solver(m, cfg.spd_mode, cfg.k_inner)
        inner = mlsqr(a, msolver, g, cfg.tau, inner_stop, store_iterates=cfg.store_iterates)
        f_new = inner.solution
        r_k = penalty_functional(grid, f_new, cfg.penalty)
        history.append(r_k)
        report.steps.append(OuterStep(k, r_k, inner, f_new))
        logger.info("outer %d: %d inner iterations (%s), R = %.6g",
                    k, inner.iterations, inner.stop_reason.value, r_k)
        if outer_stop_check(history, cfg.rel_decrease_threshold):
            report.solution = f
            report.returned_k = k - 1
            report.stop_reason = "stagnation"
            return report
        f = f_new
    report.solution = f
    report.returned_k = cfg.max_outer
    report.stop_reason = "max_outer"
    return report

