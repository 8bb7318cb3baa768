"""Krylov solvers for ``min ||g - A f||^2 + tau ||f||_M^2``.

``lsqr``
    Standard damped LSQR (``M = I``).
``mlsqr``
    Factorization-free priorconditioned LSQR. The Golub-Kahan process runs
    in the ``M``-weighted inner product and needs one application of
    ``M^{-1}`` per iteration; iterates come out in the original variables.
``lsqr_explicit``
    The same method written with an explicit triangular factor ``M = L^T L``
    (LSQR on ``A L^{-1}``, back-transformed). Dense; used as a test oracle.
``cg_normal``
    CG on ``(A^T A + tau M) f = A^T g``, the unpriorconditioned reference.

All three LSQR variants share the Givens-rotation stage; damping uses the
extra rotation of the original LSQR, so the bidiagonalization itself never
depends on ``tau``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .diffusion import SparseSpd
from .linops import LinearOperator
from .spdsolve import SpdSolver

__all__ = [
    "Criterion",
    "StoppingConfig",
    "SolverBreakdown",
    "SolveTrace",
    "BidiagEntries",
    "SolveResult",
    "evaluate_stopping",
    "lsqr",
    "mlsqr",
    "lsqr_explicit",
    "cg_normal",
    "solve_projected",
    "projected_solution",
    "krylov_basis",
]

_EPS = np.finfo(float).eps


class Criterion(str, Enum):
    S1 = "S1"
    S2 = "S2"
    S3 = "S3"
    S4 = "S4"
    MAX_ITER = "MaxIter"


# fixed tie order among criteria that fire in the same iteration
PRIORITY = (Criterion.S4, Criterion.S1, Criterion.S2, Criterion.S3, Criterion.MAX_ITER)


class SolverBreakdown(ArithmeticError):
    """Raised when a solver meets a condition that signals a non-SPD input."""

    def __init__(self, iteration: int, message: str):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass(frozen=True)
class StoppingConfig:
    """Stopping rules S1-S4 plus an iteration cap.

    S1: ``||rbar|| <= btol ||g|| + atol ||Abar|| ||f||``
    S2: ``||Abar^T rbar|| / (||Abar|| ||rbar||) <= atol``
    S3: ``cond(Abar) >= conlim``
    S4: ``||g - A f|| <= eta * delta`` (discrepancy principle)

    The iteration cap ``max_iters`` is always active.
    """

    atol: float = 1e-8
    btol: float = 1e-8
    conlim: float = 1e8
    delta: Optional[float] = None
    eta: float = 1.1
    max_iters: int = 100
    enabled: frozenset = frozenset({Criterion.S1, Criterion.S2, Criterion.S3})

    def __post_init__(self):
        enabled = frozenset(Criterion(c) for c in self.enabled) | {Criterion.MAX_ITER}
        object.__setattr__(self, "enabled", enabled)
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if Criterion.S4 in enabled:
            if self.delta is None or not self.delta >= 0:
                raise ValueError("S4 needs a nonnegative noise level delta")
            if not self.eta > 1:
                raise ValueError("S4 needs eta > 1")

    @classmethod
    def discrepancy(cls, delta: float, eta: float = 1.1, max_iters: int = 100) -> "StoppingConfig":
        """S4 and the iteration cap only."""
        return cls(delta=delta, eta=eta, max_iters=max_iters, enabled=frozenset({Criterion.S4}))

    @classmethod
    def fixed(cls, iterations: int) -> "StoppingConfig":
        """Run exactly ``iterations`` steps (barring breakdown)."""
        return cls(max_iters=iterations, enabled=frozenset())


@dataclass
class SolveTrace:
    """Per-iteration quantities; entry ``i-1`` belongs to iterate ``f_i``."""

    res_data: list = field(default_factory=list)
    res_damped: list = field(default_factory=list)
    s2_estimate: list = field(default_factory=list)
    anorm_est: list = field(default_factory=list)
    cond_est: list = field(default_factory=list)
    iterates: Optional[list] = None

    def __len__(self):
        return len(self.res_data)

    def record(self, res_data, res_damped, s2, anorm, acond, iterate=None):
        self.res_data.append(float(res_data))
        self.res_damped.append(float(res_damped))
        self.s2_estimate.append(float(s2))
        self.anorm_est.append(float(anorm))
        self.cond_est.append(float(acond))
        if self.iterates is not None:
            self.iterates.append(iterate.copy())


@dataclass
class BidiagEntries:
    """Lower-bidiagonal entries ``alpha_1..alpha_{i+1}``, ``beta_1..beta_{i+1}``
    and, optionally, the direction vectors in solution coordinates (``basis``)
    and the data-space vectors ``u_1..u_{i+1}`` (``left``)."""

    alphas: list = field(default_factory=list)
    betas: list = field(default_factory=list)
    basis: Optional[list] = None
    left: Optional[list] = None

    @property
    def beta1(self) -> float:
        return self.betas[0]

    @property
    def steps(self) -> int:
        return len(self.betas) - 1

    def matrix(self, i: Optional[int] = None) -> np.ndarray:
        """The ``(i+1) x i`` matrix ``B_i``."""
        i = self.steps if i is None else i
        b = np.zeros((i + 1, i))
        idx = np.arange(i)
        b[idx, idx] = self.alphas[:i]
        b[idx + 1, idx] = self.betas[1:i + 1]
        return b

    def basis_matrix(self, i: Optional[int] = None) -> np.ndarray:
        if self.basis is None:
            raise ValueError("basis vectors were not stored; pass store_basis=True")
        i = self.steps if i is None else i
        return np.column_stack(self.basis[:i])


@dataclass
class SolveResult:
    solution: np.ndarray
    iterations: int
    stop_reason: Criterion
    trace: SolveTrace
    bidiag: Optional[BidiagEntries] = None
    exact: bool = False


@dataclass
class _RecurrenceState:
    iteration: int
    bnorm: float
    rnorm: float
    res_data: float
    anorm: float
    acond: float
    arnorm: float
    xnorm: float

    @property
    def s2(self) -> float:
        return self.arnorm / (self.anorm * self.rnorm + _EPS)


def evaluate_stopping(state: _RecurrenceState, stop: StoppingConfig) -> Optional[Criterion]:
    """First enabled criterion (in priority order) satisfied by ``state``."""
    fired = {
        Criterion.S4: Criterion.S4 in stop.enabled and state.res_data <= stop.eta * stop.delta,
        Criterion.S1: state.rnorm <= stop.btol * state.bnorm + stop.atol * state.anorm * state.xnorm,
        Criterion.S2: state.s2 <= stop.atol,
        Criterion.S3: state.acond >= stop.conlim,
        Criterion.MAX_ITER: state.iteration >= stop.max_iters,
    }
    for crit in PRIORITY:
        if crit in stop.enabled and fired[crit]:
            return crit
    return None


# --- Golub-Kahan processes -------------------------------------------------
#
# Each process exposes start(g) -> (beta1, alpha1) and step() -> (beta, alpha)
# and keeps the current direction ``v`` (in the coordinates the iterate is
# accumulated in) plus ``solution(x)`` mapping that iterate to f.


class _PlainProcess:
    def __init__(self, a: LinearOperator):
        self.a = a

    def start(self, g):
        beta = np.linalg.norm(g)
        self.u = g / beta if beta > 0 else np.zeros_like(g)
        v = self.a.apply_adjoint(self.u)
        alpha = np.linalg.norm(v)
        self.v = v / alpha if alpha > 0 else np.zeros_like(v)
        self.alpha = alpha
        return beta, alpha

    def step(self):
        u = self.a.apply(self.v) - self.alpha * self.u
        beta = np.linalg.norm(u)
        if beta == 0:
            self.u = u
            self.v = np.zeros_like(self.v)
            self.alpha = 0.0
            return beta, 0.0
        self.u = u / beta
        v = self.a.apply_adjoint(self.u) - beta * self.v
        alpha = np.linalg.norm(v)
        self.v = v / alpha if alpha > 0 else np.zeros_like(v)
        self.alpha = alpha
        return beta, alpha

    def solution(self, x):
        return x

    def direction(self):
        return self.v


class _PriorconditionedProcess:
    """Bidiagonalization in the ``M`` inner product using ``p = M v``."""

    def __init__(self, a: LinearOperator, msolver: SpdSolver):
        self.a = a
        self.msolver = msolver
        self.iteration = 0

    def _normalize(self, p):
        if not np.any(p):
            self.p = p
            self.v = np.zeros_like(p)
            return 0.0
        v = self.msolver.solve(p)
        alpha_sq = v @ p
        if not alpha_sq > 0:
            raise SolverBreakdown(
                self.iteration, f"(M^-1 p, p) = {alpha_sq:.3e} <= 0; M^-1 is not SPD")
        alpha = math.sqrt(alpha_sq)
        self.p = p / alpha
        self.v = v / alpha
        return alpha

    def start(self, g):
        beta = np.linalg.norm(g)
        self.u = g / beta if beta > 0 else np.zeros_like(g)
        self.alpha = self._normalize(self.a.apply_adjoint(self.u))
        return beta, self.alpha

    def step(self):
        self.iteration += 1
        u = self.a.apply(self.v) - self.alpha * self.u
        beta = np.linalg.norm(u)
        if beta == 0:
            self.u = u
            self.p = np.zeros_like(self.p)
            self.v = np.zeros_like(self.v)
            self.alpha = 0.0
            return beta, 0.0
        self.u = u / beta
        self.alpha = self._normalize(self.a.apply_adjoint(self.u) - beta * self.p)
        return beta, self.alpha

    def solution(self, x):
        return x

    def direction(self):
        return self.v


class _ExplicitFactorProcess(_PlainProcess):
    """Plain Golub-Kahan on ``A L^{-1}``; iterates live in ``fhat = L f``."""

    def __init__(self, a: LinearOperator, l_factor: np.ndarray):
        super().__init__(a)
        l_factor = np.asarray(l_factor, dtype=float)
        if np.any(np.diag(l_factor) == 0):
            raise np.linalg.LinAlgError("triangular factor is singular")
        self.l = l_factor
        self.lower = np.allclose(l_factor, np.tril(l_factor))
        self.a = _RightPreconditioned(a, self)

    def linv(self, x):
        return sla.solve_triangular(self.l, x, lower=self.lower)

    def linv_t(self, y):
        return sla.solve_triangular(self.l, y, lower=self.lower, trans="T")

    def solution(self, x):
        return self.linv(x)

    def direction(self):
        return self.linv(self.v)


class _RightPreconditioned:
    def __init__(self, a, proc):
        self.inner = a
        self.proc = proc

    def apply(self, x):
        return self.inner.apply(self.proc.linv(x))

    def apply_adjoint(self, y):
        return self.proc.linv_t(self.inner.apply_adjoint(y))


def _check_problem(a: LinearOperator, g, tau: float):
    g = np.asarray(g, dtype=float)
    if g.shape != (a.shape[0],):
        raise ValueError(f"g has shape {g.shape}, operator has {a.shape[0]} rows")
    if not tau >= 0:
        raise ValueError("tau must be nonnegative")
    return g


def _run_lsqr(process, a: LinearOperator, g, tau: float, stop: StoppingConfig,
              store_basis: bool, store_iterates: bool) -> SolveResult:
    n = a.shape[1]
    damp = math.sqrt(tau)
    trace = SolveTrace(iterates=[] if store_iterates else None)
    beta1, alpha = process.start(g)
    bidiag = BidiagEntries(alphas=[alpha], betas=[beta1],
                           basis=[] if store_basis else None,
                           left=[] if store_basis else None)
    x = np.zeros(n)
    if beta1 == 0 or alpha == 0:
        reason = Criterion.S1 if beta1 == 0 else Criterion.S2
        return SolveResult(process.solution(x), 0, reason, trace, bidiag, exact=True)

    # residual of the undamped data term is needed exactly when tau > 0
    need_data_residual = tau > 0
    if store_basis:
        bidiag.basis.append(process.direction().copy())
        bidiag.left.append(process.u.copy())
    w = process.v.copy()
    wnorm_sq = 1.0
    rhobar, phibar = alpha, beta1
    anorm = ddnorm = res2 = xxnorm = z = 0.0
    cs2, sn2 = -1.0, 0.0
    i = 0
    while True:
        i += 1
        beta, alpha_next = process.step()
        bidiag.alphas.append(alpha_next)
        bidiag.betas.append(beta)
        anorm = math.sqrt(anorm**2 + alpha**2 + beta**2 + damp**2)

        # eliminate the damping term
        rhobar1 = math.hypot(rhobar, damp)
        cs1, sn1 = rhobar / rhobar1, damp / rhobar1
        psi = sn1 * phibar
        phibar = cs1 * phibar
        # eliminate the subdiagonal beta
        rho = math.hypot(rhobar1, beta)
        cs, sn = rhobar1 / rho, beta / rho
        theta = sn * alpha_next
        rhobar = -cs * alpha_next
        phi = cs * phibar
        phibar = sn * phibar

        x += (phi / rho) * w
        ddnorm += wnorm_sq / rho**2
        w = process.v + (-theta / rho) * w
        wnorm_sq = (1.0 if alpha_next > 0 else 0.0) + (theta / rho) ** 2 * wnorm_sq
        if store_basis and beta > 0:
            bidiag.left.append(process.u.copy())
        if store_basis and alpha_next > 0:
            bidiag.basis.append(process.direction().copy())

        # norm estimate of the transformed iterate
        delta = sn2 * rho
        gambar = -cs2 * rho
        rhs = phi - delta * z
        zbar = rhs / gambar
        xnorm = math.sqrt(xxnorm + zbar**2)
        gamma = math.hypot(gambar, theta)
        cs2, sn2 = gambar / gamma, theta / gamma
        z = rhs / gamma
        xxnorm += z**2

        res2 += psi**2
        rnorm = math.sqrt(phibar**2 + res2)
        f = process.solution(x)
        if need_data_residual:
            res_data = np.linalg.norm(g - a.apply(f))
        else:
            res_data = rnorm
        state = _RecurrenceState(
            iteration=i, bnorm=beta1, rnorm=rnorm, res_data=res_data, anorm=anorm,
            acond=anorm * math.sqrt(ddnorm), arnorm=alpha_next * abs(sn * phi), xnorm=xnorm)
        trace.record(res_data, rnorm, state.s2, anorm, state.acond, f)

        reason = evaluate_stopping(state, stop)
        if beta == 0 or alpha_next == 0:
            exact_reason = Criterion.S1 if beta == 0 else Criterion.S2
            return SolveResult(f, i, reason or exact_reason, trace, bidiag, exact=True)
        if reason is not None:
            return SolveResult(f, i, reason, trace, bidiag)
        alpha = alpha_next


def lsqr(a: LinearOperator, g, tau: float = 0.0, stop: StoppingConfig | None = None,
         store_basis: bool = False, store_iterates: bool = False) -> SolveResult:
    """Damped LSQR: minimize ``||g - A f||^2 + tau ||f||^2`` over the growing
    Krylov space. With ``tau = 0`` early stopping is the only regularization."""
    g = _check_problem(a, g, tau)
    stop = stop or StoppingConfig()
    return _run_lsqr(_PlainProcess(a), a, g, tau, stop, store_basis, store_iterates)


def mlsqr(a: LinearOperator, msolver: SpdSolver, g, tau: float = 0.0,
          stop: StoppingConfig | None = None, store_basis: bool = False,
          store_iterates: bool = False) -> SolveResult:
    """Factorization-free priorconditioned LSQR.

    Minimizes ``||g - A f||^2 + tau f^T M f`` over
    ``span{M^-1 A^T g, (M^-1 A^T A) M^-1 A^T g, ...}`` using one
    ``msolver.solve`` per iteration (plus one at start-up).

    Parameters
    ----------
    a : LinearOperator
        Forward map.
    msolver : SpdSolver
        Fixed SPD approximation of ``M^{-1}``.
    g : array of shape (n_rows,)
        Data.
    tau : float
        Damping; the Krylov space itself does not depend on it.
    stop : StoppingConfig
    store_basis : bool
        Keep the ``M``-orthonormal directions for :func:`solve_projected`.
    store_iterates : bool
        Keep every iterate in ``result.trace.iterates``.

    Raises
    ------
    SolverBreakdown
        If ``(M^{-1} p, p) <= 0`` for a nonzero ``p``.
    """
    g = _check_problem(a, g, tau)
    if msolver.n != a.shape[1]:
        raise ValueError(f"msolver has dimension {msolver.n}, operator has {a.shape[1]} columns")
    stop = stop or StoppingConfig()
    return _run_lsqr(_PriorconditionedProcess(a, msolver), a, g, tau, stop,
                     store_basis, store_iterates)


def lsqr_explicit(a: LinearOperator, l_factor, g, tau: float = 0.0,
                  stop: StoppingConfig | None = None, store_basis: bool = False,
                  store_iterates: bool = False) -> SolveResult:
    """Preconditioned LSQR with an explicit triangular factor (``M = L^T L``).

    Runs LSQR on ``A L^{-1}`` and maps iterates back with ``f = L^{-1} fhat``.
    Dense triangular solves; meant for small instances and as a reference.
    """
    g = _check_problem(a, g, tau)
    stop = stop or StoppingConfig()
    return _run_lsqr(_ExplicitFactorProcess(a, l_factor), a, g, tau, stop,
                     store_basis, store_iterates)


def solve_projected(bd: BidiagEntries, beta1: float | None = None, tau: float = 0.0,
                    steps: int | None = None) -> np.ndarray:
    """Solve ``min || [B_i; sqrt(tau) I] y - beta1 e1 ||`` densely.

    Rank-deficient systems (only possible for ``tau = 0``) return the
    minimum-norm solution.
    """
    i = bd.steps if steps is None else steps
    if i < 1:
        raise ValueError("bidiagonalization has no steps")
    beta1 = bd.beta1 if beta1 is None else beta1
    stacked = np.vstack([bd.matrix(i), math.sqrt(tau) * np.eye(i)])
    rhs = np.zeros(2 * i + 1)
    rhs[0] = beta1
    if tau > 0:
        q, r = np.linalg.qr(stacked)
        return sla.solve_triangular(r, q.T @ rhs)
    y, *_ = sla.lstsq(stacked, rhs)
    return y


def projected_solution(result: SolveResult, tau: float, steps: int | None = None) -> np.ndarray:
    """``f = V_i y_i(tau)`` from a run made with ``store_basis=True``."""
    bd = result.bidiag
    i = bd.steps if steps is None else steps
    i = min(i, len(bd.basis))
    return bd.basis_matrix(i) @ solve_projected(bd, tau=tau, steps=i)


def cg_normal(a: LinearOperator, m: SparseSpd | None, tau: float, g,
              stop: StoppingConfig | None = None, store_iterates: bool = False) -> SolveResult:
    """CG on ``(A^T A + tau M) f = A^T g`` (``m=None`` means ``M = I``).

    Supported rules: S4 on the data residual, S2 on the relative normal
    equation residual ``||A^T r - tau M f|| / ||A^T g||`` and the iteration
    cap. S1 and S3 have no analogue here and are ignored.
    """
    g = _check_problem(a, g, tau)
    stop = stop or StoppingConfig()
    n = a.shape[1]
    if m is not None and m.shape != (n, n):
        raise ValueError("M does not match the operator")
    mat = (lambda v: m.matvec(v)) if m is not None else (lambda v: v)
    trace = SolveTrace(iterates=[] if store_iterates else None)
    x = np.zeros(n)
    mx = np.zeros(n)
    r = g.copy()
    s = a.apply_adjoint(r)
    s0 = np.linalg.norm(s)
    if s0 == 0:
        return SolveResult(x, 0, Criterion.S2, trace, exact=True)
    d = s.copy()
    gamma = s @ s
    nan = float("nan")
    i = 0
    while True:
        i += 1
        q = a.apply(d)
        md = mat(d)
        curv = q @ q + tau * (d @ md)
        if not curv > 0:
            raise SolverBreakdown(i, f"nonpositive curvature {curv:.3e}; system is not SPD")
        step = gamma / curv
        x += step * d
        mx += step * md
        r -= step * q
        s = a.apply_adjoint(r) - tau * mx
        gamma_new = s @ s
        res_data = np.linalg.norm(r)
        res_damped = math.sqrt(res_data**2 + tau * max(x @ mx, 0.0))
        s2 = math.sqrt(gamma_new) / s0
        trace.record(res_data, res_damped, s2, nan, nan, x)

        fired = {
            Criterion.S4: Criterion.S4 in stop.enabled and res_data <= stop.eta * stop.delta,
            Criterion.S2: s2 <= stop.atol,
            Criterion.MAX_ITER: i >= stop.max_iters,
        }
        for crit in PRIORITY:
            if crit in stop.enabled and fired.get(crit, False):
                return SolveResult(x.copy(), i, crit, trace)
        if gamma_new == 0:
            return SolveResult(x.copy(), i, Criterion.S2, trace, exact=True)
        d = s + (gamma_new / gamma) * d
        gamma = gamma_new


def krylov_basis(a: LinearOperator, g, k: int, msolver: SpdSolver | None = None,
                 m: SparseSpd | None = None, tau: float = 0.0,
                 rank_tol: float = 1e-12) -> tuple[np.ndarray, bool]:
    """First ``k`` orthonormal basis vectors of one of three Krylov spaces.

    * neither ``msolver`` nor ``m``: ``K(A^T A, A^T g)``
    * ``m``: ``K(A^T A + tau M, A^T g)``
    * ``msolver``: ``K(M^-1 A^T A + tau I, M^-1 A^T g)``, which is the same
      space for every ``tau``

    Vectors are orthonormalized with classical Gram-Schmidt applied twice.
    Returns ``(basis, complete)`` where ``basis`` has shape ``(n, j)``,
    ``j <= k``, and ``complete`` is False if the space ran out of rank.
    """
    if msolver is not None and m is not None:
        raise ValueError("pass at most one of msolver and m")
    g = _check_problem(a, g, tau)
    if k < 1:
        raise ValueError("k must be at least 1")

    def normal(v):
        return a.apply_adjoint(a.apply(v))

    if msolver is not None:
        def op(v):
            return msolver.solve(normal(v)) + tau * v
        start = msolver.solve(a.apply_adjoint(g))
    elif m is not None:
        def op(v):
            return normal(v) + tau * m.matvec(v)
        start = a.apply_adjoint(g)
    else:
        op = normal
        start = a.apply_adjoint(g)

    vectors = []
    nxt = start
    for _ in range(k):
        ref = np.linalg.norm(nxt)
        for _ in range(2):
            for q in vectors:
                nxt = nxt - (q @ nxt) * q
        nrm = np.linalg.norm(nxt)
        if ref == 0 or nrm <= rank_tol * ref:
            return np.column_stack(vectors) if vectors else np.zeros((a.shape[1], 0)), False
        q = nxt / nrm
        vectors.append(q)
        nxt = op(q)
    return np.column_stack(vectors), True
