"""scikit-learn style wrappers around the functional solvers.

The design matrix ``A`` plays the role of ``X`` (one row per datum, one
column per unknown) and the data vector ``g`` the role of ``y``. ``fit``
also accepts any :class:`~priorlsqr.linops.LinearOperator`, so matrix-free
operators work unchanged; ``predict(A)`` returns ``A @ coef_``.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_data, check_operator, check_prior, check_scalar
from .diffusion import Grid
from .krylov import Criterion, StoppingConfig, cg_normal, lsqr, mlsqr
from .outer import OuterConfig, solve_nonlinear
from .penalty import PenaltyKind, PenaltySpec
from .spdsolve import DEFAULT_K_INNER, IdentitySolver, SpdMode, make_solver

__all__ = ["LSQRRegressor", "PriorconditionedLSQR", "LaggedDiffusivityRegressor"]


class _KrylovBase(RegressorMixin, BaseEstimator):

    def _stopping(self) -> StoppingConfig:
        check_scalar(self.tau, "tau", low=0.0)
        check_scalar(self.max_iter, "max_iter", low=1, integer=True)
        for name in ("atol", "btol"):
            check_scalar(getattr(self, name), name, low=0.0)
        check_scalar(self.conlim, "conlim", low=0.0, low_open=True)
        enabled = {Criterion.S1, Criterion.S2, Criterion.S3}
        if self.delta is not None:
            check_scalar(self.delta, "delta", low=0.0)
            check_scalar(self.eta, "eta", low=1.0, low_open=True)
            enabled.add(Criterion.S4)
        return StoppingConfig(atol=self.atol, btol=self.btol, conlim=self.conlim,
                              delta=self.delta, eta=self.eta, max_iters=self.max_iter,
                              enabled=frozenset(enabled))

    def _prepare(self, A, g):
        op = check_operator(A)
        g = check_data(g, op.shape[0])
        self.n_features_in_ = op.shape[1]
        return op, g

    def _store(self, result):
        self.coef_ = result.solution
        self.n_iter_ = result.iterations
        self.stop_reason_ = result.stop_reason.value
        self.trace_ = result.trace
        return self

    def predict(self, A):
        check_is_fitted(self, "coef_")
        op = check_operator(A)
        if op.shape[1] != self.n_features_in_:
            raise ValueError(f"A has {op.shape[1]} columns, estimator was fitted with "
                             f"{self.n_features_in_}")
        return op.apply(self.coef_)


class LSQRRegressor(_KrylovBase):
    """Damped LSQR, ``min ||g - A f||^2 + tau ||f||^2``.

    With ``delta`` set, the discrepancy rule stops the iteration once
    ``||g - A f|| <= eta * delta``.
    """

    def __init__(self, tau=0.0, atol=1e-8, btol=1e-8, conlim=1e8, delta=None,
                 eta=1.1, max_iter=100):
        self.tau = tau
        self.atol = atol
        self.btol = btol
        self.conlim = conlim
        self.delta = delta
        self.eta = eta
        self.max_iter = max_iter

    def fit(self, A, g):
        stop = self._stopping()
        op, g = self._prepare(A, g)
        return self._store(lsqr(op, g, self.tau, stop))


class PriorconditionedLSQR(_KrylovBase):
    """LSQR priorconditioned by a fixed SPD precision matrix ``prior``.

    Parameters
    ----------
    prior : SparseSpd, sparse or dense matrix, or None
        ``M``; None means the identity.
    solver : {"mlsqr", "cg_normal"}
        ``cg_normal`` runs CG on the normal equations with the same penalty
        and is mostly useful as a reference.
    spd_mode : {"direct", "inner_cg"}
    k_inner : int
        Polynomial degree of the approximate inverse in ``inner_cg`` mode.
    """

    def __init__(self, prior=None, tau=0.0, solver="mlsqr", spd_mode="direct",
                 k_inner=DEFAULT_K_INNER, atol=1e-8, btol=1e-8, conlim=1e8, delta=None,
                 eta=1.1, max_iter=100):
        self.prior = prior
        self.tau = tau
        self.solver = solver
        self.spd_mode = spd_mode
        self.k_inner = k_inner
        self.atol = atol
        self.btol = btol
        self.conlim = conlim
        self.delta = delta
        self.eta = eta
        self.max_iter = max_iter

    def fit(self, A, g):
        stop = self._stopping()
        if self.solver not in ("mlsqr", "cg_normal"):
            raise ValueError(f"solver must be 'mlsqr' or 'cg_normal', got {self.solver!r}")
        mode = SpdMode(self.spd_mode)
        check_scalar(self.k_inner, "k_inner", low=1, integer=True)
        op, g = self._prepare(A, g)
        m = check_prior(self.prior, op.shape[1])
        if self.solver == "cg_normal":
            return self._store(cg_normal(op, m, self.tau, g, stop))
        msolver = IdentitySolver(op.shape[1]) if m is None else make_solver(m, mode, self.k_inner)
        return self._store(mlsqr(op, msolver, g, self.tau, stop))


class LaggedDiffusivityRegressor(RegressorMixin, BaseEstimator):
    """Edge-preserving reconstruction by lagged diffusivity.

    Every outer step rebuilds the diffusion prior at the previous iterate and
    runs priorconditioned LSQR from zero, stopped by the discrepancy rule
    (``delta``, ``eta``) or ``inner_cap``. The outer loop ends when the
    penalty drops by less than ``threshold`` relative to the last step.

    ``grid_shape`` and ``domain_length`` describe the unknowns; the number of
    columns of ``A`` must equal ``prod(grid_shape)``.

    Attributes
    ----------
    coef_ : ndarray
    n_outer_ : int
        Index of the returned outer iterate.
    penalties_ : list of float
    stop_reason_ : str
    report_ : OuterReport
    """

    def __init__(self, grid_shape, penalty="pm_log", T=0.005, tau=0.0, delta=None, eta=1.1,
                 inner_cap=20, threshold=0.15, max_outer=25, spd_mode="direct",
                 k_inner=DEFAULT_K_INNER, epsilon=None, domain_length=1.0):
        self.grid_shape = grid_shape
        self.penalty = penalty
        self.T = T
        self.tau = tau
        self.delta = delta
        self.eta = eta
        self.inner_cap = inner_cap
        self.threshold = threshold
        self.max_outer = max_outer
        self.spd_mode = spd_mode
        self.k_inner = k_inner
        self.epsilon = epsilon
        self.domain_length = domain_length

    def _config(self) -> OuterConfig:
        spec = PenaltySpec(PenaltyKind(self.penalty), T=self.T, tau=self.tau)
        if self.delta is None:
            stop = StoppingConfig(max_iters=self.inner_cap)
        else:
            check_scalar(self.delta, "delta", low=0.0)
            check_scalar(self.eta, "eta", low=1.0, low_open=True)
            stop = StoppingConfig.discrepancy(self.delta, self.eta, self.inner_cap)
        if self.epsilon is not None:
            check_scalar(self.epsilon, "epsilon", low=0.0)
        return OuterConfig(spec, stop, inner_cap=self.inner_cap,
                           rel_decrease_threshold=self.threshold, max_outer=self.max_outer,
                           spd_mode=self.spd_mode, k_inner=self.k_inner, epsilon=self.epsilon)

    def fit(self, A, g):
        cfg = self._config()
        grid = Grid.regular(self.grid_shape, self.domain_length)
        op = check_operator(A)
        g = check_data(g, op.shape[0])
        self.n_features_in_ = op.shape[1]
        self.report_ = solve_nonlinear(op, g, grid, cfg)
        self.coef_ = self.report_.solution
        self.n_outer_ = self.report_.returned_k
        self.penalties_ = self.report_.penalties
        self.stop_reason_ = self.report_.stop_reason
        return self

    def predict(self, A):
        check_is_fitted(self, "coef_")
        op = check_operator(A)
        if op.shape[1] != self.n_features_in_:
            raise ValueError(f"A has {op.shape[1]} columns, estimator was fitted with "
                             f"{self.n_features_in_}")
        return op.apply(self.coef_)
