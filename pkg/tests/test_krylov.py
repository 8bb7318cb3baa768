import numpy as np
import pytest
import scipy.linalg as sla

from priorlsqr.diffusion import SparseSpd, assemble_m
from priorlsqr.krylov import (
    PRIORITY,
    Criterion,
    SolverBreakdown,
    StoppingConfig,
    _RecurrenceState,
    cg_normal,
    evaluate_stopping,
    krylov_basis,
    lsqr,
    lsqr_explicit,
    mlsqr,
    projected_solution,
    solve_projected,
)
from priorlsqr.linops import DenseOperator, IdentityOperator
from priorlsqr.penalty import PenaltyKind, PenaltySpec
from priorlsqr.problems import make_ideal_preconditioner
from priorlsqr.spdsolve import IdentitySolver, SpdSolver, factorize

from conftest import rel


def random_spd(n, rng, cond=50.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    m = q @ np.diag(np.geomspace(1.0, cond, n)) @ q.T
    return SparseSpd.from_matrix((m + m.T) / 2)


def normal_solve(a, g, tau, m=None):
    m = np.eye(a.shape[1]) if m is None else m
    return np.linalg.solve(a.T @ a + tau * m, a.T @ g)


class NegativeSolver(SpdSolver):
    def __init__(self, n):
        self.n = n

    def _solve(self, p):
        return -p


# --- lsqr -------------------------------------------------------------------

def test_identity_converges_in_one_step(rng):
    g = rng.standard_normal(12)
    res = lsqr(IdentityOperator(12), g)
    assert res.iterations == 1
    assert res.exact
    np.testing.assert_allclose(res.solution, g, rtol=1e-15)


def test_dense_damped_matches_normal_equation(rng):
    a = rng.standard_normal((60, 40))
    g = rng.standard_normal(60)
    res = lsqr(DenseOperator(a), g, tau=0.1, stop=StoppingConfig.fixed(200))
    assert rel(res.solution, normal_solve(a, g, 0.1)) <= 1e-8


def test_zero_data_returns_zero():
    res = lsqr(DenseOperator(np.eye(3)), np.zeros(3))
    assert res.iterations == 0 and res.exact
    assert not res.solution.any()


def test_trace_quantities_match_direct_formulas(rng):
    a = rng.standard_normal((50, 30))
    g = rng.standard_normal(50)
    tau = 0.3
    res = lsqr(DenseOperator(a), g, tau=tau, stop=StoppingConfig.fixed(12), store_iterates=True)
    assert len(res.trace) == res.iterations == 12
    for i, f in enumerate(res.trace.iterates):
        r = g - a @ f
        assert res.trace.res_data[i] == pytest.approx(np.linalg.norm(r), rel=1e-12)
        damped = np.sqrt(r @ r + tau * f @ f)
        assert res.trace.res_damped[i] == pytest.approx(damped, rel=1e-8)
        # ||Abar^T rbar|| with Abar = [A; sqrt(tau) I]
        arnorm = np.linalg.norm(a.T @ r - tau * f)
        est = res.trace.s2_estimate[i] * res.trace.anorm_est[i] * res.trace.res_damped[i]
        assert est == pytest.approx(arnorm, rel=1e-6)
    assert np.all(np.diff(res.trace.anorm_est) > 0)
    assert np.all(np.diff(res.trace.cond_est) >= 0)


@pytest.mark.parametrize("tau", [0.0, 0.05])
def test_residual_monotone(tau, deconv128):
    b = deconv128
    res = lsqr(b.operator, b.g, tau=tau, stop=StoppingConfig.fixed(40))
    slack = 1e-12 * np.linalg.norm(b.g)
    assert np.all(np.diff(res.trace.res_damped) <= slack)
    if tau == 0:
        assert np.all(np.diff(res.trace.res_data) <= slack)
        np.testing.assert_array_equal(res.trace.res_data, res.trace.res_damped)


# --- mlsqr ------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("tau", [0.0, 0.2])
def test_identity_msolver_reproduces_lsqr(seed, tau):
    rng = np.random.default_rng(seed)
    a = DenseOperator(rng.standard_normal((70, 50)))
    g = rng.standard_normal(70)
    stop = StoppingConfig.fixed(30)
    ref = lsqr(a, g, tau, stop, store_iterates=True)
    got = mlsqr(a, IdentitySolver(50), g, tau, stop, store_iterates=True)
    assert got.iterations == ref.iterations == 30
    for x, y in zip(got.trace.iterates, ref.trace.iterates):
        assert rel(x, y) <= 1e-10


def explicit_pair(seed, n=30):
    rng = np.random.default_rng(seed)
    a = DenseOperator(rng.standard_normal((n + 10, n)))
    g = rng.standard_normal(n + 10)
    m = random_spd(n, rng)
    return a, g, m, sla.cholesky(m.toarray(), lower=False)


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("tau", [0.0, 0.5])
def test_mlsqr_matches_explicit_factor_stepwise(seed, tau):
    # without reorthogonalization the two rounding patterns separate once
    # Ritz values converge, so compare the iterations before that happens
    a, g, m, l_factor = explicit_pair(seed)
    stop = StoppingConfig.fixed(12)
    ref = lsqr_explicit(a, l_factor, g, tau, stop, store_iterates=True)
    got = mlsqr(a, factorize(m), g, tau, stop, store_iterates=True)
    assert got.iterations == ref.iterations == 12
    for x, y in zip(got.trace.iterates, ref.trace.iterates):
        assert rel(x, y) <= 1e-8


def test_explicit_accepts_lower_triangular_factor(rng):
    a = DenseOperator(rng.standard_normal((30, 20)))
    g = rng.standard_normal(30)
    f = np.tril(rng.standard_normal((20, 20)), -1) * 0.2 + np.diag(rng.uniform(1, 2, 20))
    m = SparseSpd.from_matrix(f.T @ f)
    stop = StoppingConfig.fixed(8)
    assert rel(lsqr_explicit(a, f, g, 0.2, stop).solution,
               mlsqr(a, factorize(m), g, 0.2, stop).solution) <= 1e-8


@pytest.mark.parametrize("seed", range(3))
def test_mlsqr_matches_explicit_factor_converged(seed):
    a, g, m, l_factor = explicit_pair(seed)
    stop = StoppingConfig(atol=1e-14, btol=1e-14, conlim=1e14, max_iters=300)
    ref = lsqr_explicit(a, l_factor, g, 0.0, stop)
    got = mlsqr(a, factorize(m), g, 0.0, stop)
    assert rel(got.solution, ref.solution) <= 1e-8
    assert rel(got.solution, np.linalg.lstsq(a.to_dense(), g, rcond=None)[0]) <= 1e-8


def test_mlsqr_matches_explicit_factor_dim_200():
    a, g, m, l_factor = explicit_pair(7, n=200)
    stop = StoppingConfig.fixed(15)
    ref = lsqr_explicit(a, l_factor, g, 0.1, stop, store_iterates=True)
    got = mlsqr(a, factorize(m), g, 0.1, stop, store_iterates=True)
    for x, y in zip(got.trace.iterates, ref.trace.iterates):
        assert rel(x, y) <= 1e-8


def test_mlsqr_matches_explicit_on_diffusion_prior(deconv128):
    b = deconv128
    spec = PenaltySpec(PenaltyKind.PM_LOG, T=0.005)
    m = assemble_m(b.grid, b.f_true, spec, None)
    l_factor = sla.cholesky(m.toarray(), lower=False)
    # up to the discrepancy stop, well before Ritz values settle
    stop = StoppingConfig.discrepancy(b.noise_level, 1.1, 50)
    ref = lsqr_explicit(b.operator, l_factor, b.g, 0.0, stop, store_iterates=True)
    got = mlsqr(b.operator, factorize(m), b.g, 0.0, stop, store_iterates=True)
    assert got.iterations == ref.iterations
    assert got.stop_reason is ref.stop_reason is Criterion.S4
    for x, y in zip(got.trace.iterates, ref.trace.iterates):
        assert rel(x, y) <= 1e-8


def test_explicit_with_identity_factor_is_lsqr(rng):
    a = DenseOperator(rng.standard_normal((25, 15)))
    g = rng.standard_normal(25)
    stop = StoppingConfig.fixed(10)
    np.testing.assert_allclose(lsqr_explicit(a, np.eye(15), g, 0.1, stop).solution,
                               lsqr(a, g, 0.1, stop).solution, rtol=1e-13)
    with pytest.raises(np.linalg.LinAlgError):
        lsqr_explicit(a, np.diag(np.r_[np.ones(14), 0.0]), g)


def test_one_solve_per_iteration(rng):
    class Counting(IdentitySolver):
        calls = 0

        def _solve(self, p):
            Counting.calls += 1
            return super()._solve(p)

    a = DenseOperator(rng.standard_normal((30, 20)))
    res = mlsqr(a, Counting(20), rng.standard_normal(30), stop=StoppingConfig.fixed(7))
    assert Counting.calls == res.iterations + 1


def test_non_spd_solver_breaks_down(rng):
    a = DenseOperator(rng.standard_normal((10, 6)))
    with pytest.raises(SolverBreakdown) as exc:
        mlsqr(a, NegativeSolver(6), rng.standard_normal(10))
    assert exc.value.iteration == 0


def test_dimension_checks(rng):
    a = DenseOperator(rng.standard_normal((10, 6)))
    with pytest.raises(ValueError):
        mlsqr(a, IdentitySolver(5), np.ones(10))
    with pytest.raises(ValueError):
        lsqr(a, np.ones(9))
    with pytest.raises(ValueError):
        lsqr(a, np.ones(10), tau=-1.0)


def bidiag_defects(a, msolver, g, m_apply, steps=20):
    res = mlsqr(a, msolver, g, stop=StoppingConfig.fixed(steps), store_basis=True)
    bd = res.bidiag
    v = bd.basis_matrix(steps)
    u = np.column_stack(bd.left[:steps + 1])
    bmat = bd.matrix(steps)
    av = np.column_stack([a.apply(c) for c in v.T])
    mv = np.column_stack([m_apply(c) for c in v.T])
    assert min(bd.alphas) >= 0 and min(bd.betas) >= 0
    return (np.linalg.norm(av - u @ bmat) / np.linalg.norm(bmat),
            np.abs(u.T @ u - np.eye(steps + 1)).max(),
            np.abs(v.T @ mv - np.eye(steps)).max())


def test_bidiagonal_relation_ideal_prior(deconv128):
    b = deconv128
    m, solver = make_ideal_preconditioner(b)
    relation, _, _ = bidiag_defects(b.operator, solver, b.g, m.matvec)
    assert relation <= 1e-8


@pytest.mark.parametrize("shift", [None, 100.0])
def test_orthogonality_drift(shift, deconv128):
    b = deconv128
    if shift is None:
        solver, m_apply = IdentitySolver(128), (lambda x: x)
    else:
        m = assemble_m(b.grid, b.f_true, PenaltySpec(PenaltyKind.PM_LOG, T=0.005), shift)
        solver, m_apply = factorize(m), m.matvec
    relation, u_drift, v_drift = bidiag_defects(b.operator, solver, b.g, m_apply)
    assert relation <= 1e-8
    assert u_drift <= 1e-4 and v_drift <= 1e-4


def test_mlsqr_monotone_residual(deconv128):
    b = deconv128
    _, solver = make_ideal_preconditioner(b)
    slack = 1e-12 * np.linalg.norm(b.g)
    for tau in (0.0, 1e-3):
        res = mlsqr(b.operator, solver, b.g, tau, StoppingConfig.fixed(25))
        assert np.all(np.diff(res.trace.res_damped) <= slack)
        if tau == 0:
            assert np.all(np.diff(res.trace.res_data) <= slack)


def test_mlsqr_damped_residual_uses_m_norm(rng):
    a = rng.standard_normal((30, 20))
    g = rng.standard_normal(30)
    m = random_spd(20, rng)
    tau = 0.4
    res = mlsqr(DenseOperator(a), factorize(m), g, tau, StoppingConfig.fixed(8), store_iterates=True)
    for i, f in enumerate(res.trace.iterates):
        r = g - a @ f
        assert res.trace.res_damped[i] == pytest.approx(np.sqrt(r @ r + tau * f @ m.matvec(f)), rel=1e-8)


# --- projected problem ------------------------------------------------------

def test_solve_projected_scalar():
    from priorlsqr.krylov import BidiagEntries
    bd = BidiagEntries(alphas=[2.0, 0.0], betas=[3.0, 0.0])
    assert solve_projected(bd, tau=0.0) == pytest.approx([1.5])
    assert solve_projected(bd, beta1=3.0, tau=1e12)[0] == pytest.approx(0.0, abs=1e-10)
    # tau > 0 with the same data: (alpha^2 + tau) y = alpha beta1
    assert solve_projected(bd, tau=5.0) == pytest.approx([6.0 / 9.0])
    with pytest.raises(ValueError):
        solve_projected(bd, steps=0)


def test_solve_projected_rank_deficient_min_norm():
    from priorlsqr.krylov import BidiagEntries
    bd = BidiagEntries(alphas=[0.0, 0.0], betas=[1.0, 0.0])
    np.testing.assert_array_equal(solve_projected(bd), [0.0])


@pytest.mark.parametrize("tau", [0.0, 1e-4, 1e-2, 1.0])
def test_projected_resolve_matches_fresh_run(tau, deconv128):
    b = deconv128
    _, solver = make_ideal_preconditioner(b)
    base = mlsqr(b.operator, solver, b.g, 0.0, StoppingConfig.fixed(12), store_basis=True)
    fresh = mlsqr(b.operator, solver, b.g, tau, StoppingConfig.fixed(12))
    assert rel(projected_solution(base, tau), fresh.solution) <= 1e-8


def test_projected_resolve_explicit_process(rng):
    a = DenseOperator(rng.standard_normal((40, 30)))
    g = rng.standard_normal(40)
    l_factor = sla.cholesky(random_spd(30, rng).toarray())
    base = lsqr_explicit(a, l_factor, g, 0.0, StoppingConfig.fixed(10), store_basis=True)
    fresh = lsqr_explicit(a, l_factor, g, 0.7, StoppingConfig.fixed(10))
    assert rel(projected_solution(base, 0.7), fresh.solution) <= 1e-8


# --- cg_normal --------------------------------------------------------------

def test_cg_identity_one_step(rng):
    g = rng.standard_normal(9)
    res = cg_normal(IdentityOperator(9), None, 0.0, g)
    assert res.iterations == 1
    np.testing.assert_allclose(res.solution, g, rtol=1e-14)


def test_cg_dense_oracle(rng):
    a = rng.standard_normal((40, 25))
    g = rng.standard_normal(40)
    m = random_spd(25, rng, cond=10)
    res = cg_normal(DenseOperator(a), m, 1.0, g, StoppingConfig(atol=1e-13, max_iters=500))
    assert res.stop_reason is Criterion.S2
    assert rel(res.solution, normal_solve(a, g, 1.0, m.toarray())) <= 1e-8


def test_cg_indefinite_detected(rng):
    a = DenseOperator(rng.standard_normal((10, 6)))
    bad = SparseSpd.from_matrix(-10 * np.eye(6))
    with pytest.raises(SolverBreakdown) as exc:
        cg_normal(a, bad, 10.0, rng.standard_normal(10))
    assert exc.value.iteration == 1


def test_three_solvers_agree(rng):
    a = rng.standard_normal((50, 30))
    g = rng.standard_normal(50)
    m = random_spd(30, rng, cond=5)
    tau = 0.5
    oracle_m = normal_solve(a, g, tau, m.toarray())
    oracle_i = normal_solve(a, g, tau)
    op = DenseOperator(a)
    stop = StoppingConfig.fixed(200)
    assert rel(lsqr(op, g, tau, stop).solution, oracle_i) <= 1e-6
    assert rel(mlsqr(op, factorize(m), g, tau, stop).solution, oracle_m) <= 1e-6
    cg = cg_normal(op, m, tau, g, StoppingConfig(atol=1e-14, max_iters=200))
    assert rel(cg.solution, oracle_m) <= 1e-6


def test_cg_needs_more_iterations_than_mlsqr(deconv128):
    b = deconv128
    m, solver = make_ideal_preconditioner(b)
    stop = StoppingConfig.discrepancy(b.noise_level, 1.1, 500)
    target = mlsqr(b.operator, solver, b.g, 0.0, stop)
    cg = cg_normal(b.operator, None, 0.0, b.g, stop)
    assert target.stop_reason is cg.stop_reason is Criterion.S4
    assert cg.iterations > target.iterations


# --- stopping ---------------------------------------------------------------

def state(**kw):
    base = dict(iteration=1, bnorm=1.0, rnorm=1.0, res_data=1.0, anorm=1.0,
                acond=1.0, arnorm=1.0, xnorm=1.0)
    base.update(kw)
    return _RecurrenceState(**base)


def test_tie_order():
    stop = StoppingConfig(delta=1.0, eta=1.1, max_iters=1, conlim=10.0,
                          enabled=frozenset(Criterion))
    everything = state(rnorm=1e-20, res_data=0.0, arnorm=0.0, acond=1e9)
    assert evaluate_stopping(everything, stop) is Criterion.S4
    assert PRIORITY[0] is Criterion.S4 and PRIORITY[-1] is Criterion.MAX_ITER
    assert evaluate_stopping(state(rnorm=1e-20, arnorm=0.0, acond=1e9, res_data=5.0), stop) is Criterion.S1
    assert evaluate_stopping(state(arnorm=0.0, acond=1e9, res_data=5.0), stop) is Criterion.S2
    assert evaluate_stopping(state(acond=1e9, res_data=5.0), stop) is Criterion.S3
    assert evaluate_stopping(state(res_data=5.0), stop) is Criterion.MAX_ITER
    assert evaluate_stopping(state(res_data=5.0, iteration=0), stop) is None


def test_disabled_criteria_do_not_fire():
    stop = StoppingConfig.fixed(10)
    assert stop.enabled == {Criterion.MAX_ITER}
    assert evaluate_stopping(state(rnorm=0.0, arnorm=0.0, acond=1e300), stop) is None


def test_config_validation():
    with pytest.raises(ValueError):
        StoppingConfig(enabled=frozenset({Criterion.S4}))
    with pytest.raises(ValueError):
        StoppingConfig.discrepancy(0.01, eta=1.0)
    with pytest.raises(ValueError):
        StoppingConfig(max_iters=0)


def test_s1_fires_on_consistent_system(rng):
    a = rng.standard_normal((20, 20)) + 5 * np.eye(20)
    x = rng.standard_normal(20)
    stop = StoppingConfig(atol=1e-12, btol=1e-12, conlim=1e12, max_iters=200)
    res = lsqr(DenseOperator(a), a @ x, stop=stop)
    assert res.stop_reason is Criterion.S1
    assert rel(res.solution, x) <= 1e-9


def test_s2_fires_with_atol(deconv128):
    b = deconv128
    stop = StoppingConfig(atol=1e-2, btol=0.0, conlim=1e300, max_iters=500)
    res = lsqr(b.operator, b.g, tau=1e-3, stop=stop)
    assert res.stop_reason is Criterion.S2
    assert res.trace.s2_estimate[-1] <= 1e-2
    assert all(s > 1e-2 for s in res.trace.s2_estimate[:-1])


def test_s3_fires_on_conlim(deconv128):
    b = deconv128
    res = lsqr(b.operator, b.g, stop=StoppingConfig(atol=0, btol=0, conlim=50, max_iters=500))
    assert res.stop_reason is Criterion.S3
    assert res.trace.cond_est[-1] >= 50 > res.trace.cond_est[-2]


def test_s4_uses_true_residual_when_damped(deconv128):
    b = deconv128
    stop = StoppingConfig.discrepancy(b.noise_level, 1.1, 300)
    res = lsqr(b.operator, b.g, tau=1e-4, stop=stop)
    assert res.stop_reason is Criterion.S4
    assert np.linalg.norm(b.g - b.operator.apply(res.solution)) <= 1.1 * b.noise_level
    assert res.trace.res_damped[-1] > res.trace.res_data[-1]


# --- Krylov bases -----------------------------------------------------------

def test_basis_eigenvector_is_one_dimensional():
    a = DenseOperator(np.diag([1.0, 2.0, 3.0, 4.0]))
    basis, complete = krylov_basis(a, np.array([0, 0, 5.0, 0]), 3)
    assert basis.shape == (4, 1) and not complete
    np.testing.assert_allclose(np.abs(basis[:, 0]), [0, 0, 1, 0])


def test_basis_orthonormal(deconv128):
    b = deconv128
    m, solver = make_ideal_preconditioner(b)
    for kw in ({}, {"m": m, "tau": 0.1}, {"msolver": solver}):
        basis, complete = krylov_basis(b.operator, b.g, 6, **kw)
        assert complete and basis.shape == (128, 6)
        np.testing.assert_allclose(basis.T @ basis, np.eye(6), atol=1e-12)


def test_priorconditioned_space_independent_of_tau(deconv128):
    b = deconv128
    _, solver = make_ideal_preconditioner(b)
    v0, _ = krylov_basis(b.operator, b.g, 5, msolver=solver, tau=0.0)
    v1, _ = krylov_basis(b.operator, b.g, 5, msolver=solver, tau=1.0)
    assert np.max(sla.subspace_angles(v0, v1)) <= 1e-8


def test_damped_space_depends_on_tau(deconv128):
    b = deconv128
    m, _ = make_ideal_preconditioner(b)
    v0, _ = krylov_basis(b.operator, b.g, 5, m=m, tau=0.0)
    v1, _ = krylov_basis(b.operator, b.g, 5, m=m, tau=1.0)
    assert np.max(sla.subspace_angles(v0, v1)) > 1e-3


def test_basis_argument_checks(deconv128):
    b = deconv128
    m, solver = make_ideal_preconditioner(b)
    with pytest.raises(ValueError):
        krylov_basis(b.operator, b.g, 3, msolver=solver, m=m)
    with pytest.raises(ValueError):
        krylov_basis(b.operator, b.g, 0)


# --- extended-precision reference ---------------------------------------------

def _mp_reference_iterates(a, m, g, steps, dps=50):
    """Exact-arithmetic stand-in: the M-weighted bidiagonalization carried out
    in 50-digit arithmetic, then the projected least-squares problems."""
    import mpmath as mp
    with mp.workdps(dps):
        return _mp_bidiag_iterates(mp, a, m, g, steps)


def _mp_bidiag_iterates(mp, a, m, g, steps):
    n = a.shape[1]
    amp = mp.matrix(a.tolist())
    at = amp.T
    mmp = mp.matrix(m.tolist())
    gv = mp.matrix(g.tolist())

    def dot(x, y):
        return mp.fsum(x[i] * y[i] for i in range(len(x)))

    beta = mp.sqrt(dot(gv, gv))
    u = gv / beta
    p = at * u
    v = mp.lu_solve(mmp, p)
    alpha = mp.sqrt(dot(v, p))
    v, p = v / alpha, p / alpha
    vs, alphas, betas = [v], [alpha], [beta]
    for _ in range(steps):
        w = amp * v - alpha * u
        beta = mp.sqrt(dot(w, w))
        u = w / beta
        p = at * u - beta * p
        v = mp.lu_solve(mmp, p)
        alpha = mp.sqrt(dot(v, p))
        v, p = v / alpha, p / alpha
        vs.append(v)
        alphas.append(alpha)
        betas.append(beta)
    out = []
    for i in range(1, steps + 1):
        b = mp.zeros(i + 1, i)
        for j in range(i):
            b[j, j] = alphas[j]
            b[j + 1, j] = betas[j + 1]
        rhs = mp.zeros(i + 1, 1)
        rhs[0] = betas[0]
        y = mp.lu_solve(b.T * b, b.T * rhs)
        f = mp.zeros(n, 1)
        for j in range(i):
            f += vs[j] * y[j]
        out.append(np.array([float(x) for x in f]))
    return out


def test_both_formulations_track_extended_precision_reference():
    # small deconvolution with the ideal edge prior: both float64 variants
    # lose orthogonality at the same point and by the same amount
    from priorlsqr.problems import make_deconv1d
    b = make_deconv1d(n=48, seed=3)
    m, solver = make_ideal_preconditioner(b)
    a = b.operator.to_dense()
    steps = 12
    exact = _mp_reference_iterates(a, m.toarray(), b.g, steps)
    stop = StoppingConfig.fixed(steps)
    factor = sla.cholesky(m.toarray(), lower=False)
    e1 = lsqr_explicit(DenseOperator(a), factor, b.g, 0.0, stop, store_iterates=True)
    e2 = mlsqr(DenseOperator(a), solver, b.g, 0.0, stop, store_iterates=True)
    errs = [(rel(x, ref), rel(y, ref)) for x, y, ref in zip(e1.trace.iterates, e2.trace.iterates, exact)]
    assert errs[0][0] <= 1e-8 and errs[0][1] <= 1e-8
    for err_explicit, err_mlsqr in errs:
        # the factorization-free variant is never meaningfully less accurate
        assert err_mlsqr <= 2 * err_explicit + 1e-8
