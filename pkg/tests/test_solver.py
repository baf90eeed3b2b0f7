import numpy as np
import pytest
import scipy.linalg

from gksm.core import SubspaceBasis
from gksm.operators import DenseOperator
from gksm.qnmetric import RankOneMetric, build_metric
from gksm.regularizers import HuberTV, LogSmooth, Tikhonov
from gksm.solver import (
    ConfigError,
    DegenerateProblemError,
    Problem,
    SolverConfig,
    apg_run,
    cqnpm_run,
    enrichment_residual,
    fstar_protocol,
    full_space_surrogate_solve,
    gksm_run,
    project_linf_ball,
    reduced_constrained_solve,
    reduced_unconstrained_solve,
    run,
)

from _oracles import projector_distance
from conftest import crandn


def make_problem(rng, m=40, n=30, f=None, scale=1.0):
    A = DenseOperator(crandn(rng, m, n) / np.sqrt(2 * m))
    x_true = scale * crandn(rng, n)
    y = A.to_dense() @ x_true + 0.01 * crandn(rng, m)
    return Problem(A, f if f is not None else Tikhonov(0.1), y)


def nontrivial_metric(rng, n):
    H = crandn(rng, n, n)
    H = H @ H.conj().T / n - 0.5 * np.eye(n)
    x0, x1 = crandn(rng, n), crandn(rng, n)
    B = build_metric(x0, x1, H @ x0, H @ x1)
    assert not B.is_scaled_identity
    return B


def surrogate_oracle_lstsq(Amat, B, alpha, g, x_k, y, V):
    """Minimize the surrogate over span(V) as a stacked least-squares problem."""
    D = B.to_dense()
    R = scipy.linalg.sqrtm(D)
    w = x_k - alpha * np.linalg.solve(D, g)
    lhs = np.vstack([Amat @ V, R @ V / np.sqrt(alpha)])
    rhs = np.concatenate([y, R @ w / np.sqrt(alpha)])
    beta = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
    return V @ beta


def test_project_linf_ball_keeps_phase():
    x = np.array([3 + 4j, 0.5j, -2.0, 0.0])
    p = project_linf_ball(x)
    assert np.allclose(p, [0.6 + 0.8j, 0.5j, -1.0, 0.0])
    assert np.max(np.abs(p)) <= 1.0


def test_reduced_unconstrained_matches_least_squares_oracle(rng):
    prob = make_problem(rng)
    n = prob.n
    B = nontrivial_metric(rng, n)
    basis = SubspaceBasis(n, prob.A.range_dim)
    for _ in range(6):
        basis.orthonormal_append(crandn(rng, n), prob.A)
    x_k = basis.V @ crandn(rng, 6)
    g = crandn(rng, n)
    _, x_next = reduced_unconstrained_solve(prob.A, basis, B, 0.7, g, x_k, prob.y)
    ref = surrogate_oracle_lstsq(prob.A.to_dense(), B, 0.7, g, x_k, prob.y, basis.V)
    assert np.allclose(x_next, ref, atol=1e-9)
    # optimality: the surrogate gradient is orthogonal to the subspace
    r = enrichment_residual(prob.A, B, 0.7, x_next, x_k, g, prob.y)
    assert np.max(np.abs(basis.V.conj().T @ r)) < 1e-10 * np.linalg.norm(r)


def test_enrichment_residual_formula(rng):
    prob = make_problem(rng)
    n = prob.n
    B = nontrivial_metric(rng, n)
    Amat = prob.A.to_dense()
    x1, x0, g = crandn(rng, n), crandn(rng, n), crandn(rng, n)
    expected = Amat.conj().T @ (Amat @ x1 - prob.y) + g + B.to_dense() @ (x1 - x0) / 0.5
    assert np.allclose(enrichment_residual(prob.A, B, 0.5, x1, x0, g, prob.y), expected, atol=1e-10)


def test_full_space_solve_matches_dense(rng):
    prob = make_problem(rng)
    n = prob.n
    B = nontrivial_metric(rng, n)
    Amat = prob.A.to_dense()
    x_k, g = crandn(rng, n), crandn(rng, n)
    alpha = 0.8
    lhs = Amat.conj().T @ Amat + B.to_dense() / alpha
    rhs = Amat.conj().T @ prob.y + B.to_dense() @ x_k / alpha - g
    ref = np.linalg.solve(lhs, rhs)
    opn = np.linalg.norm(Amat, 2) ** 2
    x, Ax, info = full_space_surrogate_solve(prob, B, alpha, g, x_k, Amat @ x_k,
                                             Amat.conj().T @ prob.y, opn, False, 1e-12, 20000)
    assert info["converged"]
    assert np.allclose(x, ref, atol=1e-8)
    assert np.allclose(Ax, Amat @ x, atol=1e-10)


def projected_gradient_oracle(Amat, D, alpha, g, x_k, y, iters=100000):
    lip = np.linalg.norm(Amat, 2) ** 2 + np.linalg.eigvalsh(D)[-1] / alpha
    x = project_linf_ball(x_k)
    for _ in range(iters):
        grad = Amat.conj().T @ (Amat @ x - y) + g + D @ (x - x_k) / alpha
        x_new = project_linf_ball(x - grad / lip)
        if np.linalg.norm(x_new - x) < 1e-15:
            break
        x = x_new
    return x


def test_constrained_solves_match_projected_gradient(rng):
    prob = make_problem(rng, m=30, n=12, scale=2.0)
    n = prob.n
    Amat = prob.A.to_dense()
    B = RankOneMetric.identity(n, tau=2.0)
    x_k, g = np.zeros(n, complex), np.zeros(n, complex)
    ref = projected_gradient_oracle(Amat, B.to_dense(), 1.0, g, x_k, prob.y)
    assert np.sum(np.abs(ref) > 1 - 1e-12) >= 1  # the bound is active
    x, _, info = full_space_surrogate_solve(prob, B, 1.0, g, x_k, Amat @ x_k, Amat.conj().T @ prob.y,
                                            np.linalg.norm(Amat, 2) ** 2, True, 1e-13, 50000)
    assert np.allclose(x, ref, atol=1e-8)
    # with a complete basis the reduced ADMM solve sees the same problem
    basis = SubspaceBasis(n, prob.A.range_dim)
    for e in np.eye(n):
        basis.orthonormal_append(e, prob.A)
    xr, info = reduced_constrained_solve(prob.A, basis, B, 1.0, g, x_k, prob.y, 1e-12, 20000)
    assert info["converged"]
    assert np.max(np.abs(xr)) <= 1.0 + 1e-12
    assert np.allclose(xr, ref, atol=1e-7)


def test_gksm_tikhonov_reaches_closed_form(rng):
    prob = make_problem(rng)
    Amat = prob.A.to_dense()
    ref = np.linalg.solve(Amat.conj().T @ Amat + 0.1 * np.eye(prob.n), Amat.conj().T @ prob.y)
    state = gksm_run(prob, SolverConfig(max_iter=40))
    assert np.linalg.norm(state.x - ref) <= 1e-10 * np.linalg.norm(ref)
    assert np.all(np.diff(state.costs) <= 1e-12 * (1 + np.abs(state.costs[:-1])))


def test_gksm_call_budget_per_subspace_iteration(rng):
    prob = make_problem(rng, f=LogSmooth(0.05, eps=0.1))
    state = gksm_run(prob, SolverConfig(max_iter=25))
    for rec in state.history:
        if rec.enrich != "skipped":
            assert (rec.n_apply, rec.n_adjoint, rec.n_grad) == (1, 1, 1)


def test_krylov_reduction_for_quadratic_prior(rng):
    n = 64
    A = DenseOperator(crandn(rng, 80, n) / np.sqrt(160))
    Amat = A.to_dense()
    prob = Problem(A, Tikhonov(0.3), Amat @ crandn(rng, n))
    AhA, ahy = Amat.conj().T @ Amat, Amat.conj().T @ prob.y
    snaps = []
    gksm_run(prob, SolverConfig(max_iter=7), callback=lambda s: snaps.append(s.basis.V.copy()))
    krylov = [ahy]
    for V in snaps:
        krylov.append(AhA @ krylov[-1])
        K = np.column_stack(krylov)
        assert V.shape[1] == K.shape[1]
        assert projector_distance(V, K) <= 1e-8


def test_k_zero_equals_cqnpm(rng):
    prob = make_problem(rng, f=LogSmooth(0.05, eps=0.1))
    a = gksm_run(prob, SolverConfig(K=0, max_iter=20, inner_tol=1e-10, keep_iterates=True))
    b = cqnpm_run(prob, SolverConfig(max_iter=20, inner_tol=1e-10, keep_iterates=True))
    assert b.mode == "cqnpm"
    for xa, xb in zip(a.iterates, b.iterates):
        assert np.linalg.norm(xa - xb) <= 1e-12 * (1 + np.linalg.norm(xb))


@pytest.mark.parametrize("mode", ["gksm", "cqnpm", "apg"])
@pytest.mark.parametrize("constrained", [False, True])
def test_all_modes_monotone_and_feasible(rng, mode, constrained):
    f = HuberTV(0.05, (6, 5), mu=0.05)
    prob = make_problem(rng, f=f, scale=2.0)
    state = run(prob, SolverConfig(mode=mode, max_iter=30, constrained=constrained, K=10))
    c = state.costs
    assert np.all(c[1:] <= c[:-1] + 1e-10 * (1 + np.abs(c[:-1])))
    if constrained:
        assert max(r.x_inf for r in state.history) <= 1 + 1e-9


def test_apg_converges_on_tikhonov(rng):
    prob = make_problem(rng)
    Amat = prob.A.to_dense()
    ref = np.linalg.solve(Amat.conj().T @ Amat + 0.1 * np.eye(prob.n), Amat.conj().T @ prob.y)
    state = apg_run(prob, SolverConfig(mode="apg", max_iter=400))
    assert np.linalg.norm(state.x - ref) <= 1e-4 * np.linalg.norm(ref)
    assert all(np.isnan(r.lam_min) for r in state.history)


def test_restart_resets_basis(rng):
    prob = make_problem(rng, f=LogSmooth(0.05, eps=0.1))
    dims = []
    state = gksm_run(prob, SolverConfig(max_iter=12, restart_period=5),
                     callback=lambda s: dims.append(len(s.basis)))
    assert dims[4] == 2 and dims[9] == 2
    assert state.history[4].enrich.startswith("restart")
    c = state.costs
    assert np.all(c[1:] <= c[:-1] + 1e-10 * (1 + np.abs(c[:-1])))


def test_nonzero_start_is_in_search_space(rng):
    prob = make_problem(rng)
    x1 = crandn(rng, prob.n)
    state = gksm_run(prob, SolverConfig(max_iter=3), x1=x1)
    assert state.initial_cost == pytest.approx(prob.cost(x1))
    assert state.costs[1] <= state.costs[0]


def test_degenerate_problem():
    A = DenseOperator(np.eye(3))
    with pytest.raises(DegenerateProblemError):
        gksm_run(Problem(A, Tikhonov(1.0), np.zeros(3)), SolverConfig(max_iter=2))


@pytest.mark.parametrize("kwargs,key", [
    ({"alpha": -1.0}, "solver.alpha"),
    ({"max_iter": 0}, "solver.max_iter"),
    ({"K": 5, "max_iter": 3}, "solver.K"),
    ({"mode": "newton"}, "solver.mode"),
    ({"inner_tol": 0.0}, "solver.inner_tol"),
    ({"nu1": 1.5}, "metric.nu1"),
    ({"nu2": 0.5}, "metric.nu2"),
    ({"delta": 0.0}, "metric.delta"),
])
def test_config_validation_names_key(kwargs, key):
    with pytest.raises(ConfigError) as err:
        SolverConfig(**kwargs)
    assert err.value.key == key


def test_config_default_K_is_max_iter():
    assert SolverConfig(max_iter=17).K == 17


def test_fstar_protocol_is_below_final_cost(rng):
    prob = make_problem(rng)
    fstar, final = fstar_protocol(prob, constrained=False, iters=50)
    assert fstar == pytest.approx(final - 1e-8 * (1 + abs(final)), rel=1e-15)
    fstar2, _ = fstar_protocol(prob, constrained=False, iters=50, eps=0.5)
    assert fstar2 == pytest.approx(final - 0.5)


def test_history_records_are_consistent(rng):
    prob = make_problem(rng, f=LogSmooth(0.05, eps=0.1))
    state = gksm_run(prob, SolverConfig(max_iter=10, alpha=0.8, keep_iterates=True))
    xs = state.iterates
    running = np.inf
    for k, rec in enumerate(state.history):
        step = np.linalg.norm(xs[k + 1] - xs[k])
        assert rec.iter == k + 1
        assert rec.step_norm == pytest.approx(step, rel=1e-12, abs=1e-15)
        running = min(running, step**2)
        assert rec.delta_k == pytest.approx(running, rel=1e-12, abs=1e-30)
        assert rec.gradmap_norm == pytest.approx(step / 0.8, rel=1e-12, abs=1e-15)
        assert rec.cost == pytest.approx(prob.cost(xs[k + 1]), rel=1e-12)
        assert 0 < rec.lam_min <= rec.lam_max
