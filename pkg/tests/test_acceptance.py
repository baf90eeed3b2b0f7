"""Acceptance suite: one test per criterion, each reporting a pass/fail line."""
import time

import numpy as np
import pytest

from gksm.core import SubspaceBasis
from gksm.harness.config import bundled_config_names, load_bundled
from gksm.harness.experiment import build_operator, build_problem, run_experiment
from gksm.harness.rates import RateEnvelope, fit_and_check, kl_rate_envelope, simulate_equality_recursion
from gksm.operators import DenseOperator, dot_test
from gksm.qnmetric import DEFAULT_NU1, DEFAULT_NU2, mix_coefficient
from gksm.regularizers import Tikhonov, fd_gradient_check, make_regularizer
from gksm.solver import Problem, SolverConfig, cqnpm_run, gksm_run, project_linf_ball

from _oracles import grid_mix_coefficient, projector_distance
from _report import record
from conftest import crandn

MODES = ("gksm", "cqnpm", "apg")
STANDARD = "standard"
STRONGLY_CONVEX = "standard"
NONCONVEX = "nonconvex_logprior"
CONSTRAINED = "constrained_tikhonov"


@pytest.fixture(scope="module")
def bundled_runs():
    """Every bundled config in every mode, 150 iterations, with the APG-500 F* protocol."""
    runs = {}
    for name in bundled_config_names():
        for mode in MODES:
            cfg = load_bundled(name).with_overrides(
                solver__mode=mode, solver__max_iter=150, solver__K=None,
                output__fstar_protocol=True, diagnostics__fstar_iters=500)
            if name == CONSTRAINED:
                cfg = cfg.with_overrides(solver__K=load_bundled(name)["solver.K"])
            runs[name, mode] = run_experiment(cfg, write=False)
    return runs


def test_criterion_01_adjoint_consistency():
    t0 = time.perf_counter()
    errors = {}
    base = load_bundled(STANDARD)
    for mask in ("cartesian_vd", "pseudo_radial", "full"):
        op, _, _ = build_operator(base.with_overrides(problem__mask=mask))
        errors[f"masked_fourier/{mask}"] = dot_test(op, 20, seed=1)
    op, _, _ = build_operator(base.with_overrides(problem__operator="convolution"))
    errors["convolution"] = dot_test(op, 20, seed=2)
    op, _, _ = build_operator(base.with_overrides(problem__operator="dense", problem__height=32,
                                                  problem__width=32))
    errors["dense"] = dot_test(op, 20, seed=3)
    elapsed = time.perf_counter() - t0
    worst = max(errors.values())
    ok = worst <= 1e-10 and elapsed < 5.0
    assert record(1, "adjoint consistency", ok,
                  f"worst relative error {worst:.2e} over {len(errors)} operators, {elapsed:.2f} s")


def test_criterion_02_gradient_correctness():
    shape = (64, 64)
    rng = np.random.default_rng(2)
    worst = {}
    for kind in ("tikhonov", "huber_tv", "log_smooth"):
        f = make_regularizer(kind, 0.05, shape, mu=0.05, eps=0.01)
        errs = [fd_gradient_check(f, crandn(rng, 4096), h=1e-5, seed=i) for i in range(10)]
        worst[kind] = max(errs)
    tik = Tikhonov(0.05)
    tight = max(fd_gradient_check(tik, crandn(rng, 4096), h=1e-3, seed=i) for i in range(10))
    ok = max(worst.values()) <= 1e-6 and tight <= 1e-10
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f", tikhonov (h=1e-3) {tight:.1e}"
    assert record(2, "gradient correctness", ok, detail)


def test_criterion_03_bounded_metric(bundled_runs):
    state = bundled_runs[NONCONVEX, "gksm"].state
    ok_run = len(state.history) == 150
    min_eig = np.inf
    eig_residual = 0.0
    for B in state.metrics:
        lo, hi = B.extremal_eigs()
        min_eig = min(min_eig, lo)
        ok_run &= 0 < lo <= hi
        if B.u is not None:
            # u is the eigenvector of the smallest eigenvalue; its complement has 1/tau
            u = B.u / np.linalg.norm(B.u)
            eig_residual = max(eig_residual, np.linalg.norm(B.apply(u) - lo * u) / hi)
    rng = np.random.default_rng(3)
    worst = 0.0
    n = 16
    for _ in range(20):
        H = crandn(rng, n, n)
        H = H @ H.conj().T / n - rng.uniform(0, 2) * np.eye(n)
        x0, x1 = crandn(rng, n), crandn(rng, n)
        from gksm.qnmetric import build_metric

        B = build_metric(x0, x1, H @ x0, H @ x1)
        ev = np.linalg.eigvalsh(B.to_dense())
        lo, hi = B.extremal_eigs()
        worst = max(worst, abs(lo - ev[0]), abs(hi - ev[-1]))
    ok = ok_run and eig_residual < 1e-10 and worst <= 1e-10
    assert record(3, "bounded metric", ok,
                  f"150-iteration nonconvex run min lambda {min_eig:.2e} > 0; "
                  f"dense eigensolver gap {worst:.1e} on 20 metrics")


def test_criterion_04_mixing_branches():
    rng = np.random.default_rng(4)
    n = 12
    s = crandn(rng, n)
    s /= np.linalg.norm(s)
    m_perp = crandn(rng, n)
    m_perp -= s * np.vdot(s, m_perp).real
    m_perp /= np.linalg.norm(m_perp)
    cases = {"m = 2s": (s, 2 * s, 0.0), "m = -s": (s, -s, (1 + DEFAULT_NU1) / 2),
             "m orthogonal": (s, m_perp, 4.951e-3)}
    gaps = {}
    ok = True
    for label, (sv, mv, expected) in cases.items():
        a, _ = mix_coefficient(sv, mv, DEFAULT_NU1, DEFAULT_NU2)
        oracle = grid_mix_coefficient(sv, mv, DEFAULT_NU1, DEFAULT_NU2, step=1e-8)
        gaps[label] = abs(a - oracle)
        ok &= gaps[label] <= 1e-6 and abs(a - expected) <= 1e-6
    # quadratic prior with unit weight: every metric must be exactly the identity
    A = DenseOperator(crandn(rng, 50, 30) / 10)
    prob = Problem(A, Tikhonov(1.0), A.apply(crandn(rng, 30)))
    state = gksm_run(prob, SolverConfig(max_iter=15))
    identity = all(B.u is None and B.tau == 1.0 for B in state.metrics)
    ok &= identity
    detail = ", ".join(f"{k} |a - grid| {v:.1e}" for k, v in gaps.items())
    assert record(4, "mixing branches", ok, detail + f"; quadratic prior B = I exactly: {identity}")


def test_criterion_05_descent(bundled_runs):
    lines = []
    desc = ineq = gated = 0
    for (name, mode), res in bundled_runs.items():
        d = res.diagnostics
        assert d.iterations == 150
        desc += d.descent_violations
        ineq += d.inequality_violations
        gated += d.gated_iterations
        if d.descent_violations or d.inequality_violations:
            lines.append(f"{name}/{mode}")
    ok = desc == 0 and ineq == 0
    assert record(5, "monotone descent", ok,
                  f"{len(bundled_runs)} runs, descent violations {desc}, per-iteration inequality "
                  f"violations {ineq} over {gated} gated iterations {lines or ''}")


def test_criterion_06_delta_bound(bundled_runs):
    applicable = [(k, r.diagnostics) for k, r in bundled_runs.items() if r.diagnostics.delta_bound_applicable]
    violations = sum(d.delta_bound_violations for _, d in applicable)
    std = bundled_runs[STANDARD, "gksm"].diagnostics
    ok = violations == 0 and std.delta_bound_applicable and std.delta_ratio <= 1e-3
    assert record(6, "running-minimum step bound", ok,
                  f"bound checked on {len(applicable)} runs with upsilon > 0, violations {violations}; "
                  f"standard Delta_150/Delta_1 = {std.delta_ratio:.1e}")


def test_criterion_07_krylov_reduction():
    rng = np.random.default_rng(7)
    n = 64
    A = DenseOperator(crandn(rng, 96, n) / np.sqrt(192))
    Amat = A.to_dense()
    prob = Problem(A, Tikhonov(0.5), Amat @ crandn(rng, n) + 0.01 * crandn(rng, 96))
    AhA = Amat.conj().T @ Amat
    bases = [None]
    init = SubspaceBasis(n)
    init.orthonormal_append(Amat.conj().T @ prob.y)
    bases = [init.V.copy()]
    gksm_run(prob, SolverConfig(max_iter=7), callback=lambda s: bases.append(s.basis.V.copy()))
    krylov = [Amat.conj().T @ prob.y]
    dists = []
    for V in bases:
        K = np.column_stack(krylov)
        dists.append(projector_distance(V, K))
        krylov.append(AhA @ krylov[-1])
    ok = len(dists) == 8 and max(dists) <= 1e-8
    assert record(7, "Krylov reduction", ok,
                  f"max projector distance {max(dists):.1e} for k = 1..{len(dists)}")


def test_criterion_08_mode_equivalence():
    cfg = load_bundled(NONCONVEX)
    built = build_problem(cfg)
    kw = dict(max_iter=50, inner_tol=1e-10, seed=0, keep_iterates=True)
    a = gksm_run(built.problem, SolverConfig(K=0, **kw))
    b = cqnpm_run(build_problem(cfg).problem, SolverConfig(**kw))
    rel = max(np.linalg.norm(xa - xb) / max(np.linalg.norm(xb), 1e-300)
              for xa, xb in zip(a.iterates[1:], b.iterates[1:]))
    ok = len(a.iterates) == 51 and rel <= 1e-8
    assert record(8, "K = 0 equals CQNPM", ok, f"max relative iterate gap {rel:.1e} over 50 iterations")


def test_criterion_09_tikhonov_oracle():
    cfg = load_bundled("tikhonov_smoke")
    t0 = time.perf_counter()
    res = run_experiment(cfg, write=False)
    elapsed = time.perf_counter() - t0
    prob = res.built.problem
    Amat = prob.A.to_dense()
    lam = cfg["regularizer.lambda"]
    ref = np.linalg.solve(Amat.conj().T @ Amat + lam * np.eye(prob.n), Amat.conj().T @ prob.y)
    err = np.linalg.norm(res.state.x - ref) / np.linalg.norm(ref)
    ok = (res.exit_code == 0 and prob.n <= 4096 and len(res.state.history) <= 200 and err <= 1e-6
          and elapsed < 10.0)
    assert record(9, "Tikhonov closed form", ok,
                  f"N = {prob.n}, relative error {err:.1e} after {len(res.state.history)} iterations, "
                  f"{elapsed:.2f} s")


def projected_gradient(prob, iters=20000):
    Amat = prob.A.to_dense()
    lam = prob.f.lam
    L = np.linalg.norm(Amat, 2) ** 2 + lam
    ahy = Amat.conj().T @ prob.y
    AhA = Amat.conj().T @ Amat
    x = np.zeros(prob.n, complex)
    for _ in range(iters):
        x_new = project_linf_ball(x - (AhA @ x - ahy + lam * x) / L)
        if np.linalg.norm(x_new - x) <= 1e-16 * (1 + np.linalg.norm(x)):
            return x_new
        x = x_new
    return x


def test_criterion_10_feasibility(bundled_runs):
    worst = 0.0
    for (name, mode), res in bundled_runs.items():
        if load_bundled(name)["solver.constrained"]:
            worst = max(worst, max(r.x_inf for r in res.state.history))
    res = bundled_runs[CONSTRAINED, "gksm"]
    oracle = projected_gradient(res.built.problem)
    active = np.abs(oracle) >= 1 - 1e-9
    x = res.state.x
    mag_gap = float(np.max(np.abs(np.abs(x[active]) - 1.0))) if active.any() else np.inf
    agree = float(np.max(np.abs(x - oracle)))
    ok = worst <= 1 + 1e-9 and active.sum() > 0 and mag_gap <= 1e-9 and agree <= 1e-6
    assert record(10, "constrained feasibility", ok,
                  f"max |x_i| {worst:.17g}; {int(active.sum())} active components, "
                  f"| |x_i| - 1 | <= {mag_gap:.1e}, distance to projected-gradient oracle {agree:.1e}")


def test_criterion_11_rate_envelopes(bundled_runs):
    dominated = True
    for t in (0.25, 0.5, 0.75):
        for gamma in (0.5, 2.0, 50.0):
            for phi1 in (0.1, 1.0, 10.0):
                phi = simulate_equality_recursion(t, gamma, phi1, 1000)
                env = RateEnvelope(t, gamma, phi1)
                dominated &= all(phi[k] <= kl_rate_envelope(env, k) for k in range(1, 1001))
    res = bundled_runs[STRONGLY_CONVEX, "gksm"]
    gaps = res.state.costs - res.diagnostics.fstar
    fit = fit_and_check(gaps, 0.5)
    ok = dominated and fit.ok
    assert record(11, "rate envelopes", ok,
                  f"exact dominance over k = 1..1000 for t in {{0.25, 0.5, 0.75}}: {dominated}; "
                  f"t = 1/2 fit gamma {fit.gamma:.3g}, held-out violations {fit.holdout_violations}")


def test_criterion_12_call_budget(bundled_runs):
    g = bundled_runs[STANDARD, "gksm"].state.history
    sub = [r for r in g if r.enrich != "full"]
    exact = all((r.n_apply, r.n_adjoint, r.n_grad) == (1, 1, 1) for r in sub)
    c = bundled_runs[STANDARD, "cqnpm"]
    assert c.built.problem is not None
    hist = c.state.history
    xnorm = np.linalg.norm(c.state.x)
    # iterations before the outer method has converged to rounding level
    active = [r for r in hist if r.step_norm > 1e-10 * (1 + xnorm)]
    least = min(min(r.n_apply, r.n_adjoint) for r in active)
    mean = np.mean([r.n_apply for r in active])
    ok = exact and len(sub) == 150 and least >= 5
    assert record(12, "operator-call budget", ok,
                  f"GKSM (apply, adjoint, grad) = (1, 1, 1) on all {len(sub)} subspace iterations: {exact}; "
                  f"CQNPM min {least} / mean {mean:.1f} apply per iteration over its "
                  f"{len(active)} pre-convergence iterations")
