"""Generalized Krylov subspace method and the two reference solvers.

All three solvers minimize ``F(x) = 0.5 ||A x - y||^2 + f(x)``, optionally over
the complex infinity-norm unit ball ``C = {x : max_i |x_i| <= 1}``.

* :func:`gksm_run` minimizes the quasi-Newton surrogate

      Fbar(x; x_k) = 0.5 ||A x - y||^2 + Re<g_k, x - x_k> + ||x - x_k||_B^2 / (2 alpha)

  over a growing orthonormal basis ``V`` and enriches ``V`` with the
  surrogate gradient at the new iterate. After ``K`` iterations it switches
  to minimizing the surrogate over the whole space.
* :func:`cqnpm_run` always minimizes the surrogate over the whole space.
* :func:`apg_run` is a monotone accelerated proximal gradient method.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, fields
from typing import Callable

import numpy as np

from gksm.core import (
    GKSMError,
    IndefiniteError,
    SubspaceBasis,
    as_vector,
    hermitian_posdef_solve,
)
from gksm.operators import ForwardOperator, estimate_opnorm
from gksm.qnmetric import (
    DEFAULT_DELTA,
    DEFAULT_NU1,
    DEFAULT_NU2,
    DegenerateStepError,
    RankOneMetric,
    build_metric,
)
from gksm.regularizers import SmoothRegularizer

log = logging.getLogger(__name__)

MODES = ("gksm", "cqnpm", "apg")


class ConfigError(GKSMError, ValueError):
    """Invalid solver or experiment setting; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class DegenerateProblemError(GKSMError):
    """The problem has no usable starting subspace (``A^H y = 0``)."""


@dataclass
class SolverConfig:
    """Run settings shared by all modes.

    ``K=None`` means the subspace phase lasts for the whole run.
    """

    alpha: float = 1.0
    K: int | None = None
    max_iter: int = 150
    mode: str = "gksm"
    constrained: bool = False
    inner_tol: float = 1e-8
    inner_max_iter: int = 500
    restart_period: int = 0
    seed: int = 0
    delta: float = DEFAULT_DELTA
    nu1: float = DEFAULT_NU1
    nu2: float = DEFAULT_NU2
    drop_tol: float = 1e-12
    opnorm_iters: int = 100
    keep_iterates: bool = False

    def __post_init__(self):
        if self.K is None:
            self.K = self.max_iter
        self.validate()

    def validate(self):
        if not (isinstance(self.max_iter, (int, np.integer)) and self.max_iter >= 1):
            raise ConfigError("solver.max_iter", "must be a positive integer")
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise ConfigError("solver.alpha", "must be positive")
        if self.K < 0 or self.K > self.max_iter:
            raise ConfigError("solver.K", "must satisfy 0 <= K <= max_iter")
        if self.mode not in MODES:
            raise ConfigError("solver.mode", f"must be one of {MODES}")
        if not self.inner_tol > 0:
            raise ConfigError("solver.inner_tol", "must be positive")
        if self.inner_max_iter < 1:
            raise ConfigError("solver.inner_max_iter", "must be >= 1")
        if self.restart_period < 0:
            raise ConfigError("solver.restart_period", "must be >= 0")
        if not self.delta > 0:
            raise ConfigError("metric.delta", "must be positive")
        if not 0 < self.nu1 < 1:
            raise ConfigError("metric.nu1", "must lie in (0, 1)")
        if not self.nu2 > 1:
            raise ConfigError("metric.nu2", "must exceed 1")


@dataclass
class IterationRecord:
    """Per-iteration diagnostics; ``cost`` and ``data_term`` refer to ``x_{k+1}``."""

    iter: int
    wall_time: float
    cost: float
    data_term: float
    step_norm: float
    delta_k: float
    gradmap_norm: float
    subspace_dim: int
    lam_min: float
    lam_max: float
    enrich: str
    inner_iters: int = 0
    inner_converged: bool = True
    stagnated: bool = False
    n_apply: int = 0
    n_adjoint: int = 0
    n_grad: int = 0
    x_inf: float = 0.0


@dataclass
class SolverState:
    x: np.ndarray
    mode: str
    initial_cost: float
    initial_data_term: float
    x_prev: np.ndarray | None = None
    grad_prev: np.ndarray | None = None
    grad_cur: np.ndarray | None = None
    metric: RankOneMetric | None = None
    basis: SubspaceBasis | None = None
    full_space: bool = False
    k: int = 0
    history: list[IterationRecord] = field(default_factory=list)
    iterates: list[np.ndarray] = field(default_factory=list)
    metrics: list[RankOneMetric] = field(default_factory=list)
    opnorm_sq: float | None = None
    events: list[str] = field(default_factory=list)

    @property
    def costs(self) -> np.ndarray:
        """``[F(x_1), F(x_2), ...]``."""
        return np.array([self.initial_cost] + [r.cost for r in self.history])

    @property
    def eta_min(self) -> float:
        vals = [r.lam_min for r in self.history if not math.isnan(r.lam_min)]
        return min(vals) if vals else math.nan

    @property
    def eta_max(self) -> float:
        vals = [r.lam_max for r in self.history if not math.isnan(r.lam_max)]
        return max(vals) if vals else math.nan


class Problem:
    """``A``, ``f`` and data ``y``; counts gradient evaluations of ``f``."""

    def __init__(self, A: ForwardOperator, f: SmoothRegularizer | None, y):
        self.A = A
        self.f = f if f is not None else ZeroRegularizer()
        self.y = as_vector(y, A.range_dim, "y")
        self.n_grad = 0

    @property
    def n(self) -> int:
        return self.A.domain_dim

    def grad(self, x) -> np.ndarray:
        self.n_grad += 1
        return self.f.grad(x)

    def data_term(self, Ax) -> float:
        r = Ax - self.y
        return 0.5 * float(np.vdot(r, r).real)

    def cost(self, x, Ax=None) -> float:
        if Ax is None:
            Ax = self.A.apply(x)
        return self.data_term(Ax) + self.f.value(x)

    def counters(self) -> tuple[int, int, int]:
        return self.A.n_apply, self.A.n_adjoint, self.n_grad


class ZeroRegularizer(SmoothRegularizer):
    """``f = 0``."""

    kind = "zero"

    def __init__(self):
        self.lam = 0.0

    @property
    def lipschitz_bound(self):
        return 0.0

    def _value(self, x):
        return 0.0

    def _grad(self, x):
        return np.zeros_like(x)


def project_linf_ball(x) -> np.ndarray:
    """Clamp every entry to magnitude at most 1, keeping its phase."""
    x = as_vector(x)
    mag = np.abs(x)
    out = x.copy()
    big = mag > 1.0
    out[big] = x[big] / mag[big]
    return out


# ---------------------------------------------------------------------------
# subspace solves


def _reduced_system(basis: SubspaceBasis, metric: RankOneMetric, alpha, grad_xk, x_k,
                    gram, vh_ahy):
    V = basis.V
    M = gram + metric.reduced(V) / alpha
    # V^H (B w) / alpha with w = x_k - alpha B^{-1} g
    b = vh_ahy + V.conj().T @ (metric.apply(x_k) / alpha - grad_xk)
    return M, b


def _solve_reduced(M, b) -> np.ndarray:
    try:
        return hermitian_posdef_solve(M, b)
    except IndefiniteError:
        k = M.shape[0]
        reg = 1e-14 * abs(np.trace(M).real) / k
        log.warning("reduced system not positive definite, retrying with reg=%g", reg)
        return hermitian_posdef_solve(M, b, reg=reg)


def reduced_unconstrained_solve(A: ForwardOperator, basis: SubspaceBasis, metric: RankOneMetric,
                                alpha: float, grad_xk, x_k, y, *, ahy=None, gram=None,
                                vh_ahy=None):
    """Minimize the surrogate over ``span(V)`` by a k-by-k Hermitian solve.

    Solves ``(V^H A^H A V + V^H B V / alpha) beta = V^H (A^H y + B w / alpha)``
    with ``w = x_k - alpha B^{-1} grad_xk``. ``gram = (AV)^H (AV)``,
    ``ahy = A^H y`` and ``vh_ahy = V^H A^H y`` may be passed in to avoid
    recomputation.

    Returns:
        (beta, x_next) with ``x_next = V beta``.
    """
    if len(basis) == 0:
        raise GKSMError("empty subspace basis")
    AV = basis.AV
    if gram is None:
        gram = AV.conj().T @ AV
    if vh_ahy is None:
        if ahy is None:
            ahy = A.adjoint(y)
        vh_ahy = basis.V.conj().T @ ahy
    M, b = _reduced_system(basis, metric, alpha, grad_xk, x_k, gram, vh_ahy)
    beta = _solve_reduced(M, b)
    return beta, basis.V @ beta


def reduced_constrained_solve(A: ForwardOperator, basis: SubspaceBasis, metric: RankOneMetric,
                              alpha: float, grad_xk, x_k, y, inner_tol: float = 1e-8,
                              inner_max_iter: int = 500, *, ahy=None, gram=None, vh_ahy=None,
                              warm: dict | None = None):
    """Minimize the surrogate over ``{V beta : ||V beta||_inf <= 1}``.

    The constraint couples all N entries, so the k-dimensional problem is
    split as ``z = V beta`` and solved by ADMM: the ``beta`` step reuses the
    k-by-k system, the ``z`` step is the entrywise projection. The result is
    rescaled by ``max(1, ||V beta||_inf)``, which keeps it inside ``span(V)``
    and exactly feasible because ``C`` is balanced.

    ``warm`` is a dict carrying ``z`` and the dual variable between calls;
    it is updated in place.

    Returns:
        (x_next, info) where ``info`` has keys ``iters`` and ``converged``.
    """
    if len(basis) == 0:
        raise GKSMError("empty subspace basis")
    V = basis.V
    AV = basis.AV
    if gram is None:
        gram = AV.conj().T @ AV
    if vh_ahy is None:
        if ahy is None:
            ahy = A.adjoint(y)
        vh_ahy = V.conj().T @ ahy
    M, b = _reduced_system(basis, metric, alpha, grad_xk, x_k, gram, vh_ahy)
    beta = _solve_reduced(M, b)
    x = V @ beta
    if np.max(np.abs(x), initial=0.0) <= 1.0:
        if warm is not None:
            warm["z"] = x
            warm["lam"] = np.zeros_like(x)
        return x, {"iters": 0, "converged": True}

    ev = np.linalg.eigvalsh(M)
    rho = math.sqrt(max(ev[0], 1e-12 * ev[-1]) * ev[-1])
    k = M.shape[0]
    z = project_linf_ball(x)
    lam = np.zeros_like(x)
    if warm is not None and warm.get("z") is not None and warm["z"].size == x.size:
        z = project_linf_ball(warm["z"])
        lam = warm["lam"]
    bnorm = np.linalg.norm(b)
    eye = np.eye(k)
    converged = False
    it = 0
    for it in range(1, inner_max_iter + 1):
        beta = _solve_reduced(M + rho * eye, b + V.conj().T @ (rho * z - lam))
        xb = V @ beta
        z_old = z
        z = project_linf_ball(xb + lam / rho)
        lam = lam + rho * (xb - z)
        r_primal = np.linalg.norm(xb - z)
        r_dual = rho * np.linalg.norm(V.conj().T @ (z - z_old))
        if r_primal <= inner_tol * (1.0 + np.linalg.norm(xb)) and r_dual <= inner_tol * (1.0 + bnorm):
            converged = True
            break
        if it % 10 == 0:
            if r_primal > 10.0 * r_dual:
                rho *= 2.0
            elif r_dual > 10.0 * r_primal:
                rho /= 2.0
    x = V @ beta
    if warm is not None:
        warm["z"] = z
        warm["lam"] = lam
    peak = np.max(np.abs(x), initial=0.0)
    if peak > 1.0:
        x = x / peak
    return x, {"iters": it, "converged": converged}


def enrichment_residual(A: ForwardOperator, metric: RankOneMetric, alpha: float, x_next, x_k,
                        grad_xk, y, Ax_next=None) -> np.ndarray:
    """Gradient of the surrogate at ``x_next``:
    ``A^H (A x_next - y) + grad_xk + B (x_next - x_k) / alpha``.
    """
    if Ax_next is None:
        Ax_next = A.apply(x_next)
    return A.adjoint(Ax_next - y) + grad_xk + metric.apply(x_next - x_k) / alpha


def surrogate_value(problem: Problem, metric: RankOneMetric, alpha, x, Ax, x_k, grad_xk) -> float:
    """Surrogate objective up to the constant ``f(x_k)``."""
    d = x - x_k
    return problem.data_term(Ax) + float(np.vdot(grad_xk, d).real) + metric.quad(d) / (2.0 * alpha)


def full_space_surrogate_solve(problem: Problem, metric: RankOneMetric, alpha: float, grad_xk,
                               x_k, Ax_k, ahy, opnorm_sq: float, constrained: bool,
                               inner_tol: float, inner_max_iter: int):
    """Minimize the surrogate over C^N (or ``C``) by accelerated (projected) gradient.

    Uses FISTA momentum with a gradient-based restart, step ``1 / L`` with
    ``L = ||A||^2 + lambda_max(B) / alpha``, and stops once the gradient
    mapping norm has dropped by the factor ``inner_tol`` from its value at
    ``x_k``, or reached rounding level ``1e-13 L (1 + ||x||)``. Each inner
    iteration costs one apply and one adjoint of ``A``.

    Returns:
        (x, Ax, info)
    """
    A = problem.A
    lip = opnorm_sq + metric.extremal_eigs()[1] / alpha
    step = 1.0 / lip
    proj = project_linf_ball if constrained else (lambda v: v)
    x, Ax = x_k, Ax_k
    yv, Ay = x, Ax
    t = 1.0
    converged = False
    j = 0
    target = None
    for j in range(1, inner_max_iter + 1):
        g = A.adjoint(Ay) - ahy + grad_xk + metric.apply(yv - x_k) / alpha
        x_new = proj(yv - step * g)
        Ax_new = A.apply(x_new)
        diff = yv - x_new
        gmap = lip * np.linalg.norm(diff)
        if target is None:
            target = inner_tol * gmap
        if gmap <= max(target, 1e-13 * lip * (1.0 + np.linalg.norm(x_new))):
            x, Ax = x_new, Ax_new
            converged = True
            break
        if np.vdot(diff, x_new - x).real > 0:
            t = 1.0
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        mom = (t - 1.0) / t_new
        yv = x_new + mom * (x_new - x)
        Ay = Ax_new + mom * (Ax_new - Ax)
        x, Ax, t = x_new, Ax_new, t_new
    return x, Ax, {"iters": j, "converged": converged}


# ---------------------------------------------------------------------------
# drivers


def _default_x1(problem: Problem, x1):
    if x1 is None:
        return np.zeros(problem.n, dtype=np.complex128)
    return as_vector(x1, problem.n, "x1").copy()


def _opnorm_sq(problem: Problem, cfg: SolverConfig) -> float:
    # power iteration approaches ||A||^2 from below; inflate slightly so 1/L steps stay safe
    return 1.01 * estimate_opnorm(problem.A, cfg.opnorm_iters, cfg.seed)


def _next_metric(state: SolverState, cfg: SolverConfig, g: np.ndarray) -> RankOneMetric:
    if state.x_prev is None:
        return RankOneMetric.identity(state.x.size)
    try:
        return build_metric(state.x_prev, state.x, state.grad_prev, g,
                            cfg.delta, cfg.nu1, cfg.nu2)
    except DegenerateStepError:
        state.events.append(f"iter {state.k}: zero step, previous metric kept")
        log.info("iteration %d: zero step, keeping previous metric", state.k)
        return state.metric


def _record(state: SolverState, cfg: SolverConfig, problem: Problem, k: int, t0: float,
            x_next, cost, data, step, metric, enrich, before, info=None, stagnated=False):
    step_norm = float(np.linalg.norm(x_next - state.x))
    prev_delta = state.history[-1].delta_k if state.history else math.inf
    lam_min, lam_max = metric.extremal_eigs() if metric is not None else (math.nan, math.nan)
    after = problem.counters()
    rec = IterationRecord(
        iter=k,
        wall_time=time.perf_counter() - t0,
        cost=cost,
        data_term=data,
        step_norm=step_norm,
        delta_k=min(prev_delta, step_norm**2),
        gradmap_norm=step_norm / step,
        subspace_dim=state.basis.k if (state.basis is not None and not state.full_space) else problem.n,
        lam_min=lam_min,
        lam_max=lam_max,
        enrich=enrich,
        inner_iters=(info or {}).get("iters", 0),
        inner_converged=(info or {}).get("converged", True),
        stagnated=stagnated,
        n_apply=after[0] - before[0],
        n_adjoint=after[1] - before[1],
        n_grad=after[2] - before[2],
        x_inf=float(np.max(np.abs(x_next), initial=0.0)),
    )
    state.history.append(rec)
    return rec


def _guarded(solve: Callable, problem, metric, alpha, x_k, Ax_k, g, inner_tol, state, k):
    """Run an inexact surrogate solve, retrying with tighter tolerance if it fails to descend."""
    base = problem.data_term(Ax_k)
    tol = inner_tol
    for attempt in range(4):
        x, Ax, info = solve(tol)
        val = surrogate_value(problem, metric, alpha, x, Ax, x_k, g)
        if val <= base + 1e-12 * (1.0 + abs(base)):
            return x, Ax, info, False
        tol /= 10.0
        log.info("iteration %d: surrogate increased, retry %d with inner_tol=%g", k, attempt + 1, tol)
    state.events.append(f"iter {k}: inner solve failed to decrease surrogate, iterate kept")
    return x_k, Ax_k, info, True


def gksm_run(problem: Problem, cfg: SolverConfig, x1=None,
             callback: Callable[[SolverState], None] | None = None) -> SolverState:
    """Generalized Krylov subspace method.

    Iteration ``k`` (1-based) minimizes the quasi-Newton surrogate over
    ``span(V)`` while ``k <= cfg.K`` and over the whole space afterwards.
    The initial basis is ``A^H y / ||A^H y||``; a nonzero ``x1`` is added to
    it so that ``x1`` lies in the search space.

    ``callback(state)`` is invoked after every iteration.
    """
    A = problem.A
    x = _default_x1(problem, x1)
    ahy = A.adjoint(problem.y)
    nrm = np.linalg.norm(ahy)
    if nrm == 0.0:
        raise DegenerateProblemError("A^H y = 0: the initial subspace is undefined")
    basis = SubspaceBasis(problem.n, A.range_dim, drop_tol=cfg.drop_tol)
    basis.append_column(ahy / nrm, A.apply(ahy / nrm))
    if np.any(x):
        basis.orthonormal_append(x, A)
    Ax = A.apply(x)
    data0 = problem.data_term(Ax)
    state = SolverState(x=x, mode="gksm", initial_cost=data0 + problem.f.value(x),
                        initial_data_term=data0, basis=basis, full_space=cfg.K == 0)
    if cfg.keep_iterates:
        state.iterates.append(x.copy())

    # incremental (AV)^H (AV) and V^H A^H y
    gram = np.zeros((0, 0), dtype=np.complex128)
    vh_ahy = np.zeros(0, dtype=np.complex128)

    def sync_cache():
        nonlocal gram, vh_ahy
        k_old = gram.shape[0]
        if basis.k < k_old:
            k_old = 0
        if basis.k == k_old:
            return
        AV, V = basis.AV, basis.V
        G = np.zeros((basis.k, basis.k), dtype=np.complex128)
        G[:k_old, :k_old] = gram[:k_old, :k_old]
        new = AV[:, k_old:]
        G[:, k_old:] = AV.conj().T @ new
        G[k_old:, :k_old] = G[:k_old, k_old:].conj().T
        gram = G
        vh_ahy = np.concatenate([vh_ahy[:k_old], V[:, k_old:].conj().T @ ahy])

    warm: dict = {}
    data = data0
    for k in range(1, cfg.max_iter + 1):
        t0 = time.perf_counter()
        before = problem.counters()
        state.k = k
        g = problem.grad(x)
        metric = _next_metric(state, cfg, g)
        subspace = k <= cfg.K
        stagnated = False
        info = None
        if subspace:
            sync_cache()
            if cfg.constrained:
                def solve(tol):
                    xn, inf = reduced_constrained_solve(
                        A, basis, metric, cfg.alpha, g, x, problem.y, tol, cfg.inner_max_iter,
                        gram=gram, vh_ahy=vh_ahy, warm=warm)
                    beta = basis.V.conj().T @ xn
                    return xn, basis.AV @ beta, inf
                x_next, Ax_next, info, stagnated = _guarded(
                    solve, problem, metric, cfg.alpha, x, Ax, g, cfg.inner_tol, state, k)
            else:
                beta, x_next = reduced_unconstrained_solve(
                    A, basis, metric, cfg.alpha, g, x, problem.y, gram=gram, vh_ahy=vh_ahy)
                Ax_next = basis.AV @ beta
            data = problem.data_term(Ax_next)
            cost = data + problem.f.value(x_next)
            enrich = "skipped"
            if cfg.restart_period and k % cfg.restart_period == 0:
                xn_norm = np.linalg.norm(x_next)
                basis.reset()
                if xn_norm > 0:
                    basis.append_column(x_next / xn_norm, Ax_next / xn_norm)
                enrich = "restart+"
            r = enrichment_residual(A, metric, cfg.alpha, x_next, x, g, problem.y, Ax_next=Ax_next)
            appended = basis.orthonormal_append(r, A)
            if not appended:
                state.events.append(f"iter {k}: enrichment skipped")
            enrich = (enrich if enrich.endswith("+") else "") + ("appended" if appended else "skipped")
        else:
            if not state.full_space:
                state.full_space = True
                state.basis = None
            if state.opnorm_sq is None:
                state.opnorm_sq = _opnorm_sq(problem, cfg)
                before = problem.counters()

            def solve(tol):
                return full_space_surrogate_solve(problem, metric, cfg.alpha, g, x, Ax, ahy,
                                                  state.opnorm_sq, cfg.constrained, tol,
                                                  cfg.inner_max_iter)
            x_next, Ax_next, info, stagnated = _guarded(
                solve, problem, metric, cfg.alpha, x, Ax, g, cfg.inner_tol, state, k)
            data = problem.data_term(Ax_next)
            cost = data + problem.f.value(x_next)
            enrich = "full"
        _record(state, cfg, problem, k, t0, x_next, cost, data, cfg.alpha, metric, enrich,
                before, info, stagnated)
        state.x_prev, state.grad_prev, state.grad_cur = x, g, g
        state.metric = metric
        state.metrics.append(metric)
        x, Ax = x_next, Ax_next
        state.x = x
        if cfg.keep_iterates:
            state.iterates.append(x.copy())
        if callback is not None:
            callback(state)
    return state


def cqnpm_run(problem: Problem, cfg: SolverConfig, x1=None,
              callback: Callable[[SolverState], None] | None = None) -> SolverState:
    """Complex quasi-Newton proximal method: the surrogate is minimized over the whole space."""
    full = SolverConfig(**{f.name: getattr(cfg, f.name) for f in fields(SolverConfig)
                           if f.name != "K"}, K=0)
    state = gksm_run(problem, full, x1, callback)
    state.mode = "cqnpm"
    return state


def apg_run(problem: Problem, cfg: SolverConfig, x1=None,
            callback: Callable[[SolverState], None] | None = None) -> SolverState:
    """Monotone accelerated proximal gradient method.

    Each iteration forms an extrapolated point, takes a projected gradient
    step from it and another from the current iterate, and keeps whichever
    has the lower cost, which makes the cost sequence nonincreasing for
    nonconvex ``f``. The step is ``1 / (||A||^2 + L_f)``.
    """
    A, y, f = problem.A, problem.y, problem.f
    proj = project_linf_ball if cfg.constrained else (lambda v: v)
    x = _default_x1(problem, x1)
    if cfg.constrained:
        x = project_linf_ball(x)
    Ax = A.apply(x)
    data0 = problem.data_term(Ax)
    state = SolverState(x=x, mode="apg", initial_cost=data0 + f.value(x),
                        initial_data_term=data0, full_space=True)
    state.opnorm_sq = _opnorm_sq(problem, cfg)
    step = 1.0 / (state.opnorm_sq + f.lipschitz_bound)
    if cfg.keep_iterates:
        state.iterates.append(x.copy())

    x_old, Ax_old = x, Ax
    z, Az = x, Ax
    t_old, t = 0.0, 1.0
    F = state.initial_cost
    for k in range(1, cfg.max_iter + 1):
        t0 = time.perf_counter()
        before = problem.counters()
        state.k = k
        c1, c2 = t_old / t, (t_old - 1.0) / t
        yv = x + c1 * (z - x) + c2 * (x - x_old)
        Ay = Ax + c1 * (Az - Ax) + c2 * (Ax - Ax_old)
        gy = A.adjoint(Ay - y) + problem.grad(yv)
        z_new = proj(yv - step * gy)
        Az_new = A.apply(z_new)
        Fz_data = problem.data_term(Az_new)
        Fz = Fz_data + f.value(z_new)
        gx = A.adjoint(Ax - y) + problem.grad(x)
        v = proj(x - step * gx)
        Av = A.apply(v)
        Fv_data = problem.data_term(Av)
        Fv = Fv_data + f.value(v)
        if Fz <= Fv:
            x_new, Ax_new, F_new, data = z_new, Az_new, Fz, Fz_data
        else:
            x_new, Ax_new, F_new, data = v, Av, Fv, Fv_data
        if F_new > F:
            # both candidates worse than the current point (roundoff); stay put
            x_new, Ax_new, F_new, data = x, Ax, F, problem.data_term(Ax)
        _record(state, cfg, problem, k, t0, x_new, F_new, data, step, None, "-", before)
        z, Az = z_new, Az_new
        x_old, Ax_old = x, Ax
        x, Ax, F = x_new, Ax_new, F_new
        t_old, t = t, 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        state.x = x
        if cfg.keep_iterates:
            state.iterates.append(x.copy())
        if callback is not None:
            callback(state)
    return state


def run(problem: Problem, cfg: SolverConfig, x1=None, callback=None) -> SolverState:
    """Dispatch on ``cfg.mode``."""
    if cfg.mode == "gksm":
        return gksm_run(problem, cfg, x1, callback)
    if cfg.mode == "cqnpm":
        return cqnpm_run(problem, cfg, x1, callback)
    return apg_run(problem, cfg, x1, callback)


def fstar_protocol(problem: Problem, constrained: bool, iters: int = 500, eps: float | None = None,
                   seed: int = 0) -> tuple[float, float]:
    """Reference optimum: ``F* = F(x_iters) - eps`` from a long APG run.

    Returns:
        (fstar, F(x_iters))
    """
    cfg = SolverConfig(mode="apg", max_iter=iters, constrained=constrained, seed=seed)
    state = apg_run(problem, cfg)
    final = state.history[-1].cost
    if eps is None:
        eps = 1e-8 * (1.0 + abs(final))
    return final - eps, final
