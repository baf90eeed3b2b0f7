"""Run-level checks of the descent and rate guarantees.

Given a finished :class:`~gksm.solver.SolverState` these functions count
cost increases, test the per-iteration sufficient-decrease inequality
``upsilon_k ||x_{k+1} - x_k||^2 <= F(x_k) - F(x_{k+1})`` where its step-size
premise ``alpha < 2 eta_k / (eta_k + L)`` holds, and test the running-minimum
bound ``Delta_k <= (F(x_1) - F*) / (upsilon k)``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from gksm.harness.rates import fit_and_check
from gksm.solver import SolverState

DESCENT_RTOL = 1e-10
INEQ_ATOL = 1e-9
DELTA_ATOL = 1e-9
FEAS_TOL = 1e-9


@dataclass
class Diagnostics:
    iterations: int
    descent_violations: int
    gated_iterations: int
    inequality_violations: int
    eta_min: float
    eta_max: float
    lipschitz: float
    upsilon_min: float
    delta_bound_applicable: bool
    delta_bound_violations: int
    delta_ratio: float
    fstar: float | None
    feasibility_violations: int
    max_abs_iterate: float
    inner_failures: int
    envelope_gamma: float | None = None
    envelope_holdout_violations: int | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return (self.descent_violations == 0 and self.inequality_violations == 0
                and self.delta_bound_violations == 0 and self.feasibility_violations == 0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def descent_violations(costs, rtol: float = DESCENT_RTOL) -> int:
    costs = np.asarray(costs)
    return int(np.sum(costs[1:] > costs[:-1] + rtol * (1.0 + np.abs(costs[:-1]))))


def upsilon(eta: float, alpha: float, L: float) -> float:
    return eta / alpha - 0.5 * (eta + L)


def alpha_gate(eta: float, alpha: float, L: float) -> bool:
    return alpha < 2.0 * eta / (eta + L)


def analyze(state: SolverState, L: float, alpha: float, fstar: float | None = None,
            constrained: bool = False, envelope_t: float | None = 0.5) -> Diagnostics:
    """Evaluate every check on a finished run.

    ``alpha`` is ignored for APG runs, which carry no metric. When ``fstar``
    exceeds a cost reached by the run it is lowered to that cost so the
    bounds use a valid lower estimate.
    """
    costs = state.costs
    hist = state.history
    notes = []
    gated = ineq_bad = 0
    ups = []
    for i, r in enumerate(hist):
        if math.isnan(r.lam_min):
            continue
        u = upsilon(r.lam_min, alpha, L)
        ups.append(u)
        if not alpha_gate(r.lam_min, alpha, L) or not r.inner_converged or r.stagnated:
            continue
        gated += 1
        if u * r.step_norm**2 > costs[i] - costs[i + 1] + INEQ_ATOL:
            ineq_bad += 1
    ups_min = min(ups) if ups else math.nan
    eta_min, eta_max = state.eta_min, state.eta_max

    fstar_eff = fstar
    if fstar is not None and fstar > costs.min():
        fstar_eff = float(costs.min())
        notes.append("run reached a cost below F*; bounds use the run minimum")
    applicable = fstar_eff is not None and ups_min > 0
    delta_bad = 0
    if applicable:
        for k, r in enumerate(hist, 1):
            if r.delta_k > (costs[0] - fstar_eff) / (ups_min * k) + DELTA_ATOL:
                delta_bad += 1
    deltas = np.array([r.delta_k for r in hist])
    ratio = float(deltas[-1] / deltas[0]) if deltas.size and deltas[0] > 0 else math.nan

    feas_bad = 0
    max_abs = max((r.x_inf for r in hist), default=0.0)
    if constrained:
        feas_bad = sum(1 for r in hist if r.x_inf > 1.0 + FEAS_TOL)

    gamma = hold = None
    if envelope_t is not None and fstar is not None:
        gaps = costs - fstar_eff
        if gaps.size >= 4 and gaps[0] > 0:
            try:
                fit = fit_and_check(gaps, envelope_t)
                gamma, hold = fit.gamma, fit.holdout_violations
            except ValueError as exc:
                notes.append(f"envelope fit skipped: {exc}")

    return Diagnostics(
        iterations=len(hist),
        descent_violations=descent_violations(costs),
        gated_iterations=gated,
        inequality_violations=ineq_bad,
        eta_min=eta_min,
        eta_max=eta_max,
        lipschitz=L,
        upsilon_min=ups_min,
        delta_bound_applicable=applicable,
        delta_bound_violations=delta_bad,
        delta_ratio=ratio,
        fstar=fstar_eff,
        feasibility_violations=feas_bad,
        max_abs_iterate=max_abs,
        inner_failures=sum(1 for r in hist if not r.inner_converged),
        envelope_gamma=gamma,
        envelope_holdout_violations=hold,
        notes=notes + list(state.events[:20]),
    )
