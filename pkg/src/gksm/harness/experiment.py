"""Build a problem from an :class:`ExperimentConfig`, solve it, write artifacts."""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from gksm.core import GKSMError
from gksm.harness.config import ExperimentConfig
from gksm.harness.diagnostics import Diagnostics, analyze
from gksm.harness.io import write_cimg, write_iteration_csv
from gksm.harness.phantoms import (
    add_noise,
    generate_mask,
    generate_phantom,
    generate_sensitivities,
    psnr,
    rng_for,
)
from gksm.operators import ConvolutionOperator, DenseOperator, ForwardOperator, MaskedFourierOperator
from gksm.regularizers import make_regularizer
from gksm.solver import Problem, SolverState, fstar_protocol, run

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERIC = 2


@dataclass
class BuiltProblem:
    problem: Problem
    x_true: np.ndarray
    shape: tuple[int, int]
    mask: np.ndarray | None = None
    sensitivities: np.ndarray | None = None


@dataclass
class ExperimentResult:
    exit_code: int
    summary: dict = field(default_factory=dict)
    state: SolverState | None = None
    diagnostics: Diagnostics | None = None
    built: BuiltProblem | None = None


def gaussian_kernel(sigma: float) -> np.ndarray:
    r = max(1, int(math.ceil(3.0 * sigma)))
    t = np.arange(-r, r + 1)
    g = np.exp(-0.5 * (t / sigma) ** 2)
    k = np.outer(g, g)
    return k / k.sum()


def build_operator(cfg: ExperimentConfig) -> tuple[ForwardOperator, np.ndarray | None, np.ndarray | None]:
    """Forward operator for the configured grid.

    Returns:
        (operator, mask or None, sensitivities or None)
    """
    h, w = cfg["problem.height"], cfg["problem.width"]
    seed = cfg["problem.seed"]
    kind = cfg["problem.operator"]
    if kind == "masked_fourier":
        mask = generate_mask(h, w, cfg["problem.mask"], cfg["problem.acceleration"], seed)
        sens = generate_sensitivities(h, w, cfg["problem.num_coils"], seed)
        return MaskedFourierOperator(mask, sens), mask, sens
    if kind == "convolution":
        return ConvolutionOperator(gaussian_kernel(cfg["problem.blur_sigma"]), (h, w)), None, None
    n = h * w
    m = int(math.ceil(n / cfg["problem.acceleration"]))
    rng = rng_for(seed, "operator")
    mat = (rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))) / math.sqrt(2.0 * m)
    return DenseOperator(mat), None, None


def build_problem(cfg: ExperimentConfig) -> BuiltProblem:
    h, w = cfg["problem.height"], cfg["problem.width"]
    seed = cfg["problem.seed"]
    x_true = generate_phantom(h, w, cfg["problem.phantom"], seed).reshape(-1)
    A, mask, sens = build_operator(cfg)
    y = add_noise(A.apply(x_true), cfg["problem.noise_snr_db"], seed)
    f = make_regularizer(cfg["regularizer.kind"], cfg["regularizer.lambda"], (h, w),
                         mu=cfg["regularizer.mu"], eps=cfg["regularizer.eps"],
                         sigma=cfg["regularizer.sigma"])
    A.reset_counters()
    return BuiltProblem(Problem(A, f, y), x_true, (h, w), mask, sens)


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, np.integer)):
        return _jsonable(v.item())
    return v


def run_experiment(cfg: ExperimentConfig, out_dir=None, write: bool = True) -> ExperimentResult:
    """Solve the configured problem and check the run against the theory.

    Artifacts go to ``out_dir`` (default: current directory) under the
    configured ``output.*`` names. Module errors propagate; the CLI maps them
    to exit codes.
    """
    t0 = time.perf_counter()
    scfg = cfg.solver_config()
    built = build_problem(cfg)
    problem = built.problem

    fstar = None
    if cfg["output.fstar_protocol"]:
        eps = cfg["diagnostics.fstar_eps"]
        ref = Problem(problem.A, problem.f, problem.y)
        fstar, _ = fstar_protocol(ref, scfg.constrained, cfg["diagnostics.fstar_iters"],
                                  None if math.isnan(eps) else eps, seed=scfg.seed)
        problem.A.reset_counters()

    state = run(problem, scfg)
    diag = analyze(state, float(problem.f.lipschitz_bound), scfg.alpha, fstar, scfg.constrained)
    if not np.all(np.isfinite(state.x)):
        raise GKSMError("solver produced non-finite values")

    h, w = built.shape
    summary = {
        "name": cfg.name,
        "mode": scfg.mode,
        "iterations": len(state.history),
        "initial_cost": state.initial_cost,
        "final_cost": state.costs[-1],
        "psnr_db": psnr(state.x, built.x_true),
        "n_apply": problem.A.n_apply,
        "n_adjoint": problem.A.n_adjoint,
        "n_grad": problem.n_grad,
        "runtime_s": time.perf_counter() - t0,
        "diagnostics": diag.to_dict(),
    }
    if write:
        out = Path(out_dir) if out_dir is not None else Path(".")
        out.mkdir(parents=True, exist_ok=True)
        write_iteration_csv(out / cfg["output.log_path"], state.history)
        write_cimg(out / cfg["output.image_path"], state.x.reshape(h, w))
        (out / cfg["output.summary_path"]).write_text(
            json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    code = EXIT_OK if diag.passed else EXIT_NUMERIC
    return ExperimentResult(code, summary, state, diag, built)
