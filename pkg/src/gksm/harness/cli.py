"""Command-line entry point: ``gksm <subcommand> ...``.

Exit codes: 0 success, 1 validation error, 2 numeric or invariant failure.
Errors are also reported on stderr as one JSON line.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from gksm.core import GKSMError
from gksm.harness.config import ExperimentConfig, bundled_config_names
from gksm.harness.experiment import (
    EXIT_NUMERIC,
    EXIT_OK,
    EXIT_VALIDATION,
    build_operator,
    build_problem,
    run_experiment,
)
from gksm.harness.io import read_iteration_csv
from gksm.harness.phantoms import rng_for
from gksm.harness.rates import fit_and_check
from gksm.operators import dot_test
from gksm.regularizers import fd_gradient_check
from gksm.solver import ConfigError


def _error(kind: str, message: str, key: str | None = None, code: int = EXIT_NUMERIC) -> int:
    rec = {"error": kind, "message": message}
    if key is not None:
        rec["key"] = key
    print(json.dumps(rec), file=sys.stderr)
    return code


def _load(args) -> ExperimentConfig:
    return ExperimentConfig.from_file(args.config, overrides=getattr(args, "set", None))


def cmd_run(args) -> int:
    cfg = _load(args)
    res = run_experiment(cfg, args.out)
    d = res.diagnostics
    print(f"{cfg.name}: {res.summary['iterations']} iterations, final cost "
          f"{res.summary['final_cost']:.10g}, PSNR {res.summary['psnr_db']:.2f} dB")
    print(f"descent violations {d.descent_violations}, inequality violations "
          f"{d.inequality_violations}/{d.gated_iterations}, delta-bound violations "
          f"{d.delta_bound_violations}, feasibility violations {d.feasibility_violations}")
    if res.exit_code != EXIT_OK:
        return _error("invariant", "one or more diagnostics checks failed", code=res.exit_code)
    return EXIT_OK


def cmd_adjoint_test(args) -> int:
    op, _, _ = build_operator(_load(args))
    err = dot_test(op, n_probes=20, seed=0)
    print(f"max dot-test relative error: {err:.3e}")
    return EXIT_OK if err <= 1e-10 else EXIT_NUMERIC


def cmd_gradcheck(args) -> int:
    cfg = _load(args)
    f = build_problem(cfg).problem.f
    n = cfg["problem.height"] * cfg["problem.width"]
    rng = rng_for(cfg["problem.seed"], "probe")
    worst = 0.0
    for i in range(args.points):
        x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        worst = max(worst, fd_gradient_check(f, x, seed=i))
    print(f"max finite-difference relative error: {worst:.3e}")
    return EXIT_OK if worst <= 1e-6 else EXIT_NUMERIC


def cmd_rates(args) -> int:
    log = read_iteration_csv(args.log)
    costs = log["cost"]
    fstar = args.fstar if args.fstar is not None else float(costs.min()) - 1e-8 * (1 + abs(costs.min()))
    gaps = costs - fstar
    fit = fit_and_check(gaps, args.t, start=args.start)
    print(f"t = {fit.t}, fitted gamma = {fit.gamma:.6g} on iterations "
          f"{fit.start + 1}..{fit.fit_end + 1}")
    print(f"held-out violations: {fit.holdout_violations}, worst gap/envelope ratio "
          f"{fit.holdout_max_ratio:.4g}")
    return EXIT_OK if fit.ok else EXIT_NUMERIC


def cmd_plot(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    log = read_iteration_csv(args.log)
    it, cost = log["iter"], log["cost"]
    gap = cost - cost.min() + 1e-16 * max(1.0, abs(cost.min()))
    fig, ax = plt.subplots(1, 2, figsize=(9, 3.5))
    ax[0].semilogy(it, gap)
    ax[0].set_xlabel("iteration")
    ax[0].set_ylabel("F(x_k) - min F")
    ax[1].semilogy(it, np.maximum(log["step_norm"], 1e-300))
    ax[1].set_xlabel("iteration")
    ax[1].set_ylabel("||x_{k+1} - x_k||")
    fig.tight_layout()
    fig.savefig(args.out, dpi=100)
    plt.close(fig)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_batch(args) -> int:
    out = Path(args.out)

    def one(path):
        cfg = ExperimentConfig.from_file(path)
        try:
            return cfg.name, run_experiment(cfg, out / cfg.name).exit_code
        except GKSMError as exc:
            return cfg.name, _error(type(exc).__name__, str(exc))

    with ThreadPoolExecutor(max_workers=args.workers) as pool:
        results = list(pool.map(one, args.configs))
    for name, code in results:
        print(f"{name}: exit {code}")
    return max(code for _, code in results)


def cmd_list(args) -> int:
    for name in bundled_config_names():
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gksm", description="GKSM experiment harness")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", required=True,
                        help="config file path or bundled config name")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
        return sp

    sp = with_config(sub.add_parser("run", help="run one experiment"))
    sp.add_argument("--out", default=".", help="output directory")
    sp.set_defaults(func=cmd_run)

    sp = with_config(sub.add_parser("adjoint-test", help="dot test of the forward operator"))
    sp.set_defaults(func=cmd_adjoint_test)

    sp = with_config(sub.add_parser("gradcheck", help="finite-difference check of grad f"))
    sp.add_argument("--points", type=int, default=10)
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("rates", help="fit a KL rate envelope to an iteration log")
    sp.add_argument("--log", required=True)
    sp.add_argument("--t", type=float, default=0.5)
    sp.add_argument("--fstar", type=float, default=None,
                    help="reference optimum (default: log minimum minus a small margin)")
    sp.add_argument("--start", type=int, default=0)
    sp.set_defaults(func=cmd_rates)

    sp = sub.add_parser("plot", help="render cost and step norm to an image")
    sp.add_argument("--log", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_plot)

    sp = sub.add_parser("batch", help="run several configs in worker threads")
    sp.add_argument("configs", nargs="+")
    sp.add_argument("--out", default="batch_out")
    sp.add_argument("--workers", type=int, default=2)
    sp.set_defaults(func=cmd_batch)

    sp = sub.add_parser("list-configs", help="print bundled config names")
    sp.set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        return _error("config", str(exc), key=exc.key, code=EXIT_VALIDATION)
    except (ValueError, OSError) as exc:
        return _error(type(exc).__name__, str(exc), code=EXIT_VALIDATION)
    except (GKSMError, np.linalg.LinAlgError, FloatingPointError, ArithmeticError) as exc:
        return _error(type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
