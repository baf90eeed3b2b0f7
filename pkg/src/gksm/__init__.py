"""Generalized Krylov subspace solvers for complex nonconvex composite problems.

The problems handled here have the form

    minimize  0.5 * ||A x - y||^2 + f(x)   subject to  x in C

with ``A`` a complex linear operator, ``f`` a smooth (possibly nonconvex)
regularizer and ``C`` either all of C^N or the complex infinity-norm unit ball.
"""
from gksm.core import (
    DataError,
    DimensionError,
    GKSMError,
    IndefiniteError,
    SubspaceBasis,
    hermitian_posdef_solve,
    inner,
    re_inner,
)
from gksm.operators import (
    ConvolutionOperator,
    DenseOperator,
    ForwardOperator,
    MaskedFourierOperator,
    dot_test,
    estimate_opnorm,
)
from gksm.qnmetric import RankOneMetric, build_metric, mix_coefficient, self_scaling_tau
from gksm.regularizers import (
    DenoiserDriven,
    HuberTV,
    LogSmooth,
    SmoothRegularizer,
    Tikhonov,
    fd_gradient_check,
)
from gksm.solver import (
    Problem,
    SolverConfig,
    SolverState,
    apg_run,
    cqnpm_run,
    gksm_run,
    project_linf_ball,
)

__version__ = "0.1.0"

__all__ = [
    "ConvolutionOperator",
    "DataError",
    "DenoiserDriven",
    "DenseOperator",
    "DimensionError",
    "ForwardOperator",
    "GKSMError",
    "HuberTV",
    "IndefiniteError",
    "LogSmooth",
    "MaskedFourierOperator",
    "Problem",
    "RankOneMetric",
    "SmoothRegularizer",
    "SolverConfig",
    "SolverState",
    "SubspaceBasis",
    "Tikhonov",
    "apg_run",
    "build_metric",
    "cqnpm_run",
    "dot_test",
    "estimate_opnorm",
    "fd_gradient_check",
    "gksm_run",
    "hermitian_posdef_solve",
    "inner",
    "mix_coefficient",
    "project_linf_ball",
    "re_inner",
    "self_scaling_tau",
]
