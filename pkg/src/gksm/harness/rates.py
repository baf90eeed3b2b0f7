"""Rate envelopes for sequences obeying ``phi_{k+1}^{2t} <= gamma (phi_k - phi_{k+1})``.

Such recursions arise for the optimality gap ``F(x_k) - F*`` when the
objective has the Kurdyka-Lojasiewicz property with exponent ``t``: ``t = 0``
gives finite termination, ``t <= 1/2`` a geometric rate and ``t > 1/2`` a
sublinear one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np
from mpmath import mpf


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class RateEnvelope:
    t: float
    gamma: float
    phi1: float
    sigma: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.t < 1.0:
            raise ParameterError(f"KL exponent t={self.t} outside [0, 1)")
        if not self.gamma > 0:
            raise ParameterError("gamma must be positive")
        if not self.phi1 > 0:
            raise ParameterError("phi1 must be positive")
        if not 0.0 < self.sigma < 1.0:
            raise ParameterError("sigma must lie in (0, 1)")


def kl_rate_envelope(env: RateEnvelope, k) -> float:
    """Upper bound on ``phi_{k+1}`` after ``k >= 1`` steps from ``phi_1``.

    The bound is evaluated in 40-digit arithmetic and rounded up to the next
    float, so it is never below the exact envelope.
    """
    if k < 1:
        raise ParameterError("k must be >= 1")
    with mpmath.workdps(40):
        t, g, p1, k = mpf(env.t), mpf(env.gamma), mpf(env.phi1), mpf(k)
        if env.t == 0.0:
            val = max(p1 - k / g, mpf(0))
        elif env.t <= 0.5:
            c = p1 ** (2 * t - 1)
            val = (1 - c / (g + c)) ** k * p1
        else:
            e = 1 - 2 * t
            val = (p1**e + (2 * t - 1) * (1 - mpf(env.sigma)) ** (2 * t) * k / (2 * g)) ** (1 / e)
        return _round_up(val)


def _round_up(val) -> float:
    f = float(val)
    return f if mpf(f) >= val else math.nextafter(f, math.inf)


def simulate_equality_recursion(t: float, gamma: float, phi1: float, n: int) -> np.ndarray:
    """``phi_1 .. phi_{n+1}`` with ``phi_{k+1}^{2t} = gamma (phi_k - phi_{k+1})`` exactly.

    Each step is solved by bracketing on ``(0, phi_k)`` in 40-digit
    arithmetic; the sequence is rounded to floats only on output.
    """
    out = np.empty(n + 1)
    with mpmath.workdps(40):
        tt, g = mpf(t), mpf(gamma)
        pk = mpf(phi1)
        out[0] = float(pk)
        for i in range(n):
            def eq(p, pk=pk):
                return p ** (2 * tt) - g * (pk - p)

            lo, hi = mpf(0), pk
            if t == 0.5:
                pk = g * pk / (1 + g)
            else:
                pk = mpmath.findroot(eq, (lo, hi), solver="anderson")
            out[i + 1] = float(pk)
    return out


def fit_gamma(phi, t: float) -> float:
    """Smallest ``gamma`` for which ``phi`` satisfies the recursion at every step.

    Steps where ``phi`` does not strictly decrease are skipped.
    """
    phi = np.asarray(phi, dtype=float)
    best = 0.0
    for a, b in zip(phi[:-1], phi[1:]):
        if b > 0 and a > b:
            best = max(best, b ** (2.0 * t) / (a - b))
    return best


@dataclass
class EnvelopeFit:
    t: float
    gamma: float
    start: int
    fit_end: int
    holdout_violations: int
    holdout_max_ratio: float

    @property
    def ok(self) -> bool:
        return self.holdout_violations == 0


def fit_and_check(gaps, t: float = 0.5, start: int = 0, sigma: float = 0.5) -> EnvelopeFit:
    """Fit ``gamma`` on the first half of ``gaps[start:]`` and test the envelope on the rest.

    ``gaps[i]`` is ``F(x_{i+1}) - F*``. The envelope is anchored at
    ``gaps[start]`` and evaluated for every later index.
    """
    gaps = np.asarray(gaps, dtype=float)[start:]
    if gaps.size < 4 or not gaps[0] > 0:
        raise ValueError("need at least 4 positive gaps to fit an envelope")
    half = gaps.size // 2
    gamma = fit_gamma(gaps[: half + 1], t)
    if gamma == 0.0:
        gamma = math.inf
    violations = 0
    worst = 0.0
    for j in range(half + 1, gaps.size):
        bound = gaps[0] if math.isinf(gamma) else kl_rate_envelope(RateEnvelope(t, gamma, gaps[0], sigma), j)
        ratio = gaps[j] / bound if bound > 0 else (math.inf if gaps[j] > 0 else 0.0)
        worst = max(worst, ratio)
        if gaps[j] > bound:
            violations += 1
    return EnvelopeFit(t, gamma, start, start + half, violations, worst)
