"""Self-scaling Hermitian rank-1 metric ``B = I / tau - u u^H / rho_B``.

The metric is a positive definite estimate of the Hessian of the smooth
regularizer built from one secant pair ``(s, m)``. It is stored implicitly,
so applying ``B`` or its inverse costs two inner products.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from gksm.core import DimensionError, GKSMError, as_vector

DEFAULT_DELTA = 1e-8
DEFAULT_NU1 = 2e-6
DEFAULT_NU2 = 200.0


class DegenerateStepError(GKSMError):
    """The secant pair cannot define a metric (zero step or zero curvature)."""


class MetricInvariantError(GKSMError):
    """A stored metric violates positive definiteness."""


@dataclass(frozen=True)
class RankOneMetric:
    """Implicit ``B = I / tau - u u^H / rho_b`` (or ``I / tau`` when ``u`` is None).

    ``rho`` is kept so that the inverse ``tau I + u u^H / rho`` is available
    in closed form.
    """

    tau: float
    dim: int
    u: np.ndarray | None = None
    rho_b: float = 0.0
    rho: float = 0.0
    mix: float = 0.0

    @classmethod
    def identity(cls, dim: int, tau: float = 1.0) -> "RankOneMetric":
        return cls(tau=float(tau), dim=int(dim))

    @property
    def is_scaled_identity(self) -> bool:
        return self.u is None

    def _check(self, x):
        x = np.asarray(x, dtype=np.complex128).reshape(-1)
        if x.size != self.dim:
            raise DimensionError(f"vector of length {x.size}, metric dimension {self.dim}")
        return x

    def apply(self, x) -> np.ndarray:
        x = self._check(x)
        out = x / self.tau
        if self.u is not None:
            out = out - self.u * (np.vdot(self.u, x) / self.rho_b)
        return out

    def apply_inv(self, x) -> np.ndarray:
        x = self._check(x)
        out = self.tau * x
        if self.u is not None:
            if not self.rho > 0:
                raise MetricInvariantError("rank-1 metric with nonpositive rho")
            out = out + self.u * (np.vdot(self.u, x) / self.rho)
        return out

    def quad(self, x) -> float:
        """``x^H B x``."""
        x = self._check(x)
        val = np.vdot(x, x).real / self.tau
        if self.u is not None:
            val -= abs(np.vdot(self.u, x)) ** 2 / self.rho_b
        return float(val)

    def extremal_eigs(self) -> tuple[float, float]:
        lam_max = 1.0 / self.tau
        if self.u is None:
            return lam_max, lam_max
        return lam_max - float(np.vdot(self.u, self.u).real) / self.rho_b, lam_max

    def reduced(self, V: np.ndarray) -> np.ndarray:
        """``V^H B V`` for a column-orthonormal ``V``."""
        k = V.shape[1]
        M = np.eye(k, dtype=np.complex128) / self.tau
        if self.u is not None:
            c = V.conj().T @ self.u
            M -= np.outer(c, c.conj()) / self.rho_b
        return M

    def to_dense(self) -> np.ndarray:
        M = np.eye(self.dim, dtype=np.complex128) / self.tau
        if self.u is not None:
            M -= np.outer(self.u, self.u.conj()) / self.rho_b
        return M


def apply_B(B: RankOneMetric, x) -> np.ndarray:
    return B.apply(x)


def apply_Binv(B: RankOneMetric, x) -> np.ndarray:
    return B.apply_inv(x)


def extremal_eigs(B: RankOneMetric) -> tuple[float, float]:
    return B.extremal_eigs()


def _mix_conditions(S, P, Q, a, nu1, nu2):
    p = a * S + (1.0 - a) * P
    q = a * a * S + 2.0 * a * (1.0 - a) * P + (1.0 - a) ** 2 * Q
    return p >= nu1 * S and p > 0 and q <= nu2 * p


def mix_coefficient(s, m, nu1: float = DEFAULT_NU1, nu2: float = DEFAULT_NU2):
    """Smallest ``a in [0, 1]`` making ``m_bar = a s + (1 - a) m`` well scaled.

    The returned ``m_bar`` satisfies ``Re<s, m_bar> >= nu1 <s, s>`` and
    ``<m_bar, m_bar> <= nu2 Re<s, m_bar>``. Both conditions are scalar in
    ``a``; the first is linear and the second a convex quadratic that is
    negative at ``a = 1``, so each feasible set is an interval ending at 1
    and the answer is the larger of the two left endpoints.

    Returns:
        (a, m_bar)
    """
    if not (0.0 < nu1 < 1.0 < nu2):
        raise ValueError("need 0 < nu1 < 1 < nu2")
    s = as_vector(s, name="s")
    m = as_vector(m, s.size, "m")
    S = float(np.vdot(s, s).real)
    if S == 0.0:
        raise DegenerateStepError("zero step s")
    P = float(np.vdot(s, m).real)
    Q = float(np.vdot(m, m).real)

    # Re<s, m_bar> = P + a (S - P) >= nu1 S
    a1 = 0.0
    if S > P and P < nu1 * S:
        a1 = (nu1 * S - P) / (S - P)

    # g(a) = c2 a^2 + c1 a + c0 <= 0
    c2 = S - 2.0 * P + Q
    c1 = 2.0 * (P - Q) - nu2 * (S - P)
    c0 = Q - nu2 * P
    a2 = 0.0
    if c0 > 0.0:
        if c2 <= 0.0 or abs(c2) <= 1e-300:
            a2 = -c0 / c1 if c1 < 0 else 1.0
        else:
            disc = max(c1 * c1 - 4.0 * c2 * c0, 0.0)
            qq = -0.5 * (c1 - math.sqrt(disc)) if c1 < 0 else -0.5 * (c1 + math.sqrt(disc))
            roots = [r for r in (qq / c2, c0 / qq if qq != 0 else math.inf) if 0.0 <= r <= 1.0]
            a2 = min(roots) if roots else 1.0

    a = min(max(a1, a2), 1.0)
    if a > 0.0:
        a = min(a + 1e-12, 1.0)
    # guard against roundoff at the interval boundary
    nudge = 1e-12
    while not _mix_conditions(S, P, Q, a, nu1, nu2) and a < 1.0:
        nudge *= 10.0
        a = min(a + nudge, 1.0)
    m_bar = s if a == 1.0 else a * s + (1.0 - a) * m
    return a, m_bar


def self_scaling_tau(s, m_bar) -> float:
    """Scaling ``tau = r1 - sqrt(r1^2 - r2)`` with ``r1 = <s,s>/Re<s,m_bar>``, ``r2 = <s,s>/<m_bar,m_bar>``.

    Evaluated as ``r2 / (r1 + sqrt(r1^2 - r2))``. The discriminant equals
    ``(S ||m_perp|| / (P sqrt(Q)))^2`` where ``m_perp`` is the part of
    ``m_bar`` orthogonal to ``s`` in the real inner product; using that form
    avoids the cancellation in ``r1^2 - r2`` when ``m_bar`` is nearly a
    multiple of ``s``.
    """
    s = as_vector(s, name="s")
    m_bar = as_vector(m_bar, s.size, "m_bar")
    S = float(np.vdot(s, s).real)
    P = float(np.vdot(s, m_bar).real)
    Q = float(np.vdot(m_bar, m_bar).real)
    if Q == 0.0 or S == 0.0:
        raise DegenerateStepError("zero step or zero mixed curvature vector")
    if not P > 0.0:
        raise DegenerateStepError("Re<s, m_bar> must be positive")
    r1 = S / P
    r2 = S / Q
    m_perp = m_bar - (P / S) * s
    root = S * float(np.linalg.norm(m_perp)) / (P * math.sqrt(Q))
    return r2 / (r1 + root)


def build_metric(x_prev, x_cur, g_prev, g_cur, delta: float = DEFAULT_DELTA,
                 nu1: float = DEFAULT_NU1, nu2: float = DEFAULT_NU2,
                 step_rtol: float = 1e-10) -> RankOneMetric:
    """Metric from the secant pair ``s = x_cur - x_prev``, ``m = g_cur - g_prev``.

    Args:
        step_rtol: ``s`` counts as zero when ``||s|| <= step_rtol * max(||x_prev||, ||x_cur||)``.
            Below that level ``m`` is dominated by rounding in the two gradients.

    Raises:
        DegenerateStepError: if ``s`` is zero; callers keep their previous metric.
    """
    x_cur = as_vector(x_cur, name="x_cur")
    n = x_cur.size
    x_prev = as_vector(x_prev, n, "x_prev")
    s = x_cur - x_prev
    scale = max(np.linalg.norm(x_prev), np.linalg.norm(x_cur))
    if np.linalg.norm(s) <= step_rtol * scale:
        raise DegenerateStepError("step below rounding level")
    m = as_vector(g_cur, n, "g_cur") - as_vector(g_prev, n, "g_prev")
    a, m_bar = mix_coefficient(s, m, nu1, nu2)
    tau = self_scaling_tau(s, m_bar)
    w = s - tau * m_bar
    rho = float(np.vdot(w, m_bar).real)
    if not (math.isfinite(tau) and math.isfinite(rho)):
        raise GKSMError("non-finite quantity while building metric")
    if rho <= delta * np.linalg.norm(w) * np.linalg.norm(m_bar):
        return RankOneMetric(tau=tau, dim=n, rho=rho, mix=a)
    ww = float(np.vdot(w, w).real)
    rho_b = tau * tau * rho + tau * ww
    if tau * ww / rho_b <= 4.0 * np.finfo(float).eps:
        # the rank-1 term is below the resolution of I / tau
        return RankOneMetric(tau=tau, dim=n, rho=rho, mix=a)
    return RankOneMetric(tau=tau, dim=n, u=w, rho_b=rho_b, rho=rho, mix=a)
