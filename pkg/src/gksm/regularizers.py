"""Smooth regularizers ``f`` with values, gradients and Lipschitz bounds.

Gradients follow the real-inner-product convention: ``grad(x)`` is the vector
``g`` with ``f(x + d) = f(x) + Re<g, d> + o(||d||)``. For a function of
``z = a + ib`` this is ``df/da + i df/db``, i.e. twice the conjugate
Wirtinger derivative.

Every regularizer is scaled by its weight ``lam`` internally, so solvers see
the weight already folded into ``f``.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from gksm.core import DimensionError, as_vector


class SmoothRegularizer:
    """Base class: ``value``/``grad`` validate input, subclasses do the math.

    Attributes:
        kind (str): short name used in configuration files.
        lam (float): weight multiplying the penalty.
        lipschitz_bound (float): upper bound on the Lipschitz constant of
            ``grad``.
        surrogate_energy (bool): True when ``value`` is not the exact
            antiderivative of ``grad``.
    """

    kind = "abstract"
    surrogate_energy = False

    def __init__(self, lam: float):
        if not lam > 0:
            raise ValueError("regularization weight must be positive")
        self.lam = float(lam)

    @property
    def lipschitz_bound(self) -> float:
        raise NotImplementedError

    def value(self, x) -> float:
        return float(self._value(as_vector(x)))

    def grad(self, x) -> np.ndarray:
        return self._grad(as_vector(x))

    def _value(self, x):
        raise NotImplementedError

    def _grad(self, x):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}(lam={self.lam:g})"


class Tikhonov(SmoothRegularizer):
    """``(lam/2) ||x||^2``."""

    kind = "tikhonov"

    @property
    def lipschitz_bound(self):
        return self.lam

    def _value(self, x):
        return 0.5 * self.lam * np.vdot(x, x).real

    def _grad(self, x):
        return self.lam * x


class HuberTV(SmoothRegularizer):
    """Huber-smoothed anisotropic total variation on a 2-D grid.

    ``lam * sum H_mu(|d|)`` over all vertical and horizontal neighbour
    differences ``d`` (no wrap-around), with ``H_mu(t) = t^2 / (2 mu)`` for
    ``t <= mu`` and ``t - mu/2`` otherwise.
    """

    kind = "huber_tv"

    def __init__(self, lam: float, shape, mu: float = 0.01):
        super().__init__(lam)
        if not mu > 0:
            raise ValueError("Huber threshold mu must be positive")
        self.shape = tuple(int(s) for s in shape)
        if len(self.shape) != 2:
            raise DimensionError("huber_tv needs a 2-D grid shape")
        self.mu = float(mu)

    @property
    def lipschitz_bound(self):
        # ||D||^2 <= 8 for 2-D forward differences
        return 8.0 * self.lam / self.mu

    def _diffs(self, x):
        img = x.reshape(self.shape)
        return img[1:, :] - img[:-1, :], img[:, 1:] - img[:, :-1]

    def _huber(self, t):
        return np.where(t <= self.mu, t * t / (2.0 * self.mu), t - 0.5 * self.mu)

    def _psi(self, d):
        t = np.abs(d)
        return d / np.maximum(t, self.mu)

    def _value(self, x):
        dv, dh = self._diffs(x)
        return self.lam * (self._huber(np.abs(dv)).sum() + self._huber(np.abs(dh)).sum())

    def _grad(self, x):
        if x.size != self.shape[0] * self.shape[1]:
            raise DimensionError(f"x has length {x.size}, grid is {self.shape}")
        dv, dh = self._diffs(x)
        pv, ph = self._psi(dv), self._psi(dh)
        g = np.zeros(self.shape, dtype=np.complex128)
        g[1:, :] += pv
        g[:-1, :] -= pv
        g[:, 1:] += ph
        g[:, :-1] -= ph
        return self.lam * g.reshape(-1)


class LogSmooth(SmoothRegularizer):
    """Nonconvex log penalty ``lam * sum log(1 + |x_i|^2 / eps)``."""

    kind = "log_smooth"

    def __init__(self, lam: float, eps: float = 0.01):
        super().__init__(lam)
        if not eps > 0:
            raise ValueError("eps must be positive")
        self.eps = float(eps)

    @property
    def lipschitz_bound(self):
        return 2.0 * self.lam / self.eps

    def _value(self, x):
        return self.lam * np.log1p((x.real**2 + x.imag**2) / self.eps).sum()

    def _grad(self, x):
        return self.lam * 2.0 * x / (self.eps + (x.real**2 + x.imag**2))


class DenoiserDriven(SmoothRegularizer):
    """Adapter turning a denoiser ``D`` into a regularizer with ``grad = lam (x - D(x))``.

    If ``potential`` is given it must satisfy ``grad potential = D`` and
    ``potential(0) = 0``; the value is then the exact energy
    ``lam (||x||^2 / 2 - potential(x))``. Without it, ``value`` returns the
    surrogate ``lam ||x - D(x)||^2 / 2`` and ``surrogate_energy`` is True.

    Args:
        denoiser: callable mapping a flat complex vector to one of equal size.
        lam: weight.
        lipschitz_bound: bound on the Lipschitz constant of ``lam (I - D)``.
        potential: optional scalar potential of the denoiser.
    """

    kind = "denoiser_driven"

    def __init__(
        self,
        denoiser: Callable[[np.ndarray], np.ndarray],
        lam: float,
        lipschitz_bound: float,
        potential: Callable[[np.ndarray], float] | None = None,
    ):
        super().__init__(lam)
        self.denoiser = denoiser
        self.potential = potential
        self._lip = float(lipschitz_bound)
        self.surrogate_energy = potential is None

    @property
    def lipschitz_bound(self):
        return self._lip

    def denoise(self, x) -> np.ndarray:
        x = as_vector(x)
        return as_vector(self.denoiser(x), x.size, "denoiser output")

    def _value(self, x):
        if self.potential is not None:
            return self.lam * (0.5 * np.vdot(x, x).real - float(self.potential(x)))
        r = x - self.denoise(x)
        return 0.5 * self.lam * np.vdot(r, r).real

    def _grad(self, x):
        return self.lam * (x - self.denoise(x))


def gaussian_smoothing_denoiser(shape, sigma: float = 1.0):
    """A linear smoothing denoiser with an exact potential.

    ``D`` is circular convolution with a normalized Gaussian, which is
    symmetric with spectrum in ``(0, 1]``, so ``P(x) = Re<x, D x> / 2`` has
    gradient ``D`` and ``I - D`` has norm at most 1.

    Returns:
        (denoiser, potential, lipschitz_of_identity_minus_denoiser)
    """
    h, w = shape
    fy = np.fft.fftfreq(h)
    fx = np.fft.fftfreq(w)
    tf = np.exp(-2.0 * (np.pi * sigma) ** 2 * (fy[:, None] ** 2 + fx[None, :] ** 2))

    def denoiser(x):
        return np.fft.ifft2(tf * np.fft.fft2(x.reshape(h, w))).reshape(-1)

    def potential(x):
        return 0.5 * np.vdot(x, denoiser(x)).real

    return denoiser, potential, float(np.max(1.0 - tf))


def make_regularizer(kind: str, lam: float, shape=None, mu: float = 0.01, eps: float = 0.01,
                     sigma: float = 1.0) -> SmoothRegularizer:
    """Build a regularizer from configuration values."""
    if kind == "tikhonov":
        return Tikhonov(lam)
    if kind == "huber_tv":
        if shape is None:
            raise ValueError("huber_tv needs the image grid shape")
        return HuberTV(lam, shape, mu=mu)
    if kind == "log_smooth":
        return LogSmooth(lam, eps=eps)
    if kind == "denoiser_driven":
        if shape is None:
            raise ValueError("denoiser_driven needs the image grid shape")
        den, pot, lip = gaussian_smoothing_denoiser(shape, sigma)
        return DenoiserDriven(den, lam, lam * lip, potential=pot)
    raise ValueError(f"unknown regularizer kind {kind!r}")


def fd_gradient_check(f: SmoothRegularizer, x, n_dirs: int = 20, h: float = 1e-5,
                      seed: int = 0) -> float:
    """Worst relative gap between ``Re<grad f(x), d>`` and a central difference.

    Directions ``d`` are random complex unit vectors. Each gap is divided by
    ``||grad f(x)||``, the largest directional derivative over unit ``d``;
    dividing by ``|Re<grad f(x), d>|`` itself would amplify rounding whenever
    a random direction is nearly orthogonal to the gradient.
    """
    if not 1e-8 <= h <= 1e-3:
        raise ValueError("h must lie in [1e-8, 1e-3]")
    x = as_vector(x)
    rng = np.random.default_rng(seed)
    g = f.grad(x)
    gnorm = float(np.linalg.norm(g))
    worst = 0.0
    for _ in range(n_dirs):
        d = rng.standard_normal(x.size) + 1j * rng.standard_normal(x.size)
        d /= np.linalg.norm(d)
        analytic = float(np.vdot(g, d).real)
        numeric = (f.value(x + h * d) - f.value(x - h * d)) / (2.0 * h)
        denom = max(gnorm, abs(numeric), 1e-12)
        worst = max(worst, abs(analytic - numeric) / denom)
    return worst
