"""Synthetic test data: phantoms, coil maps, sampling masks and noise.

All randomness comes from :func:`rng_for`, which derives an independent
Philox (counter-based) stream per purpose from the master seed::

    Generator(Philox(SeedSequence([seed, PURPOSES[purpose]])))

so the streams can be reproduced outside this package.
"""
from __future__ import annotations

import math

import numpy as np

from gksm.core import DimensionError, as_vector
from gksm.solver import ConfigError

PURPOSES = {"phantom": 1, "sensitivities": 2, "mask": 3, "noise": 4, "operator": 5, "probe": 6,
            "phase": 7}


def rng_for(seed: int, purpose: str) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), PURPOSES[purpose]])))


# (intensity, semi-axis a, semi-axis b, center x, center y, angle in degrees)
_SHEPP_LOGAN = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
]


def _grid(h, w):
    Y, X = np.meshgrid(np.linspace(-1.0, 1.0, h), np.linspace(-1.0, 1.0, w), indexing="ij")
    return X, Y


def shepp_logan_magnitude(h: int, w: int) -> np.ndarray:
    """Modified Shepp-Logan phantom sampled on ``[-1, 1]^2``, scaled to max 1."""
    X, Y = _grid(h, w)
    img = np.zeros((h, w))
    for rho, a, b, x0, y0, deg in _SHEPP_LOGAN:
        th = math.radians(deg)
        xr = (X - x0) * math.cos(th) + (Y - y0) * math.sin(th)
        yr = -(X - x0) * math.sin(th) + (Y - y0) * math.cos(th)
        img[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += rho
    img = np.abs(img)
    return img / img.max()


def smooth_bumps_params(seed: int, n_bumps: int = 5) -> np.ndarray:
    """Rows ``(amplitude, center_x, center_y, width)`` of the bump phantom."""
    rng = rng_for(seed, "phantom")
    amp = rng.uniform(0.3, 1.0, n_bumps)
    cx = rng.uniform(-0.6, 0.6, n_bumps)
    cy = rng.uniform(-0.6, 0.6, n_bumps)
    width = rng.uniform(0.15, 0.4, n_bumps)
    return np.stack([amp, cx, cy, width], axis=1)


def smooth_bumps_magnitude(h: int, w: int, seed: int) -> np.ndarray:
    """Sum of isotropic Gaussian bumps, scaled to max 1."""
    X, Y = _grid(h, w)
    img = np.zeros((h, w))
    for amp, cx, cy, width in smooth_bumps_params(seed):
        img += amp * np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / (2.0 * width**2))
    return img / img.max()


def smooth_phase(h: int, w: int, seed: int) -> np.ndarray:
    """Low-order polynomial phase bounded by pi/4 in magnitude."""
    X, Y = _grid(h, w)
    c = rng_for(seed, "phase").uniform(-1.0, 1.0, 3)
    return (math.pi / 4.0) * (c[0] * X + c[1] * Y + c[2] * X * Y) / np.sum(np.abs(c))


def generate_phantom(h: int, w: int, kind: str = "shepp_logan", seed: int = 0) -> np.ndarray:
    """Complex test image, flattened row-major, max magnitude exactly 1."""
    if h < 8 or w < 8:
        raise ConfigError("problem.height", "phantom needs at least 8x8 pixels")
    if kind == "shepp_logan":
        mag = shepp_logan_magnitude(h, w)
    elif kind == "smooth_bumps":
        mag = smooth_bumps_magnitude(h, w, seed)
    else:
        raise ConfigError("problem.phantom", f"unknown phantom {kind!r}")
    x = mag * np.exp(1j * smooth_phase(h, w, seed))
    peak = mag == 1.0
    x[peak] = [_unit_phasor(z) for z in x[peak]]
    return x.reshape(-1)


def _unit_phasor(z: complex) -> complex:
    """``z / |z|`` adjusted by a few ulps so that ``numpy.abs`` returns exactly 1."""
    z = z / np.abs(z)
    re, im = float(z.real), float(z.imag)
    for _ in range(16):
        a = float(np.abs(np.complex128(complex(re, im))))
        if a == 1.0:
            break
        # move the larger component toward the unit circle
        if abs(re) >= abs(im):
            re = math.nextafter(re, 0.0 if a > 1.0 else math.copysign(math.inf, re))
        else:
            im = math.nextafter(im, 0.0 if a > 1.0 else math.copysign(math.inf, im))
    return complex(re, im)


def generate_sensitivities(h: int, w: int, num_coils: int, seed: int = 0) -> np.ndarray:
    """Smooth coil maps of shape ``(num_coils, h, w)`` with unit root-sum-of-squares.

    Coil ``c`` has a Gaussian magnitude centred on a ring around the image
    and a random linear phase.
    """
    if num_coils < 1:
        raise ConfigError("problem.num_coils", "must be >= 1")
    rng = rng_for(seed, "sensitivities")
    X, Y = _grid(h, w)
    maps = np.empty((num_coils, h, w), dtype=np.complex128)
    offset = rng.uniform(0.0, 2.0 * math.pi)
    for c in range(num_coils):
        ang = offset + 2.0 * math.pi * c / num_coils
        cx, cy = 1.2 * math.cos(ang), 1.2 * math.sin(ang)
        width = rng.uniform(0.8, 1.2)
        kx, ky = rng.uniform(-math.pi / 2, math.pi / 2, 2)
        mag = np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / (2.0 * width**2))
        maps[c] = mag * np.exp(1j * (kx * X + ky * Y))
    sos = np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))
    return maps / sos


def generate_mask(h: int, w: int, kind: str = "cartesian_vd", acceleration: float = 4.0,
                  seed: int = 0) -> np.ndarray:
    """Boolean k-space sampling pattern laid out for an unshifted FFT grid.

    The pattern is designed in centred coordinates (DC in the middle) and
    then ``ifftshift``-ed so that DC sits at index (0, 0).

    * ``full``: every sample.
    * ``cartesian_vd``: whole phase-encode rows; a fully sampled centre band
      of 8% of the rows plus rows drawn without replacement with density
      decaying quadratically away from the centre, ``round(h / acceleration)``
      rows in total.
    * ``pseudo_radial``: ``ceil(h * pi / 2 / acceleration)`` diameters at
      equally spaced angles (random offset), rasterized to the grid.
    """
    if not acceleration >= 1.0:
        raise ConfigError("problem.acceleration", "must be >= 1")
    if kind == "full":
        return np.ones((h, w), dtype=bool)
    rng = rng_for(seed, "mask")
    centred = np.zeros((h, w), dtype=bool)
    if kind == "cartesian_vd":
        n_rows = int(round(h / acceleration))
        if n_rows < 1:
            raise ConfigError("problem.acceleration", "too high: no k-space rows remain")
        n_center = min(max(1, int(round(0.08 * h))), n_rows)
        c0 = h // 2 - n_center // 2
        rows = set(range(c0, c0 + n_center))
        others = np.array([r for r in range(h) if r not in rows])
        if n_rows > n_center:
            dist = np.abs(others - h // 2) / (h / 2)
            p = (1.0 - dist) ** 2 + 1e-3
            pick = rng.choice(others, size=n_rows - n_center, replace=False, p=p / p.sum())
            rows.update(int(r) for r in pick)
        centred[sorted(rows), :] = True
    elif kind == "pseudo_radial":
        n_lines = math.ceil((h * math.pi / 2.0) / acceleration)
        offset = rng.uniform(0.0, math.pi / n_lines)
        radius = 0.5 * math.hypot(h, w)
        t = np.arange(-radius, radius + 0.5, 0.5)
        for ang in offset + np.arange(n_lines) * math.pi / n_lines:
            r = np.rint(h // 2 + t * math.sin(ang)).astype(int)
            c = np.rint(w // 2 + t * math.cos(ang)).astype(int)
            ok = (r >= 0) & (r < h) & (c >= 0) & (c < w)
            centred[r[ok], c[ok]] = True
        centred[h // 2, w // 2] = True
    else:
        raise ConfigError("problem.mask", f"unknown mask kind {kind!r}")
    return np.fft.ifftshift(centred)


def add_noise(y, snr_db: float, seed: int = 0) -> np.ndarray:
    """Add circular complex Gaussian noise at the requested input SNR.

    The per-entry variance is ``||y||^2 / (len(y) 10^(snr_db / 10))``;
    ``snr_db = inf`` returns ``y`` unchanged.
    """
    y = as_vector(y)
    if math.isinf(snr_db) and snr_db > 0:
        return y.copy()
    power = float(np.vdot(y, y).real)
    if power == 0.0:
        raise ValueError("cannot set an SNR relative to a zero signal")
    var = power / (y.size * 10.0 ** (snr_db / 10.0))
    rng = rng_for(seed, "noise")
    noise = rng.standard_normal(y.size) + 1j * rng.standard_normal(y.size)
    return y + math.sqrt(var / 2.0) * noise


def psnr(x, ref) -> float:
    """``-10 log10(mean |x - ref|^2)`` for a reference with peak magnitude 1."""
    x = np.asarray(x).reshape(-1)
    ref = np.asarray(ref).reshape(-1)
    if x.size != ref.size:
        raise DimensionError(f"length mismatch: {x.size} vs {ref.size}")
    mse = float(np.mean(np.abs(x - ref) ** 2))
    if mse == 0.0:
        return math.inf
    return -10.0 * math.log10(mse)
