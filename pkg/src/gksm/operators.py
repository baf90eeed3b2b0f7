"""Forward operators ``A`` with matched adjoints.

Every operator maps flat complex vectors of length ``domain_dim`` to flat
complex vectors of length ``range_dim`` and counts how many times ``apply``
and ``adjoint`` have been called, which the solvers use to audit their
per-iteration cost.
"""
from __future__ import annotations

import numpy as np

from gksm.core import DimensionError, as_vector


class ForwardOperator:
    """Abstract complex linear map with apply/adjoint and call counters.

    Subclasses implement ``_apply`` and ``_adjoint`` on validated flat arrays.
    """

    kind = "abstract"

    def __init__(self, domain_dim: int, range_dim: int):
        self.domain_dim = int(domain_dim)
        self.range_dim = int(range_dim)
        self.n_apply = 0
        self.n_adjoint = 0

    def apply(self, x) -> np.ndarray:
        x = as_vector(x, self.domain_dim, "x")
        self.n_apply += 1
        return self._apply(x)

    def adjoint(self, z) -> np.ndarray:
        z = as_vector(z, self.range_dim, "z")
        self.n_adjoint += 1
        return self._adjoint(z)

    @property
    def H(self) -> "AdjointOperator":
        return AdjointOperator(self)

    def reset_counters(self):
        self.n_apply = 0
        self.n_adjoint = 0

    def counters(self) -> tuple[int, int]:
        return self.n_apply, self.n_adjoint

    def to_dense(self) -> np.ndarray:
        """Materialize the operator column by column (for small problems and tests)."""
        M = np.empty((self.range_dim, self.domain_dim), dtype=np.complex128)
        e = np.zeros(self.domain_dim, dtype=np.complex128)
        for j in range(self.domain_dim):
            e[j] = 1.0
            M[:, j] = self._apply(e)
            e[j] = 0.0
        return M

    def _apply(self, x):
        raise NotImplementedError

    def _adjoint(self, z):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.range_dim}x{self.domain_dim})"


class AdjointOperator(ForwardOperator):
    kind = "adjoint"

    def __init__(self, op: ForwardOperator):
        super().__init__(op.range_dim, op.domain_dim)
        self.op = op

    def _apply(self, x):
        return self.op._adjoint(x)

    def _adjoint(self, z):
        return self.op._apply(z)


class DenseOperator(ForwardOperator):
    """Explicit ``(M, N)`` complex matrix."""

    kind = "dense"

    def __init__(self, matrix):
        matrix = np.array(matrix, dtype=np.complex128, ndmin=2)
        if matrix.ndim != 2:
            raise DimensionError("dense operator needs a 2-D matrix")
        super().__init__(matrix.shape[1], matrix.shape[0])
        self.matrix = matrix
        self.matrix.setflags(write=False)

    def _apply(self, x):
        return self.matrix @ x

    def _adjoint(self, z):
        return self.matrix.conj().T @ z

    def to_dense(self):
        return np.array(self.matrix)


class MaskedFourierOperator(ForwardOperator):
    """Multi-coil Cartesian sampling ``A_c = P F S_c`` stacked over coils.

    ``F`` is the unitary 2-D DFT (``norm="ortho"``), ``S_c`` multiplies by the
    c-th coil sensitivity, and ``P`` keeps the k-space samples where ``mask``
    is true, in row-major order. The output is the concatenation of the
    retained samples of coil 0, coil 1, ...

    Args:
        mask: (h, w) boolean sampling pattern.
        sensitivities: (C, h, w) complex maps; ``None`` means a single
            coil with unit sensitivity.
    """

    kind = "masked_fourier"

    def __init__(self, mask, sensitivities=None):
        mask = np.asarray(mask, dtype=bool)
        if mask.ndim != 2:
            raise DimensionError("mask must be 2-D")
        self.shape = mask.shape
        if sensitivities is None:
            sensitivities = np.ones((1,) + self.shape, dtype=np.complex128)
        sens = np.array(sensitivities, dtype=np.complex128)
        if sens.ndim == 2:
            sens = sens[None]
        if sens.shape[1:] != self.shape:
            raise DimensionError(f"sensitivities {sens.shape} do not match mask {self.shape}")
        self.mask = mask
        self.sens = sens
        self.num_coils = sens.shape[0]
        self._idx = np.flatnonzero(mask.ravel())
        self.mask.setflags(write=False)
        self.sens.setflags(write=False)
        super().__init__(mask.size, self.num_coils * self._idx.size)

    def _apply(self, x):
        img = x.reshape(self.shape)
        k = np.fft.fft2(self.sens * img, norm="ortho")
        return k.reshape(self.num_coils, -1)[:, self._idx].reshape(-1)

    def _adjoint(self, z):
        full = np.zeros((self.num_coils, self.mask.size), dtype=np.complex128)
        full[:, self._idx] = z.reshape(self.num_coils, -1)
        imgs = np.fft.ifft2(full.reshape((self.num_coils,) + self.shape), norm="ortho")
        return np.sum(self.sens.conj() * imgs, axis=0).reshape(-1)


class ConvolutionOperator(ForwardOperator):
    """Circular 2-D convolution with a fixed kernel (a blur model).

    The kernel is zero-padded to ``shape`` with its origin at pixel (0, 0);
    use ``centered=True`` to treat the middle of the kernel as the origin.
    """

    kind = "convolution"

    def __init__(self, kernel, shape, centered: bool = True):
        kernel = np.asarray(kernel, dtype=np.complex128)
        if kernel.ndim == 1:
            kernel = kernel[None, :]
        h, w = shape
        if kernel.shape[0] > h or kernel.shape[1] > w:
            raise DimensionError("kernel larger than image grid")
        padded = np.zeros((h, w), dtype=np.complex128)
        padded[: kernel.shape[0], : kernel.shape[1]] = kernel
        if centered:
            padded = np.roll(padded, (-(kernel.shape[0] // 2), -(kernel.shape[1] // 2)), axis=(0, 1))
        self.shape = (h, w)
        self.kernel = kernel
        self._tf = np.fft.fft2(padded)
        super().__init__(h * w, h * w)

    def _apply(self, x):
        return np.fft.ifft2(self._tf * np.fft.fft2(x.reshape(self.shape))).reshape(-1)

    def _adjoint(self, z):
        return np.fft.ifft2(self._tf.conj() * np.fft.fft2(z.reshape(self.shape))).reshape(-1)


def estimate_opnorm(op: ForwardOperator, iters: int = 100, seed: int = 0) -> float:
    """Estimate ``lambda_max(A^H A) = ||A||^2`` by power iteration.

    Returns the Rayleigh quotient of the final normalized iterate, which is
    nondecreasing in ``iters``. A zero operator gives 0.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(op.domain_dim) + 1j * rng.standard_normal(op.domain_dim)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(iters):
        w = op.adjoint(op.apply(x))
        lam = float(np.vdot(x, w).real)
        wn = np.linalg.norm(w)
        if wn == 0.0:
            return 0.0
        x = w / wn
    return lam


def dot_test(op: ForwardOperator, n_probes: int = 20, seed: int = 0) -> float:
    """Largest relative adjoint mismatch over random probe pairs.

    Each probe returns ``|<A x, z> - <x, A^H z>| / (||A x|| ||z||)``.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_probes):
        x = rng.standard_normal(op.domain_dim) + 1j * rng.standard_normal(op.domain_dim)
        z = rng.standard_normal(op.range_dim) + 1j * rng.standard_normal(op.range_dim)
        Ax = op.apply(x)
        lhs = np.vdot(Ax, z)
        rhs = np.vdot(x, op.adjoint(z))
        scale = np.linalg.norm(Ax) * np.linalg.norm(z)
        if scale == 0.0:
            err = abs(lhs - rhs)
        else:
            err = abs(lhs - rhs) / scale
        worst = max(worst, float(err))
    return worst
