"""Complex vector algebra, small Hermitian solves and incremental orthonormal bases.

Vectors are plain one-dimensional ``numpy.complex128`` arrays. The inner
product is conjugate-linear in its first argument, ``<x, y> = sum(conj(x) * y)``,
which is what ``numpy.vdot`` computes.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import lapack


class GKSMError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(GKSMError, ValueError):
    """Operands have incompatible lengths or shapes."""


class DataError(GKSMError, ValueError):
    """Input contains NaN or Inf entries."""


class IndefiniteError(GKSMError, np.linalg.LinAlgError):
    """Cholesky factorization hit a non-positive pivot.

    Attributes:
        pivot (int): zero-based index of the offending pivot.
    """

    def __init__(self, pivot: int, message: str | None = None):
        self.pivot = pivot
        super().__init__(message or f"matrix is not positive definite (pivot {pivot})")


def as_vector(x, n: int | None = None, name: str = "x") -> np.ndarray:
    """Return ``x`` as a flat complex128 array, validating length and finiteness."""
    v = np.asarray(x, dtype=np.complex128).reshape(-1)
    if n is not None and v.size != n:
        raise DimensionError(f"{name} has length {v.size}, expected {n}")
    if not np.all(np.isfinite(v)):
        raise DataError(f"{name} contains non-finite entries")
    return v


def _check_pair(x, y):
    x = np.asarray(x)
    y = np.asarray(y)
    if x.size != y.size:
        raise DimensionError(f"length mismatch: {x.size} vs {y.size}")
    return x.reshape(-1), y.reshape(-1)


def inner(x, y) -> complex:
    """Return ``sum(conj(x_i) * y_i)``."""
    x, y = _check_pair(x, y)
    return complex(np.vdot(x, y))


def re_inner(x, y) -> float:
    """Real part of :func:`inner`, the real inner product on C^N viewed as R^2N."""
    x, y = _check_pair(x, y)
    return float(np.vdot(x, y).real)


def norm(x) -> float:
    return float(np.linalg.norm(np.asarray(x).reshape(-1)))


def is_hermitian(M, rtol: float = 1e-12) -> bool:
    M = np.asarray(M)
    scale = max(float(np.max(np.abs(M))), np.finfo(float).tiny) if M.size else 1.0
    return bool(np.max(np.abs(M - M.conj().T), initial=0.0) <= rtol * scale)


def hermitian_posdef_solve(M, b, reg: float = 0.0) -> np.ndarray:
    """Solve ``(M + reg*I) beta = b`` for Hermitian positive definite ``M``.

    Uses a Cholesky factorization, so only the lower triangle of ``M`` is read.

    Args:
        M: (k, k) Hermitian matrix.
        b: length-k right-hand side.
        reg: nonnegative shift added to the diagonal before factorizing.

    Raises:
        IndefiniteError: if the factorization meets a non-positive pivot.
    """
    M = np.array(M, dtype=np.complex128, ndmin=2)
    b = np.asarray(b, dtype=np.complex128).reshape(-1)
    k = M.shape[0]
    if M.shape != (k, k) or b.size != k:
        raise DimensionError(f"system of shape {M.shape} with rhs of length {b.size}")
    if reg < 0:
        raise ValueError("reg must be nonnegative")
    if not (np.all(np.isfinite(M)) and np.all(np.isfinite(b))):
        raise DataError("non-finite entries in reduced system")
    if reg:
        M[np.diag_indices(k)] += reg
    c, info = lapack.zpotrf(M, lower=1, clean=1)
    if info > 0:
        raise IndefiniteError(info - 1)
    if info < 0:  # pragma: no cover - argument error inside LAPACK
        raise GKSMError(f"zpotrf argument error {info}")
    beta, info = lapack.zpotrs(c, b, lower=1)
    return beta


class SubspaceBasis:
    """Column-orthonormal basis ``V`` with a cached image ``A V``.

    Columns live in preallocated storage that grows geometrically, so
    appending is amortized O(N). ``V`` and ``AV`` return views of the
    active columns.

    Args:
        n: length of the basis vectors.
        m: length of the cached ``A v`` columns (0 disables the cache).
        drop_tol: a residual whose projected norm is at most
            ``drop_tol * ||r||`` is treated as lying in the span.
    """

    def __init__(self, n: int, m: int = 0, drop_tol: float = 1e-12, capacity: int = 8):
        self.n = int(n)
        self.m = int(m)
        self.drop_tol = float(drop_tol)
        self.k = 0
        self._V = np.zeros((self.n, capacity), dtype=np.complex128)
        self._AV = np.zeros((self.m, capacity), dtype=np.complex128)

    @property
    def V(self) -> np.ndarray:
        return self._V[:, : self.k]

    @property
    def AV(self) -> np.ndarray:
        return self._AV[:, : self.k]

    def __len__(self):
        return self.k

    def _grow(self):
        cap = max(2 * self._V.shape[1], 1)
        V = np.zeros((self.n, cap), dtype=np.complex128)
        AV = np.zeros((self.m, cap), dtype=np.complex128)
        V[:, : self.k] = self.V
        AV[:, : self.k] = self.AV
        self._V, self._AV = V, AV

    def project_out(self, r) -> np.ndarray:
        """Return ``(I - V V^H) r`` by modified Gram-Schmidt, applied twice."""
        r = np.array(r, dtype=np.complex128).reshape(-1)
        V = self.V
        for _ in range(2):
            for j in range(self.k):
                v = V[:, j]
                r -= v * np.vdot(v, r)
        return r

    def orthonormal_append(self, r, op=None) -> bool:
        """Orthogonalize ``r`` against the basis and append it if it is new.

        Args:
            r: candidate direction of length ``n``.
            op: forward operator used to fill the ``A v`` cache; required
                when the basis was created with ``m > 0``.

        Returns:
            True if a column was appended, False if ``r`` was (numerically)
            inside the current span and skipped.
        """
        r = np.asarray(r, dtype=np.complex128).reshape(-1)
        if r.size != self.n:
            raise DimensionError(f"vector of length {r.size}, basis length {self.n}")
        if not np.all(np.isfinite(r)):
            raise DataError("non-finite entries in enrichment vector")
        rnorm = np.linalg.norm(r)
        if rnorm == 0.0:
            return False
        rt = self.project_out(r)
        rtnorm = np.linalg.norm(rt)
        if rtnorm <= self.drop_tol * rnorm:
            return False
        v = rt / rtnorm
        av = None
        if self.m:
            if op is None:
                raise ValueError("basis caches A V; pass the operator")
            av = op.apply(v)
        self.append_column(v, av)
        return True

    def append_column(self, v, av=None):
        """Append an already orthonormalized column (and its image under A)."""
        if self.k == self._V.shape[1]:
            self._grow()
        self._V[:, self.k] = v
        if self.m:
            self._AV[:, self.k] = av
        self.k += 1

    def reset(self):
        self.k = 0

    def gram_error(self) -> float:
        """Max-entry deviation of ``V^H V`` from the identity."""
        if self.k == 0:
            return 0.0
        G = self.V.conj().T @ self.V
        return float(np.max(np.abs(G - np.eye(self.k))))
