"""Independent reference computations shared by the test modules."""
import numpy as np


def grid_mix_coefficient(s, m, nu1, nu2, step=1e-8, chunk=10_000_000):
    """Smallest grid point ``a = j * step`` in [0, 1] meeting both scaling conditions."""
    S = float(np.vdot(s, s).real)
    P = float(np.vdot(s, m).real)
    Q = float(np.vdot(m, m).real)
    n = int(round(1.0 / step)) + 1
    for start in range(0, n, chunk):
        a = np.arange(start, min(start + chunk, n)) * step
        p = a * S + (1 - a) * P
        q = a * a * S + 2 * a * (1 - a) * P + (1 - a) ** 2 * Q
        ok = (p >= nu1 * S) & (p > 0) & (q <= nu2 * p)
        if ok.any():
            return float(a[np.argmax(ok)])
    return 1.0


def projector_distance(U, W):
    """Spectral norm of the difference of orthogonal projectors onto range(U) and range(W)."""
    qu, _ = np.linalg.qr(U)
    qw, _ = np.linalg.qr(W)
    return float(np.linalg.norm(qu @ qu.conj().T - qw @ qw.conj().T, 2))
