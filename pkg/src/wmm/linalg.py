"""Symmetric eigendecomposition by cyclic Jacobi rotations, and the pseudo-inverse built on it."""

import numpy as np

from wmm import _kernels

PINV_RTOL = 1e-12


def symmetric_eigh(a, tol=1e-15, max_sweeps=100):
    """Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    if a.shape[0] == 0:
        return np.empty(0), np.empty((0, 0))
    if not np.allclose(a, a.T, rtol=1e-10, atol=1e-14 * max(1.0, np.abs(a).max())):
        raise ValueError("matrix is not symmetric")
    return _kernels.jacobi_eigh(0.5 * (a + a.T), tol, max_sweeps)


def pseudo_inverse(a, rtol=PINV_RTOL):
    """Moore-Penrose inverse of a symmetric PSD matrix.

    Eigenvalues at or below ``rtol * max eigenvalue`` (including small
    negative ones from rounding) are treated as zero.
    """
    w, v = symmetric_eigh(a)
    if w.size == 0:
        return np.empty((0, 0))
    top = w.max()
    if top <= 0.0:
        return np.zeros_like(v)
    keep = w > rtol * top
    inv = np.zeros_like(w)
    inv[keep] = 1.0 / w[keep]
    return (v * inv) @ v.T
