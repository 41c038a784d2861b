"""Symmetric-matrix helpers shared by the variance and bootstrap code."""

import numpy as np


def symmetrize(m):
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + m.T)


def psd_sqrt(m):
    """Unique PSD square root; negative eigenvalues are clipped to zero."""
    w, v = np.linalg.eigh(symmetrize(m))
    w = np.clip(w, 0.0, None)
    return symmetrize((v * np.sqrt(w)) @ v.T)


def psd_inv_sqrt(m, ridge=1e-10):
    """Pseudo-inverse square root of a PSD matrix.

    Eigenvalues at or below ``ridge * lambda_max`` are treated as zero.
    """
    w, v = np.linalg.eigh(symmetrize(m))
    top = w[-1] if w.size else 0.0
    if top <= 0:
        return np.zeros_like(v)
    keep = w > ridge * top
    inv = np.zeros_like(w)
    inv[keep] = 1.0 / np.sqrt(w[keep])
    return symmetrize((v * inv) @ v.T)
