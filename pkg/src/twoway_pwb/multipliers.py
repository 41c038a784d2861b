"""Dependent Rademacher multipliers for the two clustering dimensions.

Units get spatially correlated multipliers ``eta = K^{1/2} r`` where ``r``
is an i.i.d. Rademacher vector and ``K`` is the Wendland C2 kernel matrix of
scaled distances. Periods get a stationary two-state Markov sign chain with
lag-h correlation ``q**h``.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz

from ._linalg import symmetrize
from .exceptions import DegenerateAutocorrelation, NotPositiveSemiDefinite

PSD_CLAMP = -1e-10
PSD_REJECT = -1e-6
Q_MAX = 1.0 - 1e-8


def wendland_c2(u):
    """Wendland C2 kernel ``(1 - |u|)_+^4 (4|u| + 1)``."""
    a = np.abs(np.asarray(u, dtype=float))
    out = np.clip(1.0 - a, 0.0, None) ** 4 * (4.0 * a + 1.0)
    return out if out.ndim else float(out)


def default_bandwidth(n_units):
    """``max(1, floor(N**(1/8)))``, computed in exact integer arithmetic."""
    if n_units < 1:
        raise ValueError("n_units must be positive")
    b = max(1, int(round(n_units ** 0.125)))
    while b ** 8 > n_units:
        b -= 1
    while (b + 1) ** 8 <= n_units:
        b += 1
    return max(1, b)


@dataclass(frozen=True)
class SpatialMultiplierEngine:
    """Kernel matrix over units and its symmetric PSD square root."""

    kernel_matrix: np.ndarray
    kernel_root: np.ndarray
    bandwidth: float

    @property
    def n_units(self):
        return self.kernel_matrix.shape[0]

    @property
    def is_identity(self):
        return bool(np.array_equal(self.kernel_matrix, np.eye(self.n_units)))


def build_spatial_engine(distances, bandwidth):
    """Assemble the kernel matrix for ``distances / bandwidth`` and its root.

    Raises
    ------
    NotPositiveSemiDefinite
        If the kernel matrix has an eigenvalue below -1e-6, which only happens
        for distance matrices that are not Euclidean-embeddable.
    """
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    d = np.asarray(distances, dtype=float)
    kmat = symmetrize(wendland_c2(d / bandwidth))
    np.fill_diagonal(kmat, 1.0)
    off = kmat - np.diag(np.diag(kmat))
    if not off.any():
        root = np.eye(len(kmat))
    else:
        w, v = np.linalg.eigh(kmat)
        if w[0] < PSD_REJECT:
            raise NotPositiveSemiDefinite(
                f"kernel matrix has eigenvalue {w[0]:.3g}; check the distance matrix"
            )
        w = np.where(w < 0, 0.0, w)
        root = symmetrize((v * np.sqrt(w)) @ v.T)
    kmat.setflags(write=False)
    root.setflags(write=False)
    return SpatialMultiplierEngine(kernel_matrix=kmat, kernel_root=root, bandwidth=float(bandwidth))


def rademacher_from_uniform(u):
    return np.where(np.asarray(u) < 0.5, -1.0, 1.0)


def draw_spatial(engine, rng):
    """One spatial multiplier vector of length N from a numpy Generator."""
    r = rademacher_from_uniform(rng.random(engine.n_units))
    return engine.kernel_root @ r


def spatial_from_uniform(engine, u):
    """Spatial multipliers from a ``(B, N)`` block of uniforms."""
    r = rademacher_from_uniform(u)
    if engine.is_identity:
        return r
    return r @ engine.kernel_root


@dataclass(frozen=True)
class SerialMultiplierSpec:
    q: float
    length: int

    def __post_init__(self):
        if not 0.0 <= self.q < 1.0:
            raise ValueError(f"q must lie in [0, 1), got {self.q}")
        if self.length < 1:
            raise ValueError("length must be positive")


def serial_from_uniform(q, u):
    """Markov sign chains from uniforms of shape ``(..., T)``.

    The first uniform sets the initial sign; each later one flips the sign
    when it falls below ``(1 - q) / 2``.
    """
    u = np.asarray(u, dtype=float)
    start = rademacher_from_uniform(u[..., :1])
    step = np.where(u[..., 1:] < 0.5 * (1.0 - q), -1.0, 1.0)
    return start * np.concatenate([np.ones_like(start), np.cumprod(step, axis=-1)], axis=-1)


def draw_serial(spec, rng):
    """One serial multiplier path of length T from a numpy Generator."""
    return serial_from_uniform(spec.q, rng.random(spec.length))


def serial_weight_matrix(q, t):
    """``q**|t - tau|`` with the convention ``0**0 = 1``."""
    if q == 0:
        return np.eye(t)
    return toeplitz(float(q) ** np.arange(t))


def select_q(scores_t, n_periods=None):
    """Plug-in serial dependence parameter from AR(1) fits of period scores.

    Parameters
    ----------
    scores_t : array_like, shape (T, K)
        Period-level score series, one column per coordinate.
    n_periods : int, optional
        T used in the rate term; defaults to the number of rows.

    Returns
    -------
    float
        ``exp(-omega**(-1/3) * T**(-1/3))`` clipped to ``[0, 1 - 1e-8]``;
        zero when all AR(1) slopes are zero.

    Raises
    ------
    DegenerateAutocorrelation
        When a slope is within 1e-8 of a unit root or every series is
        constant. Callers fall back to ``q = 0``.
    """
    s = np.asarray(scores_t, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    t = s.shape[0] if n_periods is None else n_periods
    if s.shape[0] < 3:
        raise ValueError("need at least three periods")
    lag, lead = s[:-1], s[1:]
    denom = np.einsum("tk,tk->k", lag, lag)
    scale = np.max(np.abs(s)) if s.size else 0.0
    live = denom > (1e-28 * max(scale, 1e-300) ** 2) * len(lag)
    if not live.any():
        raise DegenerateAutocorrelation("all score series are constant")
    rho = np.einsum("tk,tk->k", lag[:, live], lead[:, live]) / denom[live]
    if np.any(np.abs(rho) >= Q_MAX):
        raise DegenerateAutocorrelation(f"near unit-root autocorrelation {rho}")
    num = np.sum(rho ** 2 / (1 - rho) ** 4)
    den = np.sum((1 - rho ** 2) ** 2 / (1 - rho) ** 4)
    omega = num / den
    if omega <= 0:
        return 0.0
    q = math.exp(-(omega ** (-1.0 / 3.0)) * t ** (-1.0 / 3.0))
    return float(min(max(q, 0.0), Q_MAX))
