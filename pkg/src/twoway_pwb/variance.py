"""Variance components along both clustering dimensions and the two-way CRVE.

Unit-dimension sums are weighted by the spatial kernel matrix and
period-dimension sums by ``q**|t - tau|``; both weight matrices are PSD, so
the intersection-level estimate is computed as a Gram matrix of the
kernel-root-transformed remainders and is PSD by construction.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._linalg import psd_sqrt, symmetrize
from .multipliers import serial_weight_matrix


def evc(m):
    """Eigenvalue clipping: replace negative eigenvalues of (M + M')/2 by zero.

    >>> evc([[0.0, 1.0], [1.0, 0.0]]).round(12).tolist()
    [[0.5, 0.5], [0.5, 0.5]]
    """
    m = symmetrize(m)
    w, v = np.linalg.eigh(m)
    if w[0] >= 0:
        return m
    return symmetrize((v * np.clip(w, 0.0, None)) @ v.T)


def _kernel(engine_or_matrix, n):
    if engine_or_matrix is None:
        return np.eye(n)
    return np.asarray(getattr(engine_or_matrix, "kernel_matrix", engine_or_matrix), dtype=float)


def spatial_gram(proj, engine):
    """``(1/N) sum_ij K_ij a_i a_j'``."""
    a = proj.a_dd
    kmat = _kernel(engine, a.shape[0])
    return symmetrize(a.T @ kmat @ a / a.shape[0])


def serial_gram(proj, q):
    """``(1/T) sum_{t,tau} q^|t-tau| d_t d_tau'``."""
    d = proj.d_dd
    qmat = serial_weight_matrix(q, d.shape[0])
    return symmetrize(d.T @ qmat @ d / d.shape[0])


def raw_sigma_a(proj, engine):
    n, t, _ = proj.w_dd.shape
    kmat = _kernel(engine, n)
    w = proj.w_dd
    # sum_t sum_ij K_ij w_it w_jt'
    kw = np.tensordot(kmat, w, axes=(1, 0))
    corr = np.tensordot(w, kw, axes=([0, 1], [0, 1])) / (n * t * t)
    return symmetrize(spatial_gram(proj, kmat) - corr)


def raw_sigma_d(proj, q):
    n, t, _ = proj.w_dd.shape
    qmat = serial_weight_matrix(q, t)
    w = proj.w_dd
    wq = np.matmul(qmat, w)
    corr = np.tensordot(w, wq, axes=([0, 1], [0, 1])) / (n * n * t)
    return symmetrize(serial_gram(proj, q) - corr)


def estimate_sigma_a(proj, engine):
    """Unit-dimension variance, net of the interaction contribution, clipped PSD."""
    return evc(raw_sigma_a(proj, engine))


def estimate_sigma_d(proj, q):
    """Period-dimension variance, net of the interaction contribution, clipped PSD."""
    if not 0.0 <= q < 1.0:
        raise ValueError(f"q must lie in [0, 1), got {q}")
    return evc(raw_sigma_d(proj, q))


def estimate_sigma_w(proj, engine, q):
    """``(1/NT) sum K_ij q^|t-tau| w_it w_jtau'`` as an exact Gram matrix."""
    n, t, _ = proj.w_dd.shape
    kmat = _kernel(engine, n)
    root_k = getattr(engine, "kernel_root", None)
    if root_k is None:
        root_k = psd_sqrt(kmat)
    root_q = np.eye(t) if q == 0 else psd_sqrt(serial_weight_matrix(q, t))
    z = np.matmul(root_q, np.tensordot(root_k, proj.w_dd, axes=(1, 0)))
    return symmetrize(np.tensordot(z, z, axes=([0, 1], [0, 1])) / (n * t))


@dataclass(frozen=True)
class VarianceEstimates:
    sigma_a2: np.ndarray
    sigma_d2: np.ndarray
    sigma_w2: np.ndarray
    q: float
    bandwidth: float
    raw_a: np.ndarray
    raw_d: np.ndarray

    def as_dict(self):
        return {
            "sigma_a2": self.sigma_a2.tolist(),
            "sigma_d2": self.sigma_d2.tolist(),
            "sigma_w2": self.sigma_w2.tolist(),
            "q": self.q,
            "bandwidth": self.bandwidth,
        }


def estimate_variances(proj, engine, q):
    raw_a = raw_sigma_a(proj, engine)
    raw_d = raw_sigma_d(proj, q)
    return VarianceEstimates(
        sigma_a2=evc(raw_a),
        sigma_d2=evc(raw_d),
        sigma_w2=estimate_sigma_w(proj, engine, q),
        q=float(q),
        bandwidth=float(getattr(engine, "bandwidth", float("nan"))),
        raw_a=raw_a,
        raw_d=raw_d,
    )


@dataclass(frozen=True)
class CrveResult:
    v_hat: np.ndarray
    standard_errors: np.ndarray


def crve(fit, est, n=None, t=None):
    """Serial-spatial two-way sandwich ``Q^-1 (Sa/N + Sd/T + Sw/NT) Q^-1``."""
    n = fit.n_units if n is None else n
    t = fit.n_periods if t is None else t
    q_inv = np.linalg.inv(fit.q_hat_matrix)
    meat = est.sigma_a2 / n + est.sigma_d2 / t + est.sigma_w2 / (n * t)
    v = symmetrize(q_inv @ meat @ q_inv)
    se = np.sqrt(np.clip(np.diag(v), 0.0, None))
    return CrveResult(v_hat=v, standard_errors=se)


def feasible_rate(est, n, t, coordinate=0):
    """``min(sqrt(N)/sigma_a, sqrt(T)/sigma_d, sqrt(NT))`` on one coordinate."""
    rates = [math.sqrt(n * t)]
    sa = math.sqrt(max(est.sigma_a2[coordinate, coordinate], 0.0))
    sd = math.sqrt(max(est.sigma_d2[coordinate, coordinate], 0.0))
    if sa > 0:
        rates.append(math.sqrt(n) / sa)
    if sd > 0:
        rates.append(math.sqrt(t) / sd)
    return min(rates)
