"""Dependence regime classifier.

Each coordinate is labelled from three binary discriminants: the KS flag
``d_star`` from a PWB-V bootstrap pass, and whether either estimated
variance component clears the D thresholds (``d_D``) or the V thresholds
(``d_V``).
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .pwb import indicators, thresholds


class RegimeLabel(str, Enum):
    D = "D"
    VandG = "VandG"
    IandG = "IandG"
    NonGaussian = "NonGaussian"


@dataclass(frozen=True)
class RegimeReport:
    """Per-coordinate discriminants and labels.

    ``t_sigma_a2`` and ``n_sigma_d2`` are ``T * sigma_a2[k, k]`` and
    ``N * sigma_d2[k, k]``, the scaled variances the regimes are defined by.
    """

    d_star: np.ndarray
    d_D: np.ndarray
    d_V: np.ndarray
    labels: tuple
    t_sigma_a2: np.ndarray
    n_sigma_d2: np.ndarray

    def __len__(self):
        return len(self.labels)

    def as_dict(self):
        return {
            "regime": [lab.value for lab in self.labels],
            "d_star": self.d_star.tolist(),
            "d_D": self.d_D.tolist(),
            "d_V": self.d_V.tolist(),
            "t_sigma_a2": self.t_sigma_a2.tolist(),
            "n_sigma_d2": self.n_sigma_d2.tolist(),
        }


def label_coordinate(d_star, d_d, d_v):
    if d_star:
        return RegimeLabel.NonGaussian
    if d_d:
        return RegimeLabel.D
    if not d_v:
        return RegimeLabel.VandG
    return RegimeLabel.IandG


def classify(est, d_star, n, t):
    """Label every coordinate's dependence regime.

    Parameters
    ----------
    est : VarianceEstimates
    d_star : array_like of {0, 1}
        KS non-Gaussianity flags, one per coordinate.
    n, t : int
        Panel dimensions.

    Returns
    -------
    RegimeReport
    """
    d_star = np.asarray(d_star, dtype=int)
    k = est.sigma_a2.shape[0]
    if d_star.shape != (k,):
        raise ValueError(f"d_star must have length {k}")
    da_mu, dd_mu = thresholds("D", n, t, k)
    va_mu, vd_mu = thresholds("V", n, t, k)
    d_D = np.maximum(indicators(est.sigma_a2, da_mu), indicators(est.sigma_d2, dd_mu))
    d_V = np.maximum(indicators(est.sigma_a2, va_mu), indicators(est.sigma_d2, vd_mu))
    labels = tuple(label_coordinate(s, a, b) for s, a, b in zip(d_star, d_D, d_V))
    return RegimeReport(
        d_star=d_star,
        d_D=d_D,
        d_V=d_V,
        labels=labels,
        t_sigma_a2=t * np.diag(est.sigma_a2).copy(),
        n_sigma_d2=n * np.diag(est.sigma_d2).copy(),
    )
