"""Simulation designs for two-way clustered panels.

Every design draws the same latent components in the same order, so two
designs run from the same stream share their random numbers:

    for each regressor channel k = 2..K:  z^x_k (N), xi-innovations (T), eps^x_k (N, T)
    then for the error:                   z^u (N),   xi-innovations (T), eps^u (N, T)

Spatial effects are a truncated moving average of the ``z`` draws over a
unit lattice, time effects are a stationary AR(1) in the innovations.
"""

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .drc import RegimeLabel
from .panel import PanelData, euclidean_distances, lattice_locations


class Design(str, Enum):
    D1 = "d1"
    D2 = "d2"
    D3 = "d3"
    D4 = "d4"
    D5 = "d5"
    HETERO = "hetero"
    NONSEP = "nonsep"
    SPATIAL_SWEEP = "spatial-sweep"


@dataclass(frozen=True)
class DgpSpec:
    """Simulation design and its parameters.

    Parameters
    ----------
    design : Design or str
    n, t : int
        Units and periods.
    k : int
        Number of coefficients including the intercept.
    rho : float
        AR(1) coefficient of the time effects.
    m : float
        Spatial range: units further apart than ``m`` get zero weight.
    rho_d : float
        Geometric decay of the spatial weights with distance.
    sigma_z2 : float
        Variance of the spatial innovations.
    beta : tuple, optional
        True coefficients; defaults to all ones.
    nonsep_sigma : float
        Kernel width of the nonseparable error.
    het_coef : float
        Slope of the error scale in the last regressor (heteroskedastic design).
    """

    design: Design
    n: int
    t: int
    k: int = 5
    rho: float = 0.5
    m: float = 5.0
    rho_d: float = 0.10
    sigma_z2: float = 1.0
    beta: tuple = None
    nonsep_sigma: float = 10.0
    het_coef: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "design", Design(self.design))
        if self.n < 1 or self.t < 1:
            raise ValueError("n and t must be positive")
        if self.k < 2:
            raise ValueError("k must be at least 2 (intercept plus a regressor)")
        if not abs(self.rho) < 1:
            raise ValueError("|rho| must be below 1")
        if not self.m > 0:
            raise ValueError("m must be positive")
        if not 0 <= self.rho_d < 1:
            raise ValueError("rho_d must lie in [0, 1)")
        if not self.sigma_z2 >= 0:
            raise ValueError("sigma_z2 must be nonnegative")
        if not self.nonsep_sigma > 0:
            raise ValueError("nonsep_sigma must be positive")
        beta = (1.0,) * self.k if self.beta is None else tuple(float(b) for b in self.beta)
        if len(beta) != self.k:
            raise ValueError(f"beta must have length {self.k}")
        object.__setattr__(self, "beta", beta)

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class LatentState:
    """Latent draws behind a generated panel; arrays are per regressor channel."""

    alpha_x: np.ndarray
    xi_x: np.ndarray
    eps_x: np.ndarray
    alpha_u: np.ndarray
    xi_u: np.ndarray
    eps_u: np.ndarray
    drift: float


def ar1_effects(t, rho, rng):
    """Stationary AR(1) path with unit marginal variance."""
    return _ar1(rng.standard_normal(t), rho)


def _ar1(e, rho):
    e = np.asarray(e, dtype=float)
    out = np.empty_like(e)
    scale = math.sqrt(1.0 - rho * rho)
    out[..., 0] = e[..., 0]
    for s in range(1, e.shape[-1]):
        out[..., s] = rho * out[..., s - 1] + scale * e[..., s]
    return out


def spatial_weights(locations, m, rho_d):
    """``w_ij = rho_d**d_ij`` for ``d_ij <= m`` and zero otherwise."""
    d = euclidean_distances(locations)
    with np.errstate(divide="ignore"):
        w = np.where(d <= m, np.power(float(rho_d), d), 0.0)
    return w


def spatial_effects(locations, m, rho_d, sigma_z2, rng):
    """Moving-average spatial field ``alpha = W z`` with ``z ~ N(0, sigma_z2)``."""
    w = spatial_weights(locations, m, rho_d)
    z = math.sqrt(sigma_z2) * rng.standard_normal(w.shape[0])
    return w @ z


def _draw_latent(spec, rng, locations):
    n, t, kr = spec.n, spec.t, spec.k - 1
    w = spatial_weights(locations, spec.m, spec.rho_d)
    sz = math.sqrt(spec.sigma_z2)
    ax, xx, ex = [], [], []
    for _ in range(kr):
        ax.append(w @ (sz * rng.standard_normal(n)))
        xx.append(_ar1(rng.standard_normal(t), spec.rho))
        ex.append(rng.standard_normal((n, t)))
    au = w @ (sz * rng.standard_normal(n))
    xu = _ar1(rng.standard_normal(t), spec.rho)
    eu = rng.standard_normal((n, t))
    return LatentState(
        alpha_x=np.array(ax),
        xi_x=np.array(xx),
        eps_x=np.array(ex),
        alpha_u=au,
        xi_u=xu,
        eps_u=eu,
        drift=n ** -0.25,
    )


def _combine(design, alpha, xi, eps, drift):
    """Apply one design's link to (N,), (T,), (N, T) latent draws."""
    a = alpha[..., :, None]
    x = xi[..., None, :]
    if design in (Design.D1, Design.SPATIAL_SWEEP, Design.HETERO, Design.NONSEP):
        out = a + x + eps
    elif design is Design.D2:
        out = a * x
    elif design is Design.D3:
        out = eps
    elif design is Design.D4:
        out = (a + drift) * x
    elif design is Design.D5:
        out = (eps + drift) * x
    else:
        raise ValueError(f"unknown design {design}")
    return np.broadcast_to(out, eps.shape)


def generate(spec, rng, locations=None, return_latent=False):
    """Draw one panel from a design.

    Parameters
    ----------
    spec : DgpSpec
    rng : numpy.random.Generator
    locations : array_like, optional
        Unit locations; defaults to the unit lattice.
    return_latent : bool
        Also return the :class:`LatentState`.

    Returns
    -------
    panel : PanelData
    beta : ndarray
        True coefficients.
    latent : LatentState
        Only when ``return_latent`` is true.
    """
    loc = lattice_locations(spec.n) if locations is None else np.asarray(locations, float)
    lat = _draw_latent(spec, rng, loc)
    design = spec.design
    xs = _combine(design, lat.alpha_x, lat.xi_x, lat.eps_x, lat.drift)
    if design is Design.HETERO:
        u = (1.0 + spec.het_coef * xs[-1]) * (lat.alpha_u[:, None] + lat.xi_u[None, :] + lat.eps_u)
    elif design is Design.NONSEP:
        s = spec.nonsep_sigma
        gap = lat.alpha_u[:, None] - lat.xi_u[None, :]
        u = np.exp(-(gap ** 2) / s ** 2) / (math.sqrt(2 * math.pi) * s) + lat.eps_u
    else:
        u = _combine(design, lat.alpha_u, lat.xi_u, lat.eps_u, lat.drift)
    x = np.concatenate([np.ones((spec.n, spec.t, 1)), np.moveaxis(xs, 0, -1)], axis=-1)
    beta = np.asarray(spec.beta)
    y = x @ beta + u
    panel = PanelData(y=y, x=x, locations=loc)
    if return_latent:
        return panel, beta, lat
    return panel, beta


# --------------------------------------------------------------------------
# population quantities


def _serial_corr(t, rho):
    lag = np.abs(np.subtract.outer(np.arange(t), np.arange(t)))
    return float(rho) ** lag


def population_variances(spec, locations=None):
    """True unit and period variance components of the scores.

    Returns ``(sigma_a2, sigma_d2)``, the K x K matrices
    ``(1/N) sum_ij Cov(a_i, a_j)`` and ``(1/T) sum_ts Cov(d_t, d_s)`` of the
    conditional-mean projections of ``x_it u_it``, evaluated at the design's
    finite N and T.

    Raises
    ------
    ValueError
        For designs without a closed form (heteroskedastic, nonseparable).
    """
    n, t, k = spec.n, spec.t, spec.k
    loc = lattice_locations(n) if locations is None else np.asarray(locations, float)
    w = spatial_weights(loc, spec.m, spec.rho_d)
    c = spec.sigma_z2 * (w @ w.T)
    r = _serial_corr(t, spec.rho)
    sa = np.zeros((k, k))
    sd = np.zeros((k, k))
    design = spec.design
    if design in (Design.D1, Design.SPATIAL_SWEEP):
        sa[0, 0] = c.sum() / n
        sd[0, 0] = r.sum() / t
        for j in range(1, k):
            sa[j, j] = (c ** 2).sum() / n
            sd[j, j] = (r ** 2).sum() / t
    elif design in (Design.D2, Design.D3):
        pass
    elif design in (Design.D4, Design.D5):
        drift = n ** -0.25
        sd[0, 0] = drift ** 2 * r.sum() / t
        for j in range(1, k):
            sd[j, j] = drift ** 4 * (r ** 2).sum() / t
    else:
        raise ValueError(f"no closed-form variance components for design {design.value}")
    return sa, sd


_TRUE_REGIME = {
    Design.D1: "D",
    Design.SPATIAL_SWEEP: "D",
    Design.HETERO: "D",
    Design.D2: "NonGaussian",
    Design.D4: "NonGaussian",
    Design.D3: "VandG",
    Design.D5: "IandG",
}


def true_regime(design):
    """Population regime label of a design (``None`` when undefined)."""
    lab = _TRUE_REGIME.get(Design(design))
    return None if lab is None else RegimeLabel(lab)
