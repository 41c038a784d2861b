"""Projection-based wild bootstrap.

Bootstrap scores are rebuilt from the two-way projection of the empirical
scores,

    s*_it = theta_a a_i eta_i + theta_d d_t eta_t + w_it eta_i eta_t + s_bar,

with spatially dependent unit multipliers ``eta_i`` and serially dependent
period multipliers ``eta_t``. The unit and period components are rescaled
by ``theta = D(mu) sigma_hat Gram^{-1/2}`` so that their bootstrap variance
equals the estimated (or, for the oracle, the true) variance component.
The indicator matrix ``D(mu)`` switches a component off when its estimated
variance falls below a threshold ``mu``; the variants differ only in how
``mu`` is chosen.
"""

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import ndtr

from ._linalg import psd_inv_sqrt, psd_sqrt
from .exceptions import DegenerateDraws, SingularGram
from .multipliers import (
    SerialMultiplierSpec,
    draw_serial,
    draw_spatial,
    serial_from_uniform,
    spatial_from_uniform,
)
from .variance import serial_gram, spatial_gram

KS_TERM_TOL = 1e-12
P_FLOOR = 1e-300
DEGENERATE_SD = 1e-14


class VariantKind(str, Enum):
    ORACLE = "oracle"
    D = "D"
    V = "V"
    H = "H"


@dataclass(frozen=True)
class PwbVariant:
    """Bootstrap variant.

    Parameters
    ----------
    kind : VariantKind
    oracle_sigma_a2, oracle_sigma_d2 : ndarray, optional
        True K x K variance components; required for the oracle variant.
    kappa : float, optional
        KS p-value cutoff for the hybrid; ``None`` means ``1/B``.
    """

    kind: VariantKind
    oracle_sigma_a2: np.ndarray = None
    oracle_sigma_d2: np.ndarray = None
    kappa: float = None

    def __post_init__(self):
        object.__setattr__(self, "kind", VariantKind(self.kind))
        if self.kind is VariantKind.ORACLE:
            if self.oracle_sigma_a2 is None or self.oracle_sigma_d2 is None:
                raise ValueError("the oracle variant needs both true variance matrices")
            for m in (self.oracle_sigma_a2, self.oracle_sigma_d2):
                if np.linalg.eigvalsh(0.5 * (m + np.transpose(m)))[0] < -1e-10:
                    raise ValueError("oracle variance matrices must be PSD")

    @classmethod
    def oracle(cls, sigma_a2, sigma_d2):
        return cls(VariantKind.ORACLE, np.asarray(sigma_a2, float), np.asarray(sigma_d2, float))


PWB_D = PwbVariant(VariantKind.D)
PWB_V = PwbVariant(VariantKind.V)
PWB_H = PwbVariant(VariantKind.H)


def thresholds(kind, n, t, k):
    """Per-coordinate thresholds ``(mu_a, mu_d)`` for the D or V rule."""
    kind = VariantKind(kind)
    if n < 2 or t < 2:
        raise ValueError("thresholds need N, T >= 2")
    if kind is VariantKind.D:
        mu_a, mu_d = math.log(t) / t, math.log(n) / n
    elif kind is VariantKind.V:
        mu_a, mu_d = 1.0 / (t * math.log(t)), 1.0 / (n * math.log(n))
    else:
        raise ValueError(f"no fixed thresholds for variant {kind.value}")
    return np.full(k, mu_a), np.full(k, mu_d)


def indicators(sigma2, mu):
    """``1{sigma2_kk >= mu_k}`` as a 0/1 integer vector."""
    return (np.diag(sigma2) >= np.asarray(mu)).astype(int)


@dataclass(frozen=True)
class ScalingState:
    theta_a: np.ndarray
    theta_d: np.ndarray
    d_a: np.ndarray
    d_d: np.ndarray
    mu_a: np.ndarray
    mu_d: np.ndarray
    d_star: np.ndarray = None


def _theta(indicator, sigma2, gram, label):
    # a switched-on component with zero target variance needs no whitening
    if (indicator * np.diag(sigma2)).any() and np.linalg.eigvalsh(gram)[-1] <= 0:
        raise SingularGram(f"{label} Gram matrix is zero but its target variance is not")
    return np.diag(indicator.astype(float)) @ psd_sqrt(sigma2) @ psd_inv_sqrt(gram)


def compute_scaling(proj, est, engine, q, variant, n=None, t=None, d_star=None):
    """Scaling matrices and indicators for one variant.

    ``d_star`` (the KS flags) is required for the hybrid variant: a flagged
    coordinate uses the D thresholds and an unflagged one the V thresholds.
    """
    n_, t_, k = proj.w_dd.shape
    n = n_ if n is None else n
    t = t_ if t is None else t
    kind = variant.kind
    if kind is VariantKind.ORACLE:
        sig_a, sig_d = variant.oracle_sigma_a2, variant.oracle_sigma_d2
        mu_a = mu_d = np.zeros(k)
    else:
        sig_a, sig_d = est.sigma_a2, est.sigma_d2
        if kind is VariantKind.H:
            if d_star is None:
                raise ValueError("the hybrid variant needs KS flags d_star")
            flag = np.asarray(d_star, dtype=float)
            da, dd = thresholds("D", n, t, k)
            va, vd = thresholds("V", n, t, k)
            mu_a = flag * da + (1 - flag) * va
            mu_d = flag * dd + (1 - flag) * vd
        else:
            mu_a, mu_d = thresholds(kind, n, t, k)
    d_a = indicators(sig_a, mu_a)
    d_d = indicators(sig_d, mu_d)
    theta_a = _theta(d_a, sig_a, spatial_gram(proj, engine), "unit")
    theta_d = _theta(d_d, sig_d, serial_gram(proj, q), "period")
    return ScalingState(
        theta_a=theta_a,
        theta_d=theta_d,
        d_a=d_a,
        d_d=d_d,
        mu_a=np.asarray(mu_a, float),
        mu_d=np.asarray(mu_d, float),
        d_star=None if d_star is None else np.asarray(d_star, int),
    )


# --------------------------------------------------------------------------
# draws


def bootstrap_score_sums(proj, scaling, eta_n, eta_t):
    """``sum_it s*_it`` for each row of the multiplier blocks.

    Parameters
    ----------
    eta_n : ndarray, shape (B, N)
    eta_t : ndarray, shape (B, T)

    Returns
    -------
    ndarray, shape (B, K)
    """
    eta_n = np.atleast_2d(eta_n)
    eta_t = np.atleast_2d(eta_t)
    n, t, _ = proj.w_dd.shape
    unit = t * (eta_n @ proj.a_dd) @ scaling.theta_a.T
    period = n * (eta_t @ proj.d_dd) @ scaling.theta_d.T
    inter = np.einsum("btk,bt->bk", np.tensordot(eta_n, proj.w_dd, axes=(1, 0)), eta_t)
    return unit + period + inter + n * t * proj.s_bar


def multiplier_blocks(engine, q, b, n_periods, stream):
    """Spatial ``(B, N)`` and serial ``(B, T)`` multipliers from a keyed stream."""
    u_n = stream.child("spatial").uniform_rows(b, engine.n_units)
    u_t = stream.child("serial").uniform_rows(b, n_periods)
    return spatial_from_uniform(engine, u_n), serial_from_uniform(q, u_t)


def multiplier_row(engine, q, index, n_periods, stream):
    """Row ``index`` of :func:`multiplier_blocks`, computed on its own."""
    u_n = stream.child("spatial").uniform_row(index, engine.n_units)
    u_t = stream.child("serial").uniform_row(index, n_periods)
    return spatial_from_uniform(engine, u_n[None])[0], serial_from_uniform(q, u_t)


def bootstrap_draw(proj, scaling, engine, q, xtx_inv, rng):
    """One bootstrap draw of ``beta* - beta_hat``.

    ``rng`` is either a :class:`numpy.random.Generator` or a
    ``(KeyedStream, b)`` pair addressing draw ``b`` of a keyed pass.
    """
    n, t, _ = proj.w_dd.shape
    if isinstance(rng, tuple):
        stream, index = rng
        eta_n, eta_t = multiplier_row(engine, q, index, t, stream)
    else:
        eta_n = draw_spatial(engine, rng)
        eta_t = draw_serial(SerialMultiplierSpec(q, t), rng)
    sums = bootstrap_score_sums(proj, scaling, eta_n[None], eta_t[None])[0]
    return xtx_inv @ sums


def standardize_columns(sums):
    """Divide each column by ``sqrt(sum_b x_b**2 / (B - 1))``."""
    sums = np.asarray(sums, dtype=float)
    scale = np.sqrt(np.sum(sums ** 2, axis=0) / (sums.shape[0] - 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(scale > 0, sums / np.where(scale > 0, scale, 1.0), 0.0), scale


# --------------------------------------------------------------------------
# KS diagnostic


def kolmogorov_sf(lam):
    """Survival function of the limiting Kolmogorov distribution.

    Uses the alternating series ``2 sum (-1)^(j-1) exp(-2 j^2 lam^2)`` for
    ``lam >= 1`` and the equivalent theta-function form of the CDF below
    that, where the alternating series converges too slowly.
    """
    lam = float(lam)
    if lam <= 0:
        return 1.0
    if lam < 1.0:
        c = math.pi ** 2 / (8.0 * lam * lam)
        total, j = 0.0, 1
        while True:
            term = math.exp(-((2 * j - 1) ** 2) * c)
            total += term
            if term < KS_TERM_TOL:
                break
            j += 1
        return min(1.0, max(0.0, 1.0 - math.sqrt(2 * math.pi) / lam * total))
    total, j = 0.0, 1
    while True:
        term = math.exp(-2.0 * j * j * lam * lam)
        total += term if j % 2 else -term
        if term < KS_TERM_TOL:
            break
        j += 1
    return min(1.0, max(0.0, 2.0 * total))


def ks_statistic(sample):
    """One-sample KS distance to the standard normal CDF."""
    x = np.sort(np.asarray(sample, dtype=float))
    m = x.size
    cdf = ndtr(x)
    upper = np.arange(1, m + 1) / m - cdf
    lower = cdf - np.arange(0, m) / m
    return float(max(upper.max(), lower.max()))


def ks_normality_pvalue(column):
    """Asymptotic KS p-value of a standardized bootstrap column against N(0, 1).

    Raises
    ------
    DegenerateDraws
        If the column's spread is below 1e-14.
    """
    x = np.asarray(column, dtype=float)
    if x.size < 2 or np.std(x, ddof=1) < DEGENERATE_SD:
        raise DegenerateDraws("bootstrap column is (numerically) constant")
    d = ks_statistic(x)
    return max(kolmogorov_sf(math.sqrt(x.size) * d), P_FLOOR)


def ks_diagnostic(column, kappa):
    """KS p-value and the non-Gaussian flag ``1{p < kappa}``.

    A degenerate column is reported as ``(0.0, 1)``.
    """
    try:
        p = ks_normality_pvalue(column)
    except DegenerateDraws:
        return 0.0, 1
    return p, int(p < kappa)


def _ks_all(t_star, kappa):
    out = [ks_diagnostic(t_star[:, k], kappa) for k in range(t_star.shape[1])]
    return np.array([p for p, _ in out]), np.array([d for _, d in out], dtype=int)


# --------------------------------------------------------------------------
# driver


def order_statistic_bounds(values, alpha):
    """Type-1 empirical quantiles at ``alpha/2`` and ``1 - alpha/2``."""
    v = np.sort(np.asarray(values, dtype=float), axis=0)
    b = v.shape[0]
    lo = max(1, math.ceil(round(b * alpha / 2, 9)))
    hi = min(b, math.ceil(round(b * (1 - alpha / 2), 9)))
    return v[lo - 1], v[hi - 1]


@dataclass
class BootstrapResult:
    """Output of :func:`run_pwb`.

    ``draws`` holds ``beta* - beta_hat``; ``t_star`` the standardized score
    sums of the pass that produced the draws. ``ks_pvalues``/``d_star``
    come from the PWB-V pass (the diagnostic pass for the hybrid). The test
    is the equal-tailed quantile test of ``rho' beta = rho' beta0``.
    """

    draws: np.ndarray
    t_star: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    reject: bool
    ks_pvalues: np.ndarray
    d_star: np.ndarray
    scaling: ScalingState
    variant: PwbVariant
    statistic: float
    critical: tuple
    alpha: float
    rho: np.ndarray
    diagnostic_t_star: np.ndarray = field(default=None, repr=False)

    @property
    def ci_length(self):
        lo, hi = self.critical
        return float(hi - lo)

    def summary(self):
        lo, hi = self.critical
        return {
            "variant": self.variant.kind.value,
            "reject": bool(self.reject),
            "statistic": float(self.statistic),
            "critical": [float(lo), float(hi)],
            "ci": [[float(a), float(b)] for a, b in zip(self.ci_lower, self.ci_upper)],
            "draws_summary": {
                "quantiles": {
                    str(p): np.quantile(self.draws @ self.rho, p).item()
                    for p in (0.025, 0.05, 0.5, 0.95, 0.975)
                },
                "b": int(self.draws.shape[0]),
            },
            "ks_pvalues": [float(p) for p in self.ks_pvalues],
            "d_star": [int(d) for d in self.d_star],
            "indicators": {"d_a": self.scaling.d_a.tolist(), "d_d": self.scaling.d_d.tolist()},
        }


def _pass(proj, scaling, engine, q, b, stream, xtx_inv):
    _, t, _ = proj.w_dd.shape
    eta_n, eta_t = multiplier_blocks(engine, q, b, t, stream)
    sums = bootstrap_score_sums(proj, scaling, eta_n, eta_t)
    return sums @ xtx_inv.T, sums


def diagnostic_pass(proj, est, engine, q, b, stream, xtx_inv, kappa):
    """PWB-V pass whose standardized columns feed the KS diagnostic.

    Returns ``(t_star, ks_pvalues, d_star)``.
    """
    n, t, _ = proj.w_dd.shape
    scaling = compute_scaling(proj, est, engine, q, PWB_V, n, t)
    _, sums = _pass(proj, scaling, engine, q, b, stream, np.asarray(xtx_inv))
    t_star, _ = standardize_columns(sums)
    ks_p, d_star = _ks_all(t_star, kappa)
    return t_star, ks_p, d_star


def run_pwb(fit, proj, est, engine, q, variant, b, alpha, rho, beta0, stream,
            d_star=None, diagnostic=None):
    """Run the projection-based wild bootstrap and test ``rho' beta = rho' beta0``.

    Parameters
    ----------
    fit : OlsFit
    proj : ScoreProjection
    est : VarianceEstimates
    engine : SpatialMultiplierEngine
    q : float
        Serial multiplier parameter.
    variant : PwbVariant
    b : int
        Bootstrap replications; must satisfy ``b >= 2 / alpha``.
    alpha : float
        Test level.
    rho : array_like
        Unit vector defining the tested linear combination.
    beta0 : array_like
        Null value.
    stream : KeyedStream
        Key for this inference problem. The final pass draws from
        ``stream.child("final")`` for every variant, so variants sharing a
        stream share multipliers; the hybrid's PWB-V diagnostic pass uses
        ``stream.child("diagnostic")``.
    d_star : array_like, optional
        Override the hybrid's KS flags (skips the diagnostic pass).
    diagnostic : tuple, optional
        A precomputed :func:`diagnostic_pass` result to reuse.
    """
    rho = np.asarray(rho, dtype=float)
    beta0 = np.asarray(beta0, dtype=float)
    if abs(np.linalg.norm(rho) - 1.0) > 1e-8:
        raise ValueError("rho must be a unit vector")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if b < 2 / alpha:
        raise ValueError(f"need B >= 2/alpha = {2 / alpha:g}, got {b}")
    n, t, k = proj.w_dd.shape
    if rho.shape != (k,) or beta0.shape != (k,):
        raise ValueError(f"rho and beta0 must have length {k}")
    kappa = variant.kappa if variant.kappa is not None else 1.0 / b
    xtx_inv = np.asarray(fit.xtx_inv)

    diag_t = None
    if variant.kind is VariantKind.H:
        if d_star is not None:
            ks_p = np.full(k, np.nan)
            d_star = np.asarray(d_star, dtype=int)
        else:
            if diagnostic is None:
                diagnostic = diagnostic_pass(
                    proj, est, engine, q, b, stream.child("diagnostic"), xtx_inv, kappa
                )
            diag_t, ks_p, d_star = diagnostic
        scaling = compute_scaling(proj, est, engine, q, variant, n, t, d_star=d_star)
        draws, sums = _pass(proj, scaling, engine, q, b, stream.child("final"), xtx_inv)
        t_star, _ = standardize_columns(sums)
    else:
        scaling = compute_scaling(proj, est, engine, q, variant, n, t)
        draws, sums = _pass(proj, scaling, engine, q, b, stream.child("final"), xtx_inv)
        t_star, _ = standardize_columns(sums)
        ks_p, d_star = _ks_all(t_star, kappa)

    lo_k, hi_k = order_statistic_bounds(draws, alpha)
    beta = np.asarray(fit.beta_hat)
    lo, hi = order_statistic_bounds(draws @ rho, alpha)
    stat = float(rho @ (beta - beta0))
    tol = 8 * np.finfo(float).eps * (np.abs(rho) @ np.abs(beta) + abs(rho @ beta0))
    reject = bool(stat < lo - tol or stat > hi + tol)
    return BootstrapResult(
        draws=draws,
        t_star=t_star,
        ci_lower=beta - hi_k,
        ci_upper=beta - lo_k,
        reject=reject,
        ks_pvalues=ks_p,
        d_star=np.asarray(d_star, dtype=int),
        scaling=scaling,
        variant=variant,
        statistic=stat,
        critical=(float(lo), float(hi)),
        alpha=alpha,
        rho=rho,
        diagnostic_t_star=diag_t,
    )
