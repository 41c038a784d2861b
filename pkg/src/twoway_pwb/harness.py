"""Inference pipeline and Monte Carlo driver.

:func:`prepare_inference` runs everything up to the bootstrap (OLS fit,
score projection, serial parameter, spatial kernel, variance components);
:func:`run_inference` adds the bootstrap and the regime classifier for one
data set, and :func:`run_experiment` repeats the whole pipeline over
simulated panels to tabulate rejection frequencies.

Random numbers are keyed rather than sequenced: replicate ``r`` of a cell
draws from ``KeyedStream(seed).child(design, N, T, r)``, so results do not
depend on the order in which replicates run or how many workers run them.
"""

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from functools import partial

import numpy as np
from scipy.special import ndtri

from .dgp import Design, DgpSpec, generate, population_variances, true_regime
from .drc import classify
from .exceptions import (
    DegenerateAutocorrelation,
    ExperimentAborted,
    NumericalError,
    PwbError,
)
from .multipliers import build_spatial_engine, default_bandwidth, select_q
from .panel import PanelData, ols_fit, project_scores, read_panel
from .pwb import PWB_D, PWB_H, PWB_V, PwbVariant, diagnostic_pass, run_pwb
from .rng import KeyedStream
from .variance import crve, estimate_variances, feasible_rate

METHODS = ("pwb-d", "pwb-v", "pwb-h", "oracle", "crve")
_VARIANTS = {"pwb-d": PWB_D, "pwb-v": PWB_V, "pwb-h": PWB_H}
CSV_COLUMNS = (
    "design", "n", "t", "method", "reps", "b", "alpha",
    "reject_freq", "mc_se", "drc_accuracy", "mean_ci_len", "failures",
)


@contextmanager
def stage(name):
    """Tag package errors raised inside the block with the pipeline stage."""
    try:
        yield
    except PwbError as exc:
        if getattr(exc, "stage", None) is None:
            exc.stage = name
        raise


# --------------------------------------------------------------------------
# single data set


_ENGINES = {}


def spatial_engine(panel, bandwidth=None):
    """Kernel engine for a panel's geometry, cached by geometry and bandwidth."""
    bw = float(default_bandwidth(panel.n_units) if bandwidth is None else bandwidth)
    geom = panel.distance if panel.distance is not None else panel.locations
    key = (panel.n_units, bw, panel.distance is not None, geom.tobytes())
    engine = _ENGINES.get(key)
    if engine is None:
        if len(_ENGINES) > 64:
            _ENGINES.clear()
        engine = build_spatial_engine(panel.distances(), bw)
        _ENGINES[key] = engine
    return engine


@dataclass(frozen=True)
class InferenceState:
    panel: object
    fit: object
    proj: object
    engine: object
    q: float
    q_fallback: bool
    est: object


def prepare_inference(panel, bandwidth=None, q=None):
    """Fit, project, pick the serial parameter, and estimate variances.

    With ``q`` unset the plug-in rule is applied to the cross-sectional
    mean scores; a degenerate autocorrelation falls back to ``q = 0`` and
    sets ``q_fallback``.
    """
    with stage("fit"):
        fit = ols_fit(panel)
        proj = project_scores(fit)
    with stage("kernel"):
        engine = spatial_engine(panel, bandwidth)
    fallback = False
    with stage("serial"):
        if q is None:
            try:
                q = select_q(fit.scores.mean(axis=0), panel.n_periods)
            except DegenerateAutocorrelation:
                q, fallback = 0.0, True
        elif not 0 <= q < 1:
            raise ValueError(f"q must lie in [0, 1), got {q}")
    with stage("variance"):
        est = estimate_variances(proj, engine, q)
    return InferenceState(panel, fit, proj, engine, float(q), fallback, est)


def crve_wald(state, rho, beta0, alpha):
    """Normal-approximation Wald test with the two-way CRVE."""
    v = crve(state.fit, state.est).v_hat
    beta = np.asarray(state.fit.beta_hat)
    se = math.sqrt(max(float(rho @ v @ rho), 0.0))
    z = ndtri(1 - alpha / 2)
    stat = float(rho @ (beta - beta0))
    reject = bool(abs(stat) > z * se)
    ses = np.sqrt(np.clip(np.diag(v), 0.0, None))
    return {
        "reject": reject,
        "statistic": stat,
        "se": se,
        "critical": [-z * se, z * se],
        "ci": np.column_stack([beta - z * ses, beta + z * ses]).tolist(),
        "ci_length": 2 * z * se,
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def run_inference(panel, method="pwb-h", rho=None, beta0=None, alpha=0.05, b=999,
                  seed=0, bandwidth=None, q=None, kappa=None):
    """Full pipeline on one panel; returns a JSON-ready report.

    Parameters
    ----------
    panel : PanelData or path
        Panel, or a CSV/JSON file to read it from.
    method : {"pwb-d", "pwb-v", "pwb-h", "crve"}
    rho : array_like, optional
        Unit vector of the tested combination; defaults to the last coordinate.
    beta0 : array_like, optional
        Null value; defaults to zero.
    """
    if method not in METHODS or method == "oracle":
        raise ValueError(f"method must be one of pwb-d, pwb-v, pwb-h, crve; got {method!r}")
    if not isinstance(panel, PanelData):
        with stage("read"):
            panel = read_panel(panel)
    k = panel.n_regressors
    rho = np.eye(k)[-1] if rho is None else np.asarray(rho, dtype=float)
    beta0 = np.zeros(k) if beta0 is None else np.asarray(beta0, dtype=float)
    if rho.shape != (k,) or beta0.shape != (k,):
        raise ValueError(f"rho and beta0 need {k} entries")
    if abs(np.linalg.norm(rho) - 1) > 1e-8:
        raise ValueError("rho must be a unit vector")
    state = prepare_inference(panel, bandwidth=bandwidth, q=q)
    n, t = panel.n_units, panel.n_periods
    stream = KeyedStream(seed).child("infer")
    kap = 1.0 / b if kappa is None else kappa
    with stage("bootstrap"):
        diag = diagnostic_pass(
            state.proj, state.est, state.engine, state.q, b,
            stream.child("diagnostic"), state.fit.xtx_inv, kap,
        )
        regime = classify(state.est, diag[2], n, t)
        report = {
            "n": n,
            "t": t,
            "k": k,
            "method": method,
            "alpha": alpha,
            "b": b,
            "seed": seed,
            "beta_hat": state.fit.beta_hat,
            "rho": rho,
            "beta0": beta0,
            "q": state.q,
            "q_fallback": state.q_fallback,
            "bandwidth": state.engine.bandwidth,
            "variances": state.est.as_dict(),
            "feasible_rate": feasible_rate(state.est, n, t),
            "crve_se": crve(state.fit, state.est).standard_errors,
            "regime": regime.as_dict(),
            "ks_pvalues": diag[1],
            "d_star": diag[2],
        }
        if method == "crve":
            report.update(crve_wald(state, rho, beta0, alpha))
        else:
            variant = _VARIANTS[method]
            if kappa is not None:
                variant = PwbVariant(variant.kind, kappa=kappa)
            res = run_pwb(
                state.fit, state.proj, state.est, state.engine, state.q, variant,
                b, alpha, rho, beta0, stream, diagnostic=diag,
            )
            summary = res.summary()
            report.update(
                reject=res.reject,
                statistic=res.statistic,
                critical=list(res.critical),
                ci=summary["ci"],
                ci_length=res.ci_length,
                draws_summary=summary["draws_summary"],
                indicators=summary["indicators"],
            )
    return _jsonable(report)


# --------------------------------------------------------------------------
# Monte Carlo experiments


@dataclass(frozen=True)
class ExperimentConfig:
    """Simulation grid.

    ``grid`` lists (N, T) pairs. For the spatial-sweep design every value in
    ``rho_d_grid`` becomes its own cell. The tested hypothesis is always
    ``beta_K = 1`` (the last coefficient at its true value).
    """

    designs: tuple = ("d1",)
    grid: tuple = ((50, 50),)
    k: int = 5
    b: int = 999
    reps: int = 1000
    alpha: float = 0.05
    methods: tuple = ("pwb-v",)
    seed: int = 0
    rho: float = 0.5
    m: float = 5.0
    rho_d: float = 0.10
    rho_d_grid: tuple = (0.0, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40)
    sigma_z2: float = 1.0
    nonsep_sigma: float = 10.0
    het_coef: float = 0.5
    bandwidth: float = None
    q: float = None
    workers: int = 1
    max_failure_rate: float = 0.01

    def __post_init__(self):
        designs = tuple(Design(d).value for d in np.atleast_1d(self.designs))
        object.__setattr__(self, "designs", designs)
        grid = tuple((int(n), int(t)) for n, t in self.grid)
        object.__setattr__(self, "grid", grid)
        methods = tuple(np.atleast_1d(self.methods).tolist())
        object.__setattr__(self, "methods", methods)
        object.__setattr__(self, "rho_d_grid", tuple(float(r) for r in self.rho_d_grid))
        bad = [m for m in methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; choose from {list(METHODS)}")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.b < 2 / self.alpha:
            raise ValueError(f"B must be at least 2/alpha = {2 / self.alpha:g}")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if any(n < 3 or t < 3 for n, t in grid):
            raise ValueError("N and T must be at least 3")
        if "oracle" in methods:
            for d in designs:
                if Design(d) in (Design.HETERO, Design.NONSEP):
                    raise ValueError(f"the oracle needs closed-form variances; {d} has none")

    @classmethod
    def from_mapping(cls, mapping):
        known = set(cls.__dataclass_fields__)
        unknown = set(mapping) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**mapping)

    def cells(self):
        for d in self.designs:
            design = Design(d)
            sweep = self.rho_d_grid if design is Design.SPATIAL_SWEEP else (self.rho_d,)
            for n, t in self.grid:
                for rho_d in sweep:
                    spec = DgpSpec(
                        design=design, n=n, t=t, k=self.k, rho=self.rho, m=self.m,
                        rho_d=rho_d, sigma_z2=self.sigma_z2,
                        nonsep_sigma=self.nonsep_sigma, het_coef=self.het_coef,
                    )
                    label = design.value
                    if design is Design.SPATIAL_SWEEP:
                        label = f"{design.value}:rho_d={rho_d:g}"
                    yield _Cell(label, spec, self)


@dataclass(frozen=True)
class _Cell:
    label: str
    spec: DgpSpec
    config: ExperimentConfig


@dataclass
class ReplicateOutcome:
    ok: bool
    reject: dict = field(default_factory=dict)
    ci_length: dict = field(default_factory=dict)
    drc_correct: bool = None
    label: str = None
    q: float = float("nan")
    q_fallback: bool = False
    error: str = None


def run_replicate(cell, rep):
    """Simulate, fit, and test one replicate of a cell for every method."""
    cfg, spec = cell.config, cell.spec
    stream = KeyedStream(cfg.seed).child(spec.design.value, spec.n, spec.t, rep)
    panel, beta = generate(spec, stream.child("data").generator())
    k = spec.k
    rho = np.eye(k)[-1]
    kappa = 1.0 / cfg.b
    try:
        state = prepare_inference(panel, bandwidth=cfg.bandwidth, q=cfg.q)
        diag = diagnostic_pass(
            state.proj, state.est, state.engine, state.q, cfg.b,
            stream.child("diagnostic"), state.fit.xtx_inv, kappa,
        )
        label = classify(state.est, diag[2], spec.n, spec.t).labels[-1]
        truth = true_regime(spec.design)
        out = ReplicateOutcome(
            ok=True,
            drc_correct=None if truth is None else bool(label is truth),
            label=label.value,
            q=state.q,
            q_fallback=state.q_fallback,
        )
        for method in cfg.methods:
            if method == "crve":
                w = crve_wald(state, rho, beta, cfg.alpha)
                out.reject[method], out.ci_length[method] = w["reject"], w["ci_length"]
                continue
            if method == "oracle":
                variant = PwbVariant.oracle(*population_variances(spec, panel.locations))
            else:
                variant = _VARIANTS[method]
            res = run_pwb(
                state.fit, state.proj, state.est, state.engine, state.q, variant,
                cfg.b, cfg.alpha, rho, beta, stream, diagnostic=diag,
            )
            out.reject[method], out.ci_length[method] = res.reject, res.ci_length
        return out
    except NumericalError as exc:
        return ReplicateOutcome(ok=False, error=f"{type(exc).__name__}: {exc}")


def _run_cell(cell, pool=None):
    reps = cell.config.reps
    fn = partial(run_replicate, cell)
    if pool is None:
        return [fn(r) for r in range(reps)]
    chunk = max(1, reps // (8 * cell.config.workers))
    return list(pool.map(fn, range(reps), chunksize=chunk))


@dataclass
class ResultTable:
    """Rows keyed by (design, n, t, method), plus per-cell diagnostics."""

    rows: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)

    def lookup(self, design, n, t, method):
        for row in self.rows:
            if (row["design"], row["n"], row["t"], row["method"]) == (design, n, t, method):
                return row
        raise KeyError((design, n, t, method))

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.rows:
            writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
        return buf.getvalue()

    def to_json(self):
        return json.dumps(
            _jsonable({"rows": self.rows, "cells": self.diagnostics}), indent=2, sort_keys=True
        ) + "\n"

    def write(self, path, fmt="csv"):
        text = self.to_json() if fmt == "json" else self.to_csv()
        with open(path, "w") as fh:
            fh.write(text)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if math.isnan(v) else f"{v:.6f}"
    return str(v)


def classification_accuracy(labels, true_design):
    """Share of labels equal to the design's population regime.

    ``labels`` holds :class:`RegimeReport` objects (the last coordinate is
    scored), :class:`RegimeLabel` values, or label strings.
    """
    truth = true_regime(true_design)
    if truth is None:
        raise ValueError(f"design {true_design} has no population regime")
    labels = list(labels)
    if not labels:
        raise ValueError("no labels")
    hits = 0
    for lab in labels:
        if hasattr(lab, "labels"):
            lab = lab.labels[-1]
        hits += str(getattr(lab, "value", lab)) == truth.value
    return hits / len(labels)


def run_experiment(config, progress=None):
    """Run every cell of ``config`` and tabulate the results.

    Raises
    ------
    ExperimentAborted
        If more than ``max_failure_rate`` of a cell's replicates fail.
    """
    table = ResultTable()
    pool = ProcessPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        for cell in config.cells():
            outcomes = _run_cell(cell, pool)
            failures = sum(not o.ok for o in outcomes)
            if failures > config.max_failure_rate * config.reps:
                first = next(o.error for o in outcomes if not o.ok)
                raise ExperimentAborted(
                    f"{cell.label} N={cell.spec.n} T={cell.spec.t}: "
                    f"{failures}/{config.reps} replicates failed (first: {first})"
                )
            good = [o for o in outcomes if o.ok]
            drc = [o.drc_correct for o in good if o.drc_correct is not None]
            drc_acc = float(np.mean(drc)) if drc else None
            for method in config.methods:
                rej = np.array([o.reject[method] for o in good], dtype=float)
                p = float(rej.mean())
                table.rows.append({
                    "design": cell.label,
                    "n": cell.spec.n,
                    "t": cell.spec.t,
                    "method": method,
                    "reps": len(good),
                    "b": config.b,
                    "alpha": config.alpha,
                    "reject_freq": p,
                    "mc_se": math.sqrt(p * (1 - p) / len(good)),
                    "drc_accuracy": drc_acc,
                    "mean_ci_len": float(np.mean([o.ci_length[method] for o in good])),
                    "failures": failures,
                })
            labels = [o.label for o in good]
            table.diagnostics.append({
                "design": cell.label,
                "n": cell.spec.n,
                "t": cell.spec.t,
                "spec": {k: v for k, v in asdict(cell.spec).items() if k != "design"},
                "failures": failures,
                "errors": sorted({o.error for o in outcomes if not o.ok}),
                "q_mean": float(np.mean([o.q for o in good])),
                "q_fallbacks": int(sum(o.q_fallback for o in good)),
                "regime_counts": {lab: labels.count(lab) for lab in sorted(set(labels))},
                "drc_accuracy": drc_acc,
            })
            if progress is not None:
                progress(cell, table)
    finally:
        if pool is not None:
            pool.shutdown()
    return table
