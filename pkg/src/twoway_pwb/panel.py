"""Balanced two-way panels, OLS, and the two-way projection of scores.

Arrays follow an (i, t, k) layout: outcomes are ``(N, T)``, regressors and
scores ``(N, T, K)``, with the unit index i varying slowest.
"""

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DataError, PanelFormatError, SingularDesign

SINGULARITY_TOL = 1e-12


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def lattice_locations(n):
    """First ``n`` points of the unit-spaced ceil(sqrt(n)) square grid.

    Points are listed row-major: x varies fastest.

    >>> lattice_locations(3).tolist()
    [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]
    """
    if n < 1:
        raise ValueError("need at least one location")
    side = math.isqrt(n - 1) + 1
    idx = np.arange(n)
    return np.column_stack([idx % side, idx // side]).astype(float)


def euclidean_distances(locations):
    """Pairwise Euclidean distances between rows of an ``(N, 2)`` array."""
    loc = np.asarray(locations, dtype=float)
    if loc.ndim != 2:
        raise ValueError("locations must be an (N, dim) array")
    diff = loc[:, None, :] - loc[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


@dataclass(frozen=True)
class PanelData:
    """A balanced N x T panel with one observation per (i, t) cell.

    Parameters
    ----------
    y : array_like, shape (N, T)
        Outcomes.
    x : array_like, shape (N, T, K)
        Regressors; include a column of ones for an intercept.
    locations : array_like, shape (N, 2), optional
        Planar locations of the units in lattice-spacing units. Defaults to
        :func:`lattice_locations`.
    distance : array_like, shape (N, N), optional
        User-supplied distances overriding the Euclidean ones.
    """

    y: np.ndarray
    x: np.ndarray
    locations: np.ndarray = None
    distance: np.ndarray = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 2:
            x = x[:, :, None]
        if y.ndim != 2 or x.ndim != 3 or x.shape[:2] != y.shape:
            raise DataError(f"shape mismatch: y {y.shape}, x {x.shape}")
        n, t, k = x.shape
        if min(n, t, k) < 1:
            raise DataError("all panel dimensions must be positive")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise DataError("panel contains missing or non-finite values")
        loc = lattice_locations(n) if self.locations is None else np.asarray(self.locations, float)
        if loc.shape != (n, 2):
            raise DataError(f"locations must have shape ({n}, 2), got {loc.shape}")
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "locations", _frozen(loc))
        if self.distance is not None:
            d = np.asarray(self.distance, dtype=float)
            if d.shape != (n, n):
                raise DataError(f"distance must be {n} x {n}")
            if np.any(d < 0) or np.any(np.diag(d) != 0) or not np.allclose(d, d.T, atol=0, rtol=1e-12):
                raise DataError("distance must be symmetric, nonnegative, with zero diagonal")
            object.__setattr__(self, "distance", _frozen(d))

    @property
    def n_units(self):
        return self.y.shape[0]

    @property
    def n_periods(self):
        return self.y.shape[1]

    @property
    def n_regressors(self):
        return self.x.shape[2]

    def distances(self):
        if self.distance is not None:
            return self.distance
        return euclidean_distances(self.locations)


@dataclass(frozen=True)
class OlsFit:
    """Pooled OLS fit of a balanced panel.

    ``scores[i, t]`` is the K-vector ``x_it * u_hat_it``; they sum to zero
    over all cells by the normal equations.
    """

    beta_hat: np.ndarray
    residuals: np.ndarray
    scores: np.ndarray
    q_hat_matrix: np.ndarray
    xtx_inv: np.ndarray

    @property
    def n_units(self):
        return self.scores.shape[0]

    @property
    def n_periods(self):
        return self.scores.shape[1]


def ols_fit(panel, tol=SINGULARITY_TOL):
    """Fit y on x by OLS.

    Raises
    ------
    SingularDesign
        If the eigenvalue ratio of X'X is below ``tol``.
    """
    x, y = panel.x, panel.y
    n, t, _ = x.shape
    xtx = np.einsum("itk,itl->kl", x, x)
    eig = np.linalg.eigvalsh(xtx)
    if eig[-1] <= 0 or eig[0] / eig[-1] < tol:
        raise SingularDesign(
            f"X'X is singular (eigenvalues {eig[0]:.3g} .. {eig[-1]:.3g})"
        )
    xty = np.einsum("itk,it->k", x, y)
    beta = np.linalg.solve(xtx, xty)
    resid = y - x @ beta
    scores = x * resid[:, :, None]
    return OlsFit(
        beta_hat=_frozen(beta),
        residuals=_frozen(resid),
        scores=_frozen(scores),
        q_hat_matrix=_frozen(xtx / (n * t)),
        xtx_inv=_frozen(np.linalg.inv(xtx)),
    )


@dataclass(frozen=True)
class ScoreProjection:
    """Two-way projection ``s_it = a_i + d_t + w_it + s_bar``.

    Attributes
    ----------
    a_dd : ndarray, shape (N, K)
        Unit component (row means minus grand mean).
    d_dd : ndarray, shape (T, K)
        Period component (column means minus grand mean).
    w_dd : ndarray, shape (N, T, K)
        Doubly-centered interaction remainder.
    s_bar : ndarray, shape (K,)
        Grand mean.
    """

    a_dd: np.ndarray
    d_dd: np.ndarray
    w_dd: np.ndarray
    s_bar: np.ndarray

    @property
    def shape(self):
        return self.w_dd.shape

    def reconstruct(self):
        return self.a_dd[:, None, :] + self.d_dd[None, :, :] + self.w_dd + self.s_bar


def project_scores(scores):
    """Project scores onto unit, period, and interaction components.

    Parameters
    ----------
    scores : OlsFit or array_like, shape (N, T, K)
    """
    if isinstance(scores, OlsFit):
        scores = scores.scores
    s = np.asarray(scores, dtype=float)
    if s.ndim == 2:
        s = s[:, :, None]
    if s.ndim != 3:
        raise DataError(f"scores must be (N, T, K), got shape {s.shape}")
    s_bar = s.mean(axis=(0, 1))
    row = s.mean(axis=1)
    col = s.mean(axis=0)
    w = s - row[:, None, :] - col[None, :, :] + s_bar
    return ScoreProjection(
        a_dd=_frozen(row - s_bar),
        d_dd=_frozen(col - s_bar),
        w_dd=_frozen(w),
        s_bar=_frozen(s_bar),
    )


# --------------------------------------------------------------------------
# file formats


def _records_to_panel(records, source):
    """Build a panel from dict records keyed i, t, y, x1..xK[, loc_x, loc_y]."""
    if not records:
        raise PanelFormatError(f"{source}: no data rows")
    fields = list(records[0][1].keys())
    xcols = sorted(
        (f for f in fields if f.startswith("x") and f[1:].isdigit()), key=lambda f: int(f[1:])
    )
    missing = {"i", "t", "y"} - set(fields)
    if missing:
        raise PanelFormatError(f"{source}: missing columns {sorted(missing)}", line=1)
    if not xcols or [int(c[1:]) for c in xcols] != list(range(1, len(xcols) + 1)):
        raise PanelFormatError(f"{source}: regressor columns must be x1..xK", line=1)
    has_loc = "loc_x" in fields or "loc_y" in fields
    if has_loc and not ("loc_x" in fields and "loc_y" in fields):
        raise PanelFormatError(f"{source}: need both loc_x and loc_y", line=1)

    cells = {}
    locs = {}
    for line, rec in records:
        try:
            i, t = int(rec["i"]), int(rec["t"])
            yv = float(rec["y"])
            xv = [float(rec[c]) for c in xcols]
            loc = (float(rec["loc_x"]), float(rec["loc_y"])) if has_loc else None
        except (KeyError, TypeError, ValueError) as exc:
            raise PanelFormatError(f"{source}: bad value ({exc})", line=line) from None
        if i < 1 or t < 1:
            raise PanelFormatError(f"{source}: indices start at 1, got (i={i}, t={t})", line=line)
        if (i, t) in cells:
            raise PanelFormatError(
                f"{source}: duplicate cell (i={i}, t={t}), first seen on line {cells[(i, t)][0]}",
                line=line,
            )
        cells[(i, t)] = (line, yv, xv)
        if loc is not None:
            if i in locs and locs[i][1] != loc:
                raise PanelFormatError(
                    f"{source}: unit {i} has conflicting locations", line=line
                )
            locs.setdefault(i, (line, loc))

    n = max(i for i, _ in cells)
    t = max(tt for _, tt in cells)
    if len(cells) != n * t:
        absent = next((i, tt) for i in range(1, n + 1) for tt in range(1, t + 1) if (i, tt) not in cells)
        raise PanelFormatError(
            f"{source}: unbalanced panel, cell (i={absent[0]}, t={absent[1]}) is missing"
        )
    k = len(xcols)
    y = np.empty((n, t))
    x = np.empty((n, t, k))
    for (i, tt), (_, yv, xv) in cells.items():
        y[i - 1, tt - 1] = yv
        x[i - 1, tt - 1] = xv
    locations = None
    if has_loc:
        locations = np.array([locs[i][1] for i in range(1, n + 1)])
    return PanelData(y=y, x=x, locations=locations)


def read_panel_csv(path):
    """Read a panel from CSV with header ``i,t,y,x1,...,xK[,loc_x,loc_y]``."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise PanelFormatError(f"{path}: empty file", line=1)
        records = []
        for row in reader:
            if None in row or any(v is None for v in row.values()):
                raise PanelFormatError(f"{path}: wrong number of fields", line=reader.line_num)
            records.append((reader.line_num, {k.strip(): v for k, v in row.items()}))
    return _records_to_panel(records, path)


def read_panel_json(path):
    """Read a panel from a JSON list of records (or ``{"records": [...]}``).

    Record fields match the CSV columns. Line numbers in errors refer to the
    1-based record index plus one, mirroring the CSV header offset.
    """
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise PanelFormatError(f"{path}: invalid JSON ({exc.msg})", line=exc.lineno) from None
    if isinstance(data, dict):
        data = data.get("records")
    if not isinstance(data, list) or not all(isinstance(r, dict) for r in data):
        raise PanelFormatError(f"{path}: expected a list of records")
    return _records_to_panel([(n + 2, r) for n, r in enumerate(data)], path)


def read_panel(path):
    path = str(path)
    if path.lower().endswith(".json"):
        return read_panel_json(path)
    return read_panel_csv(path)


def panel_records(panel):
    n, t, k = panel.x.shape
    out = []
    for i in range(n):
        for tt in range(t):
            rec = {"i": i + 1, "t": tt + 1, "y": float(panel.y[i, tt])}
            rec.update({f"x{j + 1}": float(panel.x[i, tt, j]) for j in range(k)})
            rec["loc_x"] = float(panel.locations[i, 0])
            rec["loc_y"] = float(panel.locations[i, 1])
            out.append(rec)
    return out


def write_panel_csv(panel, path):
    records = panel_records(panel)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(records[0]))
        writer.writeheader()
        for rec in records:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in rec.items()})


def write_panel_json(panel, path):
    with open(path, "w") as fh:
        json.dump(panel_records(panel), fh)
