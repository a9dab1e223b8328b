"""Panel data structures, CSV ingestion, sparsity simulation, and generators.

A panel is an m x q matrix of monthly observations: rows are time periods,
columns are variables.  Columns are either continuous or ordinal; cells may
be missing.  This module also provides two synthetic generators used by the
benchmark and the tests: an exact Gaussian-copula sampler with configurable
marginals, and a seasonal load series with lagged covariate columns.
"""

import csv
import datetime
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .errors import DataError
from .rng import rng_for

CONTINUOUS = "continuous"
ORDINAL = "ordinal"
_KINDS = (CONTINUOUS, ORDINAL)


def monthly_index(start, n):
    """Return n consecutive first-of-month dates beginning at start."""
    if start.day != 1:
        start = start.replace(day=1)
    out = []
    year, month = start.year, start.month
    for _ in range(n):
        out.append(datetime.date(year, month, 1))
        month += 1
        if month == 13:
            month = 1
            year += 1
    return tuple(out)


@dataclass(frozen=True)
class Schema:
    """Column-kind declaration used when parsing a CSV panel.

    Args:
        columns: mapping of data column name -> kind ("continuous" or
            "ordinal").  Every data column in the file must appear here.
        ordinal_levels: optional mapping of ordinal column name -> strictly
            increasing tuple of admissible levels.  Ordinal columns without
            an entry default to the consecutive integers 1..k where k is the
            largest value seen in the file.
        missing_tokens: cell tokens treated as missing, besides the empty
            string after stripping whitespace.
    """

    columns: dict
    ordinal_levels: dict = field(default_factory=dict)
    missing_tokens: tuple = ("", "NA", "NaN", "nan")

    def __post_init__(self):
        if not self.columns:
            raise DataError("schema declares no data columns")
        for name, kind in self.columns.items():
            if kind not in _KINDS:
                raise DataError(f"column {name!r}: unknown kind {kind!r}")
        for name, levels in self.ordinal_levels.items():
            if self.columns.get(name) != ORDINAL:
                raise DataError(f"levels declared for non-ordinal column {name!r}")
            lv = tuple(float(x) for x in levels)
            if len(lv) < 2 or any(b <= a for a, b in zip(lv, lv[1:])):
                raise DataError(f"column {name!r}: levels must be strictly increasing")


@dataclass(eq=False)
class ObservationMatrix:
    """Partially observed numeric panel.

    Attributes:
        values: float array of shape (m, q); missing cells hold NaN.
        mask: bool array of shape (m, q); True marks an observed cell.
        column_kinds: per-column kind, "continuous" or "ordinal".
        column_names: per-column name.
        time_index: per-row date, strictly increasing.
        ordinal_levels: column index -> admissible levels for ordinal columns.
        metadata: free-form provenance notes (generator settings, flags).
    """

    values: np.ndarray
    mask: np.ndarray
    column_kinds: tuple
    column_names: tuple
    time_index: tuple
    ordinal_levels: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.array(self.values, dtype=float)
        self.mask = np.array(self.mask, dtype=bool)
        if self.values.ndim != 2:
            raise DataError("values must be a 2-d array")
        if self.values.shape != self.mask.shape:
            raise DataError("values and mask shapes differ")
        m, q = self.values.shape
        if m < 1 or q < 1:
            raise DataError("matrix must have at least one row and one column")
        self.column_kinds = tuple(self.column_kinds)
        self.column_names = tuple(self.column_names)
        self.time_index = tuple(self.time_index)
        if len(self.column_kinds) != q or len(self.column_names) != q:
            raise DataError("column annotations do not match column count")
        if len(self.time_index) != m:
            raise DataError("time index length does not match row count")
        if any(k not in _KINDS for k in self.column_kinds):
            raise DataError("unknown column kind")
        if len(set(self.column_names)) != q:
            raise DataError("duplicate column names")
        if any(b <= a for a, b in zip(self.time_index, self.time_index[1:])):
            raise DataError("time index must be strictly increasing")
        if np.any(~np.isfinite(self.values[self.mask])):
            raise DataError("observed cells must be finite")
        self.values[~self.mask] = np.nan
        self.ordinal_levels = {int(j): tuple(float(x) for x in lv)
                               for j, lv in self.ordinal_levels.items()}
        for j, kind in enumerate(self.column_kinds):
            if kind != ORDINAL:
                continue
            if j not in self.ordinal_levels:
                raise DataError(f"ordinal column {self.column_names[j]!r} lacks levels")
            levels = set(self.ordinal_levels[j])
            obs = self.values[self.mask[:, j], j]
            bad = [v for v in obs if float(v) not in levels]
            if bad:
                raise DataError(
                    f"ordinal column {self.column_names[j]!r}: value {bad[0]!r} "
                    "outside the declared level set")

    @property
    def n_rows(self):
        return self.values.shape[0]

    @property
    def n_cols(self):
        return self.values.shape[1]

    def observed_count(self):
        """Number of observed cells."""
        return int(self.mask.sum())

    def column_index(self, name):
        """Index of the named column."""
        try:
            return self.column_names.index(name)
        except ValueError:
            raise DataError(f"no column named {name!r}") from None

    def copy(self):
        return ObservationMatrix(
            values=self.values.copy(), mask=self.mask.copy(),
            column_kinds=self.column_kinds, column_names=self.column_names,
            time_index=self.time_index,
            ordinal_levels=dict(self.ordinal_levels),
            metadata=dict(self.metadata))


@dataclass(frozen=True)
class MaskRecord:
    """Cells additionally erased by apply_mask, for later recovery scoring."""

    erased_cells: tuple
    fraction: float
    seed: int

    def to_json(self):
        return {"erased_cells": [[int(r), int(c)] for r, c in self.erased_cells],
                "fraction": float(self.fraction), "seed": int(self.seed)}

    @classmethod
    def from_json(cls, obj):
        return cls(erased_cells=tuple((int(r), int(c)) for r, c in obj["erased_cells"]),
                   fraction=float(obj["fraction"]), seed=int(obj["seed"]))


def load_csv(path, schema):
    """Parse a CSV panel into an ObservationMatrix.

    The first column holds ISO dates; remaining columns must match the
    schema's declared names.  Empty cells and the schema's missing tokens
    denote missing values.

    Args:
        path: CSV file path.
        schema: Schema describing the data columns.

    Returns:
        ObservationMatrix.

    Raises:
        DataError: empty file, header mismatch, ragged rows, unparsable or
            out-of-level tokens, or non-increasing dates.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [c.strip() for c in rows[0]]
    declared = list(schema.columns)
    if len(header) < 2:
        raise DataError(f"{path}: header must list a time column and data columns")
    if set(header[1:]) != set(declared):
        raise DataError(
            f"{path}: header columns {header[1:]} do not match schema columns {declared}")
    names = header[1:]
    kinds = tuple(schema.columns[n] for n in names)
    q = len(names)
    body = [r for r in rows[1:] if r]
    if not body:
        raise DataError(f"{path}: no data rows")

    missing = {t.strip() for t in schema.missing_tokens} | {""}
    dates = []
    values = np.full((len(body), q), np.nan)
    mask = np.zeros((len(body), q), dtype=bool)
    for i, row in enumerate(body):
        line = i + 2
        if len(row) != q + 1:
            raise DataError(f"{path}: row {line}: expected {q + 1} fields, got {len(row)}")
        try:
            dates.append(datetime.date.fromisoformat(row[0].strip()))
        except ValueError:
            raise DataError(f"{path}: row {line}: bad date {row[0]!r}") from None
        for j, tok in enumerate(row[1:]):
            tok = tok.strip()
            if tok in missing:
                continue
            try:
                values[i, j] = float(tok)
            except ValueError:
                raise DataError(
                    f"{path}: row {line}, column {names[j]!r}: "
                    f"cannot parse {tok!r}") from None
            mask[i, j] = True

    ordinal_levels = {}
    for j, name in enumerate(names):
        if kinds[j] != ORDINAL:
            continue
        if name in schema.ordinal_levels:
            ordinal_levels[j] = tuple(float(x) for x in schema.ordinal_levels[name])
        else:
            obs = values[mask[:, j], j]
            if obs.size == 0:
                raise DataError(f"{path}: ordinal column {name!r} has no observed cells")
            if np.any(obs != np.round(obs)) or obs.min() < 1:
                raise DataError(
                    f"{path}: ordinal column {name!r} holds non-integer levels; "
                    "declare ordinal_levels in the schema")
            ordinal_levels[j] = tuple(float(v) for v in range(1, int(obs.max()) + 1))

    return ObservationMatrix(values=values, mask=mask, column_kinds=kinds,
                             column_names=tuple(names), time_index=tuple(dates),
                             ordinal_levels=ordinal_levels)


def save_csv(matrix, path):
    """Write an ObservationMatrix as CSV; missing cells become empty fields.

    Floats are written with repr-level precision so a save/load round trip
    reproduces every observed cell bit-exactly.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time"] + list(matrix.column_names))
        for i in range(matrix.n_rows):
            row = [matrix.time_index[i].isoformat()]
            for j in range(matrix.n_cols):
                row.append(repr(float(matrix.values[i, j])) if matrix.mask[i, j] else "")
            writer.writerow(row)


def schema_of(matrix):
    """Schema describing a matrix's own columns, for reloading saved CSVs."""
    columns = {n: k for n, k in zip(matrix.column_names, matrix.column_kinds)}
    levels = {matrix.column_names[j]: lv for j, lv in matrix.ordinal_levels.items()}
    return Schema(columns=columns, ordinal_levels=levels)


def apply_mask(matrix, fraction, seed):
    """Erase a random fraction of the observed cells.

    Cell selection is uniform without replacement over currently observed
    cells; the count is fraction * observed rounded half up.  The input is
    not modified.

    Args:
        matrix: ObservationMatrix.
        fraction: share of observed cells to erase, in [0, 1].
        seed: root seed; the same (matrix, fraction, seed) always erases the
            same cells.

    Returns:
        (masked ObservationMatrix, MaskRecord of the erased cells).
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must lie in [0, 1], got {fraction}")
    observed = np.argwhere(matrix.mask)
    if fraction > 0 and observed.shape[0] == 0:
        raise DataError("matrix has no observed cells to erase")
    n_erase = int(math.floor(fraction * observed.shape[0] + 0.5))
    if n_erase == 0:
        return matrix.copy(), MaskRecord(erased_cells=(), fraction=float(fraction),
                                         seed=int(seed))
    rng = rng_for(seed, "apply_mask")
    picks = rng.choice(observed.shape[0], size=n_erase, replace=False)
    cells = sorted((int(observed[p, 0]), int(observed[p, 1])) for p in picks)
    out = matrix.copy()
    for r, c in cells:
        out.mask[r, c] = False
        out.values[r, c] = np.nan
    return out, MaskRecord(erased_cells=tuple(cells), fraction=float(fraction),
                           seed=int(seed))


@dataclass(frozen=True)
class MarginalSpec:
    """Marginal distribution descriptor for the synthetic copula sampler.

    Kinds: "normal" (params mu, sd), "lognormal" (params of log), "uniform"
    (params lo, hi), and "ordinal" (levels with probs summing to 1).
    """

    kind: str
    params: tuple = ()
    levels: tuple = ()
    probs: tuple = ()

    def __post_init__(self):
        if self.kind not in ("normal", "lognormal", "uniform", "ordinal"):
            raise ValueError(f"unknown marginal kind {self.kind!r}")
        if self.kind == "ordinal":
            if len(self.levels) != len(self.probs) or len(self.levels) < 2:
                raise ValueError("ordinal marginal needs matching levels and probs")
            if abs(sum(self.probs) - 1.0) > 1e-9 or min(self.probs) <= 0:
                raise ValueError("ordinal probs must be positive and sum to 1")
        elif len(self.params) != 2:
            raise ValueError(f"{self.kind} marginal needs exactly two parameters")

    @property
    def column_kind(self):
        return ORDINAL if self.kind == "ordinal" else CONTINUOUS

    def quantile(self, u):
        """Inverse CDF applied elementwise to probabilities u in (0, 1)."""
        u = np.asarray(u, dtype=float)
        if self.kind == "normal":
            mu, sd = self.params
            return mu + sd * norm.ppf(u)
        if self.kind == "lognormal":
            mu, sd = self.params
            return np.exp(mu + sd * norm.ppf(u))
        if self.kind == "uniform":
            lo, hi = self.params
            return lo + (hi - lo) * u
        cum = np.cumsum(self.probs)
        cum[-1] = 1.0
        idx = np.searchsorted(cum, u, side="left")
        return np.asarray(self.levels, dtype=float)[idx]


def gen_copula_sample(sigma, marginals, n, seed):
    """Draw a fully observed panel from a Gaussian copula.

    Latent rows are N(0, sigma); each latent coordinate is pushed through
    the standard normal CDF and the column's marginal quantile function.

    Args:
        sigma: q x q correlation matrix (symmetric, unit diagonal, positive
            definite).
        marginals: sequence of q MarginalSpec.
        n: number of rows to draw, >= 1.
        seed: root seed.

    Returns:
        ObservationMatrix with all cells observed and a monthly time index.
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ValueError("sigma must be square")
    q = sigma.shape[0]
    if len(marginals) != q:
        raise ValueError(f"need {q} marginals, got {len(marginals)}")
    if n < 1:
        raise ValueError("n must be >= 1")
    if not np.allclose(sigma, sigma.T, atol=1e-10):
        raise ValueError("sigma must be symmetric")
    if np.any(np.abs(np.diag(sigma) - 1.0) > 1e-10):
        raise ValueError("sigma must have a unit diagonal")
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise ValueError("sigma must be positive definite") from None

    rng = rng_for(seed, "gen_copula_sample")
    z = rng.standard_normal((n, q)) @ chol.T
    u = norm.cdf(z)
    values = np.empty((n, q))
    ordinal_levels = {}
    for j, spec in enumerate(marginals):
        values[:, j] = spec.quantile(u[:, j])
        if spec.column_kind == ORDINAL:
            ordinal_levels[j] = tuple(float(x) for x in spec.levels)
    names = tuple(f"x{j + 1}" for j in range(q))
    kinds = tuple(spec.column_kind for spec in marginals)
    return ObservationMatrix(
        values=values, mask=np.ones((n, q), dtype=bool),
        column_kinds=kinds, column_names=names,
        time_index=monthly_index(datetime.date(2000, 1, 1), n),
        ordinal_levels=ordinal_levels,
        metadata={"generator": "gen_copula_sample", "seed": int(seed)})


def gen_seasonal_load(n_periods=108, base=100.0, trend=0.5, seasonal_amp=20.0,
                      noise_sd=2.0, n_features=12, seed=0):
    """Generate a monthly load series plus lagged covariate columns.

    The target is base + trend*t + seasonal_amp*sin(2*pi*(t mod 12)/12) plus
    Gaussian noise.  Feature j is an affine copy of the target lagged by
    (j mod 3) periods with its own noise, so features carry real but partly
    redundant signal.

    Args:
        n_periods: number of monthly rows, >= 24.
        base: target level at t = 0.
        trend: additive change per period.
        seasonal_amp: amplitude of the period-12 harmonic.
        noise_sd: noise standard deviation, >= 0; feature noise is half this.
        n_features: number of covariate columns, >= 1.
        seed: root seed.

    Returns:
        Fully observed ObservationMatrix with columns ("load", "feat_01", ...)
        and a monthly index starting 2013-01-01.
    """
    if n_periods < 24:
        raise ValueError("n_periods must be >= 24 (two full seasonal cycles)")
    if n_features < 1:
        raise ValueError("n_features must be >= 1")
    if noise_sd < 0:
        raise ValueError("noise_sd must be >= 0")

    rng = rng_for(seed, "gen_seasonal_load")
    max_lag = 2
    # one seasonal value per calendar-month residue, so rows 12 apart share
    # the exact same double
    season = np.array([seasonal_amp * math.sin(2.0 * math.pi * r / 12.0)
                       for r in range(12)])
    t_ext = np.arange(-max_lag, n_periods)
    det = base + trend * t_ext + season[t_ext % 12]
    target_ext = det + noise_sd * rng.standard_normal(t_ext.size)

    values = np.empty((n_periods, 1 + n_features))
    values[:, 0] = target_ext[max_lag:]
    for j in range(1, n_features + 1):
        lag = j % 3
        scale = 0.5 + 0.25 * ((j - 1) % 4)
        offset = 5.0 * j
        src = target_ext[max_lag - lag:t_ext.size - lag]
        noise = 0.5 * noise_sd * rng.standard_normal(n_periods)
        values[:, j] = offset + scale * src + noise

    names = ("load",) + tuple(f"feat_{j:02d}" for j in range(1, n_features + 1))
    kinds = (CONTINUOUS,) * (1 + n_features)
    return ObservationMatrix(
        values=values, mask=np.ones_like(values, dtype=bool),
        column_kinds=kinds, column_names=names,
        time_index=monthly_index(datetime.date(2013, 1, 1), n_periods),
        ordinal_levels={},
        metadata={"generator": "gen_seasonal_load", "seed": int(seed),
                  "params": {"n_periods": n_periods, "base": base, "trend": trend,
                             "seasonal_amp": seasonal_amp, "noise_sd": noise_sd,
                             "n_features": n_features}})


def mask_record_to_file(record, path):
    """Write a MaskRecord as JSON."""
    with open(path, "w") as fh:
        json.dump(record.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def mask_record_from_file(path):
    """Read a MaskRecord written by mask_record_to_file."""
    with open(path) as fh:
        return MaskRecord.from_json(json.load(fh))
