"""Right-censored data containers, CSV ingestion, and covariate scaling."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .exceptions import DataError

__all__ = [
    "Subject",
    "SurvivalDataset",
    "Standardization",
    "load_csv",
    "standardize",
    "destandardize_coefficients",
]


@dataclass(frozen=True)
class Subject:
    """One observation: follow-up time, event status, covariates, weight.

    y is the observed follow-up time (event or censoring, whichever came
    first), delta is 1 for an observed event and 0 for censoring, x holds the
    covariate vector, and omega is a non-negative per-subject weight.
    """

    y: float
    delta: int
    x: np.ndarray
    omega: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.y) or self.y <= 0:
            raise DataError(f"follow-up time must be finite and positive, got {self.y}")
        if self.delta not in (0, 1):
            raise DataError(f"status must be 0 or 1, got {self.delta}")
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 1:
            raise DataError("covariate vector must be one-dimensional")
        if not np.all(np.isfinite(x)):
            raise DataError("covariates must be finite")
        if not np.isfinite(self.omega) or self.omega < 0:
            raise DataError(f"weight must be finite and non-negative, got {self.omega}")
        object.__setattr__(self, "x", x)


class SurvivalDataset:
    """Immutable column store for a right-censored sample.

    Construct from a list of Subject records or, more commonly, from arrays
    via :meth:`from_arrays`. Covariate order is fixed at construction and all
    arrays are read-only views.
    """

    def __init__(self, subjects, covariate_names=None):
        subjects = list(subjects)
        if not subjects:
            raise DataError("dataset must contain at least one subject")
        p = subjects[0].x.shape[0]
        y = np.array([s.y for s in subjects], dtype=float)
        delta = np.array([s.delta for s in subjects], dtype=np.int64)
        x = np.empty((len(subjects), p), dtype=float)
        for i, s in enumerate(subjects):
            if s.x.shape[0] != p:
                raise DataError(
                    f"subject {i + 1} has {s.x.shape[0]} covariates, expected {p}"
                )
            x[i] = s.x
        omega = np.array([s.omega for s in subjects], dtype=float)
        self._init_arrays(y, delta, x, omega, covariate_names)

    @classmethod
    def from_arrays(cls, y, delta, x, omega=None, covariate_names=None):
        """Build a dataset from plain arrays, validating every column."""
        self = cls.__new__(cls)
        y = np.asarray(y, dtype=float)
        delta = np.asarray(delta)
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        n = y.shape[0]
        if x.shape[0] != n or delta.shape[0] != n:
            raise DataError("y, delta, and x must have matching lengths")
        if not np.all(np.isfinite(y)) or np.any(y <= 0):
            bad = int(np.argmax(~(np.isfinite(y) & (y > 0))))
            raise DataError(
                f"follow-up time must be finite and positive (row {bad + 1})"
            )
        if not np.all(np.isin(delta, (0, 1))):
            bad = int(np.argmax(~np.isin(delta, (0, 1))))
            raise DataError(f"status must be 0 or 1 (row {bad + 1})")
        if not np.all(np.isfinite(x)):
            bad = int(np.argmax(~np.all(np.isfinite(x), axis=1)))
            raise DataError(f"covariates must be finite (row {bad + 1})")
        if omega is None:
            omega = np.ones(n)
        else:
            omega = np.asarray(omega, dtype=float)
            if omega.shape[0] != n:
                raise DataError("omega must have the same length as y")
            if not np.all(np.isfinite(omega)) or np.any(omega < 0):
                bad = int(np.argmax(~(np.isfinite(omega) & (omega >= 0))))
                raise DataError(
                    f"weights must be finite and non-negative (row {bad + 1})"
                )
        self._init_arrays(y, delta.astype(np.int64), x, omega, covariate_names)
        return self

    def _init_arrays(self, y, delta, x, omega, covariate_names):
        if covariate_names is None:
            covariate_names = [f"x{j + 1}" for j in range(x.shape[1])]
        covariate_names = [str(c) for c in covariate_names]
        if len(covariate_names) != x.shape[1]:
            raise DataError(
                f"{len(covariate_names)} covariate names for {x.shape[1]} columns"
            )
        for arr in (y, delta, x, omega):
            arr.flags.writeable = False
        self._y = y
        self._delta = delta
        self._x = x
        self._omega = omega
        self.covariate_names = tuple(covariate_names)

    @property
    def y(self):
        return self._y

    @property
    def delta(self):
        return self._delta

    @property
    def x(self):
        return self._x

    @property
    def omega(self):
        return self._omega

    @property
    def n(self):
        return self._y.shape[0]

    @property
    def p(self):
        return self._x.shape[1]

    def __len__(self):
        return self.n

    @property
    def subjects(self):
        """Row views as Subject records, in dataset order."""
        return [
            Subject(float(self._y[i]), int(self._delta[i]), self._x[i],
                    float(self._omega[i]))
            for i in range(self.n)
        ]

    def take(self, indices):
        """New dataset from the given row indices (duplicates allowed)."""
        idx = np.asarray(indices, dtype=np.intp)
        return SurvivalDataset.from_arrays(
            self._y[idx], self._delta[idx], self._x[idx], self._omega[idx],
            self.covariate_names,
        )

    def with_covariates(self, x, covariate_names=None):
        """Same subjects, replaced covariate matrix."""
        return SurvivalDataset.from_arrays(
            self._y, self._delta, x, self._omega, covariate_names
        )


@dataclass(frozen=True)
class Standardization:
    """Column means and sample standard deviations used to scale covariates."""

    means: np.ndarray
    sds: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "means", np.asarray(self.means, dtype=float))
        object.__setattr__(self, "sds", np.asarray(self.sds, dtype=float))


def load_csv(path, time_col, status_col, covariate_cols, weight_col=None):
    """Read a right-censored sample from a CSV file.

    Rows are numbered from 1 for the first data row after the header; error
    messages cite that number. Column order in `covariate_cols` fixes the
    covariate order of the dataset.
    """
    covariate_cols = list(covariate_cols)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file")
        needed = [time_col, status_col, *covariate_cols]
        if weight_col is not None:
            needed.append(weight_col)
        missing = [c for c in needed if c not in reader.fieldnames]
        if missing:
            raise DataError(f"{path}: missing column(s) {', '.join(missing)}")

        ys, deltas, xs, omegas = [], [], [], []
        for row_num, row in enumerate(reader, start=1):
            def cell(col, row=row, row_num=row_num):
                raw = row[col]
                if raw is None or raw.strip() == "":
                    raise DataError(f"{path}: empty value in '{col}' at row {row_num}")
                try:
                    return float(raw)
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric value {raw!r} in '{col}' at row {row_num}"
                    ) from None

            y = cell(time_col)
            if not np.isfinite(y) or y <= 0:
                raise DataError(
                    f"{path}: time must be finite and positive at row {row_num}"
                )
            d = cell(status_col)
            if d not in (0.0, 1.0):
                raise DataError(
                    f"{path}: status must be 0 or 1, got {row[status_col]!r} "
                    f"at row {row_num}"
                )
            x = [cell(c) for c in covariate_cols]
            if weight_col is not None:
                w = cell(weight_col)
                if w < 0:
                    raise DataError(
                        f"{path}: weight must be non-negative at row {row_num}"
                    )
            else:
                w = 1.0
            ys.append(y)
            deltas.append(int(d))
            xs.append(x)
            omegas.append(w)

    if not ys:
        raise DataError(f"{path}: no data rows")
    return SurvivalDataset.from_arrays(
        np.array(ys), np.array(deltas), np.array(xs), np.array(omegas),
        covariate_names=covariate_cols,
    )


def standardize(data):
    """Center and scale each covariate column to mean 0, sample SD 1.

    Returns the transformed dataset and the Standardization needed to map
    coefficient estimates back to the original scale. Columns with zero
    sample variance are rejected by name.
    """
    means = data.x.mean(axis=0)
    sds = data.x.std(axis=0, ddof=1) if data.n > 1 else np.zeros(data.p)
    for j, sd in enumerate(sds):
        if not sd > 0:
            raise DataError(
                f"covariate '{data.covariate_names[j]}' has zero sample variance"
            )
    z = (data.x - means) / sds
    out = data.with_covariates(z, data.covariate_names)
    return out, Standardization(means=means, sds=sds)


def destandardize_coefficients(theta_std, standardization):
    """Map coefficients fit on standardized covariates to the original scale.

    The slope for column j is divided by that column's SD and the intercept
    absorbs the means, so the linear predictor is unchanged at every x.
    """
    theta_std = np.asarray(theta_std, dtype=float)
    m, s = standardization.means, standardization.sds
    if theta_std.shape[0] != m.shape[0] + 1:
        raise DataError(
            f"expected {m.shape[0] + 1} coefficients (intercept first), "
            f"got {theta_std.shape[0]}"
        )
    out = np.empty_like(theta_std)
    out[1:] = theta_std[1:] / s
    out[0] = theta_std[0] - np.sum(theta_std[1:] * m / s)
    return out
