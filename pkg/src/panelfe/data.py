"""Panel data container, CSV ingestion and perfect-classification drops.

Observations are stored densely as ``(N, T)`` arrays plus an observation
mask, where ``N`` is the number of units and ``T`` the number of distinct
observed periods.  Missing cells (gaps, unbalanced panels) have ``mask``
false and are ignored by every downstream computation.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Hashable, Iterable, Sequence

import numpy as np
import pandas as pd

from .errors import (
    ConstantCovariate,
    DuplicateIndex,
    EmptyAfterDrop,
    EmptyPanel,
    MissingColumn,
    NonBinaryOutcome,
    DataError,
)


@dataclass(frozen=True)
class DropLog:
    n_obs_dropped: int = 0
    n_units_dropped: int = 0
    n_periods_dropped: int = 0

    def __add__(self, other: "DropLog") -> "DropLog":
        return DropLog(
            self.n_obs_dropped + other.n_obs_dropped,
            self.n_units_dropped + other.n_units_dropped,
            self.n_periods_dropped + other.n_periods_dropped,
        )


@dataclass(frozen=True)
class Observation:
    unit_id: Hashable
    period_id: int
    y: int
    x: tuple


@dataclass(frozen=True, eq=False)
class PanelData:
    """Immutable binary-outcome panel.

    Attributes
    ----------
    unit_labels : tuple
        Original unit labels, in order of first appearance in the input.
    periods : ndarray of int
        Sorted distinct period labels.
    y : ndarray, shape (N, T)
        Outcome (0/1), zero in unobserved cells.
    X : ndarray, shape (N, T, K)
        Covariates, zero in unobserved cells.
    mask : ndarray of bool, shape (N, T)
        True where the cell is observed.
    covariate_names : tuple of str
    binary_mask : ndarray of bool, shape (K,)
        Whether each covariate is treated as binary in partial effects.
    drop_log : DropLog
        Cumulative perfect-classification drops relative to the loaded data.
    """

    unit_labels: tuple
    periods: np.ndarray
    y: np.ndarray
    X: np.ndarray
    mask: np.ndarray
    covariate_names: tuple
    binary_mask: np.ndarray
    drop_log: DropLog = field(default_factory=DropLog)
    depvar: str = "y"
    id_name: str = "id"
    time_name: str = "time"

    def __post_init__(self):
        for name in ("periods", "y", "X", "mask", "binary_mask"):
            getattr(self, name).setflags(write=False)

    @property
    def N(self) -> int:
        return self.y.shape[0]

    @property
    def T(self) -> int:
        return self.y.shape[1]

    @property
    def K(self) -> int:
        return self.X.shape[2]

    @property
    def n_obs(self) -> int:
        return int(self.mask.sum())

    @property
    def T_span(self) -> int:
        return int(self.periods[-1] - self.periods[0] + 1) if self.T else 0

    @property
    def is_balanced(self) -> bool:
        return bool(self.mask.all())

    def observations(self) -> Iterable[Observation]:
        for i, t in zip(*np.nonzero(self.mask)):
            yield Observation(self.unit_labels[i], int(self.periods[t]),
                              int(self.y[i, t]), tuple(self.X[i, t]))

    def unit_index(self, label) -> int:
        try:
            return self.unit_labels.index(label)
        except ValueError:
            # CSV labels may have been parsed as numbers
            for k, u in enumerate(self.unit_labels):
                if str(u) == str(label):
                    return k
            raise KeyError(label) from None

    def subset(self, units: Sequence[int] | None = None,
               periods: Sequence[int] | None = None) -> "PanelData":
        """Restrict to the given unit/period positions (observed cells only).

        Units or periods left without any observation are removed silently;
        they are not counted as drops.
        """
        ui = np.arange(self.N) if units is None else np.asarray(units, dtype=int)
        ti = np.arange(self.T) if periods is None else np.asarray(periods, dtype=int)
        ui = np.sort(ui)
        ti = np.sort(ti)
        mask = self.mask[np.ix_(ui, ti)]
        keep_u = mask.any(axis=1)
        keep_t = mask.any(axis=0)
        ui, ti = ui[keep_u], ti[keep_t]
        return self._take(ui, ti, self.drop_log)

    def _take(self, ui: np.ndarray, ti: np.ndarray, drop_log: DropLog) -> "PanelData":
        ix = np.ix_(ui, ti)
        return replace(
            self,
            unit_labels=tuple(self.unit_labels[i] for i in ui),
            periods=self.periods[ti].copy(),
            y=self.y[ix].copy(),
            X=self.X[ix].copy(),
            mask=self.mask[ix].copy(),
            binary_mask=self.binary_mask.copy(),
            drop_log=drop_log,
        )

    def with_binary(self, force_binary: Iterable[str] = (),
                    force_continuous: Iterable[str] = ()) -> "PanelData":
        """Override the data-driven binary detection for named covariates."""
        bm = self.binary_mask.copy()
        for name, value in [(n, True) for n in force_binary] + \
                           [(n, False) for n in force_continuous]:
            if name not in self.covariate_names:
                raise MissingColumn(f"unknown covariate {name!r}")
            bm[self.covariate_names.index(name)] = value
        return replace(self, binary_mask=bm, periods=self.periods.copy(),
                       y=self.y.copy(), X=self.X.copy(), mask=self.mask.copy())

    def to_frame(self) -> pd.DataFrame:
        i, t = np.nonzero(self.mask)
        df = pd.DataFrame({
            self.id_name: [self.unit_labels[k] for k in i],
            self.time_name: self.periods[t],
            self.depvar: self.y[i, t].astype(int),
        })
        for k, name in enumerate(self.covariate_names):
            df[name] = self.X[i, t, k]
        return df

    @classmethod
    def from_long(cls, unit, period, y, X, covariate_names: Sequence[str],
                  depvar: str = "y", id_name: str = "id",
                  time_name: str = "time") -> "PanelData":
        """Build a panel from long-format arrays (one entry per observation)."""
        unit = list(unit)
        period = np.asarray(period)
        y = np.asarray(y, dtype=float)
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        n = len(unit)
        if n == 0:
            raise EmptyPanel("no observations")
        if not (len(period) == len(y) == X.shape[0] == n):
            raise DataError("inconsistent column lengths")
        if X.shape[1] != len(covariate_names):
            raise DataError("covariate_names does not match X")
        if X.shape[1] == 0:
            raise DataError("at least one covariate is required")
        if np.isnan(y).any() or not np.isin(y, (0.0, 1.0)).all():
            raise NonBinaryOutcome(f"{depvar} must take values in {{0, 1}}")
        if np.isnan(X).any():
            raise DataError("missing covariate values; drop those rows first")
        if not np.all(np.isfinite(period)) or np.any(period != np.round(period)):
            raise DataError(f"{time_name} must be integer-valued")
        period = period.astype(np.int64)

        unit_labels = tuple(pd.unique(pd.Series(unit, dtype=object)))
        ucode = {u: k for k, u in enumerate(unit_labels)}
        ui = np.fromiter((ucode[u] for u in unit), dtype=np.int64, count=n)
        periods, ti = np.unique(period, return_inverse=True)

        flat = ui * len(periods) + ti
        uniq, counts = np.unique(flat, return_counts=True)
        if (counts > 1).any():
            k = uniq[counts > 1][0]
            raise DuplicateIndex(
                f"duplicate ({id_name}, {time_name}) = "
                f"({unit_labels[k // len(periods)]}, {periods[k % len(periods)]})")

        N, T, K = len(unit_labels), len(periods), X.shape[1]
        Y = np.zeros((N, T))
        XX = np.zeros((N, T, K))
        mask = np.zeros((N, T), dtype=bool)
        Y[ui, ti] = y
        XX[ui, ti] = X
        mask[ui, ti] = True

        for k, name in enumerate(covariate_names):
            if np.ptp(X[:, k]) == 0:
                raise ConstantCovariate(
                    f"covariate {name!r} is constant; fixed effects absorb the intercept")
        binary = np.array([np.isin(X[:, k], (0.0, 1.0)).all() for k in range(K)])

        return cls(unit_labels=unit_labels, periods=periods, y=Y, X=XX, mask=mask,
                   covariate_names=tuple(covariate_names), binary_mask=binary,
                   depvar=depvar, id_name=id_name, time_name=time_name)


def load_csv(path, id_col: str, time_col: str, depvar: str,
             indepvars: Sequence[str]) -> PanelData:
    """Read a long-format CSV (header row, one row per unit-period)."""
    df = pd.read_csv(path)
    missing = [c for c in (id_col, time_col, depvar, *indepvars) if c not in df.columns]
    if missing:
        raise MissingColumn(f"column(s) not found: {', '.join(missing)}")
    if len(df) == 0:
        raise EmptyPanel(f"{path} has no rows")
    if df[[id_col, time_col, depvar]].isna().any().any():
        raise DataError("missing values in id, time or dependent variable")
    return PanelData.from_long(
        df[id_col].tolist(), df[time_col].to_numpy(dtype=float),
        df[depvar].to_numpy(dtype=float), df[list(indepvars)].to_numpy(dtype=float),
        covariate_names=list(indepvars), depvar=depvar, id_name=id_col,
        time_name=time_col)


def drop_perfect_classification(panel: PanelData, include_i: bool = True,
                                include_t: bool = True) -> PanelData:
    """Remove units/periods whose outcomes are all 0 or all 1.

    Iterates to a fixed point, since removing a unit can leave a period with
    a single outcome value and vice versa.
    """
    keep_u = panel.mask.any(axis=1)
    keep_t = panel.mask.any(axis=0)
    y, m = panel.y, panel.mask
    while True:
        mm = m & keep_u[:, None] & keep_t[None, :]
        changed = False
        if include_i:
            n1 = (y * mm).sum(axis=1)
            n = mm.sum(axis=1)
            bad = keep_u & ((n1 == 0) | (n1 == n))
            if bad.any():
                keep_u = keep_u & ~bad
                changed = True
                mm = m & keep_u[:, None] & keep_t[None, :]
        if include_t:
            n1 = (y * mm).sum(axis=0)
            n = mm.sum(axis=0)
            bad = keep_t & ((n1 == 0) | (n1 == n))
            if bad.any():
                keep_t = keep_t & ~bad
                changed = True
        # units/periods that lost all their cells go too
        mm = m & keep_u[:, None] & keep_t[None, :]
        keep_u &= mm.any(axis=1)
        keep_t &= mm.any(axis=0)
        if not changed:
            break
    if not keep_u.any() or not keep_t.any():
        raise EmptyAfterDrop("no observations left after dropping perfectly "
                             "classified units/periods")
    ui, ti = np.flatnonzero(keep_u), np.flatnonzero(keep_t)
    n_kept = int(panel.mask[np.ix_(ui, ti)].sum())
    log = DropLog(panel.n_obs - n_kept, panel.N - len(ui), panel.T - len(ti))
    return panel._take(ui, ti, panel.drop_log + log)


def lag_pairs(panel: PanelData, unit, j: int) -> list[tuple[int, int]]:
    """Period pairs ``(t - j, t)`` observed for ``unit``; pairs across a gap are omitted."""
    if j < 1:
        raise ValueError("lag order must be >= 1")
    i = panel.unit_index(unit)
    observed = set(panel.periods[panel.mask[i]].tolist())
    return [(t - j, t) for t in sorted(observed) if t - j in observed]


def lag_index_pairs(panel: PanelData, j: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized :func:`lag_pairs` over all units.

    Returns ``(unit, col_lag, col)`` position arrays such that period
    ``periods[col_lag] == periods[col] - j`` and both cells are observed.
    """
    pos = {int(p): c for c, p in enumerate(panel.periods)}
    cols = [(pos[int(p) - j], c) for c, p in enumerate(panel.periods) if int(p) - j in pos]
    if not cols:
        e = np.empty(0, dtype=int)
        return e, e, e
    lagc, curc = map(np.asarray, zip(*cols))
    both = panel.mask[:, lagc] & panel.mask[:, curc]
    i, k = np.nonzero(both)
    return i, lagc[k], curc[k]
