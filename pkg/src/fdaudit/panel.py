"""Panel ingestion, first differences and cluster-level fold assignment."""
from __future__ import annotations

import io
import os
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np
import pandas as pd

from fdaudit.errors import UnbalancedPanelError, ValidationError

COLUMN_KEYS = ("unit", "period", "y", "d", "z", "weight", "cluster")
REQUIRED_KEYS = ("unit", "period", "y", "d")


def _frozen(a):
    a = np.asarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Balanced long-format panel, sorted by unit then period.

    Arrays are read-only. ``z`` is ``None`` when no instrument was supplied.
    """

    unit: np.ndarray
    period: np.ndarray
    y: np.ndarray
    d: np.ndarray
    weight: np.ndarray
    cluster: np.ndarray
    z: np.ndarray | None = None
    units: np.ndarray = field(init=False, repr=False)
    periods: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = len(self.unit)
        for name in ("period", "y", "d", "weight", "cluster"):
            if len(getattr(self, name)) != n:
                raise ValidationError(f"column {name!r} has length {len(getattr(self, name))}, expected {n}")
        if self.z is not None and len(self.z) != n:
            raise ValidationError("instrument column has the wrong length")
        if n == 0:
            raise ValidationError("panel is empty")
        _validate_cells(self)
        order = np.lexsort((self.period, pd.factorize(self.unit, sort=True)[0]))
        for name in ("unit", "period", "y", "d", "weight", "cluster", "z"):
            a = getattr(self, name)
            if a is not None:
                object.__setattr__(self, name, _frozen(np.asarray(a)[order]))
        object.__setattr__(self, "units", _frozen(pd.unique(self.unit)))
        object.__setattr__(self, "periods", _frozen(np.unique(self.period)))
        _validate_structure(self)

    @classmethod
    def from_arrays(cls, unit, period, y, d, z=None, weight=None, cluster=None):
        unit = np.asarray(unit)
        n = len(unit)
        weight = np.ones(n) if weight is None else np.asarray(weight, dtype=float)
        cluster = unit.copy() if cluster is None else np.asarray(cluster)
        return cls(
            unit=unit,
            period=np.asarray(period),
            y=np.asarray(y, dtype=float),
            d=np.asarray(d, dtype=float),
            z=None if z is None else np.asarray(z, dtype=float),
            weight=weight,
            cluster=cluster,
        )

    @property
    def n_units(self) -> int:
        return len(self.units)

    @property
    def n_periods(self) -> int:
        return len(self.periods)

    @property
    def n_clusters(self) -> int:
        return len(pd.unique(self.cluster))

    @property
    def has_instrument(self) -> bool:
        return self.z is not None

    def wide(self, var: str) -> np.ndarray:
        """``(n_units, n_periods)`` array of a level variable."""
        a = getattr(self, var)
        if a is None:
            raise ValidationError(f"panel has no {var!r} column")
        return np.asarray(a).reshape(self.n_units, self.n_periods)

    def unit_values(self, var: str) -> np.ndarray:
        """Per-unit value of a unit-constant column (weight, cluster)."""
        return np.asarray(getattr(self, var))[:: self.n_periods]

    def summary(self) -> dict:
        return {
            "n_units": self.n_units,
            "n_periods": self.n_periods,
            "n_clusters": self.n_clusters,
            "periods": [int(p) for p in self.periods],
            "has_instrument": self.has_instrument,
        }


def _validate_cells(panel: PanelDataset) -> None:
    for name in ("y", "d", "weight", "z"):
        a = getattr(panel, name)
        if a is None:
            continue
        a = np.asarray(a, dtype=float)
        if not np.all(np.isfinite(a)):
            bad = np.asarray(panel.unit)[~np.isfinite(a)]
            raise ValidationError(f"column {name!r} has missing or non-finite cells (units {list(pd.unique(bad))[:10]})")
    per = np.asarray(panel.period)
    if per.dtype.kind == "f":
        if not np.all(np.isfinite(per)) or not np.all(per == np.round(per)):
            raise ValidationError("period must be an integer time index")
    elif per.dtype.kind not in "iu":
        raise ValidationError("period must be an integer time index")
    if pd.isna(pd.Series(panel.unit)).any() or pd.isna(pd.Series(panel.cluster)).any():
        raise ValidationError("unit and cluster identifiers may not be missing")
    w = np.asarray(panel.weight, dtype=float)
    if np.any(w <= 0):
        bad = list(pd.unique(np.asarray(panel.unit)[w <= 0]))[:10]
        raise ValidationError(f"weights must be strictly positive (units {bad})")


def _validate_structure(panel: PanelDataset) -> None:
    frame = pd.DataFrame({"unit": panel.unit, "period": panel.period})
    dup = frame.duplicated(keep=False)
    if dup.any():
        pairs = frame[dup].drop_duplicates().head(10).itertuples(index=False)
        raise ValidationError(f"duplicate (unit, period) rows: {[tuple(p) for p in pairs]}")
    if panel.n_periods < 2:
        raise ValidationError("panel needs at least two distinct periods")
    counts = frame.groupby("unit", sort=True).size()
    if (counts != panel.n_periods).any():
        raise UnbalancedPanelError(counts.index[counts != panel.n_periods].tolist())
    for name in ("weight", "cluster"):
        per_unit = pd.DataFrame({"unit": panel.unit, name: getattr(panel, name)}).groupby("unit")[name].nunique()
        if (per_unit > 1).any():
            raise ValidationError(f"{name} must be constant within unit; varies for units {per_unit.index[per_unit > 1].tolist()[:10]}")


def _resolve_map(column_map: Mapping[str, str] | None) -> dict:
    cmap = {k: k for k in REQUIRED_KEYS}
    for k, v in (column_map or {}).items():
        if v is not None:
            cmap[k] = v
    unknown = set(cmap) - set(COLUMN_KEYS) - {"format", "sep"}
    if unknown:
        raise ValidationError(f"unknown column-map keys: {sorted(unknown)}")
    return cmap


def panel_from_frame(frame: pd.DataFrame, column_map: Mapping[str, str] | None = None) -> PanelDataset:
    """Build a panel from a long (or, with ``format='wide'``, wide) DataFrame."""
    cmap = _resolve_map(column_map)
    if cmap.get("format", "long") == "wide":
        frame = _wide_to_long(frame, cmap)
        cmap = {k: (k if k in ("period", "y", "d", "z") else v) for k, v in cmap.items()
                if k not in ("format", "sep")}
    missing = [cmap[k] for k in COLUMN_KEYS if k in cmap and cmap[k] not in frame.columns]
    if missing:
        raise ValidationError(f"mapped columns not found in input: {missing}")

    def numeric(key):
        col = cmap[key]
        try:
            return pd.to_numeric(frame[col], errors="raise").to_numpy(dtype=float)
        except (ValueError, TypeError) as exc:
            raise ValidationError(f"column {col!r} ({key}) is not numeric: {exc}") from None

    period = numeric("period")
    if np.all(np.isfinite(period)) and np.all(period == np.round(period)):
        period = period.astype(np.int64)
    return PanelDataset.from_arrays(
        unit=frame[cmap["unit"]].to_numpy(),
        period=period,
        y=numeric("y"),
        d=numeric("d"),
        z=numeric("z") if "z" in cmap else None,
        weight=numeric("weight") if "weight" in cmap else None,
        cluster=frame[cmap["cluster"]].to_numpy() if "cluster" in cmap else None,
    )


def _wide_to_long(frame, cmap):
    sep = cmap.get("sep", "_")
    stubs = {k: cmap[k] for k in ("y", "d", "z") if k in cmap}
    long = pd.wide_to_long(frame, stubnames=list(stubs.values()), i=cmap["unit"], j="period", sep=sep)
    long = long.reset_index().rename(columns={v: k for k, v in stubs.items()})
    return long


def load_panel(source, column_map: Mapping[str, str] | None = None, delimiter: str | None = None) -> PanelDataset:
    """Read a delimited text file (comma or tab, with header) into a panel.

    ``source`` is a path or a text stream. When ``delimiter`` is omitted it is
    taken from the header line: tab if present, comma otherwise.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="") as fh:
            text = fh.read()
    else:
        text = source.read()
    if not text.strip():
        raise ValidationError("input is empty")
    if delimiter is None:
        header = text.splitlines()[0]
        delimiter = "\t" if "\t" in header else ","
    frame = pd.read_csv(io.StringIO(text), sep=delimiter)
    return panel_from_frame(frame, column_map)


# ---------------------------------------------------------------------------
# First differences
# ---------------------------------------------------------------------------

_FD_COLUMNS = ("dy", "dd", "dz", "d", "d_lag", "d_lag2", "dy_lag", "dd_lag", "z_lag")


@dataclass(frozen=True, eq=False)
class FdView:
    """First-differenced rows, one per unit per consecutive period pair.

    Rows are ordered by unit, then period. ``pair`` indexes the period pair
    (0 for the first difference). Lagged quantities that need an earlier
    period than the panel has are ``nan``; instrument columns are ``None``
    when the panel has no instrument.
    """

    unit: np.ndarray
    cluster: np.ndarray
    weight: np.ndarray
    period: np.ndarray
    period_prev: np.ndarray
    pair: np.ndarray
    dy: np.ndarray
    dd: np.ndarray
    d: np.ndarray
    d_lag: np.ndarray
    d_lag2: np.ndarray
    dy_lag: np.ndarray
    dd_lag: np.ndarray
    dz: np.ndarray | None
    z_lag: np.ndarray | None
    periods: tuple

    @property
    def n_rows(self) -> int:
        return len(self.dy)

    @property
    def n_clusters(self) -> int:
        return len(pd.unique(self.cluster))

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return [(int(a), int(b)) for a, b in zip(self.periods[:-1], self.periods[1:])]

    def column(self, name: str) -> np.ndarray:
        a = getattr(self, name, None)
        if a is None:
            if name in ("dz", "z_lag"):
                raise ValidationError("instrument requested but the panel has no instrument column")
            raise ValidationError(f"unknown FD column {name!r}")
        return a

    def select(self, mask) -> "FdView":
        mask = np.asarray(mask)
        kw = {}
        for name in ("unit", "cluster", "weight", "period", "period_prev", "pair") + _FD_COLUMNS:
            a = getattr(self, name)
            kw[name] = None if a is None else _frozen(a[mask])
        return replace(self, **kw)

    def pair_index(self, pair=None) -> int:
        """Resolve ``None`` (last pair), an int index, an end period or a (t-1, t) tuple."""
        n_pairs = len(self.periods) - 1
        if pair is None:
            return n_pairs - 1
        if isinstance(pair, tuple):
            if pair not in self.pairs:
                raise ValidationError(f"period pair {pair} not in panel pairs {self.pairs}")
            return self.pairs.index(pair)
        pair = int(pair)
        if pair in self.periods[1:]:
            return list(self.periods[1:]).index(pair)
        if 0 <= pair < n_pairs:
            return pair
        raise ValidationError(f"unknown period pair {pair}")

    def for_pair(self, pair=None) -> "FdView":
        return self.at(self.pair_index(pair))

    def at(self, k: int) -> "FdView":
        """Rows of the ``k``-th consecutive pair (0-based position, never a period label)."""
        return self.select(self.pair == int(k))


def first_differences(panel: PanelDataset) -> FdView:
    """Difference consecutive periods of a balanced panel.

    Periods are differenced in sort order whatever their spacing.
    """
    T = panel.n_periods
    G = panel.n_units
    Y = panel.wide("y")
    D = panel.wide("d")
    nan = np.full((G, 1), np.nan)
    dY = np.diff(Y, axis=1)
    dD = np.diff(D, axis=1)
    d_lag = D[:, :-1]
    d_lag2 = np.hstack([nan, D[:, :-2]]) if T > 1 else nan
    dy_lag = np.hstack([nan, dY[:, :-1]])
    dd_lag = np.hstack([nan, dD[:, :-1]])
    if panel.z is not None:
        Z = panel.wide("z")
        dz = np.diff(Z, axis=1).ravel()
        z_lag = Z[:, :-1].ravel()
    else:
        dz = z_lag = None
    per = panel.wide("period")
    idx = np.repeat(np.arange(G) * T, T - 1) + np.tile(np.arange(1, T), G)

    def rows(a):
        return None if a is None else _frozen(np.asarray(a).ravel())

    return FdView(
        unit=rows(panel.unit[idx]),
        cluster=rows(panel.cluster[idx]),
        weight=rows(panel.weight[idx]),
        period=rows(per[:, 1:]),
        period_prev=rows(per[:, :-1]),
        pair=rows(np.tile(np.arange(T - 1), G)),
        dy=rows(dY),
        dd=rows(dD),
        d=rows(D[:, 1:]),
        d_lag=rows(d_lag),
        d_lag2=rows(d_lag2[:, : T - 1]),
        dy_lag=rows(dy_lag),
        dd_lag=rows(dd_lag),
        dz=rows(dz),
        z_lag=rows(z_lag),
        periods=tuple(int(p) for p in panel.periods),
    )


def rebuild_levels(first: np.ndarray, fd: FdView, var: str = "dy") -> np.ndarray:
    """Cumulate differences from the first-period levels; returns ``(units, periods)``."""
    steps = fd.column(var).reshape(len(first), -1)
    return np.hstack([np.asarray(first, dtype=float)[:, None], first[:, None] + np.cumsum(steps, axis=1)])


# ---------------------------------------------------------------------------
# Folds
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    """Cluster-level partition into ``n_folds`` folds (labels ``0..n_folds-1``)."""

    clusters: np.ndarray
    cluster_fold: np.ndarray
    n_folds: int
    seed: int

    def fold_of(self, cluster_ids) -> np.ndarray:
        pos = pd.Index(self.clusters).get_indexer(np.asarray(cluster_ids))
        if np.any(pos < 0):
            raise ValidationError("cluster ids not covered by this fold assignment")
        return self.cluster_fold[pos]

    def sizes(self) -> np.ndarray:
        return np.bincount(self.cluster_fold, minlength=self.n_folds)


def assign_folds(data, n_folds: int, seed: int = 0) -> FoldAssignment:
    """Randomly partition clusters into ``n_folds`` near-equal folds.

    Sorted unique cluster ids are shuffled with ``numpy.random.default_rng(seed)``
    and dealt round-robin, so fold sizes (in clusters) differ by at most one and
    the result depends only on the seed and the set of cluster ids.
    ``data`` may be a panel, an FD view, or an array of cluster ids.
    """
    ids = data.cluster if hasattr(data, "cluster") else np.asarray(data)
    clusters = np.asarray(pd.Index(pd.unique(ids)).sort_values())
    n_folds = int(n_folds)
    if n_folds < 2:
        raise ValidationError("need at least 2 folds")
    if n_folds > len(clusters):
        raise ValidationError(f"{n_folds} folds requested but only {len(clusters)} clusters")
    perm = np.random.default_rng(seed).permutation(len(clusters))
    fold = np.empty(len(clusters), dtype=np.int64)
    fold[perm] = np.arange(len(clusters)) % n_folds
    return FoldAssignment(clusters=_frozen(clusters), cluster_fold=_frozen(fold), n_folds=n_folds, seed=int(seed))

