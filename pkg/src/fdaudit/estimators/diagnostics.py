"""Plain regressions and moment diagnostics: the balancing regression, naive and
stacked FD-OLS, and the two-period path weights."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fdaudit.errors import ValidationError, ZeroVarianceError
from fdaudit.panel import FdView, PanelDataset
from fdaudit.regress import RegressionFit, add_intercept, wls


def _wvar(x, w):
    m = np.average(x, weights=w)
    return float(np.average((x - m) ** 2, weights=w))


def _require_variation(x, w, message):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValidationError(f"{message}: regressor has missing values for this period pair")
    if _wvar(x, w) <= 1e-14 * max(1.0, float(np.average(x * x, weights=w))):
        raise ZeroVarianceError(message)


@dataclass(frozen=True, eq=False)
class BalanceResult:
    slope: float
    se: float
    pvalue: float
    correlated: bool
    alpha: float
    fit: RegressionFit
    pair: tuple

    def to_dict(self) -> dict:
        return {
            "estimate": self.slope,
            "se": self.se,
            "pvalue": self.pvalue,
            "correlated": self.correlated,
            "alpha": self.alpha,
            "n": self.fit.n_obs,
            "n_clusters": self.fit.n_clusters,
            "pair": list(self.pair),
        }


def balance_test(fd: FdView, pair=None, alpha: float = 0.05, instrument: bool = False) -> BalanceResult:
    """Regress the treatment change on the baseline treatment.

    A significant slope means the change is correlated with the baseline
    level, so the FD regression is exposed to bias from time-varying effects.
    With ``instrument=True`` the same check is run for the instrument.
    """
    k = fd.pair_index(pair)
    rows = fd.at(k)
    change, base = ("dz", "z_lag") if instrument else ("dd", "d_lag")
    x = rows.column(base)
    if _wvar(x, rows.weight) <= 1e-14 * max(1.0, float(np.average(x * x, weights=rows.weight))):
        raise ZeroVarianceError("baseline treatment has no variation; diagnostic vacuous")
    fit = wls(rows.column(change), add_intercept(x), rows.weight, rows.cluster, names=["const", base])
    p = fit.pvalue_of(1)
    return BalanceResult(fit.coef(1), fit.se_of(1), p, bool(p < alpha), alpha, fit, fd.pairs[k])


def fd_ols(fd: FdView, use_instrument: bool = False, pair=None, outcome: str = "dy", vcov: str = "CR1") -> RegressionFit:
    """Two-period FD regression of ``outcome`` on an intercept and the treatment
    change (or the instrument change, which gives the reduced form)."""
    rows = fd.for_pair(pair)
    reg = "dz" if use_instrument else "dd"
    x = rows.column(reg)
    _require_variation(x, rows.weight, f"{'instrument' if use_instrument else 'treatment'} change has zero variance")
    y = rows.column(outcome)
    if not np.all(np.isfinite(y)):
        raise ValidationError(f"outcome {outcome!r} is missing for this period pair (needs an earlier period)")
    return wls(y, add_intercept(x), rows.weight, rows.cluster, names=["const", reg], vcov=vcov)


def stacked_design(fd: FdView, regressor: np.ndarray) -> tuple[np.ndarray, list[str]]:
    pair_ids = np.unique(fd.pair)
    cols = [np.ones(fd.n_rows), np.asarray(regressor, dtype=float)]
    names = ["const", "dd"]
    for k in pair_ids[1:]:
        cols.append((fd.pair == k).astype(float))
        a, b = fd.pairs[int(k)]
        names.append(f"fd_{a}_{b}")
    return np.column_stack(cols), names


def stacked_fd_ols(fd: FdView, use_instrument: bool = False, vcov: str = "CR1") -> RegressionFit:
    """Pooled FD regression over every consecutive pair with FD-period effects."""
    if len(np.unique(fd.pair)) < 2:
        raise ValidationError("stacked regression needs at least 3 periods")
    reg = "dz" if use_instrument else "dd"
    x = fd.column(reg)
    _require_variation(x, fd.weight, "treatment change has zero variance")
    X, names = stacked_design(fd, x)
    names[1] = reg
    return wls(fd.dy, X, fd.weight, fd.cluster, names=names, vcov=vcov)


@dataclass(frozen=True)
class PathWeights:
    """Weights on the period-one and period-two average effects implied by an
    FD regression when treatment paths are randomly assigned."""

    omega1: float
    omega2: float
    var1: float
    var2: float
    cov: float
    periods: tuple

    @property
    def negative(self) -> bool:
        return self.omega1 < 0 or self.omega2 < 0

    def to_dict(self) -> dict:
        return {
            "periods": list(self.periods),
            "omega": [self.omega1, self.omega2],
            "var": [self.var1, self.var2],
            "cov": self.cov,
            "negative_weight": self.negative,
        }


def path_weight_moments(d1, d2, weights=None) -> PathWeights:
    d1 = np.asarray(d1, dtype=float)
    d2 = np.asarray(d2, dtype=float)
    w = np.ones(len(d1)) if weights is None else np.asarray(weights, dtype=float)
    wn = w / w.sum()
    c1 = d1 - wn @ d1
    c2 = d2 - wn @ d2
    v1 = float(wn @ (c1 * c1))
    v2 = float(wn @ (c2 * c2))
    cov = float(wn @ (c1 * c2))
    a = v1 - cov
    b = v2 - cov
    den = a + b
    if not abs(den) > 1e-14 * max(v1 + v2, 1e-300):
        raise ZeroVarianceError("V(D1) + V(D2) - 2cov(D1, D2) = 0: the treatment change is constant")
    omega1 = a / den
    return PathWeights(omega1, 1.0 - omega1, v1, v2, cov, ())


def path_weights(panel: PanelDataset, pair=None) -> PathWeights:
    """Sample analogue of the path-weight decomposition for periods ``pair``.

    ``pair`` is a ``(t1, t2)`` tuple of period labels; default is the last two
    periods.
    """
    periods = [int(p) for p in panel.periods]
    if pair is None:
        pair = (periods[-2], periods[-1])
    t1, t2 = (int(p) for p in pair)
    if t1 not in periods or t2 not in periods:
        raise ValidationError(f"periods {pair} not in panel periods {periods}")
    D = panel.wide("d")
    pw = path_weight_moments(D[:, periods.index(t1)], D[:, periods.index(t2)], panel.unit_values("weight"))
    return PathWeights(pw.omega1, pw.omega2, pw.var1, pw.var2, pw.cov, (t1, t2))
