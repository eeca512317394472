"""Weighted least squares with cluster-robust variance, FWL residualisation and
coefficient-difference (Hausman) tests."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import pandas as pd
import scipy.linalg
from scipy import stats

from fdaudit import kernels
from fdaudit.errors import RankDeficientError, ValidationError

RANK_TOL = 1e-10


def _as_design(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return X


def add_intercept(*columns) -> np.ndarray:
    """Stack ``1, columns...`` into a design matrix."""
    cols = [np.asarray(c, dtype=float) for c in columns]
    return np.column_stack([np.ones(len(cols[0]))] + cols)


def _check_rank(Xw: np.ndarray, names: Sequence[str]) -> None:
    norms = np.linalg.norm(Xw, axis=0)
    zero = norms == 0
    if zero.any():
        raise RankDeficientError([names[j] for j in np.flatnonzero(zero)])
    scaled = Xw / norms
    s = np.linalg.svd(scaled, compute_uv=False)
    if s[-1] > RANK_TOL * s[0]:
        return
    _, R, piv = scipy.linalg.qr(scaled, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > RANK_TOL * diag[0]))
    bad = piv[rank:] if rank < len(piv) else piv[-1:]
    raise RankDeficientError([names[j] for j in bad])


def _weighted_solve(y, X, w, names):
    sw = np.sqrt(w)
    Xw = X * sw[:, None]
    _check_rank(Xw, names)
    Q, R = np.linalg.qr(Xw)
    coef = scipy.linalg.solve_triangular(R, Q.T @ (y * sw))
    return coef, R


def _default_names(k):
    return ["const"] + [f"x{j}" for j in range(1, k)] if k else []


@dataclass(frozen=True, eq=False)
class RegressionFit:
    """Output of :func:`wls`.

    ``influence`` holds per-observation contributions ``(X'WX)^{-1} x_i w_i e_i``
    so that cluster sums of its rows reproduce the sandwich meat.
    """

    coefficients: np.ndarray
    vcov: np.ndarray
    residuals: np.ndarray
    n_obs: int
    n_clusters: int
    dof_correction: float
    names: list
    weights: np.ndarray = field(repr=False)
    cluster_codes: np.ndarray = field(repr=False)
    influence: np.ndarray = field(repr=False)
    vcov_type: str = "CR1"

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.vcov), 0.0, None))

    @property
    def tstat(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.coefficients / self.se

    @property
    def df_resid(self) -> int:
        # Cluster-robust inference uses t(C - 1) reference quantiles.
        return self.n_clusters - 1

    @property
    def pvalue(self) -> np.ndarray:
        return 2.0 * stats.t.sf(np.abs(self.tstat), self.df_resid)

    def index(self, name) -> int:
        return name if isinstance(name, (int, np.integer)) else self.names.index(name)

    def coef(self, name=1) -> float:
        return float(self.coefficients[self.index(name)])

    def se_of(self, name=1) -> float:
        return float(self.se[self.index(name)])

    def pvalue_of(self, name=1) -> float:
        return float(self.pvalue[self.index(name)])

    def summary(self, name=1) -> dict:
        j = self.index(name)
        return {
            "name": self.names[j],
            "estimate": float(self.coefficients[j]),
            "se": float(self.se[j]),
            "t": float(self.tstat[j]),
            "pvalue": float(self.pvalue[j]),
            "n": self.n_obs,
            "n_clusters": self.n_clusters,
            "vcov_type": self.vcov_type,
        }


def _cluster_codes(clusters, n):
    if clusters is None:
        return np.arange(n, dtype=np.int64), n
    clusters = np.asarray(clusters)
    if len(clusters) != n:
        raise ValidationError("cluster vector has the wrong length")
    codes, uniques = pd.factorize(clusters, sort=True)
    return codes.astype(np.int64), len(uniques)


def wls(y, X, weights=None, clusters=None, names=None, vcov: str = "CR1") -> RegressionFit:
    """Weighted least squares with a cluster-robust sandwich.

    Parameters
    ----------
    y : (n,) array
    X : (n, k) design, including the intercept column if one is wanted
    weights : (n,) positive analytic weights, default 1
    clusters : (n,) cluster labels; ``None`` treats each row as its own cluster
    names : column names used in error messages and lookups
    vcov : ``"CR1"`` (default) scales the sandwich by
        ``C/(C-1) * (N-1)/(N-K)``; ``"CR0"`` leaves it unscaled.
    """
    y = np.asarray(y, dtype=float)
    X = _as_design(X)
    n, k = X.shape
    if len(y) != n:
        raise ValidationError("y and X have different numbers of rows")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise ValidationError("weights must be finite and strictly positive")
    names = list(names) if names is not None else _default_names(k)
    codes, n_clusters = _cluster_codes(clusters, n)
    if n_clusters < 2:
        raise ValidationError("cluster-robust variance needs at least 2 clusters")
    if n <= k:
        raise ValidationError(f"{n} observations for {k} coefficients")

    coef, R = _weighted_solve(y, X, w, names)
    resid = y - X @ coef
    Rinv = scipy.linalg.solve_triangular(R, np.eye(k))
    bread = Rinv @ Rinv.T
    influence = (X * (w * resid)[:, None]) @ bread
    S = kernels.cluster_sums(influence, codes, n_clusters)
    if vcov == "CR1":
        factor = n_clusters / (n_clusters - 1) * (n - 1) / (n - k)
    elif vcov == "CR0":
        factor = 1.0
    else:
        raise ValidationError(f"unknown vcov type {vcov!r}")
    V = factor * (S.T @ S)
    V = 0.5 * (V + V.T)
    return RegressionFit(
        coefficients=coef,
        vcov=V,
        residuals=resid,
        n_obs=n,
        n_clusters=n_clusters,
        dof_correction=factor,
        names=names,
        weights=w,
        cluster_codes=codes,
        influence=influence,
        vcov_type=vcov,
    )


def fwl_residualize(target, controls, weights=None, names=None) -> np.ndarray:
    """Residual of ``target`` after weighted projection on ``controls``."""
    target = np.asarray(target, dtype=float)
    C = _as_design(controls)
    w = np.ones(len(target)) if weights is None else np.asarray(weights, dtype=float)
    names = list(names) if names is not None else [f"c{j}" for j in range(C.shape[1])]
    coef, _ = _weighted_solve(target, C, w, names)
    return target - C @ coef


# ---------------------------------------------------------------------------
# Hausman comparisons
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HausmanResult:
    statistic: float
    difference: float
    se_difference: float
    pvalue: float
    method: str
    n_boot: int = 0
    pvalue_bootstrap: float | None = None

    def to_dict(self) -> dict:
        return {
            "H": self.statistic,
            "difference": self.difference,
            "se_difference": self.se_difference,
            "pvalue": self.pvalue,
            "method": self.method,
            "n_boot": self.n_boot,
            "pvalue_bootstrap": self.pvalue_bootstrap,
        }


def _statistic(diff, se):
    if diff == 0.0:
        return 0.0
    if se <= 0.0:
        return float("inf")
    return (diff / se) ** 2


def cluster_bootstrap(
    statistic: Callable[[np.ndarray, np.ndarray], float],
    cluster_codes,
    n_boot: int = 399,
    seed: int = 0,
    n_jobs: int = 1,
) -> np.ndarray:
    """Resample clusters with replacement and evaluate ``statistic``.

    ``statistic(rows, labels)`` receives the row indices of the resample and a
    cluster label per row in which repeated draws of a cluster are distinct.
    Replicate ``b`` uses ``default_rng([seed, b])``, so the output does not
    depend on ``n_jobs``.
    """
    codes = np.asarray(cluster_codes)
    order = np.argsort(codes, kind="stable")
    n_clusters = int(codes.max()) + 1
    starts = np.searchsorted(codes[order], np.arange(n_clusters + 1))
    members = [order[starts[c]: starts[c + 1]] for c in range(n_clusters)]

    def one(b):
        draw = np.random.default_rng([seed, b]).integers(0, n_clusters, n_clusters)
        rows = np.concatenate([members[c] for c in draw])
        labels = np.repeat(np.arange(n_clusters), [len(members[c]) for c in draw])
        return float(statistic(rows, labels))

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            return np.array(list(pool.map(one, range(n_boot))))
    return np.array([one(b) for b in range(n_boot)])


def hausman(
    fit_a: RegressionFit,
    fit_b: RegressionFit,
    coef_a=1,
    coef_b=1,
    strategy: str = "bootstrap",
    difference_fn: Callable[[np.ndarray, np.ndarray], float] | None = None,
    n_boot: int = 399,
    seed: int = 0,
    n_jobs: int = 1,
) -> HausmanResult:
    """H = (difference / se_difference)^2 for one coefficient of each fit.

    ``strategy="bootstrap"`` needs ``difference_fn(rows, labels)`` that
    re-estimates the coefficient difference on a cluster resample (see
    :func:`cluster_bootstrap`). ``strategy="influence"`` combines the stored
    per-observation influence functions of the two fits, treating any
    first-step estimates as fixed.
    """
    if fit_a.n_obs != fit_b.n_obs or not np.array_equal(fit_a.cluster_codes, fit_b.cluster_codes):
        raise ValidationError("Hausman comparison needs both fits on the same sample and clustering")
    diff = fit_a.coef(coef_a) - fit_b.coef(coef_b)
    if strategy == "influence":
        psi = fit_a.influence[:, fit_a.index(coef_a)] - fit_b.influence[:, fit_b.index(coef_b)]
        C = fit_a.n_clusters
        sums = kernels.cluster_sums(psi, fit_a.cluster_codes, C)[:, 0]
        se = float(np.sqrt(C / (C - 1) * np.dot(sums, sums)))
        H = _statistic(diff, se)
        return HausmanResult(H, diff, se, float(stats.chi2.sf(H, 1)), "influence")
    if strategy != "bootstrap":
        raise ValidationError(f"unknown Hausman strategy {strategy!r}")
    if difference_fn is None:
        raise ValidationError("bootstrap Hausman test needs a difference_fn")
    reps = cluster_bootstrap(difference_fn, fit_a.cluster_codes, n_boot=n_boot, seed=seed, n_jobs=n_jobs)
    reps = reps[np.isfinite(reps)]
    if len(reps) < 2:
        raise ValidationError("too few successful bootstrap replicates")
    se = float(np.std(reps, ddof=1))
    H = _statistic(diff, se)
    p_boot = float(np.mean(np.abs(reps - diff) >= abs(diff)))
    return HausmanResult(H, diff, se, float(stats.chi2.sf(H, 1)), "bootstrap", len(reps), p_boot)
