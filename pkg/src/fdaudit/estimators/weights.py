"""Empirical derivative weights behind the cross-fitted FD coefficient when the
treatment effect is non-linear.

Within bins of the baseline treatment D1 the weight on the derivative at x is

    (E[D2 | D1, D2 >= x] - E[D2 | D1, D2 < x]) * P(D2 >= x | D1) * (1 - P(D2 >= x | D1)),

which is non-negative because the upper conditional mean exceeds the lower one.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from fdaudit.errors import ValidationError
from fdaudit.panel import FdView


def weighted_quantile(x, w, q):
    return np.quantile(np.asarray(x, dtype=float), q, weights=np.asarray(w, dtype=float), method="inverted_cdf")


def derivative_weights(d2, w, grid) -> np.ndarray:
    """Weight function evaluated on ``grid`` for one conditional sample of D2."""
    d2 = np.asarray(d2, dtype=float)
    wn = np.asarray(w, dtype=float) / np.sum(w)
    out = np.zeros(len(grid))
    for i, x in enumerate(grid):
        upper = d2 >= x
        p = float(wn[upper].sum())
        if p <= 0.0 or p >= 1.0:
            continue
        hi = float(wn[upper] @ d2[upper]) / p
        lo = float(wn[~upper] @ d2[~upper]) / (1.0 - p)
        out[i] = (hi - lo) * p * (1.0 - p)
    return out


@dataclass(frozen=True, eq=False)
class YitzhakiWeightGrid:
    bin_edges: np.ndarray
    bin_mean_d1: np.ndarray
    bin_counts: np.ndarray
    x: np.ndarray
    weights: np.ndarray
    normalized: np.ndarray
    pair: tuple

    @property
    def min_weight(self) -> float:
        return float(self.weights.min()) if self.weights.size else 0.0

    def to_dict(self) -> dict:
        return {
            "pair": list(self.pair),
            "bin_edges": self.bin_edges.tolist(),
            "bin_mean_d1": self.bin_mean_d1.tolist(),
            "bin_counts": self.bin_counts.tolist(),
            "x": self.x.tolist(),
            "weights": self.weights.tolist(),
            "normalized": self.normalized.tolist(),
            "min_weight": self.min_weight,
        }


def yitzhaki_weights(fd: FdView, d1_bins: int = 10, x_grid: int = 50, pair=None) -> YitzhakiWeightGrid:
    """Derivative weights on an ``x_grid``-point grid within each of ``d1_bins``
    equal-(weighted)-mass bins of D1.

    The grid in each bin spans the 1st to 99th weighted percentile of D2 there.
    Empty bins (possible with heavy ties in D1) are dropped with a warning.
    """
    if d1_bins < 1 or x_grid < 2:
        raise ValidationError("need at least 1 bin and 2 grid points")
    k = fd.pair_index(pair)
    view = fd.at(k)
    d1, d2, w = view.d_lag, view.d, view.weight
    if len(np.unique(d2)) < 20:
        warnings.warn("D2 takes fewer than 20 distinct values; derivative weights assume a continuous D2", UserWarning)
    inner = weighted_quantile(d1, w, np.arange(1, d1_bins) / d1_bins) if d1_bins > 1 else np.array([])
    edges = np.concatenate([[d1.min()], inner, [d1.max()]])
    which = np.searchsorted(inner, d1, side="right")
    xs, ws, ns, means, kept = [], [], [], [], []
    for b in range(d1_bins):
        sel = which == b
        if not sel.any():
            warnings.warn(f"D1 bin {b} is empty; dropped", UserWarning)
            continue
        lo, hi = weighted_quantile(d2[sel], w[sel], [0.01, 0.99])
        grid = np.linspace(lo, hi, x_grid)
        xs.append(grid)
        ws.append(derivative_weights(d2[sel], w[sel], grid))
        ns.append(int(sel.sum()))
        means.append(float(np.average(d1[sel], weights=w[sel])))
        kept.append(b)
    W = np.array(ws)
    tot = W.sum(axis=1, keepdims=True)
    norm = np.divide(W, tot, out=np.zeros_like(W), where=tot > 0)
    return YitzhakiWeightGrid(
        bin_edges=edges, bin_mean_d1=np.array(means), bin_counts=np.array(ns),
        x=np.array(xs), weights=W, normalized=norm, pair=fd.pairs[k],
    )
