"""Weighted Lasso with an unpenalised intercept, plug-in or cross-validated
penalty, and optional post-Lasso refit.

The objective follows the rigorous-Lasso convention

    (1/n) sum_i v_i (y_i - a - x_i b)^2 + (lambda/n) sum_j psi_j |b_j|

with weights ``v`` normalised to mean one and penalty loadings
``psi_j = sqrt((1/n) sum_i v_i (x_ij - xbar_j)^2)`` (one for columns
standardised on the same weights).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from fdaudit import kernels
from fdaudit.errors import ConvergenceError, ValidationError
from fdaudit.learners.spec import parse_penalty
from fdaudit.regress import _weighted_solve


@dataclass(eq=False)
class LassoFit:
    intercept: float
    coef: np.ndarray
    lasso_intercept: float
    lasso_coef: np.ndarray
    selected: np.ndarray
    lam: float
    sigma: float | None
    gap: float
    n_sweeps: int
    post_lasso: bool
    penalty_rule: str
    history: np.ndarray = field(default=None, repr=False)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return self.intercept + X @ self.coef

    def diagnostics(self) -> dict:
        return {
            "lambda": self.lam,
            "sigma": self.sigma,
            "selected": [int(j) for j in np.flatnonzero(self.selected)],
            "duality_gap": self.gap,
            "sweeps": self.n_sweeps,
            "post_lasso": self.post_lasso,
            "penalty_rule": self.penalty_rule,
        }


def _prepare(X, y, weights):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n == 0:
        raise ValidationError("Lasso needs at least one observation")
    if X.shape[0] != n:
        raise ValidationError("X and y have different numbers of rows")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    v = w * (n / w.sum())
    xm = v @ X / n
    ym = float(v @ y / n)
    Xc = X - xm
    yc = y - ym
    psi = np.sqrt(v @ (Xc * Xc) / n)
    return X, y, v, xm, ym, Xc, yc, psi


def lambda_max(X, y, weights=None) -> float:
    """Smallest penalty at which every slope is zero."""
    _, _, v, _, _, Xc, yc, psi = _prepare(X, y, weights)
    if Xc.shape[1] == 0:
        return 0.0
    corr = np.abs((v * yc) @ Xc)
    ok = psi > 0
    return float(np.max(2.0 * corr[ok] / psi[ok])) if ok.any() else 0.0


def plugin_lambda(n: int, p: int, c: float = 1.1, sigma: float = 1.0) -> float:
    gamma = 0.1 / np.log(n)
    return float(2.0 * c * sigma * np.sqrt(n) * stats.norm.ppf(1.0 - gamma / (2.0 * p)))


def _solve(Xc, yc, v, psi, lam, beta0, tol, max_sweeps, history_len=0):
    """Returns (slopes, sweeps, gap, history) on centred data."""
    p = Xc.shape[1]
    if p == 0:
        return np.zeros(0), 0, 0.0, np.full(history_len, np.nan)
    if lam == 0.0:
        coef, _ = _weighted_solve(yc, Xc, v, [f"x{j}" for j in range(p)])
        return coef, 0, 0.0, np.full(history_len, np.nan)
    pen = 0.5 * lam * psi
    beta, sweeps, gap, hist = kernels.lasso_cd(Xc, yc, v, pen, beta0, tol, max_sweeps, history_len)
    if not gap <= tol:
        raise ConvergenceError(
            f"Lasso coordinate descent did not converge in {sweeps} sweeps (relative duality gap {gap:.3e})", gap=gap
        )
    return beta, sweeps, gap, hist


def _refit(X, y, w, xm, ym, slopes, post_lasso):
    selected = slopes != 0.0
    if not post_lasso:
        return ym - float(xm @ slopes), slopes.copy()
    coef = np.zeros(X.shape[1])
    if selected.any():
        Xs = np.column_stack([np.ones(len(y)), X[:, selected]])
        b, _ = _weighted_solve(y, Xs, w, ["const"] + [f"x{j}" for j in np.flatnonzero(selected)])
        coef[selected] = b[1:]
        return float(b[0]), coef
    return ym, coef


def fit_lasso(
    X,
    y,
    weights=None,
    penalty="plugin",
    seed: int = 0,
    post_lasso: bool = True,
    c: float = 1.1,
    sigma_iter: int = 2,
    tol: float = 1e-8,
    max_sweeps: int = 100_000,
    history_len: int = 0,
) -> LassoFit:
    """Fit a weighted Lasso on a (standardised) design.

    ``penalty`` is ``"plugin"``, ``"cv:K"``, ``"fixed:LAMBDA"`` or a number.
    The plug-in rule sets ``lambda = 2 c sigma sqrt(n) Phi^{-1}(1 - gamma/(2p))``
    with ``gamma = 0.1/log n``; ``sigma`` starts at the weighted standard
    deviation of ``y`` and is re-estimated ``sigma_iter`` times from the
    residuals of the (post-)Lasso fit. ``seed`` only affects the CV split.
    """
    if isinstance(penalty, (int, float)):
        rule, arg = "fixed", float(penalty)
        label = f"fixed:{arg:g}"
    else:
        rule, arg = parse_penalty(penalty)
        label = str(penalty)
    X, y, v, xm, ym, Xc, yc, psi = _prepare(X, y, weights)
    n, p = X.shape
    beta0 = np.zeros(p)
    sigma = None

    if rule == "fixed":
        lam = arg
    elif rule == "plugin":
        sigma = float(np.sqrt(v @ (yc * yc) / n))
        base = plugin_lambda(n, max(p, 1), c)
        for _ in range(sigma_iter):
            slopes, *_ = _solve(Xc, yc, v, psi, base * sigma, beta0, tol, max_sweeps)
            a, b = _refit(X, y, v, xm, ym, slopes, post_lasso)
            e = y - a - X @ b
            sigma = float(np.sqrt(v @ (e * e) / n))
            beta0 = slopes
        lam = base * sigma
    else:
        lam = _cv_lambda(X, y, v, arg, seed, tol, max_sweeps)

    slopes, sweeps, gap, hist = _solve(Xc, yc, v, psi, lam, beta0, tol, max_sweeps, history_len)
    intercept, coef = _refit(X, y, v, xm, ym, slopes, post_lasso)
    return LassoFit(
        intercept=intercept,
        coef=coef,
        lasso_intercept=ym - float(xm @ slopes),
        lasso_coef=slopes,
        selected=slopes != 0.0,
        lam=float(lam),
        sigma=sigma,
        gap=float(gap),
        n_sweeps=int(sweeps),
        post_lasso=post_lasso,
        penalty_rule=label,
        history=hist,
    )


def _cv_lambda(X, y, v, k, seed, tol, max_sweeps, n_grid=50):
    n, p = X.shape
    lmax = lambda_max(X, y, v)
    if p == 0 or lmax == 0.0:
        return 0.0
    grid = lmax * np.logspace(0.0, -3.0, n_grid)
    fold = np.random.default_rng(seed).permutation(n) % k
    loss = np.zeros(n_grid)
    for f in range(k):
        tr, te = fold != f, fold == f
        _, _, vt, xm, ym, Xc, yc, psi = _prepare(X[tr], y[tr], v[tr])
        beta = np.zeros(p)
        for g, lam in enumerate(grid):
            beta, *_ = _solve(Xc, yc, vt, psi, lam, beta, tol, max_sweeps)
            pred = ym + (X[te] - xm) @ beta
            loss[g] += v[te] @ (y[te] - pred) ** 2
    return float(grid[int(np.argmin(loss))])
