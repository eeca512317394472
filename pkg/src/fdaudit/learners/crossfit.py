"""Nuisance learners behind one interface, and the cross-fitting engine."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from fdaudit.errors import ValidationError
from fdaudit.learners.basis import PolynomialBasis
from fdaudit.learners.lasso import fit_lasso
from fdaudit.learners.mlp import fit_mlp
from fdaudit.learners.spec import LearnerSpec
from fdaudit.regress import _weighted_solve


def fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(fold)]).generate_state(1)[0])


@dataclass(eq=False)
class NuisanceFit:
    """A fitted conditional-expectation model.

    ``model`` is a :class:`~fdaudit.learners.lasso.LassoFit`,
    :class:`~fdaudit.learners.mlp.MlpFit`, a coefficient vector (poly-ols),
    or ``None`` when the conditioning variables had no variation and the fit
    is the weighted mean ``constant``.
    """

    spec: LearnerSpec
    basis: PolynomialBasis | None
    model: object
    constant: float = 0.0
    train_mse: float = float("nan")
    n_train: int = 0

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if self.model is None:
            return np.full(len(X), self.constant)
        if self.spec.kind == "mlp":
            return self.model.predict(X)
        B = self.basis.transform(X)
        if self.spec.kind == "poly-ols":
            return self.model[0] + B @ self.model[1:]
        return self.model.predict(B)

    @property
    def selected(self):
        if self.spec.kind == "poly-lasso" and self.model is not None:
            return self.model.selected
        return None

    def diagnostics(self) -> dict:
        out = {"kind": self.spec.kind, "n_train": self.n_train, "train_mse": self.train_mse}
        if self.model is None:
            out["degenerate"] = True
            return out
        if self.basis is not None:
            out["features"] = self.basis.feature_names
        if self.spec.kind == "poly-lasso":
            out.update(self.model.diagnostics())
            out["selected_features"] = [out["features"][j] for j in out["selected"]]
        elif self.spec.kind == "mlp":
            out.update(self.model.diagnostics())
        return out


def fit_nuisance(spec: LearnerSpec, X, y, weights=None, seed: int | None = None) -> NuisanceFit:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    w = np.ones(len(y)) if weights is None else np.asarray(weights, dtype=float)
    seed = spec.seed if seed is None else seed
    mean = float(w @ y / w.sum())

    basis = None
    if spec.kind == "mlp":
        scale = np.sqrt(np.average((X - np.average(X, axis=0, weights=w)) ** 2, axis=0, weights=w))
        degenerate = not np.any(scale > 1e-12 * np.maximum(1.0, np.abs(X).max(axis=0)))
    else:
        basis = PolynomialBasis.fit(X, spec.degree, w)
        degenerate = basis.n_features == 0
    if degenerate:
        e = y - mean
        return NuisanceFit(spec, basis, None, mean, float(w @ (e * e) / w.sum()), len(y))

    if spec.kind == "mlp":
        model = fit_mlp(X, y, w, hidden=spec.mlp_hidden[0], iters=spec.mlp_iters, rate=spec.mlp_rate, seed=seed)
        fit = NuisanceFit(spec, None, model, n_train=len(y))
    else:
        B = basis.transform(X)
        if spec.kind == "poly-ols":
            D = np.column_stack([np.ones(len(y)), B])
            coef, _ = _weighted_solve(y, D, w, ["const"] + basis.feature_names)
            model = coef
        else:
            model = fit_lasso(
                B, y, w, penalty=spec.lasso_penalty, seed=seed, post_lasso=spec.post_lasso,
                c=spec.plugin_c, sigma_iter=spec.plugin_sigma_iter, tol=spec.lasso_tol,
                max_sweeps=spec.lasso_max_sweeps,
            )
        fit = NuisanceFit(spec, basis, model, n_train=len(y))
    e = y - fit.predict(X)
    fit.train_mse = float(w @ (e * e) / w.sum())
    return fit


@dataclass(eq=False)
class CrossFitResult:
    predictions: np.ndarray
    fits: list = field(repr=False)
    folds: np.ndarray = field(repr=False)

    def diagnostics(self) -> list[dict]:
        return [dict(fold=int(f), **fit.diagnostics()) for f, fit in self.fits]


def cross_fit(X, target, weights, spec: LearnerSpec, fold_of_row, n_jobs: int = 1) -> CrossFitResult:
    """Out-of-fold predictions of ``target`` given conditioning variables ``X``.

    For each fold the learner is trained on all other folds and predicts only
    the rows of that fold. Per-fold seeds depend on ``(spec.seed, fold)`` so
    concurrent and sequential runs agree.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    target = np.asarray(target, dtype=float)
    w = np.ones(len(target)) if weights is None else np.asarray(weights, dtype=float)
    fold_of_row = np.asarray(fold_of_row)
    if not (len(X) == len(target) == len(w) == len(fold_of_row)):
        raise ValidationError("cross_fit inputs have inconsistent lengths")
    folds = np.unique(fold_of_row)

    def job(f):
        train = fold_of_row != f
        if not train.any():
            raise ValidationError(f"fold {f} has no training rows")
        return fit_nuisance(spec, X[train], target[train], w[train], seed=fold_seed(spec.seed, f))

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            fits = list(pool.map(job, folds))
    else:
        fits = [job(f) for f in folds]
    pred = np.empty(len(target))
    for f, fit in zip(folds, fits):
        test = fold_of_row == f
        pred[test] = fit.predict(X[test])
    return CrossFitResult(pred, list(zip(folds, fits)), fold_of_row)
