"""Cross-fitted residual-on-residual estimators.

``ddml_beta_d1`` partials the baseline treatment out of both the outcome
change and the treatment change with out-of-fold learners, then regresses one
residual on the other. The stacked variant does this separately within each
FD period; the placebo test applies it to the lagged outcome change with both
lagged treatment levels as conditioning variables.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from fdaudit.errors import FdAuditError, IdentificationError, ValidationError
from fdaudit.estimators.diagnostics import fd_ols, stacked_design, stacked_fd_ols
from fdaudit.learners.crossfit import cross_fit
from fdaudit.learners.spec import LearnerSpec
from fdaudit.panel import FdView, FoldAssignment, assign_folds
from fdaudit.regress import HausmanResult, RegressionFit, add_intercept, hausman as hausman_test, wls

DEFAULT_FOLDS = 5


@dataclass(eq=False)
class DdmlResult:
    estimate: float
    se: float
    fit: RegressionFit
    naive: RegressionFit | None
    hausman: HausmanResult | None
    outcome: str
    treatment: str
    conditioning: tuple
    learner: LearnerSpec | None
    n_folds: int | None
    fold_seed: int | None
    diagnostics: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.fit.n_obs

    @property
    def n_clusters(self) -> int:
        return self.fit.n_clusters

    @property
    def pvalue(self) -> float:
        return self.fit.pvalue_of(1)

    def to_dict(self) -> dict:
        out = {
            "estimate": self.estimate,
            "se": self.se,
            "t": self.estimate / self.se if self.se > 0 else None,
            "pvalue": self.pvalue,
            "n": self.n,
            "n_clusters": self.n_clusters,
            "outcome": self.outcome,
            "treatment": self.treatment,
            "conditioning": list(self.conditioning),
            "learner": None if self.learner is None else dict(self.learner.to_dict(), digest=self.learner.digest()),
            "folds": {"n_folds": self.n_folds, "seed": self.fold_seed},
            "naive": None if self.naive is None else self.naive.summary(1),
            "hausman": None if self.hausman is None else self.hausman.to_dict(),
            "diagnostics": self.diagnostics,
        }
        return out


def _resolve_folds(fd: FdView, folds, spec: LearnerSpec | None) -> FoldAssignment:
    if isinstance(folds, FoldAssignment):
        return folds
    seed = 0 if spec is None else spec.seed
    return assign_folds(fd, DEFAULT_FOLDS if folds is None else int(folds), seed)


def _matrix(view: FdView, conditioning) -> np.ndarray:
    X = np.column_stack([view.column(c) for c in conditioning])
    if not np.all(np.isfinite(X)):
        raise ValidationError(f"conditioning variables {list(conditioning)} are missing for this period pair")
    return X


def _partial_out(view, outcome, treatment, conditioning, spec, fold_of_row, nuisances, n_jobs):
    """Out-of-fold residuals of outcome and treatment, plus learner diagnostics."""
    y = view.column(outcome)
    d = view.column(treatment)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(d))):
        raise ValidationError(f"{outcome!r} or {treatment!r} is missing for this period pair")
    if nuisances is not None:
        gy = np.asarray(nuisances["outcome"], dtype=float)
        gd = np.asarray(nuisances["treatment"], dtype=float)
        if len(gy) != len(y) or len(gd) != len(d):
            raise ValidationError("supplied nuisance predictions have the wrong length")
        return y - gy, d - gd, {"nuisances": "supplied"}
    if spec is None:
        raise ValidationError("a LearnerSpec is required unless nuisances are supplied")
    X = _matrix(view, conditioning)
    cf_y = cross_fit(X, y, view.weight, spec, fold_of_row, n_jobs=n_jobs)
    cf_d = cross_fit(X, d, view.weight, spec, fold_of_row, n_jobs=n_jobs)
    diag = {"outcome_learner": cf_y.diagnostics(), "treatment_learner": cf_d.diagnostics()}
    return y - cf_y.predictions, d - cf_d.predictions, diag


def _check_identified(rd, d, w):
    def wvar(x):
        return float(np.average((x - np.average(x, weights=w)) ** 2, weights=w))

    if wvar(rd) < 1e-12 * wvar(d):
        raise IdentificationError("treatment change fully explained by baseline; beta_D1 unidentified")


def _two_period(view, outcome, treatment, conditioning, spec, fold_of_row, nuisances, n_jobs, vcov):
    ry, rd, diag = _partial_out(view, outcome, treatment, conditioning, spec, fold_of_row, nuisances, n_jobs)
    _check_identified(rd, view.column(treatment), view.weight)
    fit = wls(ry, add_intercept(rd), view.weight, view.cluster, names=["const", f"{treatment}_r"], vcov=vcov)
    return fit, ry, rd, diag


def _bootstrap_view(view: FdView, rows, labels) -> tuple[FdView, np.ndarray]:
    """Resampled view with distinct labels for repeated clusters, and the
    original cluster ids (used to keep copies of one cluster in one fold)."""
    sub = view.select(rows)
    return replace(sub, cluster=labels), view.cluster[rows]


def ddml_beta_d1(
    fd: FdView,
    conditioning=("d_lag",),
    spec: LearnerSpec | None = None,
    folds=None,
    *,
    pair=None,
    outcome: str = "dy",
    treatment: str = "dd",
    nuisances: dict | None = None,
    hausman: str | None = "bootstrap",
    n_boot: int = 399,
    boot_seed: int = 0,
    n_jobs: int = 1,
    vcov: str = "CR1",
) -> DdmlResult:
    """Cross-fitted estimate of the FD coefficient controlling for E(treatment | conditioning).

    Parameters
    ----------
    fd : first-differenced panel; ``pair`` selects the period pair (default last)
    conditioning : FD-view columns to condition on (``("d_lag",)`` is D1)
    spec : learner for both nuisance functions
    folds : a :class:`FoldAssignment` or a fold count (cluster-level, seeded by ``spec.seed``)
    outcome, treatment : FD-view columns; ``treatment="dz"`` with
        ``conditioning=("z_lag",)`` gives the corrected reduced form
    nuisances : optional ``{"outcome": array, "treatment": array}`` of known
        conditional expectations; skips learning entirely
    hausman : ``"bootstrap"``, ``"influence"`` or ``None`` for the comparison
        with the naive FD regression
    """
    conditioning = tuple(conditioning)
    view = fd.for_pair(pair)
    fa = None if nuisances is not None else _resolve_folds(fd, folds, spec)
    fold_of_row = None if fa is None else fa.fold_of(view.cluster)
    fit, ry, rd, diag = _two_period(view, outcome, treatment, conditioning, spec, fold_of_row, nuisances, n_jobs, vcov)
    naive = wls(view.column(outcome), add_intercept(view.column(treatment)), view.weight, view.cluster,
                names=["const", treatment], vcov=vcov)

    hres = None
    if hausman is not None:
        def difference(rows, labels):
            bv, orig = _bootstrap_view(view, rows, labels)
            try:
                bf = assign_folds(orig, fa.n_folds, fa.seed).fold_of(orig) if fa is not None else None
                bn = None
                if nuisances is not None:
                    bn = {k: np.asarray(v)[rows] for k, v in nuisances.items()}
                b_fit, *_ = _two_period(bv, outcome, treatment, conditioning, spec, bf, bn, 1, vcov)
                b_naive = wls(bv.column(outcome), add_intercept(bv.column(treatment)), bv.weight, bv.cluster)
            except (FdAuditError, np.linalg.LinAlgError):
                return np.nan
            return b_fit.coef(1) - b_naive.coef(1)

        hres = hausman_test(fit, naive, strategy=hausman, difference_fn=difference,
                            n_boot=n_boot, seed=boot_seed, n_jobs=n_jobs)

    diag["pair"] = list(fd.pairs[fd.pair_index(pair)])
    return DdmlResult(
        estimate=fit.coef(1),
        se=fit.se_of(1),
        fit=fit,
        naive=naive,
        hausman=hres,
        outcome=outcome,
        treatment=treatment,
        conditioning=conditioning,
        learner=spec if nuisances is None else None,
        n_folds=None if fa is None else fa.n_folds,
        fold_seed=None if fa is None else fa.seed,
        diagnostics=diag,
        residuals={"outcome": ry, "treatment": rd},
    )


def _stacked_fit(view, outcome, treatment, spec, fold_of_row, n_jobs, vcov):
    ry = np.empty(view.n_rows)
    rd = np.empty(view.n_rows)
    diag = {}
    for k in np.unique(view.pair):
        mask = view.pair == k
        sub = view.select(mask)
        f = fold_of_row[mask]
        for fold in np.unique(fold_of_row):
            n_train = int(np.sum(f != fold))
            if np.sum(f == fold) == 0 or n_train <= spec.degree + 1:
                a, b = view.pairs[int(k)]
                raise ValidationError(f"too few units per fold in FD period {a} to {b}")
        y_r, d_r, d = _partial_out(sub, outcome, treatment, ("d_lag",), spec, f, None, n_jobs)
        ry[mask], rd[mask] = y_r, d_r
        a, b = view.pairs[int(k)]
        diag[f"{a} to {b}"] = d
    _check_identified(rd, view.column(treatment), view.weight)
    X, names = stacked_design(view, rd)
    names[1] = f"{treatment}_r"
    return wls(ry, X, view.weight, view.cluster, names=names, vcov=vcov), ry, rd, diag


def stacked_ddml(
    fd: FdView,
    spec: LearnerSpec,
    folds=None,
    *,
    outcome: str = "dy",
    treatment: str = "dd",
    hausman: str | None = "bootstrap",
    n_boot: int = 399,
    boot_seed: int = 0,
    n_jobs: int = 1,
    vcov: str = "CR1",
) -> DdmlResult:
    """Stacked version over all consecutive FD periods.

    Nuisances E_t(. | D_{t-1}) are learned separately within each FD period
    (with per-period standardisation); the pooled residual regression includes
    FD-period indicators and clusters as configured.
    """
    if len(np.unique(fd.pair)) < 2:
        raise ValidationError("stacked estimation needs at least 3 periods")
    fa = _resolve_folds(fd, folds, spec)
    fold_of_row = fa.fold_of(fd.cluster)
    fit, ry, rd, diag = _stacked_fit(fd, outcome, treatment, spec, fold_of_row, n_jobs, vcov)
    naive = stacked_fd_ols(fd, use_instrument=(treatment == "dz"), vcov=vcov)

    hres = None
    if hausman is not None:
        def difference(rows, labels):
            bv, orig = _bootstrap_view(fd, rows, labels)
            try:
                bf = assign_folds(orig, fa.n_folds, fa.seed).fold_of(orig)
                b_fit, *_ = _stacked_fit(bv, outcome, treatment, spec, bf, 1, vcov)
                b_naive = stacked_fd_ols(bv, use_instrument=(treatment == "dz"))
            except (FdAuditError, np.linalg.LinAlgError):
                return np.nan
            return b_fit.coef(1) - b_naive.coef(1)

        hres = hausman_test(fit, naive, strategy=hausman, difference_fn=difference,
                            n_boot=n_boot, seed=boot_seed, n_jobs=n_jobs)

    diag["standardisation"] = "per FD period"
    return DdmlResult(
        estimate=fit.coef(1), se=fit.se_of(1), fit=fit, naive=naive, hausman=hres,
        outcome=outcome, treatment=treatment, conditioning=("d_lag",), learner=spec,
        n_folds=fa.n_folds, fold_seed=fa.seed, diagnostics=diag, residuals={"outcome": ry, "treatment": rd},
    )


@dataclass(eq=False)
class PlaceboResult:
    naive: RegressionFit
    robust: DdmlResult
    alpha: float
    corr_dd_lag: float

    @property
    def rejected(self) -> bool:
        return bool(self.robust.pvalue < self.alpha)

    @property
    def naive_rejected(self) -> bool:
        return bool(self.naive.pvalue_of(1) < self.alpha)

    def to_dict(self) -> dict:
        return {
            "naive": self.naive.summary(1),
            "naive_rejected": self.naive_rejected,
            "robust": self.robust.to_dict(),
            "rejected": self.rejected,
            "alpha": self.alpha,
            "corr_dd_dd_lag": self.corr_dd_lag,
        }


def placebo_test(
    fd: FdView,
    spec: LearnerSpec | None = None,
    folds=None,
    *,
    pair=None,
    alpha: float = 0.05,
    nuisances: dict | None = None,
    n_jobs: int = 1,
    vcov: str = "CR1",
) -> PlaceboResult:
    """Regress the lagged outcome change on the treatment change, naively and
    after partialling out (D0, D1) from both with cross-fitted learners."""
    k = fd.pair_index(pair)
    if k < 1:
        raise ValidationError("placebo test needs a third, earlier period (lagged outcome change)")
    view = fd.at(k)
    naive = fd_ols(fd, pair=fd.pairs[k], outcome="dy_lag", vcov=vcov)
    robust = ddml_beta_d1(
        fd, ("d_lag2", "d_lag"), spec, folds, pair=fd.pairs[k], outcome="dy_lag", treatment="dd",
        nuisances=nuisances, hausman=None, n_jobs=n_jobs, vcov=vcov,
    )
    w = view.weight
    a = view.dd - np.average(view.dd, weights=w)
    b = view.dd_lag - np.average(view.dd_lag, weights=w)
    corr = float(np.average(a * b, weights=w) / np.sqrt(np.average(a * a, weights=w) * np.average(b * b, weights=w)))
    return PlaceboResult(naive=naive, robust=robust, alpha=alpha, corr_dd_lag=corr)
