"""Monte Carlo oracles: run an estimator on repeated draws from a DGP and
compare its mean with the population target implied by the DGP's laws."""
from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from fdaudit.errors import ValidationError
from fdaudit.estimators.ddml import ddml_beta_d1, placebo_test
from fdaudit.estimators.diagnostics import fd_ols, path_weights
from fdaudit.learners.spec import LearnerSpec
from fdaudit.panel import first_differences
from fdaudit.simlab.dgp import (
    DgpSpec,
    conditional_change,
    expected_slope,
    generate,
    lag_covariance,
    treatment_moments,
)

THEOREMS = ("ovb", "path-weights", "beta-d1", "placebo")

# Assumption switches under which each target is valid.
COMPATIBLE = {
    "ovb": ("fd-random", "random-paths"),
    "path-weights": ("random-paths",),
    "beta-d1": ("sequential", "random-paths"),
    "placebo": ("placebo",),
}

DEFAULT_DGPS = {
    # cov(dD, D1) = 0.3, V(dD) = 1, dS = 1
    "ovb": DgpSpec(treatment="ar1", ar_slope=1.3, ar_noise_sd=float(np.sqrt(0.91)),
                   slope_intercepts=(1.0, 2.0), assumption="fd-random"),
    # weights (5/3, -2/3)
    "path-weights": DgpSpec(treatment="ar1", ar_slope=0.9, ar_noise_sd=float(np.sqrt(0.05)),
                            slope_intercepts=(1.0, 2.0), assumption="random-paths"),
    # S2 = 1 + D1^2
    "beta-d1": DgpSpec(n_units=20000, treatment="ar1", slope_intercepts=(1.0, 1.0),
                       slope_on_baseline_sq=(0.0, 1.0), assumption="sequential"),
    "placebo": DgpSpec(n_periods=3, treatment="ar1", ar_slope=0.8, ar_noise_sd=0.6,
                       slope_intercepts=(1.0, 1.0, 1.5), slope_on_baseline=(0.5, 0.0, 0.5),
                       assumption="placebo"),
}


@dataclass(eq=False)
class MonteCarloReport:
    theorem: str
    estimates: np.ndarray
    target: float
    target_method: str
    tolerance: float
    n_reps: int
    seed: int
    spec: DgpSpec
    learner: LearnerSpec | None = None
    extras: dict = field(default_factory=dict)

    @property
    def mean(self) -> float:
        return float(np.mean(self.estimates))

    @property
    def sd(self) -> float:
        return float(np.std(self.estimates, ddof=1))

    @property
    def mc_se(self) -> float:
        return self.sd / np.sqrt(self.n_reps)

    @property
    def bound(self) -> float:
        return max(self.tolerance, 3.0 * self.mc_se)

    @property
    def passed(self) -> bool:
        return bool(abs(self.mean - self.target) <= self.bound)

    @property
    def rejection_rate(self) -> float | None:
        rej = self.extras.get("rejected")
        return None if rej is None else float(np.mean(rej))

    def to_dict(self) -> dict:
        out = {
            "theorem": self.theorem,
            "n_reps": self.n_reps,
            "seed": self.seed,
            "mean": self.mean,
            "sd": self.sd,
            "mc_se": self.mc_se,
            "target": self.target,
            "target_method": self.target_method,
            "tolerance": self.tolerance,
            "bound": self.bound,
            "passed": self.passed,
            "dgp": self.spec.to_dict(),
            "learner": None if self.learner is None else self.learner.to_dict(),
            "estimates": self.estimates.tolist(),
        }
        if self.rejection_rate is not None:
            out["rejection_rate"] = self.rejection_rate
        for k, v in self.extras.items():
            out[f"mean_{k}"] = float(np.mean(v))
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        names = ["rep", "estimate"] + sorted(self.extras)
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(names)
        for r in range(self.n_reps):
            wr.writerow([r, repr(float(self.estimates[r]))] + [repr(float(self.extras[k][r])) for k in sorted(self.extras)])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# Targets
# ---------------------------------------------------------------------------


def _last_pair_moments(spec: DgpSpec):
    mom = treatment_moments(spec)
    T = spec.n_periods - 1
    (m1, v1), (_, v2) = mom[T - 1], mom[T]
    return m1, v1, v2, lag_covariance(spec, T)


def ovb_target(spec: DgpSpec) -> tuple[float, str]:
    """E(S_T) + E(dS) cov(dD, D_base) / V(dD) for slopes independent of treatment."""
    _, v1, v2, c = _last_pair_moments(spec)
    T = spec.n_periods - 1
    a = spec.slope_intercepts
    v_dd = v1 + v2 - 2 * c
    if v_dd <= 0:
        raise ValidationError("DGP has a constant treatment change")
    return a[T] + (a[T] - a[T - 1]) * (c - v1) / v_dd, "closed form"


def path_weight_target(spec: DgpSpec) -> tuple[float, str, tuple]:
    _, v1, v2, c = _last_pair_moments(spec)
    T = spec.n_periods - 1
    w1 = (v1 - c) / (v1 + v2 - 2 * c)
    w2 = 1.0 - w1
    return w1 * spec.slope_intercepts[T - 1] + w2 * spec.slope_intercepts[T], "closed form", (w1, w2)


def baseline_nodes(spec: DgpSpec, n_nodes: int = 80) -> tuple[np.ndarray, np.ndarray, str]:
    """Quadrature nodes and probability weights for the law of the baseline D_{T-1}.

    Binary laws give the two support points. Otherwise the baseline is either
    normal or, for three AR(1) periods, a transform of two independent
    normals (D0 and the innovation), handled by a product Gauss-Hermite rule.
    Integrands here are polynomials, so the rules are exact.
    """
    if spec.treatment == "binary":
        p = treatment_moments(spec)[spec.baseline_index][0]
        return np.array([0.0, 1.0]), np.array([1.0 - p, p]), "closed form"
    x, w = hermegauss(n_nodes)
    w = w / w.sum()
    if spec.n_periods == 2:
        return spec.d_mean + spec.d_sd * x, w, "quadrature"
    if spec.treatment != "ar1":
        return spec.d_mean_next + spec.d_sd_next * x, w, "quadrature"
    d0 = spec.d_mean + spec.d_sd * x
    sd = spec.ar_noise_sd * np.sqrt(1.0 + spec.ar_hetero * d0**2)
    d1 = spec.ar_intercept + spec.ar_slope * d0[:, None] + sd[:, None] * x[None, :]
    return d1.ravel(), np.outer(w, w).ravel(), "quadrature"


def beta_d1_target(spec: DgpSpec) -> tuple[float, str]:
    """E[V(dD | B) E(S_T | B)] / E[V(dD | B)] over the baseline B."""
    T = spec.n_periods - 1
    b, pr, method = baseline_nodes(spec)
    _, v = conditional_change(spec, b)
    return float(pr @ (v * expected_slope(spec, T, b)) / (pr @ v)), method


def oracle_target(theorem: str, spec: DgpSpec) -> tuple[float, str]:
    if theorem == "ovb":
        return ovb_target(spec)
    if theorem == "path-weights":
        t, m, _ = path_weight_target(spec)
        return t, m
    if theorem == "beta-d1":
        return beta_d1_target(spec)
    return 0.0, "closed form"


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------


def check_compatible(theorem: str, spec: DgpSpec) -> None:
    if theorem not in THEOREMS:
        raise ValidationError(f"unknown oracle {theorem!r}; choose from {THEOREMS}")
    if spec.assumption not in COMPATIBLE[theorem]:
        raise ValidationError(
            f"oracle {theorem!r} needs assumption switch in {COMPATIBLE[theorem]}, "
            f"DGP declares {spec.assumption!r}"
        )


def _replicate(theorem, spec, seed, rep, learner, n_folds, alpha):
    panel, _ = generate(spec, seed=[seed, rep])
    fd = first_differences(panel)
    if theorem in ("ovb", "path-weights"):
        est = fd_ols(fd).coef(1)
        if theorem == "path-weights":
            pw = path_weights(panel)
            return est, {"omega1": pw.omega1, "omega2": pw.omega2}
        return est, {}
    if theorem == "beta-d1":
        res = ddml_beta_d1(fd, spec=learner, folds=n_folds, hausman=None)
        return res.estimate, {}
    res = placebo_test(fd, spec=learner, folds=n_folds, alpha=alpha)
    return res.robust.estimate, {"rejected": float(res.rejected), "naive_rejected": float(res.naive_rejected)}


def run_oracle(
    theorem: str,
    spec: DgpSpec | None = None,
    n_reps: int = 500,
    tolerance: float = 0.02,
    seed: int = 0,
    learner: LearnerSpec | None = None,
    n_folds: int = 5,
    alpha: float = 0.05,
    n_jobs: int = 1,
) -> MonteCarloReport:
    """Run ``n_reps`` replications of the estimator matching ``theorem``.

    Replication ``r`` draws its panel from ``default_rng([seed, r])``, so the
    report does not depend on ``n_jobs``. ``spec`` defaults to a DGP chosen
    for each theorem (see ``DEFAULT_DGPS``); ``learner`` defaults to a
    degree-3 polynomial Lasso with plug-in penalty.
    """
    if theorem in THEOREMS and spec is None:
        spec = DEFAULT_DGPS[theorem]
    check_compatible(theorem, spec)
    if n_reps < 2:
        raise ValidationError("n_reps must be at least 2")
    if theorem in ("beta-d1", "placebo") and learner is None:
        learner = LearnerSpec()
    if theorem in ("ovb", "path-weights"):
        learner = None
    target, method = oracle_target(theorem, spec)

    def job(r):
        return _replicate(theorem, spec, seed, r, learner, n_folds, alpha)

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            results = list(pool.map(job, range(n_reps)))
    else:
        results = [job(r) for r in range(n_reps)]
    estimates = np.array([r[0] for r in results])
    extras = {k: np.array([r[1][k] for r in results]) for k in results[0][1]}
    return MonteCarloReport(
        theorem=theorem, estimates=estimates, target=float(target), target_method=method,
        tolerance=float(tolerance), n_reps=int(n_reps), seed=int(seed), spec=spec,
        learner=learner, extras=extras,
    )
