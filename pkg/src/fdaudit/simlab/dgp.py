"""Data-generating processes for a linear causal model in levels.

Treatment paths follow one of four laws; the untreated outcome is
``Y_t(0) = theta_g + alpha_t + u_gt`` and the observed outcome
``Y_t = Y_t(0) + S_t D_t`` with slopes ``S_t = a_t + b_t B + q_t B^2 + noise``,
where ``B`` is the treatment in the next-to-last period (the baseline of the
last first difference).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

import numpy as np

from fdaudit.errors import ValidationError
from fdaudit.panel import PanelDataset

TREATMENT_LAWS = ("ar1", "joint-normal", "independent", "binary")
ASSUMPTIONS = ("fd-random", "random-paths", "sequential", "placebo", "none")

_LAW_PARAMS = {
    "ar1": {"ar_intercept": 0.0, "ar_slope": 1.0, "ar_noise_sd": 1.0, "ar_hetero": 0.0},
    "joint-normal": {"rho": 0.5, "d_mean_next": None, "d_sd_next": None},
    "independent": {"d_mean_next": None, "d_sd_next": None},
    "binary": {"p_initial": 0.5, "p_stay": 0.8, "p_enter": 0.2},
}
_ALL_LAW_PARAMS = sorted({k for v in _LAW_PARAMS.values() for k in v})


@dataclass(frozen=True)
class DgpSpec:
    n_units: int = 5000
    n_periods: int = 2
    treatment: str = "ar1"
    d_mean: float = 0.0
    d_sd: float = 1.0
    ar_intercept: float | None = None
    ar_slope: float | None = None
    ar_noise_sd: float | None = None
    ar_hetero: float | None = None
    rho: float | None = None
    d_mean_next: float | None = None
    d_sd_next: float | None = None
    p_initial: float | None = None
    p_stay: float | None = None
    p_enter: float | None = None
    slope_intercepts: tuple | None = None
    slope_on_baseline: tuple | None = None
    slope_on_baseline_sq: tuple | None = None
    slope_noise_sd: float = 0.0
    unit_effect_sd: float = 1.0
    unit_effect_on_d: float = 0.0
    period_effects: tuple | None = None
    noise_sd: float = 1.0
    trend_confounding: float = 0.0
    weight_sd: float = 0.0
    cluster_size: int = 1
    assumption: str = "sequential"

    def __post_init__(self):
        T = int(self.n_periods)
        if T not in (2, 3):
            raise ValidationError("n_periods must be 2 or 3")
        if int(self.n_units) < 2:
            raise ValidationError("n_units must be at least 2")
        if self.treatment not in TREATMENT_LAWS:
            raise ValidationError(f"unknown treatment law {self.treatment!r}; choose from {TREATMENT_LAWS}")
        if self.assumption not in ASSUMPTIONS:
            raise ValidationError(f"unknown assumption switch {self.assumption!r}; choose from {ASSUMPTIONS}")
        own = _LAW_PARAMS[self.treatment]
        foreign = [k for k in _ALL_LAW_PARAMS if k not in own and getattr(self, k) is not None]
        if foreign:
            raise ValidationError(f"parameters {foreign} do not apply to the {self.treatment!r} treatment law")
        for k, default in own.items():
            if getattr(self, k) is None:
                if k == "d_mean_next":
                    default = self.d_mean
                elif k == "d_sd_next":
                    default = self.d_sd
                object.__setattr__(self, k, default)

        def per_period(name, default):
            val = getattr(self, name)
            val = tuple(float(v) for v in val) if val is not None else (default,) * T
            if len(val) != T:
                raise ValidationError(f"{name} needs {T} entries, got {len(val)}")
            object.__setattr__(self, name, val)

        per_period("slope_intercepts", 1.0)
        per_period("slope_on_baseline", 0.0)
        per_period("slope_on_baseline_sq", 0.0)
        per_period("period_effects", 0.0)

        if self.treatment == "binary":
            for k in ("p_initial", "p_stay", "p_enter"):
                if not 0.0 <= getattr(self, k) <= 1.0:
                    raise ValidationError(f"{k} must be a probability")
        elif self.treatment == "joint-normal" and not -1.0 < self.rho < 1.0:
            raise ValidationError("rho must lie in (-1, 1)")
        if self.cluster_size < 1:
            raise ValidationError("cluster_size must be >= 1")

        slopes_vary_with_d = any(self.slope_on_baseline) or any(self.slope_on_baseline_sq)
        a = self.assumption
        if a in ("fd-random", "random-paths") and slopes_vary_with_d:
            raise ValidationError(f"assumption {a!r} needs slopes that do not depend on the treatment")
        if a == "random-paths" and self.unit_effect_on_d != 0.0:
            raise ValidationError("assumption 'random-paths' needs unit effects independent of treatment")
        if a == "placebo" and T != 3:
            raise ValidationError("assumption 'placebo' needs n_periods = 3")
        if a != "none" and self.trend_confounding != 0.0:
            raise ValidationError(f"trend_confounding violates assumption {a!r}; set assumption='none'")

    @property
    def baseline_index(self) -> int:
        return self.n_periods - 2

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DgpSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown DGP keys: {sorted(unknown)}")
        d = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**d)

    def replace(self, **changes) -> "DgpSpec":
        d = self.to_dict()
        d.update(changes)
        # Law parameters were filled with defaults; drop those foreign to a new law.
        if "treatment" in changes:
            for k in _ALL_LAW_PARAMS:
                if k not in _LAW_PARAMS[d["treatment"]] and k not in changes:
                    d[k] = None
        return DgpSpec.from_dict(d)


def load_dgp_spec(path) -> DgpSpec:
    with open(path) as fh:
        return DgpSpec.from_dict(json.load(fh))


@dataclass(frozen=True, eq=False)
class Truth:
    """Hidden quantities behind a generated panel, arrays of shape (units, periods)."""

    D: np.ndarray
    S: np.ndarray
    Y0: np.ndarray
    innovation: np.ndarray

    @property
    def baseline(self) -> np.ndarray:
        return self.D[:, -2]

    def decomposition(self) -> dict:
        """Terms of the last first difference: untreated trend, S_T * dD, dS * D_base."""
        dD = self.D[:, -1] - self.D[:, -2]
        dS = self.S[:, -1] - self.S[:, -2]
        return {
            "untreated_trend": self.Y0[:, -1] - self.Y0[:, -2],
            "slope_times_change": self.S[:, -1] * dD,
            "slope_change_times_baseline": dS * self.D[:, -2],
        }


def _next_treatment(spec: DgpSpec, prev, rng, t):
    n = len(prev)
    if spec.treatment == "binary":
        u = rng.uniform(size=n)
        p = np.where(prev == 1.0, spec.p_stay, spec.p_enter)
        return (u < p).astype(float), (u - 0.5) * np.sqrt(12.0)
    eps = rng.standard_normal(n)
    if spec.treatment == "ar1":
        sd = spec.ar_noise_sd * np.sqrt(1.0 + spec.ar_hetero * prev**2)
        return spec.ar_intercept + spec.ar_slope * prev + sd * eps, eps
    if spec.treatment == "joint-normal":
        m_prev, s_prev = (spec.d_mean, spec.d_sd) if t == 1 else (spec.d_mean_next, spec.d_sd_next)
        s = spec.d_sd_next
        mean = spec.d_mean_next + spec.rho * s / s_prev * (prev - m_prev)
        return mean + np.sqrt(1.0 - spec.rho**2) * s * eps, eps
    return spec.d_mean_next + spec.d_sd_next * eps, eps


def generate(spec: DgpSpec, seed=0) -> tuple[PanelDataset, Truth]:
    """Draw one panel; ``seed`` may be an int or a sequence of ints."""
    rng = np.random.default_rng(seed)
    G, T = spec.n_units, spec.n_periods
    D = np.empty((G, T))
    innov = np.zeros((G, T))
    if spec.treatment == "binary":
        D[:, 0] = (rng.uniform(size=G) < spec.p_initial).astype(float)
    else:
        D[:, 0] = spec.d_mean + spec.d_sd * rng.standard_normal(G)
    for t in range(1, T):
        D[:, t], innov[:, t] = _next_treatment(spec, D[:, t - 1], rng, t)

    base = D[:, spec.baseline_index]
    a = np.asarray(spec.slope_intercepts)
    b = np.asarray(spec.slope_on_baseline)
    q = np.asarray(spec.slope_on_baseline_sq)
    S = a + np.outer(base, b) + np.outer(base**2, q) + spec.slope_noise_sd * rng.standard_normal((G, T))
    theta = spec.unit_effect_sd * rng.standard_normal(G) + spec.unit_effect_on_d * D[:, 0]
    alpha = np.asarray(spec.period_effects)
    Y0 = theta[:, None] + alpha + spec.noise_sd * rng.standard_normal((G, T))
    if spec.trend_confounding:
        Y0 = Y0 + spec.trend_confounding * np.outer(innov[:, -1], np.arange(T))
    Y = Y0 + S * D

    if spec.weight_sd > 0:
        w_unit = np.exp(spec.weight_sd * rng.standard_normal(G))
    else:
        w_unit = np.ones(G)
    units = np.arange(G)
    clusters = units // spec.cluster_size
    panel = PanelDataset.from_arrays(
        unit=np.repeat(units, T),
        period=np.tile(np.arange(T), G),
        y=Y.ravel(),
        d=D.ravel(),
        weight=np.repeat(w_unit, T),
        cluster=np.repeat(clusters, T),
    )
    return panel, Truth(D=D, S=S, Y0=Y0, innovation=innov)


# ---------------------------------------------------------------------------
# Population quantities
# ---------------------------------------------------------------------------


def treatment_moments(spec: DgpSpec) -> list[tuple[float, float]]:
    """(mean, variance) of D_t for every period."""
    out = [(spec.d_mean, spec.d_sd**2)]
    if spec.treatment == "binary":
        out = [(spec.p_initial, spec.p_initial * (1 - spec.p_initial))]
    for t in range(1, spec.n_periods):
        m, v = out[-1]
        if spec.treatment == "ar1":
            lam0, lam1, s2, h = spec.ar_intercept, spec.ar_slope, spec.ar_noise_sd**2, spec.ar_hetero
            out.append((lam0 + lam1 * m, lam1**2 * v + s2 * (1 + h * (v + m * m))))
        elif spec.treatment == "binary":
            p = m * spec.p_stay + (1 - m) * spec.p_enter
            out.append((p, p * (1 - p)))
        else:
            out.append((spec.d_mean_next, spec.d_sd_next**2))
    return out


def lag_covariance(spec: DgpSpec, t: int) -> float:
    """cov(D_{t-1}, D_t)."""
    mom = treatment_moments(spec)
    m_prev, v_prev = mom[t - 1]
    if spec.treatment == "ar1":
        return spec.ar_slope * v_prev
    if spec.treatment == "joint-normal":
        return spec.rho * np.sqrt(v_prev * mom[t][1])
    if spec.treatment == "binary":
        return m_prev * spec.p_stay - m_prev * mom[t][0]
    return 0.0


def conditional_change(spec: DgpSpec, base):
    """E(D_T | D_{T-1}) - D_{T-1} and V(D_T | D_{T-1}) as functions of the baseline."""
    base = np.asarray(base, dtype=float)
    T = spec.n_periods - 1
    if spec.treatment == "ar1":
        mean = spec.ar_intercept + spec.ar_slope * base
        var = spec.ar_noise_sd**2 * (1.0 + spec.ar_hetero * base**2)
    elif spec.treatment == "joint-normal":
        m_prev, s_prev = (spec.d_mean, spec.d_sd) if T == 1 else (spec.d_mean_next, spec.d_sd_next)
        mean = spec.d_mean_next + spec.rho * spec.d_sd_next / s_prev * (base - m_prev)
        var = np.full_like(base, (1 - spec.rho**2) * spec.d_sd_next**2)
    elif spec.treatment == "binary":
        mean = np.where(base == 1.0, spec.p_stay, spec.p_enter)
        var = mean * (1 - mean)
    else:
        mean = np.full_like(base, spec.d_mean_next)
        var = np.full_like(base, spec.d_sd_next**2)
    return mean - base, var


def expected_slope(spec: DgpSpec, t: int, base):
    base = np.asarray(base, dtype=float)
    return spec.slope_intercepts[t] + spec.slope_on_baseline[t] * base + spec.slope_on_baseline_sq[t] * base**2


def true_nuisances(spec: DgpSpec, truth: Truth) -> dict:
    """E(dD | D_base) and E(dY | D_base) for the last first difference, valid
    when the last innovation is independent of slopes and untreated trends."""
    base = truth.baseline
    eta, _ = conditional_change(spec, base)
    T = spec.n_periods - 1
    d_alpha = spec.period_effects[T] - spec.period_effects[T - 1]
    gamma = d_alpha + expected_slope(spec, T, base) * eta + (expected_slope(spec, T, base) - expected_slope(spec, T - 1, base)) * base
    return {"treatment": eta, "outcome": gamma}
