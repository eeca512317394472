"""Polynomial feature expansion with training-sample standardisation."""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np

from fdaudit.errors import ValidationError


def exponents(n_vars: int, degree: int) -> list[tuple[int, ...]]:
    """Monomial exponent tuples of total degree 1..degree, ordered by degree."""
    if degree < 1:
        raise ValidationError("polynomial degree must be >= 1")
    out = []
    for total in range(1, degree + 1):
        # combinations_with_replacement yields variable multisets; reverse-sorted
        # exponent tuples put higher powers of the first variable first.
        terms = []
        for combo in itertools.combinations_with_replacement(range(n_vars), total):
            terms.append(tuple(combo.count(v) for v in range(n_vars)))
        out.extend(sorted(terms, reverse=True))
    return out


def monomials(X, degree: int) -> tuple[np.ndarray, list[tuple[int, ...]]]:
    """Raw (unstandardised) monomials of the columns of ``X``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    exps = exponents(X.shape[1], degree)
    cols = [np.prod(X ** np.asarray(e, dtype=float), axis=1) for e in exps]
    M = np.column_stack(cols) if cols else np.empty((len(X), 0))
    return M, exps


def _wmean_std(M, w):
    wn = w / w.sum()
    mean = wn @ M
    var = wn @ (M - mean) ** 2
    return mean, np.sqrt(var)


@dataclass(frozen=True, eq=False)
class PolynomialBasis:
    """Monomials of the conditioning variables, standardised with (weighted)
    training-sample means and standard deviations. Columns with zero training
    variance are dropped."""

    degree: int
    exps: list
    keep: np.ndarray
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X, degree: int, weights=None) -> "PolynomialBasis":
        M, exps = monomials(X, degree)
        w = np.ones(len(M)) if weights is None else np.asarray(weights, dtype=float)
        mean, scale = _wmean_std(M, w)
        tiny = 1e-12 * np.maximum(1.0, np.abs(mean))
        keep = scale > tiny
        if not keep.all():
            dropped = [exps[j] for j in np.flatnonzero(~keep)]
            warnings.warn(f"dropping zero-variance polynomial columns {dropped}", UserWarning, stacklevel=2)
        return cls(degree=degree, exps=exps, keep=keep, mean=mean[keep], scale=scale[keep])

    @property
    def n_features(self) -> int:
        return int(self.keep.sum())

    @property
    def feature_names(self) -> list[str]:
        names = []
        for e, k in zip(self.exps, self.keep):
            if k:
                names.append("*".join(f"x{v}^{p}" if p > 1 else f"x{v}" for v, p in enumerate(e) if p))
        return names

    def transform(self, X) -> np.ndarray:
        M, _ = monomials(X, self.degree)
        return (M[:, self.keep] - self.mean) / self.scale


def poly_features(X, degree: int, weights=None) -> tuple[np.ndarray, PolynomialBasis]:
    """Standardised polynomial design and the fitted basis that produced it."""
    basis = PolynomialBasis.fit(X, degree, weights)
    return basis.transform(X), basis
