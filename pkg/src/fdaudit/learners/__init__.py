"""Conditional-expectation learners used for cross-fitted nuisance estimates."""
from fdaudit.learners.basis import PolynomialBasis, exponents, monomials, poly_features
from fdaudit.learners.crossfit import CrossFitResult, NuisanceFit, cross_fit, fit_nuisance
from fdaudit.learners.lasso import LassoFit, fit_lasso, lambda_max, plugin_lambda
from fdaudit.learners.mlp import MlpFit, fit_mlp
from fdaudit.learners.spec import LearnerSpec, parse_penalty

__all__ = [
    "CrossFitResult", "LassoFit", "LearnerSpec", "MlpFit", "NuisanceFit", "PolynomialBasis",
    "cross_fit", "exponents", "fit_lasso", "fit_mlp", "fit_nuisance", "lambda_max",
    "monomials", "parse_penalty", "plugin_lambda", "poly_features",
]
