"""FD regressions, the balancing diagnostic, path and derivative weights,
and the cross-fitted corrections."""
from fdaudit.estimators.ddml import DdmlResult, PlaceboResult, ddml_beta_d1, placebo_test, stacked_ddml
from fdaudit.estimators.diagnostics import (
    BalanceResult,
    PathWeights,
    balance_test,
    fd_ols,
    path_weight_moments,
    path_weights,
    stacked_fd_ols,
)
from fdaudit.estimators.weights import YitzhakiWeightGrid, derivative_weights, yitzhaki_weights

__all__ = [
    "BalanceResult", "DdmlResult", "PathWeights", "PlaceboResult", "YitzhakiWeightGrid",
    "balance_test", "ddml_beta_d1", "derivative_weights", "fd_ols", "path_weight_moments",
    "path_weights", "placebo_test", "stacked_ddml", "stacked_fd_ols", "yitzhaki_weights",
]
