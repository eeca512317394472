"""Omitted-variable-bias audit and cross-fitted correction for first-difference
panel regressions."""

__version__ = "0.1.0"

from fdaudit.errors import (  # noqa: E402
    ConvergenceError,
    DivergenceError,
    FdAuditError,
    IdentificationError,
    NumericalError,
    RankDeficientError,
    UnbalancedPanelError,
    ValidationError,
    ZeroVarianceError,
)
from fdaudit.estimators import (  # noqa: E402
    balance_test,
    ddml_beta_d1,
    fd_ols,
    path_weights,
    placebo_test,
    stacked_ddml,
    stacked_fd_ols,
    yitzhaki_weights,
)
from fdaudit.learners import LearnerSpec  # noqa: E402
from fdaudit.panel import (  # noqa: E402
    FdView,
    PanelDataset,
    assign_folds,
    first_differences,
    load_panel,
    panel_from_frame,
)
from fdaudit.regress import hausman, wls  # noqa: E402

__all__ = [
    "ConvergenceError",
    "DivergenceError",
    "FdAuditError",
    "FdView",
    "IdentificationError",
    "LearnerSpec",
    "NumericalError",
    "PanelDataset",
    "RankDeficientError",
    "UnbalancedPanelError",
    "ValidationError",
    "ZeroVarianceError",
    "assign_folds",
    "balance_test",
    "ddml_beta_d1",
    "fd_ols",
    "first_differences",
    "hausman",
    "load_panel",
    "panel_from_frame",
    "path_weights",
    "placebo_test",
    "stacked_ddml",
    "stacked_fd_ols",
    "wls",
    "yitzhaki_weights",
]
