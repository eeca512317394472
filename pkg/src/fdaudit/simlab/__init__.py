from fdaudit.simlab.dgp import (
    ASSUMPTIONS,
    TREATMENT_LAWS,
    DgpSpec,
    Truth,
    generate,
    load_dgp_spec,
    true_nuisances,
    treatment_moments,
)
from fdaudit.simlab.oracle import (
    COMPATIBLE,
    DEFAULT_DGPS,
    THEOREMS,
    MonteCarloReport,
    beta_d1_target,
    oracle_target,
    ovb_target,
    path_weight_target,
    run_oracle,
)

__all__ = [
    "ASSUMPTIONS",
    "COMPATIBLE",
    "DEFAULT_DGPS",
    "THEOREMS",
    "TREATMENT_LAWS",
    "DgpSpec",
    "MonteCarloReport",
    "Truth",
    "beta_d1_target",
    "generate",
    "load_dgp_spec",
    "oracle_target",
    "ovb_target",
    "path_weight_target",
    "run_oracle",
    "true_nuisances",
    "treatment_moments",
]
