"""Race-proxy models, disparity estimators, and consistency diagnostics.

The package provides three proxy families behind one interface (BISG,
contextual BISG, and a learned contextual proxy), the weighted and ratio
positive-rate estimators, calibration-style consistency diagnostics, and a
synthetic-population simulator whose enumerated joint tables serve as exact
oracles for all of them.
"""

from .bisg import BisgProxy
from .cbisg import (
    ALPHA_FLOOR,
    CbisgProxy,
    DEFAULT_ETA_GRID,
    DirichletPosterior,
    fit_posterior,
    posterior_point_estimate,
    tune_eta,
)
from .diagnostics import (
    ConsistencyReport,
    ProfileBin,
    binned_violation_profile,
    bound_sweep,
    consistency_report,
    consistency_violation,
    implied_violation_bound,
    proxy_context_means,
    sufficient_violation_bound,
    weighted_bias_oracle,
)
from .domain import (
    AttributedRecord,
    ContextualProxy,
    RaceDistribution,
    RaceSet,
    l1_distance,
    normalize,
)
from .estimators import (
    DisparityReport,
    bayes_composition,
    bayes_estimate,
    bayes_estimates,
    build_report,
    estimate_report,
    true_positive_rate,
    weighted_composition,
    weighted_estimate,
)
from .learner import SoftmaxRegression, gradient_check, softmax
from .micsg import FeatureLayout, MicsgProxy
from .simulator import (
    ConstantContextProxy,
    DgpConfig,
    JointTable,
    MixtureProxy,
    build_joint,
    calibrated_proxy,
    conditional_proxy,
    mean_consistent_proxy,
    random_dgp,
    sample_per_cell,
    sample_population,
    smooth_dgp,
)
from .tables import (
    GeoTable,
    SupplementalDataset,
    SurnameTable,
    group_counts,
    load_geo_table,
    load_supplemental,
    load_surname_table,
    split_dataset,
    standardize_covariates,
    apply_standardization,
)

__version__ = "0.1.0"

__all__ = [
    "ALPHA_FLOOR",
    "AttributedRecord",
    "BisgProxy",
    "CbisgProxy",
    "ConstantContextProxy",
    "ConsistencyReport",
    "ContextualProxy",
    "DEFAULT_ETA_GRID",
    "DgpConfig",
    "DirichletPosterior",
    "DisparityReport",
    "FeatureLayout",
    "GeoTable",
    "JointTable",
    "MicsgProxy",
    "MixtureProxy",
    "ProfileBin",
    "RaceDistribution",
    "RaceSet",
    "SoftmaxRegression",
    "SupplementalDataset",
    "SurnameTable",
    "apply_standardization",
    "bayes_composition",
    "bayes_estimate",
    "bayes_estimates",
    "binned_violation_profile",
    "bound_sweep",
    "build_joint",
    "build_report",
    "calibrated_proxy",
    "conditional_proxy",
    "consistency_report",
    "consistency_violation",
    "estimate_report",
    "fit_posterior",
    "gradient_check",
    "group_counts",
    "implied_violation_bound",
    "l1_distance",
    "load_geo_table",
    "load_supplemental",
    "load_surname_table",
    "mean_consistent_proxy",
    "normalize",
    "posterior_point_estimate",
    "proxy_context_means",
    "random_dgp",
    "sample_per_cell",
    "sample_population",
    "smooth_dgp",
    "softmax",
    "split_dataset",
    "standardize_covariates",
    "sufficient_violation_bound",
    "true_positive_rate",
    "tune_eta",
    "weighted_bias_oracle",
    "weighted_composition",
    "weighted_estimate",
]
