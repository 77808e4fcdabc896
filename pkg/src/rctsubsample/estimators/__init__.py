"""ATE estimators, nuisance learners and cross-fitting."""

from .ate import (
    ESTIMATOR_NAMES,
    DifferenceInMeans,
    EstimateRecord,
    ExactBackdoor,
    NuisanceEstimates,
    ParametricBackdoor,
    aiptw_scores,
    diff_in_means,
    exact_backdoor_binary,
    parametric_backdoor,
    tau_aiptw,
    tau_dml,
    tau_iptw,
    tau_q,
)
from .crossfit import CrossFitATE, crossfit_nuisances
from .learners import (
    BaseLearnerSpec,
    ElasticNetLogisticRegression,
    ElasticNetLogisticRegressionCV,
    GradientBoostedTreesClassifier,
    fit_base_learner,
)

__all__ = [
    "BaseLearnerSpec",
    "CrossFitATE",
    "DifferenceInMeans",
    "ESTIMATOR_NAMES",
    "ElasticNetLogisticRegression",
    "ElasticNetLogisticRegressionCV",
    "EstimateRecord",
    "ExactBackdoor",
    "GradientBoostedTreesClassifier",
    "NuisanceEstimates",
    "ParametricBackdoor",
    "aiptw_scores",
    "crossfit_nuisances",
    "diff_in_means",
    "exact_backdoor_binary",
    "fit_base_learner",
    "parametric_backdoor",
    "tau_aiptw",
    "tau_dml",
    "tau_iptw",
    "tau_q",
]
