"""Confounded observational datasets from randomized trials, with ATE estimators and diagnostics."""

__version__ = "0.1.0"

from .data import TabularDataset, as_dataset, check_dataset, make_rng, substream, summary, validate  # noqa: E402
from .dgp import DgpSetting, dgp_confounding_function, generate, get_setting  # noqa: E402
from .sampling import (  # noqa: E402
    GentzelSampler,
    Logistic,
    PiecewiseBinary,
    RCTRejectionSampler,
    estimate_m_bound,
    gentzel_sample,
    rct_rejection_sample,
)

__all__ = [
    "DgpSetting",
    "GentzelSampler",
    "Logistic",
    "PiecewiseBinary",
    "RCTRejectionSampler",
    "TabularDataset",
    "as_dataset",
    "check_dataset",
    "dgp_confounding_function",
    "estimate_m_bound",
    "generate",
    "gentzel_sample",
    "get_setting",
    "make_rng",
    "rct_rejection_sample",
    "substream",
    "summary",
    "validate",
]
