"""Doubly robust optimal treatment rules for censored outcomes, fitted on
pooled data or by privacy-preserving distributed regression."""

from .core import Dataset, DesignMatrices, FeatureExpr, ModelSpec, SubjectRecord, build_design, expand_features
from .dwsurv import FittedRule, blip_value, decide, fit_pooled
from .federation import CombinedFit, SitePayload, combine, read_payload, site_summarize, write_payload
from .weights import WeightSpec, WeightVector, compute_weights, estimate_nuisances

__version__ = "0.1.0"

__all__ = [
    "Dataset", "DesignMatrices", "FeatureExpr", "ModelSpec", "SubjectRecord", "build_design",
    "expand_features", "FittedRule", "blip_value", "decide", "fit_pooled", "CombinedFit",
    "SitePayload", "combine", "read_payload", "site_summarize", "write_payload", "WeightSpec",
    "WeightVector", "compute_weights", "estimate_nuisances",
]
