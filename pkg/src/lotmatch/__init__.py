"""Matched difference-in-differences evaluation of vacant-lot greening.

The pipeline builds surrounding-area covariates for vacant lots, fits a
logistic propensity model for greening, matches greened to ungreened lots
on the score, and estimates the greening effect on nearby crime with
within-pair difference-in-differences, overall and within subsets of pairs.
"""
from .datamodel import (
    Business, BlockGroup, CensusBlock, CrimeCategory, CrimeEvent, LayerKind, Lot, Status, ZonedLot,
    categorize_crime, parse_layer,
)
from .did import (
    CrimeIndex, DidEstimate, WindowCounts, did_estimate, matched_did, unmatched_did, window_counts,
)
from .features import COVARIATE_COLUMNS, ContextLayers, CovariateTable, build_covariates
from .geoindex import GridIndex, Projection, project
from .matcher import MatchedPair, balance_report, match_pairs, smd
from .moderation import SubgroupSpec, moderation_report
from .propensity import ClassifierMetrics, PropensityModel, evaluate, fit_logistic, fit_propensity, roc_curve

__version__ = "0.1.0"

__all__ = [
    "Business", "BlockGroup", "CensusBlock", "CrimeCategory", "CrimeEvent", "LayerKind", "Lot", "Status",
    "ZonedLot", "categorize_crime", "parse_layer",
    "CrimeIndex", "DidEstimate", "WindowCounts", "did_estimate", "matched_did", "unmatched_did", "window_counts",
    "COVARIATE_COLUMNS", "ContextLayers", "CovariateTable", "build_covariates",
    "GridIndex", "Projection", "project",
    "MatchedPair", "balance_report", "match_pairs", "smd",
    "SubgroupSpec", "moderation_report",
    "ClassifierMetrics", "PropensityModel", "evaluate", "fit_logistic", "fit_propensity", "roc_curve",
]
