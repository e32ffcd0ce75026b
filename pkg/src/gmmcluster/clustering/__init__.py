"""Partial clusterings, refinement, tree search and selection."""

from .frobenius import FrobeniusConfig, frobenius_split, quadratic_features
from .partial import ClusterQuality, PartialClustering, interval_split, quality, threshold_error_rates
from .refine import (RefinementConfig, deviation_directions, net_vectors, propose_centered,
                     propose_shared_cov, refine_centered, refine_shared_cov, SplitScorer, split_gain)
from .select import SelectionConfig, SelectionResult, fit_component, fit_mixture, scheffe_tournament, select_clustering
from .tree import CandidateSet, tree_search

__all__ = [
    "CandidateSet", "ClusterQuality", "FrobeniusConfig", "PartialClustering", "RefinementConfig",
    "SelectionConfig", "SelectionResult", "deviation_directions", "fit_component", "fit_mixture",
    "frobenius_split", "interval_split", "net_vectors", "propose_centered", "propose_shared_cov",
    "quadratic_features", "quality", "refine_centered", "refine_shared_cov", "scheffe_tournament",
    "select_clustering", "split_gain", "SplitScorer", "threshold_error_rates", "tree_search",
]
