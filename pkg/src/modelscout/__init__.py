"""Rank trained models by how well their training data covers an unlabeled target."""

from .adaptivity import IndexConfig, TwoLevelIndex, build_index, load_index, query, save_index
from .dataio import BinningScheme, DataError, Dataset, ProbDistribution, fit_binning, load_csv
from .evalbench import BenchConfig, BenchReport, BenchScenario, pearson, run_benchmark, top_k_error
from .jsdlsh import JsdLshFamily, JsdSignature, collision_probability_curve, hash_distribution, new_family
from .metrics import js_divergence, kl_divergence, l2_center_distance
from .minhash import MinHashFamily, MinSignature, jaccard_estimate, minhash_set
from .strategies import (ModelEntry, NearestCentroid, Ranking, rank_by_adaptivity, rank_by_js,
                         rank_by_l2, rank_by_source_accuracy, rank_by_voting, top_k)

__version__ = "0.1.0"

__all__ = [
    "BenchConfig", "BenchReport", "BenchScenario", "BinningScheme", "DataError", "Dataset",
    "IndexConfig", "JsdLshFamily", "JsdSignature", "MinHashFamily", "MinSignature", "ModelEntry",
    "NearestCentroid", "ProbDistribution", "Ranking", "TwoLevelIndex", "build_index",
    "collision_probability_curve", "fit_binning", "hash_distribution", "jaccard_estimate",
    "js_divergence", "kl_divergence", "l2_center_distance", "load_csv", "load_index", "minhash_set",
    "new_family", "pearson", "query", "rank_by_adaptivity", "rank_by_js", "rank_by_l2",
    "rank_by_source_accuracy", "rank_by_voting", "run_benchmark", "save_index", "top_k",
    "top_k_error",
]
