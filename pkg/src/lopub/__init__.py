"""Locally private collection and synthetic publication of categorical data.

Clients encode records as randomized Bloom-filter bit strings; the server
estimates joint distributions (EM, non-negative Lasso, or a hybrid of the
two), learns an attribute dependency structure, and samples a synthetic
dataset that preserves the learned distributions.
"""

from lopub.schema import AttributeDomain, Schema, Dataset, load_schema, load_dataset
from lopub.encode import BloomParams, bloom_params, privacy_epsilon, encode_dataset, ReportSet
from lopub.estimate import JointDistribution, em_jd, lasso_jd, hybrid_jd
from lopub.reduce import DependencyGraph, JunctionTree, build_dependency_graph, junction_tree
from lopub.synthesize import synthesize
from lopub.metrics import avd, correlation_rates

__version__ = "0.1.0"

__all__ = [
    "AttributeDomain",
    "Schema",
    "Dataset",
    "load_schema",
    "load_dataset",
    "BloomParams",
    "bloom_params",
    "privacy_epsilon",
    "encode_dataset",
    "ReportSet",
    "JointDistribution",
    "em_jd",
    "lasso_jd",
    "hybrid_jd",
    "DependencyGraph",
    "JunctionTree",
    "build_dependency_graph",
    "junction_tree",
    "synthesize",
    "avd",
    "correlation_rates",
]
