"""Bayesian analysis of contingency tables with hierarchical log-linear models."""

from .graph import Graph, interaction_graph, is_decomposable, is_graphical, junction_tree
from .mc3 import ModelRecord, SearchConfig, mc3_run
from .model import (GeneratingClass, Model, PriorSpec, format_model, parse_bracket_notation,
                    parse_formula, parse_model)
from .posterior import find_post_cov, find_post_mean, gibbs_sampler
from .score import log_bayes_factor, log_marginal_likelihood
from .table import ContingencyTable, FactorSpec, load_czech, load_table, marginalize, read_table

__all__ = [
    "ContingencyTable", "FactorSpec", "GeneratingClass", "Graph", "Model", "ModelRecord",
    "PriorSpec", "SearchConfig", "find_post_cov", "find_post_mean", "format_model",
    "gibbs_sampler", "interaction_graph", "is_decomposable", "is_graphical", "junction_tree",
    "load_czech", "load_table", "log_bayes_factor", "log_marginal_likelihood", "marginalize",
    "mc3_run", "parse_bracket_notation", "parse_formula", "parse_model", "read_table",
]
