"""Biased voter and biased 2-choices opinion dynamics on regular graphs."""

from .dynamics import AdversaryMode, BiasParams, OpinionState, Rule
from .graph import Graph, build_graph, second_eigenvalue

__all__ = [
    "AdversaryMode",
    "BiasParams",
    "Graph",
    "OpinionState",
    "Rule",
    "build_graph",
    "second_eigenvalue",
]
__version__ = "0.1.0"
