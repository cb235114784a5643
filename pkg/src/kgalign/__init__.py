"""kgalign: cross-lingual KG entity alignment with joint KG+text embeddings."""

from .config import NeighborQuery, OptimizerConfig, PipelineConfig
from .kg import KnowledgeGraph, build_graph_structure, load_kg, relation_stats

__all__ = [
    "KnowledgeGraph",
    "NeighborQuery",
    "OptimizerConfig",
    "PipelineConfig",
    "build_graph_structure",
    "load_kg",
    "relation_stats",
]

__version__ = "0.1.0"
