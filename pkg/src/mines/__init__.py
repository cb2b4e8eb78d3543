"""Inductive knowledge-graph link prediction with relational and homogeneous message passing."""

from .autodiff import Tape, Tensor, grad_check
from .estimator import MINESLinkPredictor
from .evaluation import EvalReport, auc_pr, evaluate, hits_at_k
from .kg_store import KnowledgeGraph, build_graph, load_triples, synthesize_dataset
from .layers import LayerStack, build_stack, forward_score, load_checkpoint, save_checkpoint, total_params
from .subgraph import Subgraph, extract_enclosing, extract_neighbor_enhanced, extract_subgraph
from .training import TrainConfig, train

__all__ = [
    "Tape", "Tensor", "grad_check", "MINESLinkPredictor", "EvalReport", "auc_pr", "evaluate", "hits_at_k",
    "KnowledgeGraph", "build_graph", "load_triples", "synthesize_dataset", "LayerStack", "build_stack",
    "forward_score", "load_checkpoint", "save_checkpoint", "total_params", "Subgraph", "extract_enclosing",
    "extract_neighbor_enhanced", "extract_subgraph", "TrainConfig", "train",
]
__version__ = "0.1.0"
