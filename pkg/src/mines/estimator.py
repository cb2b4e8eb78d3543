"""scikit-learn style wrapper around extraction, the layer stack and training."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .evaluation import EvalReport, auc_pr, check_relations, evaluate, score_triples
from .kg_store import KnowledgeGraph
from .layers import stack_forward
from .subgraph import NEIGHBOR_ENHANCED, extract_subgraph
from .training import TrainConfig, train
from .validation import check_graph, check_triples

__all__ = ["MINESLinkPredictor"]


class MINESLinkPredictor(BaseEstimator):
    """Inductive link predictor over relation-typed subgraphs.

    ``fit`` takes the training graph (a KnowledgeGraph or an ``(n, 3)`` array of
    integer triples). Scoring methods take triples plus the graph to extract
    their subgraphs from, which may hold entities never seen in training;
    only the relation ids must be shared.
    """

    def __init__(
        self,
        k=3,
        dim=32,
        spec="RGR",
        subgraph_mode=NEIGHBOR_ENHANCED,
        lr=0.001,
        batch_size=16,
        margin=10.0,
        dropout=0.5,
        epochs=50,
        neg_per_pos=1,
        early_stop_patience=10,
        homo_self_loops=True,
        activation="relu",
        grad_clip=None,
        random_state=0,
        threads=1,
    ):
        self.k = k
        self.dim = dim
        self.spec = spec
        self.subgraph_mode = subgraph_mode
        self.lr = lr
        self.batch_size = batch_size
        self.margin = margin
        self.dropout = dropout
        self.epochs = epochs
        self.neg_per_pos = neg_per_pos
        self.early_stop_patience = early_stop_patience
        self.homo_self_loops = homo_self_loops
        self.activation = activation
        self.grad_clip = grad_clip
        self.random_state = random_state
        self.threads = threads

    def _config(self) -> TrainConfig:
        params = self.get_params()
        seed = params.pop("random_state")
        params.pop("threads")
        return TrainConfig(seed=0 if seed is None else int(seed), **params).validate()

    def fit(self, X, y=None, valid_triples=None):
        cfg = self._config()
        graph = check_graph(X)
        valid = check_triples(valid_triples if valid_triples is not None else [], graph.n_entities,
                              graph.n_relations, allow_empty=True)
        self.stack_, self.history_ = train(graph, valid, cfg, threads=self.threads)
        self.graph_ = graph
        self.config_ = cfg.to_dict()
        self.n_relations_ = graph.n_relations
        self.n_params_ = self.stack_.n_params()
        return self

    def _target_graph(self, graph) -> KnowledgeGraph:
        return self.graph_ if graph is None else check_graph(graph, n_relations=None)

    def _triples(self, X, graph: KnowledgeGraph) -> np.ndarray:
        arr = check_triples(X, graph.n_entities)
        check_relations(self.stack_, graph, arr)
        return arr

    def decision_function(self, X, graph=None) -> np.ndarray:
        """Score each triple in ``X``; higher means more plausible."""
        check_is_fitted(self, "stack_")
        g = self._target_graph(graph)
        return score_triples(self.stack_, g, self._triples(X, g), self.subgraph_mode, self.threads)

    def predict(self, X, graph=None, threshold: float = 0.0) -> np.ndarray:
        return (self.decision_function(X, graph) > threshold).astype(np.int64)

    def transform(self, X, graph=None) -> np.ndarray:
        """Rows ``[pooled, head, tail, relation embedding]``, the inputs of the linear scorer."""
        check_is_fitted(self, "stack_")
        g = self._target_graph(graph)
        arr = self._triples(X, g)
        out = np.empty((len(arr), 4 * self.stack_.dim))
        for i, (h, r, t) in enumerate(arr.tolist()):
            embs, pooled = stack_forward(self.stack_, extract_subgraph(g, h, r, t, self.stack_.k, self.subgraph_mode))
            rel = self.stack_.relation_table.data[r]
            out[i] = np.concatenate([pooled.data[0], embs.data[0], embs.data[1], rel])
        return out

    def score(self, X, y=None, graph=None) -> float:
        """AUC-PR of the scores of ``X`` against binary labels ``y``.

        Without ``y`` every row of ``X`` is taken as a positive and paired with
        one sampled negative, as in ``evaluate``.
        """
        if y is None:
            return self.evaluate(X, graph, n_rank_negatives=1).auc_pr
        y = np.asarray(y).reshape(-1)
        s = self.decision_function(X, graph)
        if len(y) != len(s):
            raise ValueError(f"X has {len(s)} rows but y has {len(y)}")
        return auc_pr(s[y == 1], s[y != 1])

    def evaluate(self, X, graph=None, seed=None, n_rank_negatives=50, hits_k=10) -> EvalReport:
        check_is_fitted(self, "stack_")
        g = self._target_graph(graph)
        seed = self.random_state if seed is None else seed
        return evaluate(self.stack_, g, self._triples(X, g), self.subgraph_mode, int(seed or 0),
                        n_rank_negatives, hits_k, self.threads, self.config_)
