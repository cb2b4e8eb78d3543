"""AUC-PR and Hits@k evaluation of a trained stack on an (inductive) test graph."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .kg_store import KnowledgeGraph
from .layers import LayerStack, forward_score
from .sampling import rng_stream, sample_negative
from .subgraph import NEIGHBOR_ENHANCED, extract_subgraph


def auc_pr(pos_scores, neg_scores) -> float:
    """Average precision of positives against negatives; ties rank positives last."""
    pos = np.asarray(pos_scores, dtype=np.float64).reshape(-1)
    neg = np.asarray(neg_scores, dtype=np.float64).reshape(-1)
    if pos.size == 0 or neg.size == 0:
        raise ValueError("auc_pr needs at least one positive and one negative score")
    scores = np.concatenate([pos, neg])
    is_pos = np.concatenate([np.ones(pos.size), np.zeros(neg.size)])
    # primary key: score descending; secondary: negatives before positives
    order = np.lexsort((is_pos, -scores))
    hits = is_pos[order]
    ranks = np.nonzero(hits)[0] + 1
    return float(np.mean(np.arange(1, pos.size + 1) / ranks))


def pessimistic_rank(target_score: float, negative_scores) -> int:
    negs = np.asarray(negative_scores, dtype=np.float64)
    return 1 + int(np.count_nonzero(negs >= target_score))


def hits_at_k(target_score: float, negative_scores, k: int = 10) -> int:
    """1 if the target ranks within the top ``k`` among its negatives (ties count against it)."""
    if len(negative_scores) == 0:
        raise ValueError("hits_at_k needs at least one negative score")
    return int(pessimistic_rank(target_score, negative_scores) <= k)


@dataclass
class TripleRecord:
    triple: list[int]
    score: float
    negative: list[int]
    negative_score: float
    rank_negatives: list[list[int]]
    rank_negative_scores: list[float]
    rank: int


@dataclass
class EvalReport:
    records: list[TripleRecord]
    auc_pr: float
    hits_at_k: float
    k: int
    seed: int
    config: dict = field(default_factory=dict)

    def recompute(self) -> tuple[float, float]:
        """Aggregates recomputed from the per-triple records."""
        ap = auc_pr([r.score for r in self.records], [r.negative_score for r in self.records])
        hits = float(np.mean([r.rank <= self.k for r in self.records]))
        return ap, hits

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def summary_tsv(self, dataset: str = "") -> str:
        return f"dataset\tauc_pr\thits@{self.k}\n{dataset}\t{self.auc_pr:.6f}\t{self.hits_at_k:.6f}\n"


def score_triples(
    stack: LayerStack,
    graph: KnowledgeGraph,
    triples,
    mode: str = NEIGHBOR_ENHANCED,
    threads: int = 1,
) -> np.ndarray:
    """Inference scores of ``triples``, each on its own subgraph extracted from ``graph``."""
    triples = [tuple(int(x) for x in t) for t in np.asarray(triples).reshape(-1, 3)]

    def one(t):
        h, r, tl = t
        return forward_score(stack, extract_subgraph(graph, h, r, tl, stack.k, mode)).item()

    if threads > 1 and len(triples) > 1:
        with ThreadPoolExecutor(threads) as pool:
            return np.array(list(pool.map(one, triples)), dtype=np.float64)
    return np.array([one(t) for t in triples], dtype=np.float64)


def check_relations(stack: LayerStack, graph: KnowledgeGraph, triples: np.ndarray) -> None:
    names = graph.relation_names()
    for r in np.unique(triples[:, 1]).tolist():
        if not 0 <= r < stack.n_relations:
            label = names[r] if 0 <= r < len(names) else str(r)
            raise ValueError(f"relation {label!r} is not in the model's training vocabulary")


def evaluate(
    stack: LayerStack,
    test_graph: KnowledgeGraph,
    test_triples,
    mode: str = NEIGHBOR_ENHANCED,
    seed: int = 0,
    n_rank_negatives: int = 50,
    hits_k: int = 10,
    threads: int = 1,
    config: dict | None = None,
) -> EvalReport:
    """Score each test triple against one sampled negative (AUC-PR) and ``n_rank_negatives`` (Hits@k).

    Negatives corrupt the head or tail with a random test-graph entity and are
    filtered against the test graph and the test triples themselves.
    """
    triples = np.asarray(test_triples, dtype=np.int64).reshape(-1, 3)
    if len(triples) == 0:
        raise ValueError("no test triples to evaluate")
    check_relations(stack, test_graph, triples)
    known = set(test_graph.triple_set) | {tuple(t) for t in triples.tolist()}
    rng = rng_stream(seed, "eval")
    n = test_graph.n_entities
    cls_negs, rank_negs = [], []
    for t in triples.tolist():
        cls_negs.append(sample_negative(n, t, rng, known))
        rank_negs.append([sample_negative(n, t, rng, known) for _ in range(n_rank_negatives)])

    flat = [tuple(t) for t in triples.tolist()] + cls_negs + [x for negs in rank_negs for x in negs]
    scores = score_triples(stack, test_graph, flat, mode, threads)
    m = len(triples)
    pos_s, cls_s = scores[:m], scores[m:2 * m]
    rank_s = scores[2 * m:].reshape(m, n_rank_negatives)

    records = []
    for i, t in enumerate(triples.tolist()):
        records.append(TripleRecord(
            triple=t,
            score=float(pos_s[i]),
            negative=list(cls_negs[i]),
            negative_score=float(cls_s[i]),
            rank_negatives=[list(x) for x in rank_negs[i]],
            rank_negative_scores=rank_s[i].tolist(),
            rank=pessimistic_rank(pos_s[i], rank_s[i]),
        ))
    hits = float(np.mean([r.rank <= hits_k for r in records]))
    return EvalReport(records, auc_pr(pos_s, cls_s), hits, hits_k, int(seed), dict(config or {}))
