"""Enclosing and neighbor-enhanced subgraph extraction with double-radius labels."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .kg_store import KnowledgeGraph, k_hop_set

ENCLOSING = "enclosing"
NEIGHBOR_ENHANCED = "neighbor_enhanced"
MODES = (ENCLOSING, NEIGHBOR_ENHANCED)


@dataclass(frozen=True, eq=False)
class Subgraph:
    """Local graph around a target triple.

    Local node 0 is the target head and node 1 the target tail. ``edges`` are
    ``(local_head, relation, local_tail)`` rows with the target triple removed.
    ``labels[i]`` is ``(d_head, d_tail)`` where ``k + 1`` marks "unreachable
    within k hops". ``homo_pairs`` lists the deduplicated undirected node pairs
    ``(i, j)``, ``i <= j``, touched by some edge.
    """

    nodes: np.ndarray
    edges: np.ndarray
    labels: np.ndarray
    target_relation: int
    k: int
    homo_pairs: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def sentinel(self) -> int:
        return self.k + 1

    def homo_adj(self, self_loops: bool = True) -> list[set[int]]:
        """Undirected, unlabeled adjacency sets; reflexive when ``self_loops``."""
        adj = [({i} if self_loops else set()) for i in range(self.n_nodes)]
        for i, j in self.homo_pairs.tolist():
            adj[i].add(j)
            adj[j].add(i)
        return adj

    def with_inverse_edges(self, n_relations: int) -> "Subgraph":
        """Copy whose edge set also holds ``(t, r + n_relations, h)`` for every edge."""
        inv = self.edges[:, [2, 1, 0]].copy()
        inv[:, 1] += n_relations
        return Subgraph(self.nodes, np.vstack([self.edges, inv]), self.labels, self.target_relation, self.k, self.homo_pairs)


def _local_bfs(adj: list[list[int]], src: int, blocked: int, k: int) -> np.ndarray:
    """Undirected hop counts from ``src`` avoiding ``blocked``; > k becomes k + 1."""
    dist = np.full(len(adj), k + 1, dtype=np.int64)
    dist[src] = 0
    queue = deque([src])
    while queue:
        u = queue.popleft()
        if dist[u] == k:
            continue
        for v in adj[u]:
            if v != blocked and dist[v] == k + 1:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def double_radius_label(sub: Subgraph, k: int) -> np.ndarray:
    """``(d(i, head), d(i, tail))`` per node; each distance ignores the opposite target.

    Distances beyond ``k`` (or unreachable) map to the sentinel ``k + 1``. The
    head is forced to ``(0, 1)`` and the tail to ``(1, 0)``.
    """
    return _labels(sub.n_nodes, sub.edges, k)


def _labels(n: int, edges: np.ndarray, k: int) -> np.ndarray:
    adj: list[list[int]] = [[] for _ in range(n)]
    for a, _, b in edges.tolist():
        if a != b:
            adj[a].append(b)
            adj[b].append(a)
    labels = np.stack([_local_bfs(adj, 0, 1, k), _local_bfs(adj, 1, 0, k)], axis=1)
    labels[0] = (0, 1)
    labels[1] = (1, 0)
    return labels


def _assemble(g: KnowledgeGraph, h: int, r_t: int, t: int, others, k: int, prune: bool) -> Subgraph:
    others = sorted(set(others) - {h, t})
    nodes = [h, t] + others
    index = {e: i for i, e in enumerate(nodes)}
    if h == t:
        # a self-loop target keeps a detached copy of the entity as local node 1
        index[h] = 0

    def induced(node_ids, idx):
        rows = []
        for u in node_ids:
            iu = idx[u]
            for r, v in g.out_adj[u]:
                iv = idx.get(v)
                if iv is None or (u == h and r == r_t and v == t):
                    continue
                rows.append((iu, r, iv))
        return np.array(rows, dtype=np.int64).reshape(-1, 3)

    unique_nodes = nodes if h != t else [h] + others
    edges = induced(unique_nodes, index)
    labels = _labels(len(nodes), edges, k)

    if prune:
        keep = [0, 1] + [i for i in range(2, len(nodes)) if labels[i].min() <= k]
        if len(keep) < len(nodes):
            nodes = [nodes[i] for i in keep]
            labels = labels[keep]
            index = {e: i for i, e in enumerate(nodes)}
            if h == t:
                index[h] = 0
            edges = induced(nodes if h != t else [h] + nodes[2:], index)

    pairs = {(min(a, b), max(a, b)) for a, _, b in edges.tolist()}
    homo = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)
    return Subgraph(np.array(nodes, dtype=np.int64), edges, labels, int(r_t), k, homo)


def extract_enclosing(g: KnowledgeGraph, h: int, r_t: int, t: int, k: int) -> Subgraph:
    """Nodes within ``k`` hops of both targets, with nodes left beyond ``k`` of both pruned."""
    common = k_hop_set(g, h, k).keys() & k_hop_set(g, t, k).keys()
    return _assemble(g, int(h), int(r_t), int(t), common, k, prune=True)


def extract_neighbor_enhanced(g: KnowledgeGraph, h: int, r_t: int, t: int, k: int) -> Subgraph:
    """Nodes within ``k`` hops of either target and all edges induced on them."""
    union = k_hop_set(g, h, k).keys() | k_hop_set(g, t, k).keys()
    return _assemble(g, int(h), int(r_t), int(t), union, k, prune=False)


def extract_subgraph(g: KnowledgeGraph, h: int, r_t: int, t: int, k: int, mode: str = NEIGHBOR_ENHANCED) -> Subgraph:
    if not 0 <= int(r_t) < g.n_relations:
        raise IndexError(f"relation id {r_t} out of range [0, {g.n_relations})")
    if mode == ENCLOSING:
        return extract_enclosing(g, h, r_t, t, k)
    if mode == NEIGHBOR_ENHANCED:
        return extract_neighbor_enhanced(g, h, r_t, t, k)
    raise ValueError(f"unknown subgraph mode {mode!r}; expected one of {MODES}")


def one_hot_init(labels, k: int) -> np.ndarray:
    """Concatenated one-hot encodings of both distance components, width ``2 * (k + 2)``."""
    labels = np.asarray(labels, dtype=np.int64).reshape(-1, 2)
    if labels.size and (labels.min() < 0 or labels.max() > k + 1):
        raise ValueError(f"label component outside [0, {k + 1}]")
    width = k + 2
    feats = np.zeros((len(labels), 2 * width))
    rows = np.arange(len(labels))
    feats[rows, labels[:, 0]] = 1.0
    feats[rows, width + labels[:, 1]] = 1.0
    return feats


def format_subgraph(sub: Subgraph, g: KnowledgeGraph, title: str = "") -> str:
    """Plain-text edge list and label table, using entity and relation names."""
    ents, rels = g.entity_names(), g.relation_names()

    def rel_name(r):
        return rels[r] if r < len(rels) else f"inv:{rels[r - len(rels)]}"

    lines = []
    if title:
        lines.append(f"== {title} ==")
    lines.append(f"nodes: {sub.n_nodes}  edges: {len(sub.edges)}")
    lines.append("edges:")
    for a, r, b in sub.edges.tolist():
        lines.append(f"  {ents[sub.nodes[a]]}\t{rel_name(r)}\t{ents[sub.nodes[b]]}")
    lines.append("labels (node\td_head\td_tail):")
    for i, (e, (dh, dt)) in enumerate(zip(sub.nodes.tolist(), sub.labels.tolist())):
        role = " [head]" if i == 0 else " [tail]" if i == 1 else ""
        lines.append(f"  {ents[e]}{role}\t{dh}\t{dt}")
    return "\n".join(lines)
