"""Independent reference implementations used as test oracles."""

import itertools

import networkx as nx
import numpy as np


def _undirected(triples, nodes=None):
    g = nx.Graph()
    if nodes is not None:
        g.add_nodes_from(nodes)
    g.add_edges_from((h, t) for h, _, t in triples)
    return g


def brute_subgraph(triples, n_entities, h, r_t, t, k, mode):
    """Node set, edge set and labels (all keyed by global entity id) by full-graph BFS and set algebra."""
    full = _undirected(triples, range(n_entities))
    dh = nx.single_source_shortest_path_length(full, h)
    dt = nx.single_source_shortest_path_length(full, t)
    inf = float("inf")
    if mode == "enclosing":
        nodes = {e for e in range(n_entities) if dh.get(e, inf) <= k and dt.get(e, inf) <= k}
    else:
        nodes = {e for e in range(n_entities) if dh.get(e, inf) <= k or dt.get(e, inf) <= k}
    nodes |= {h, t}

    def induced(ns):
        return {(a, r, b) for a, r, b in triples if a in ns and b in ns and (a, r, b) != (h, r_t, t)}

    def labels(ns, edges):
        sub = _undirected(edges, ns)
        out = {}
        without_t = sub.copy()
        without_h = sub.copy()
        if h != t:
            without_t.remove_node(t)
            without_h.remove_node(h)
        lh = nx.single_source_shortest_path_length(without_t, h) if h in without_t else {}
        lt = nx.single_source_shortest_path_length(without_h, t) if h != t else {t: 0}
        for e in ns:
            a, b = lh.get(e, k + 1), lt.get(e, k + 1)
            out[e] = (min(a, k + 1), min(b, k + 1))
        out[h] = (0, 1)
        if h != t:
            out[t] = (1, 0)
        return out

    edges = induced(nodes)
    labs = labels(nodes, edges)
    if mode == "enclosing":
        nodes = {e for e in nodes if e in (h, t) or min(labs[e]) <= k}
        edges = induced(nodes)
        labs = {e: labs[e] for e in nodes}
    return nodes, edges, labs


def brute_average_precision(pos, neg):
    """Step-integrated precision-recall curve over every threshold, pessimistic on ties.

    Walks candidate thresholds from high to low; at a tied score the negatives
    are admitted before the positives, then each newly admitted positive adds
    ``precision * (1 / n_pos)`` of recall.
    """
    items = [(s, 1) for s in pos] + [(s, 0) for s in neg]
    n_pos = len(pos)
    area = 0.0
    tp = fp = 0
    for score in sorted({s for s, _ in items}, reverse=True):
        group = [lab for s, lab in items if s == score]
        fp += group.count(0)
        for _ in range(group.count(1)):
            tp += 1
            area += (tp / (tp + fp)) / n_pos
    return area


def random_graph(rng, n_nodes, n_relations, n_edges):
    triples = set()
    for _ in range(n_edges):
        h, t = rng.integers(0, n_nodes, size=2)
        triples.add((int(h), int(rng.integers(0, n_relations)), int(t)))
    return sorted(triples)


def all_pairs(n):
    return itertools.product(range(n), range(n))


def finite_diff(f, x: np.ndarray, step=1e-5):
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = f()
        flat[i] = orig - step
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * step)
    return grad
