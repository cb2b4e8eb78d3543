"""Knowledge-graph triple storage, TSV loading, and synthetic planted-rule datasets."""

from __future__ import annotations

import os
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np


class TripleParseError(ValueError):
    """Raised for malformed triple files."""


class UnknownSymbolError(KeyError):
    """Raised when a triple names an entity or relation outside a fixed vocabulary."""

    def __str__(self):
        return str(self.args[0])


@dataclass(frozen=True, eq=False)
class KnowledgeGraph:
    """Immutable directed multigraph of ``(head, relation, tail)`` integer triples.

    ``entities`` and ``relations`` map names to dense IDs. ``out_adj[e]`` holds
    ``(relation, tail)`` pairs of edges leaving ``e``; ``in_adj[e]`` holds
    ``(relation, head)`` pairs of edges entering ``e``.
    """

    entities: Mapping[str, int]
    relations: Mapping[str, int]
    triples: np.ndarray
    out_adj: tuple
    in_adj: tuple
    duplicates: int = 0
    _neighbors: tuple = field(repr=False, default=())
    _triple_set: frozenset = field(repr=False, default=frozenset())

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    def __len__(self):
        return len(self.triples)

    def __contains__(self, triple) -> bool:
        h, r, t = triple
        return (int(h), int(r), int(t)) in self._triple_set

    @property
    def triple_set(self) -> frozenset:
        return self._triple_set

    def entity_names(self) -> list[str]:
        return _invert(self.entities)

    def relation_names(self) -> list[str]:
        return _invert(self.relations)

    def neighbors(self, e: int) -> frozenset:
        """Direction-blind neighbor set of entity ``e``."""
        _check_entity(self, e)
        return self._neighbors[e]

    def named_triples(self) -> list[tuple[str, str, str]]:
        ents, rels = self.entity_names(), self.relation_names()
        return [(ents[h], rels[r], ents[t]) for h, r, t in self.triples.tolist()]


def _invert(vocab: Mapping[str, int]) -> list[str]:
    names = [""] * len(vocab)
    for name, i in vocab.items():
        names[i] = name
    return names


def _check_entity(g: KnowledgeGraph, e) -> None:
    if not 0 <= int(e) < g.n_entities:
        raise IndexError(f"entity id {e} out of range [0, {g.n_entities})")


def build_graph(triples, n_entities: int, entities=None, relations=None) -> KnowledgeGraph:
    """Index an ``(n, 3)`` array of integer triples. Duplicate rows are dropped."""
    arr = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    n_rel = len(relations) if relations is not None else (int(arr[:, 1].max()) + 1 if len(arr) else 0)
    if entities is None:
        entities = {str(i): i for i in range(n_entities)}
    if relations is None:
        relations = {str(i): i for i in range(n_rel)}
    if len(arr) and (arr.min() < 0 or arr[:, [0, 2]].max() >= n_entities or arr[:, 1].max() >= n_rel):
        raise ValueError("triple ids out of vocabulary range")

    seen: dict[tuple[int, int, int], None] = {}
    for row in arr.tolist():
        seen.setdefault(tuple(row), None)
    unique = list(seen)
    out_adj = [[] for _ in range(n_entities)]
    in_adj = [[] for _ in range(n_entities)]
    nbrs = [set() for _ in range(n_entities)]
    for h, r, t in unique:
        out_adj[h].append((r, t))
        in_adj[t].append((r, h))
        nbrs[h].add(t)
        nbrs[t].add(h)
    return KnowledgeGraph(
        entities=dict(entities),
        relations=dict(relations),
        triples=np.array(unique, dtype=np.int64).reshape(-1, 3),
        out_adj=tuple(tuple(a) for a in out_adj),
        in_adj=tuple(tuple(a) for a in in_adj),
        duplicates=len(arr) - len(unique),
        _neighbors=tuple(frozenset(s) for s in nbrs),
        _triple_set=frozenset(unique),
    )


def parse_triple_lines(lines: Iterable[str], source: str = "<input>") -> list[tuple[str, str, str]]:
    out = []
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise TripleParseError(
                f"{source}:{lineno}: expected 3 tab-separated fields, got {len(fields)}"
            )
        out.append((fields[0], fields[1], fields[2]))
    return out


def graph_from_named(
    named: Sequence[tuple[str, str, str]],
    relations: Mapping[str, int] | None = None,
) -> KnowledgeGraph:
    """Build a graph from name triples, assigning IDs in first-appearance order.

    Passing ``relations`` fixes the relation vocabulary (needed for inductive
    test graphs, which must share relation IDs with the training graph); an
    unseen relation name then raises :class:`UnknownSymbolError`.
    """
    entities: dict[str, int] = {}
    rel_vocab: dict[str, int] = dict(relations) if relations is not None else {}
    ids = []
    for h, r, t in named:
        if r not in rel_vocab:
            if relations is not None:
                raise UnknownSymbolError(f"unknown relation {r!r}")
            rel_vocab[r] = len(rel_vocab)
        hi = entities.setdefault(h, len(entities))
        ti = entities.setdefault(t, len(entities))
        ids.append((hi, rel_vocab[r], ti))
    return build_graph(ids, len(entities), entities, rel_vocab)


def load_triples(path, relations: Mapping[str, int] | None = None) -> KnowledgeGraph:
    """Load a ``head<TAB>relation<TAB>tail`` file into a :class:`KnowledgeGraph`."""
    with open(path, encoding="utf-8") as fh:
        named = parse_triple_lines(fh, source=os.fspath(path))
    if not named:
        raise TripleParseError(f"{os.fspath(path)}: no triples")
    return graph_from_named(named, relations)


def encode_triples(named: Sequence[tuple[str, str, str]], g: KnowledgeGraph) -> np.ndarray:
    """Map name triples onto ``g``'s vocabularies; unknown names raise."""
    out = np.empty((len(named), 3), dtype=np.int64)
    for i, (h, r, t) in enumerate(named):
        for name, vocab, kind in ((h, g.entities, "entity"), (r, g.relations, "relation"), (t, g.entities, "entity")):
            if name not in vocab:
                raise UnknownSymbolError(f"unknown {kind} {name!r}")
        out[i] = (g.entities[h], g.relations[r], g.entities[t])
    return out


def read_target_triples(path, g: KnowledgeGraph) -> np.ndarray:
    """Read a target-triple file (e.g. valid.txt/test.txt) against ``g``'s vocabularies."""
    with open(path, encoding="utf-8") as fh:
        named = parse_triple_lines(fh, source=os.fspath(path))
    return encode_triples(named, g)


def format_triples(named: Iterable[tuple[str, str, str]]) -> str:
    return "".join(f"{h}\t{r}\t{t}\n" for h, r, t in named)


def write_triples(path, named: Iterable[tuple[str, str, str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_triples(named))


def undirected_neighbors(g: KnowledgeGraph, e: int) -> frozenset:
    return g.neighbors(e)


def k_hop_set(g: KnowledgeGraph, e: int, k: int) -> dict[int, int]:
    """Undirected BFS distances from ``e``, truncated at ``k`` hops (``e`` itself at 0)."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    _check_entity(g, e)
    e = int(e)
    dist = {e: 0}
    frontier = deque([e])
    nbrs = g._neighbors
    while frontier:
        u = frontier.popleft()
        du = dist[u]
        if du == k:
            continue
        for v in nbrs[u]:
            if v not in dist:
                dist[v] = du + 1
                frontier.append(v)
    return dist


# ---------------------------------------------------------------------------
# synthetic planted-rule datasets


@dataclass(frozen=True)
class PlantedRule:
    """``head(x, z) <=> exists y: body[0](x, y) and body[1](y, z)``."""

    body: tuple[str, str] = ("r1", "r2")
    head: str = "r_target"
    noise_relations: tuple[str, ...] = ("n1", "n2")
    body_edges_per_entity: float = 1.0
    noise_edges_per_entity: float = 0.5


@dataclass(frozen=True)
class SyntheticDataset:
    """Train graph plus held-out validation targets, and a disjoint test graph plus test targets."""

    train: KnowledgeGraph
    valid: np.ndarray
    test: KnowledgeGraph
    test_targets: np.ndarray

    def write(self, directory) -> None:
        """Write ``train.txt``, ``valid.txt``, ``test_graph.txt`` and ``test.txt``."""
        os.makedirs(directory, exist_ok=True)
        write_triples(os.path.join(directory, "train.txt"), self.train.named_triples())
        write_triples(os.path.join(directory, "valid.txt"), _names(self.valid, self.train))
        write_triples(os.path.join(directory, "test_graph.txt"), self.test.named_triples())
        write_triples(os.path.join(directory, "test.txt"), _names(self.test_targets, self.test))


def _names(arr: np.ndarray, g: KnowledgeGraph) -> list[tuple[str, str, str]]:
    ents, rels = g.entity_names(), g.relation_names()
    return [(ents[h], rels[r], ents[t]) for h, r, t in arr.tolist()]


def _planted_split(rng, prefix: str, n: int, rule: PlantedRule, holdout: float):
    rel_names = [*rule.body, *rule.noise_relations, rule.head]
    names = [f"{prefix}{i}" for i in range(n)]
    n_body = max(1, int(round(rule.body_edges_per_entity * n)))
    n_noise = max(1, int(round(rule.noise_edges_per_entity * n)))

    def sample_edges(count):
        edges = set()
        while len(edges) < count:
            a, b = rng.integers(0, n, size=2)
            if a != b:
                edges.add((int(a), int(b)))
        return sorted(edges)

    body = [sample_edges(n_body), sample_edges(n_body)]
    first_out: dict[int, list[int]] = {}
    for x, y in body[0]:
        first_out.setdefault(x, []).append(y)
    second_out: dict[int, list[int]] = {}
    for y, z in body[1]:
        second_out.setdefault(y, []).append(z)
    heads = sorted({(x, z) for x, ys in first_out.items() for y in ys for z in second_out.get(y, ())})

    named = []
    for rel, edges in zip(rule.body, body):
        named += [(names[a], rel, names[b]) for a, b in edges]
    for rel in rule.noise_relations:
        named += [(names[a], rel, names[b]) for a, b in sample_edges(n_noise)]

    order = rng.permutation(len(heads))
    n_hold = int(round(holdout * len(heads)))
    held = [heads[i] for i in sorted(order[:n_hold].tolist())]
    kept = [heads[i] for i in sorted(order[n_hold:].tolist())]
    named += [(names[x], rule.head, names[z]) for x, z in kept]
    return named, [(names[x], rule.head, names[z]) for x, z in held], rel_names


def synthesize_dataset(
    seed: int,
    n_entities: int = 200,
    rule: PlantedRule | None = None,
    n_test_entities: int | None = None,
    holdout: float = 0.3,
) -> SyntheticDataset:
    """Generate an inductive split where the target relation obeys a planted composition rule.

    Train and test graphs use disjoint entity names (``e*`` vs ``u*``) and the
    same relation vocabulary. A ``holdout`` fraction of each side's rule-head
    triples is withheld from the graph as validation / test targets, so every
    target has its witnessing two-hop path in the graph it is scored against.
    """
    rule = rule or PlantedRule()
    n_test = n_entities // 2 if n_test_entities is None else n_test_entities
    if n_entities < 20 or n_test < 20:
        raise ValueError("need at least 20 entities per graph to realize the planted rule")
    rng = np.random.default_rng(seed)
    train_named, valid_named, rel_names = _planted_split(rng, "e", n_entities, rule, holdout)
    test_named, test_targets, _ = _planted_split(rng, "u", n_test, rule, holdout)
    if not valid_named or not test_targets:
        raise ValueError("planted rule produced no held-out targets; increase n_entities")
    rel_vocab = {name: i for i, name in enumerate(rel_names)}
    train = graph_from_named(train_named, rel_vocab)
    test = graph_from_named(test_named, rel_vocab)
    return SyntheticDataset(train, encode_triples(valid_named, train), test, encode_triples(test_targets, test))
