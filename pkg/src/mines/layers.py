"""Message-passing layers, the layer stack, triple scoring, and checkpoints."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .autodiff import Tape, Tensor
from .subgraph import Subgraph, one_hot_init

CHECKPOINT_FORMAT = "mines-checkpoint"
CHECKPOINT_VERSION = 1

_SPEC_RE = re.compile(r"^(Bi-)?([RG]+)$")


class CheckpointError(ValueError):
    pass


def parse_spec(spec: str) -> tuple[str, bool]:
    """Split a stack spec such as ``"RGR"`` or ``"Bi-RRR"`` into (layers, bidirectional)."""
    m = _SPEC_RE.match(spec or "")
    if not m:
        raise ValueError(f"invalid layer spec {spec!r}: expected letters R/G, optionally prefixed 'Bi-'")
    layers, bi = m.group(2), bool(m.group(1))
    if bi and "G" in layers:
        raise ValueError(f"invalid layer spec {spec!r}: 'Bi-' applies to R-only stacks")
    return layers, bi


@dataclass
class UDMPLayerParams:
    W_r: list[Tensor]
    W_0: Tensor

    def tensors(self, prefix: str) -> dict[str, Tensor]:
        out = {f"{prefix}.W_r.{r}": w for r, w in enumerate(self.W_r)}
        out[f"{prefix}.W_0"] = self.W_0
        return out


@dataclass
class BDMPLayerParams:
    W: Tensor

    def tensors(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.W": self.W}


# ---------------------------------------------------------------------------
# message operators


@dataclass
class RelationOperator:
    """Averaging operator for one UD-MP layer over the relations present in a subgraph.

    ``matrix`` is ``n x (n * P)`` with ``matrix[i, j * P + p] = 1 / c_{i,r}`` for
    every edge ``(j, r, i)`` where ``r = relations[p]``, so it applies directly to
    ``reshape(h @ [W_r for r in relations], n * P, d)``.
    """

    relations: list[int]
    matrix: sp.csr_matrix
    matrix_t: sp.csr_matrix


def relation_operator(edges, n_nodes: int, n_relations: int) -> RelationOperator:
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 3)
    if len(edges) and (edges[:, 1].min() < 0 or edges[:, 1].max() >= n_relations):
        raise ValueError(f"edge relation id outside [0, {n_relations})")
    if len(edges) and (edges[:, [0, 2]].min() < 0 or edges[:, [0, 2]].max() >= n_nodes):
        raise ValueError("edge endpoint outside the node range")
    present, pos = np.unique(edges[:, 1], return_inverse=True)
    n_present = len(present)
    src, dst = edges[:, 0], edges[:, 2]
    # c_{i,r}: in-neighbors of i under r
    counts = np.bincount(dst * max(n_present, 1) + pos, minlength=n_nodes * max(n_present, 1))
    w = 1.0 / counts[dst * max(n_present, 1) + pos] if len(edges) else np.zeros(0)
    m = sp.csr_matrix((w, (dst, src * n_present + pos)), shape=(n_nodes, n_nodes * n_present))
    return RelationOperator(present.tolist(), m, m.T.tocsr())


def homo_operator(adj: list[set[int]]) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Symmetric normalized adjacency ``1 / sqrt(|N_i| |N_j|)`` and its transpose."""
    n = len(adj)
    rows = np.array([i for i, nbrs in enumerate(adj) for _ in nbrs], dtype=np.int64)
    cols = np.array([j for nbrs in adj for j in nbrs], dtype=np.int64)
    return _normalized(rows, cols, n)


def _normalized(rows: np.ndarray, cols: np.ndarray, n: int):
    deg = np.bincount(rows, minlength=n).astype(np.float64)
    w = 1.0 / np.sqrt(deg[rows] * deg[cols]) if len(rows) else np.zeros(0)
    m = sp.csr_matrix((w, (rows, cols)), shape=(n, n))
    return m, m.T.tocsr()


def _homo_from_pairs(pairs: np.ndarray, n: int, self_loops: bool):
    i, j = pairs[:, 0], pairs[:, 1]
    off = i != j
    parts_r = [i, j[off]]
    parts_c = [j, i[off]]
    if self_loops:
        diag = np.setdiff1d(np.arange(n), i[~off])
        parts_r.append(diag)
        parts_c.append(diag)
    return _normalized(np.concatenate(parts_r), np.concatenate(parts_c), n)


def _activate(tape: Tape, x: Tensor, activation: str) -> Tensor:
    if activation == "relu":
        return tape.relu(x)
    if activation == "tanh":
        return tape.tanh(x)
    raise ValueError(f"unknown activation {activation!r}")


def _udmp(tape: Tape, params: UDMPLayerParams, h: Tensor, rel_op: RelationOperator, activation: str) -> Tensor:
    pre = tape.matmul(h, params.W_0)
    if rel_op.relations:
        n, d = h.shape[0], params.W_0.shape[1]
        W = tape.concat_cols(*(params.W_r[r] for r in rel_op.relations))
        msgs = tape.reshape(tape.matmul(h, W), n * len(rel_op.relations), d)
        pre = tape.add(pre, tape.spmm(rel_op.matrix, msgs, rel_op.matrix_t))
    return _activate(tape, pre, activation)


def _bdmp(tape: Tape, params: BDMPLayerParams, h: Tensor, homo_op, activation: str) -> Tensor:
    op, op_t = homo_op
    return _activate(tape, tape.spmm(op, tape.matmul(h, params.W), op_t), activation)


def udmp_forward(params: UDMPLayerParams, node_feats: Tensor, edges, tape: Tape | None = None, activation: str = "relu") -> Tensor:
    """Relational message passing along directed edges (head to tail) plus a self term."""
    tape = tape or Tape()
    op = relation_operator(edges, node_feats.shape[0], len(params.W_r))
    return _udmp(tape, params, node_feats, op, activation)


def bdmp_forward(params: BDMPLayerParams, node_feats: Tensor, homo_adj, tape: Tape | None = None, activation: str = "relu") -> Tensor:
    """Degree-normalized message passing over an undirected, unlabeled adjacency."""
    tape = tape or Tape()
    return _bdmp(tape, params, node_feats, homo_operator(homo_adj), activation)


# ---------------------------------------------------------------------------
# the stack


@dataclass
class PreparedSubgraph:
    """Constant inputs for one forward pass: one-hot features and message operators.

    The homogeneous operator is a ``(matrix, transpose)`` pair.
    """

    feats: Tensor
    rel_op: RelationOperator | None
    homo_op: tuple | None
    target_relation: int
    n_nodes: int


@dataclass
class LayerStack:
    spec: str
    k: int
    dim: int
    n_relations: int
    layers: list
    input_proj: Tensor
    relation_table: Tensor
    score_W: Tensor
    score_bias: Tensor
    homo_self_loops: bool = True
    activation: str = "relu"
    _layer_kinds: str = field(default="", repr=False)
    _bidirectional: bool = field(default=False, repr=False)

    def __post_init__(self):
        self._layer_kinds, self._bidirectional = parse_spec(self.spec)

    @property
    def layer_kinds(self) -> str:
        return self._layer_kinds

    @property
    def bidirectional(self) -> bool:
        return self._bidirectional

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def n_edge_relations(self) -> int:
        return self.n_relations * (2 if self._bidirectional else 1)

    def parameters(self) -> dict[str, Tensor]:
        out = {"input_proj": self.input_proj}
        for i, layer in enumerate(self.layers):
            out.update(layer.tensors(f"layer{i}"))
        out["relation_table"] = self.relation_table
        out["score.W"] = self.score_W
        out["score.bias"] = self.score_bias
        return out

    def n_params(self) -> int:
        return sum(p.data.size for p in self.parameters().values())

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.zero_grad()

    def prepare(self, sub: Subgraph) -> PreparedSubgraph:
        if sub.k != self.k:
            raise ValueError(f"subgraph labeled with k={sub.k}, stack expects k={self.k}")
        if not 0 <= sub.target_relation < self.n_relations:
            raise ValueError(f"target relation {sub.target_relation} outside [0, {self.n_relations})")
        if self._bidirectional:
            sub = sub.with_inverse_edges(self.n_relations)
        rel_op = relation_operator(sub.edges, sub.n_nodes, self.n_edge_relations) if "R" in self._layer_kinds else None
        homo_op = _homo_from_pairs(sub.homo_pairs, sub.n_nodes, self.homo_self_loops) if "G" in self._layer_kinds else None
        return PreparedSubgraph(Tensor(one_hot_init(sub.labels, self.k)), rel_op, homo_op, sub.target_relation, sub.n_nodes)


def _uniform(rng: np.random.Generator, shape, bound: float, name: str) -> Tensor:
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)


def build_stack(
    spec: str,
    k: int,
    dim: int,
    n_relations: int,
    seed: int | np.random.Generator = 0,
    homo_self_loops: bool = True,
    activation: str = "relu",
) -> LayerStack:
    """Initialize a stack; every weight matrix is drawn from ``U(-1/sqrt(dim), 1/sqrt(dim))``."""
    kinds, bi = parse_spec(spec)
    if k < 1 or dim < 1 or n_relations < 1:
        raise ValueError("k, dim and n_relations must all be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(dim)
    n_edge_rel = n_relations * (2 if bi else 1)
    input_proj = _uniform(rng, (2 * (k + 2), dim), bound, "input_proj")
    layers = []
    for i, kind in enumerate(kinds):
        if kind == "R":
            W_r = [_uniform(rng, (dim, dim), bound, f"layer{i}.W_r.{r}") for r in range(n_edge_rel)]
            layers.append(UDMPLayerParams(W_r, _uniform(rng, (dim, dim), bound, f"layer{i}.W_0")))
        else:
            layers.append(BDMPLayerParams(_uniform(rng, (dim, dim), bound, f"layer{i}.W")))
    relation_table = _uniform(rng, (n_relations, dim), bound, "relation_table")
    score_W = _uniform(rng, (4 * dim, 1), bound, "score.W")
    score_bias = Tensor(np.zeros((1, 1)), requires_grad=True, name="score.bias")
    return LayerStack(spec, k, dim, n_relations, layers, input_proj, relation_table, score_W, score_bias, homo_self_loops, activation)


def total_params(spec: str, k: int, dim: int, n_relations: int) -> int:
    """Closed-form parameter count matching :meth:`LayerStack.n_params`."""
    kinds, bi = parse_spec(spec)
    n_edge_rel = n_relations * (2 if bi else 1)
    per_layer = sum((n_edge_rel + 1) * dim * dim if c == "R" else dim * dim for c in kinds)
    return 2 * (k + 2) * dim + per_layer + n_relations * dim + 4 * dim + 1


def stack_forward(
    stack: LayerStack,
    sub: Subgraph | PreparedSubgraph,
    training: bool = False,
    rng: np.random.Generator | None = None,
    dropout: float = 0.0,
    tape: Tape | None = None,
) -> tuple[Tensor, Tensor]:
    """Run the layers in spec order; each layer consumes the previous layer's output.

    Returns ``(node_embeddings, pooled)`` where ``pooled`` is the mean over all
    subgraph nodes of the final embeddings.
    """
    tape = tape or Tape(record=False)
    prep = sub if isinstance(sub, PreparedSubgraph) else stack.prepare(sub)
    if training and dropout > 0 and rng is None:
        raise ValueError("training with dropout needs an rng")
    h = tape.matmul(prep.feats, stack.input_proj)
    for kind, layer in zip(stack.layer_kinds, stack.layers):
        if kind == "R":
            h = _udmp(tape, layer, h, prep.rel_op, stack.activation)
        else:
            h = _bdmp(tape, layer, h, prep.homo_op, stack.activation)
        h = tape.dropout(h, dropout, rng, training)
    return h, tape.mean_rows(h)


def score_triple(stack: LayerStack, node_embs: Tensor, pooled: Tensor, r_t: int, tape: Tape | None = None) -> Tensor:
    """Linear score of ``[pooled, head, tail, relation embedding]`` plus bias, as a 1x1 tensor."""
    if not 0 <= int(r_t) < stack.n_relations:
        raise ValueError(f"relation id {r_t} outside [0, {stack.n_relations})")
    tape = tape or Tape(record=False)
    head = tape.take_rows(node_embs, [0])
    tail = tape.take_rows(node_embs, [1])
    rel = tape.take_rows(stack.relation_table, [int(r_t)])
    z = tape.concat_cols(pooled, head, tail, rel)
    return tape.add(tape.matmul(z, stack.score_W), stack.score_bias)


def forward_score(stack: LayerStack, sub, training=False, rng=None, dropout=0.0, tape: Tape | None = None) -> Tensor:
    tape = tape or Tape(record=False)
    prep = sub if isinstance(sub, PreparedSubgraph) else stack.prepare(sub)
    embs, pooled = stack_forward(stack, prep, training, rng, dropout, tape)
    return score_triple(stack, embs, pooled, prep.target_relation, tape)


# ---------------------------------------------------------------------------
# checkpoints


def checkpoint_dict(stack: LayerStack, config: dict | None = None) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "spec": stack.spec,
        "k": stack.k,
        "dim": stack.dim,
        "n_relations": stack.n_relations,
        "homo_self_loops": stack.homo_self_loops,
        "activation": stack.activation,
        "config": config or {},
        "params": {
            name: {"shape": list(p.shape), "data": p.data.reshape(-1).tolist()}
            for name, p in stack.parameters().items()
        },
    }


def save_checkpoint(stack: LayerStack, path, config: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(checkpoint_dict(stack, config), fh, indent=1)
        fh.write("\n")


def stack_from_dict(doc: dict, spec: str | None = None) -> LayerStack:
    """Rebuild a stack; shapes are validated against ``spec`` (defaults to the stored one)."""
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError("not a mines checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')!r}")
    template = build_stack(
        spec or doc["spec"], doc["k"], doc["dim"], doc["n_relations"], 0,
        doc.get("homo_self_loops", True), doc.get("activation", "relu"),
    )
    stored = doc["params"]
    expected = template.parameters()
    for name, p in expected.items():
        if name not in stored:
            raise CheckpointError(f"parameter {name!r} with shape {list(p.shape)} missing from checkpoint (spec {template.spec!r})")
        shape = stored[name]["shape"]
        if tuple(shape) != p.shape:
            raise CheckpointError(f"parameter {name!r} has shape {shape}, spec {template.spec!r} expects {list(p.shape)}")
        data = np.asarray(stored[name]["data"], dtype=np.float64)
        if data.size != p.data.size:
            raise CheckpointError(f"parameter {name!r}: {data.size} values for shape {shape}")
        p.data[...] = data.reshape(p.shape)
    extra = sorted(set(stored) - set(expected))
    if extra:
        raise CheckpointError(f"checkpoint parameter {extra[0]!r} with shape {stored[extra[0]]['shape']} not used by spec {template.spec!r}")
    return template


def load_checkpoint(path, spec: str | None = None) -> tuple[LayerStack, dict]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return stack_from_dict(doc, spec), doc.get("config", {})
