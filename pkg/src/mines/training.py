"""Margin-loss training with Adam and validation-based early stopping."""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import Tape, Tensor
from .evaluation import auc_pr, score_triples
from .kg_store import KnowledgeGraph
from .layers import LayerStack, PreparedSubgraph, build_stack, forward_score, parse_spec
from .sampling import rng_stream, sample_negative
from .subgraph import MODES, NEIGHBOR_ENHANCED, extract_subgraph

__all__ = [
    "TrainConfig", "OptimizerState", "adam_step", "hinge_loss", "sample_negative", "train",
    "history_csv",
]

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    k: int = 3
    dim: int = 32
    spec: str = "RGR"
    subgraph_mode: str = NEIGHBOR_ENHANCED
    lr: float = 0.001
    batch_size: int = 16
    margin: float = 10.0
    dropout: float = 0.5
    epochs: int = 50
    neg_per_pos: int = 1
    seed: int = 0
    early_stop_patience: int = 10
    homo_self_loops: bool = True
    activation: str = "relu"
    grad_clip: float | None = None

    def validate(self) -> "TrainConfig":
        parse_spec(self.spec)
        if self.subgraph_mode not in MODES:
            raise ValueError(f"subgraph_mode must be one of {MODES}, got {self.subgraph_mode!r}")
        if self.k < 1 or self.dim < 1:
            raise ValueError("k and dim must be positive")
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0 or self.neg_per_pos < 1:
            raise ValueError("batch_size and neg_per_pos must be >= 1, epochs >= 0")
        if self.activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


def hinge_loss(f_pos: Tensor, f_neg: Tensor, margin: float, tape: Tape | None = None) -> Tensor:
    """``max(0, f_neg - f_pos + margin)``, summed over entries for batched scores."""
    tape = tape or Tape(record=False)
    return tape.sum(tape.relu(tape.add_scalar(tape.sub(f_neg, f_pos), margin)))


@dataclass
class OptimizerState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: OptimizerState, params: dict[str, Tensor], grads: dict[str, np.ndarray], lr: float) -> None:
    """Bias-corrected Adam update, in place."""
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {name!r} has shape {g.shape}, parameter {p.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def _clip(grads: dict[str, np.ndarray], max_norm: float) -> None:
    norm = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if norm > max_norm:
        for g in grads.values():
            g *= max_norm / norm


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    valid_auc_pr: float | None
    seconds: float


def history_csv(history: list[EpochRecord]) -> str:
    """Per-epoch ``epoch,train_loss,valid_auc_pr`` rows; wall time is kept out so reruns match byte for byte."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "train_loss", "valid_auc_pr"])
    for rec in history:
        w.writerow([rec.epoch, repr(rec.train_loss), "" if rec.valid_auc_pr is None else repr(rec.valid_auc_pr)])
    return buf.getvalue()


def timing_csv(history: list[EpochRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "seconds"])
    for rec in history:
        w.writerow([rec.epoch, f"{rec.seconds:.3f}"])
    return buf.getvalue()


def _snapshot(stack: LayerStack) -> dict[str, np.ndarray]:
    return {name: p.data.copy() for name, p in stack.parameters().items()}


def _restore(stack: LayerStack, snap: dict[str, np.ndarray]) -> None:
    for name, p in stack.parameters().items():
        p.data[...] = snap[name]


def train(
    train_graph: KnowledgeGraph,
    valid_triples,
    cfg: TrainConfig,
    stack: LayerStack | None = None,
    threads: int = 1,
) -> tuple[LayerStack, list[EpochRecord]]:
    """Train a stack on every triple of ``train_graph``.

    Each positive is paired with ``cfg.neg_per_pos`` corrupted triples, each
    scored on its own subgraph. The batch loss is the sum of hinge terms. When
    ``valid_triples`` is non-empty, validation AUC-PR (against a fixed set of
    sampled negatives) selects the returned parameters and drives early stopping.
    """
    cfg.validate()
    positives = train_graph.triples
    if len(positives) == 0:
        raise ValueError("empty training graph")
    valid = np.asarray(valid_triples if valid_triples is not None else [], dtype=np.int64).reshape(-1, 3)
    if len(valid) and valid[:, 1].max() >= train_graph.n_relations:
        raise ValueError("validation triples use relations outside the training vocabulary")

    if stack is None:
        stack = build_stack(
            cfg.spec, cfg.k, cfg.dim, train_graph.n_relations, rng_stream(cfg.seed, "init"),
            cfg.homo_self_loops, cfg.activation,
        )
    params = stack.parameters()
    opt = OptimizerState()
    shuffle_rng = rng_stream(cfg.seed, "shuffle")
    neg_rng = rng_stream(cfg.seed, "negatives")
    drop_rng = rng_stream(cfg.seed, "dropout")
    known = train_graph.triple_set

    valid_negs = []
    if len(valid):
        valid_known = set(known) | {tuple(t) for t in valid.tolist()}
        vrng = rng_stream(cfg.seed, "valid")
        valid_negs = [sample_negative(train_graph.n_entities, t, vrng, valid_known) for t in valid.tolist()]

    cache: dict[tuple, PreparedSubgraph] = {}

    def prepared(h, r, t, keep):
        key = (h, r, t)
        hit = cache.get(key)
        if hit is None:
            hit = stack.prepare(extract_subgraph(train_graph, h, r, t, cfg.k, cfg.subgraph_mode))
            if keep:
                cache[key] = hit
        return hit

    history: list[EpochRecord] = []
    best_auc, best_snap, stale = -np.inf, None, 0
    for epoch in range(1, cfg.epochs + 1):
        start = time.perf_counter()
        order = shuffle_rng.permutation(len(positives))
        total, n_pairs = 0.0, 0
        for b in range(0, len(order), cfg.batch_size):
            stack.zero_grad()
            for idx in order[b:b + cfg.batch_size].tolist():
                h, r, t = positives[idx].tolist()
                pos = prepared(h, r, t, keep=True)
                for _ in range(cfg.neg_per_pos):
                    nh, nr, nt = sample_negative(train_graph.n_entities, (h, r, t), neg_rng, known)
                    neg = prepared(nh, nr, nt, keep=False)
                    tape = Tape()
                    f_pos = forward_score(stack, pos, True, drop_rng, cfg.dropout, tape)
                    f_neg = forward_score(stack, neg, True, drop_rng, cfg.dropout, tape)
                    loss = hinge_loss(f_pos, f_neg, cfg.margin, tape)
                    tape.backward(loss)
                    total += loss.item()
                    n_pairs += 1
            grads = {name: p.grad for name, p in params.items()}
            if cfg.grad_clip is not None:
                _clip(grads, cfg.grad_clip)
            adam_step(opt, params, grads, cfg.lr)
        stack.zero_grad()

        valid_auc = None
        if len(valid):
            pos_s = score_triples(stack, train_graph, valid, cfg.subgraph_mode, threads)
            neg_s = score_triples(stack, train_graph, valid_negs, cfg.subgraph_mode, threads)
            valid_auc = auc_pr(pos_s, neg_s)
        rec = EpochRecord(epoch, total / max(n_pairs, 1), valid_auc, time.perf_counter() - start)
        history.append(rec)
        log.info("epoch %d loss %.4f valid_auc_pr %s (%.1fs)", epoch, rec.train_loss, valid_auc, rec.seconds)

        if valid_auc is None:
            continue
        if valid_auc > best_auc:
            best_auc, best_snap, stale = valid_auc, _snapshot(stack), 0
        else:
            stale += 1
            if stale >= cfg.early_stop_patience:
                log.info("early stop after epoch %d (best valid AUC-PR %.4f)", epoch, best_auc)
                break
    if best_snap is not None:
        _restore(stack, best_snap)
    return stack, history
