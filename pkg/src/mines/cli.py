"""Command-line entry point: ``mines {synth-data,train,eval,ablate,case-study,grad-check}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .autodiff import grad_check
from .evaluation import check_relations, evaluate, pessimistic_rank, score_triples
from .kg_store import (
    KnowledgeGraph,
    TripleParseError,
    UnknownSymbolError,
    build_graph,
    encode_triples,
    load_triples,
    read_target_triples,
    synthesize_dataset,
)
from .layers import CheckpointError, build_stack, forward_score, load_checkpoint, parse_spec, save_checkpoint
from .sampling import rng_stream, sample_negative
from .subgraph import ENCLOSING, MODES, NEIGHBOR_ENHANCED, extract_subgraph, format_subgraph
from .training import TrainConfig, hinge_loss, history_csv, timing_csv, train

log = logging.getLogger("mines")

# keys left out of the snapshot embedded in result files; they never change results
_VOLATILE = ("out", "threads", "func", "command", "verbose")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# config handling


def read_config_file(path) -> dict[str, str]:
    """Parse ``key=value`` lines; ``#`` starts a comment. Keys may use ``-`` or ``_``."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _apply_config(parser: argparse.ArgumentParser, sub: argparse.ArgumentParser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        conf = read_config_file(args.config)
        known = {a.dest: a for a in sub._actions}
        defaults = {}
        for key, value in conf.items():
            action = known.get(key)
            if action is None or key in ("config", "help"):
                raise UsageError(f"unknown config key {key!r} in {args.config}")
            if action.nargs == 0:
                defaults[key] = value.lower() in ("1", "true", "yes", "on")
            elif action.nargs in ("*", "+"):
                defaults[key] = [action.type(v) if action.type else v for v in value.split()]
            else:
                defaults[key] = action.type(value) if action.type else value
        # explicit flags still win over the file
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def snapshot(args: argparse.Namespace) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _VOLATILE}


def _with_header(text: str, config: dict) -> str:
    return "# config " + json.dumps(config, sort_keys=True) + "\n" + text


def train_config(args) -> TrainConfig:
    return TrainConfig(
        k=args.k, dim=args.dim, spec=args.spec, subgraph_mode=args.subgraph_mode, lr=args.lr,
        batch_size=args.batch_size, margin=args.margin, dropout=args.dropout, epochs=args.epochs,
        neg_per_pos=args.neg_per_pos, seed=args.seed, early_stop_patience=args.patience,
        homo_self_loops=not args.no_self_loops, activation=args.activation, grad_clip=args.grad_clip,
    )


# ---------------------------------------------------------------------------
# datasets


def _path(args, name: str, default: str) -> Path:
    explicit = getattr(args, name, None)
    if explicit:
        return Path(explicit)
    if not args.data:
        raise UsageError(f"need --data or --{name.replace('_', '-')}")
    return Path(args.data) / default


def load_train_split(args) -> tuple[KnowledgeGraph, np.ndarray]:
    g = load_triples(_path(args, "train", "train.txt"))
    vpath = _path(args, "valid", "valid.txt")
    valid = read_target_triples(vpath, g) if vpath.exists() else np.zeros((0, 3), dtype=np.int64)
    return g, valid


def load_test_split(args, relations: list[str]) -> tuple[KnowledgeGraph, np.ndarray]:
    vocab = {name: i for i, name in enumerate(relations)}
    g = load_triples(_path(args, "test_graph", "test_graph.txt"), vocab)
    return g, read_target_triples(_path(args, "test", "test.txt"), g)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------
# commands


def cmd_synth_data(args) -> int:
    ds = synthesize_dataset(args.seed, n_entities=args.n_entities, n_test_entities=args.n_test_entities)
    ds.write(args.out)
    print(f"wrote {args.out}: {len(ds.train)} train, {len(ds.valid)} valid, "
          f"{len(ds.test)} test-graph, {len(ds.test_targets)} test triples")
    return 0


def _train_run(args, cfg: TrainConfig, g, valid, conf: dict, out: Path | None):
    start = time.perf_counter()
    stack, history = train(g, valid, cfg, threads=args.threads)
    log.info("trained %s/%s in %.1fs", cfg.spec, cfg.subgraph_mode, time.perf_counter() - start)
    if out is not None:
        save_checkpoint(stack, out / "checkpoint.json", conf)
        _write(out / "history.csv", _with_header(history_csv(history), conf))
        _write(out / "timing.csv", timing_csv(history))
    return stack, history


def cmd_train(args) -> int:
    cfg = train_config(args).validate()
    g, valid = load_train_split(args)
    conf = dict(snapshot(args), relations=g.relation_names(), train_config=cfg.to_dict())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "config.json", json.dumps(dict(conf, out=str(out), threads=args.threads), indent=1, sort_keys=True) + "\n")
    _, history = _train_run(args, cfg, g, valid, conf, out)
    best = max((h.valid_auc_pr for h in history if h.valid_auc_pr is not None), default=None)
    print(f"trained {len(history)} epochs; best valid AUC-PR {best}; wrote {out}")
    return 0


def _load_model(args):
    stack, ckpt_conf = load_checkpoint(args.checkpoint, spec=args.spec)
    relations = ckpt_conf.get("relations")
    if relations is None:
        raise CheckpointError(f"{args.checkpoint}: checkpoint has no relation vocabulary")
    mode = args.subgraph_mode or ckpt_conf.get("train_config", {}).get("subgraph_mode", NEIGHBOR_ENHANCED)
    return stack, ckpt_conf, relations, mode


def cmd_eval(args) -> int:
    stack, ckpt_conf, relations, mode = _load_model(args)
    g, targets = load_test_split(args, relations)
    conf = dict(snapshot(args), subgraph_mode=mode, train_config=ckpt_conf.get("train_config", {}))
    report = evaluate(stack, g, targets, mode, args.seed, args.n_negatives, args.hits_k, args.threads, conf)
    out = Path(args.out)
    name = args.dataset or (Path(args.data).name if args.data else "")
    _write(out / "eval_report.json", report.to_json())
    tsv = report.summary_tsv(name)
    _write(out / "eval_summary.tsv", _with_header(tsv, conf))
    sys.stdout.write(tsv)
    return 0


def cmd_ablate(args) -> int:
    g, valid = load_train_split(args)
    base = train_config(args).validate()
    specs = ["RRR", "RGR"] + [s for s in (args.frameworks or []) if s not in ("RRR", "RGR")]
    for s in specs:
        parse_spec(s)
    rows = []
    out = Path(args.out)
    for mode in (ENCLOSING, NEIGHBOR_ENHANCED):
        for spec in specs:
            cfg = TrainConfig(**dict(base.to_dict(), spec=spec, subgraph_mode=mode)).validate()
            conf = dict(snapshot(args), spec=spec, subgraph_mode=mode, relations=g.relation_names(),
                        train_config=cfg.to_dict())
            run_dir = out / f"{mode}_{spec}" if args.keep_runs else None
            stack, _ = _train_run(args, cfg, g, valid, conf, run_dir)
            test_g, targets = load_test_split(args, g.relation_names())
            rep = evaluate(stack, test_g, targets, mode, args.seed, args.n_negatives, args.hits_k, args.threads, conf)
            rows.append((mode, spec, stack.n_params(), rep.auc_pr, rep.hits_at_k))
            print(f"{mode}\t{spec}\t{stack.n_params()}\t{rep.auc_pr:.6f}\t{rep.hits_at_k:.6f}", flush=True)
    lines = [f"subgraph_mode\tspec\tn_params\tauc_pr\thits@{args.hits_k}"]
    lines += [f"{m}\t{s}\t{n}\t{a:.6f}\t{h:.6f}" for m, s, n, a, h in rows]
    _write(out / "ablation.tsv", _with_header("\n".join(lines) + "\n", snapshot(args)))
    return 0


def cmd_case_study(args) -> int:
    stack, ckpt_conf, relations, mode = _load_model(args)
    k = args.k or stack.k
    if args.graph == "train":
        g = load_triples(_path(args, "train", "train.txt"), {r: i for i, r in enumerate(relations)})
    else:
        g = load_triples(_path(args, "test_graph", "test_graph.txt"), {r: i for i, r in enumerate(relations)})
    (h, r, t), = encode_triples([(args.head, args.relation, args.tail)], g).tolist()
    for m in MODES:
        print(format_subgraph(extract_subgraph(g, h, r, t, k, m), g, f"{m} subgraph, k={k}"))
    check_relations(stack, g, np.array([[h, r, t]]))
    score = forward_score(stack, extract_subgraph(g, h, r, t, stack.k, mode)).item()
    rng = rng_stream(args.seed, "eval")
    known = set(g.triple_set) | {(h, r, t)}
    negs = [sample_negative(g.n_entities, (h, r, t), rng, known) for _ in range(args.n_negatives)]
    neg_scores = score_triples(stack, g, negs, mode, args.threads)
    print(f"score\t{score:.6f}")
    print(f"rank\t{pessimistic_rank(score, neg_scores)}\tof {len(negs) + 1} ({mode})")
    return 0


def _random_small_subgraph(rng, n_relations: int, k: int):
    from .subgraph import extract_neighbor_enhanced

    while True:
        n = int(rng.integers(5, 11))
        edges = {(int(a), int(rng.integers(n_relations)), int(b))
                 for a, b in rng.integers(0, n, size=(int(rng.integers(n, 2 * n + 1)), 2)) if a != b}
        g = build_graph(sorted(edges), n)
        h, r, t = g.triples[int(rng.integers(len(g.triples)))].tolist()
        sub = extract_neighbor_enhanced(g, h, r, t, k)
        if 5 <= sub.n_nodes <= 10:
            return sub


def cmd_grad_check(args) -> int:
    """Finite-difference check of stack + scorer + hinge loss on random small subgraphs."""
    rng = rng_stream(args.seed, "grad-check")
    worst, failures = 0.0, 0
    for i in range(args.n_subgraphs):
        pos = _random_small_subgraph(rng, args.n_relations, args.k)
        neg = _random_small_subgraph(rng, args.n_relations, args.k)
        stack = build_stack(args.spec, args.k, args.dim, args.n_relations, rng)
        def f(tape, stack=stack, pos=pos, neg=neg):
            return hinge_loss(forward_score(stack, pos, tape=tape), forward_score(stack, neg, tape=tape), args.margin, tape)

        rep = grad_check(f, stack.parameters(), step=args.step, tol=args.tol)
        worst = max(worst, rep.max_rel_error)
        failures += not rep.passed
        log.info("subgraph %d: %s", i, rep)
    print(f"max relative error {worst:.3e} over {args.n_subgraphs} subgraphs; {failures} failing (tol {args.tol:g})")
    return 0 if failures == 0 else 1


# ---------------------------------------------------------------------------
# parser


def _spec(value: str) -> str:
    try:
        parse_spec(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return value


def _add_data(p, test=False):
    p.add_argument("--data", help="dataset directory with train.txt, valid.txt, test_graph.txt, test.txt")
    p.add_argument("--train", help="override train triples path")
    p.add_argument("--valid", help="override validation triples path")
    if test:
        p.add_argument("--test-graph", dest="test_graph", help="override inductive test graph path")
        p.add_argument("--test", help="override test target triples path")


def _add_model(p):
    d = TrainConfig()
    p.add_argument("--spec", type=_spec, default=d.spec, help="layer string over R/G, or Bi-R... (default %(default)s)")
    p.add_argument("--k", type=int, default=d.k, help="hops (default %(default)s)")
    p.add_argument("--dim", type=int, default=d.dim)
    p.add_argument("--subgraph-mode", dest="subgraph_mode", choices=MODES, default=d.subgraph_mode)
    p.add_argument("--lr", type=float, default=d.lr)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=d.batch_size)
    p.add_argument("--margin", type=float, default=d.margin)
    p.add_argument("--dropout", type=float, default=d.dropout)
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--neg-per-pos", dest="neg_per_pos", type=int, default=d.neg_per_pos)
    p.add_argument("--patience", type=int, default=d.early_stop_patience, help="early-stopping patience in epochs")
    p.add_argument("--no-self-loops", dest="no_self_loops", action="store_true",
                   help="drop self loops from the homogeneous view")
    p.add_argument("--activation", choices=("relu", "tanh"), default=d.activation)
    p.add_argument("--grad-clip", dest="grad_clip", type=float, default=None, help="global gradient-norm cap")


def _add_common(p):
    p.add_argument("--config", help="key=value file; keys mirror flag names, explicit flags win")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("-v", "--verbose", action="store_true")


def _add_eval(p):
    p.add_argument("--n-negatives", dest="n_negatives", type=int, default=50, help="ranking negatives per triple")
    p.add_argument("--hits-k", dest="hits_k", type=int, default=10)


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="mines", description="Inductive link prediction on knowledge graphs.")
    subs = parser.add_subparsers(dest="command", required=True)
    ps = {}

    p = ps["synth-data"] = subs.add_parser("synth-data", help="write a planted-rule inductive dataset")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--n-entities", dest="n_entities", type=int, default=200)
    p.add_argument("--n-test-entities", dest="n_test_entities", type=int, default=None)
    p.set_defaults(func=cmd_synth_data)

    p = ps["train"] = subs.add_parser("train", help="train a model and write checkpoint + history")
    _add_common(p)
    _add_data(p)
    _add_model(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = ps["eval"] = subs.add_parser("eval", help="evaluate a checkpoint on the inductive test split")
    _add_common(p)
    _add_data(p, test=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--spec", type=_spec, default=None, help="expected spec; mismatching checkpoints are rejected")
    p.add_argument("--subgraph-mode", dest="subgraph_mode", choices=MODES, default=None)
    p.add_argument("--dataset", default=None, help="dataset name for the TSV summary")
    _add_eval(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = ps["ablate"] = subs.add_parser("ablate", help="train/evaluate the {enclosing, N.E.} x {RRR, RGR} grid")
    _add_common(p)
    _add_data(p, test=True)
    _add_model(p)
    _add_eval(p)
    p.add_argument("--frameworks", nargs="*", type=_spec, default=[], help="extra specs, e.g. GGG GRR RRG Bi-RRR")
    p.add_argument("--keep-runs", dest="keep_runs", action="store_true", help="also write each run's checkpoint")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = ps["case-study"] = subs.add_parser("case-study", help="dump both subgraphs and the score of one triple")
    _add_common(p)
    _add_data(p, test=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--spec", type=_spec, default=None)
    p.add_argument("--subgraph-mode", dest="subgraph_mode", choices=MODES, default=None)
    p.add_argument("--head", required=True)
    p.add_argument("--relation", required=True)
    p.add_argument("--tail", required=True)
    p.add_argument("--k", type=int, default=None, help="hops for the dump (default: the model's)")
    p.add_argument("--graph", choices=("test", "train"), default="test")
    p.add_argument("--n-negatives", dest="n_negatives", type=int, default=50)
    p.set_defaults(func=cmd_case_study)

    p = ps["grad-check"] = subs.add_parser("grad-check", help="finite-difference check of the full model")
    _add_common(p)
    p.add_argument("--spec", type=_spec, default="RGR")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--dim", type=int, default=4)
    p.add_argument("--n-relations", dest="n_relations", type=int, default=3)
    p.add_argument("--n-subgraphs", dest="n_subgraphs", type=int, default=20)
    p.add_argument("--margin", type=float, default=10.0)
    p.add_argument("--step", type=float, default=1e-4)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_grad_check)
    return parser, ps


def main(argv=None) -> int:
    parser, subs = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        first = parser.parse_args(argv)
        args = _apply_config(parser, subs[first.command], argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(asctime)s %(name)s %(message)s")
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (UsageError, TripleParseError, UnknownSymbolError, CheckpointError, ValueError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"mines: error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
