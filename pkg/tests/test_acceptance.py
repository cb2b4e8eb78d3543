"""Acceptance checks, one test per criterion; each prints a PASS/FAIL line with the measured numbers."""

import os
import subprocess
import sys
import time

import numpy as np
import pytest

from mines.autodiff import grad_check
from mines.evaluation import auc_pr
from mines.kg_store import build_graph, load_triples
from mines.layers import build_stack, forward_score, total_params
from mines.subgraph import extract_enclosing, extract_neighbor_enhanced
from mines.training import TrainConfig, hinge_loss, train

from oracles import brute_average_precision, brute_subgraph, random_graph

WN18RR_ENV = "MINES_WN18RR_V1"


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
            print(f"\nCRITERION {n}: {status} {detail}")

    return emit


def _global(sub):
    nodes = set(sub.nodes.tolist())
    edges = {(int(sub.nodes[a]), r, int(sub.nodes[b])) for a, r, b in sub.edges.tolist()}
    labels = {int(e): tuple(l) for e, l in zip(sub.nodes.tolist(), sub.labels.tolist())}
    return nodes, edges, labels


def test_criterion_1_extraction_oracle(report):
    start = time.perf_counter()
    mismatches, not_contained, trials = 0, 0, 0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 51))
        triples = random_graph(rng, n, int(rng.integers(1, 6)), int(rng.integers(1, 2 * n + 1)))
        g = build_graph(triples, n)
        h, r, t = triples[int(rng.integers(len(triples)))]
        if h == t:
            h, r, t = next(((a, b, c) for a, b, c in triples if a != c), (h, r, t))
        k = int(rng.integers(1, 4))
        trials += 1
        enc, ne = extract_enclosing(g, h, r, t, k), extract_neighbor_enhanced(g, h, r, t, k)
        if h != t:
            for sub, mode in ((enc, "enclosing"), (ne, "neighbor_enhanced")):
                mismatches += _global(sub) != brute_subgraph(triples, n, h, r, t, k, mode)
        not_contained += not set(enc.nodes.tolist()) <= set(ne.nodes.tolist())
    secs = time.perf_counter() - start
    ok = mismatches == 0 and not_contained == 0 and secs < 10
    report(1, ok, f"{trials} graphs, {mismatches} oracle mismatches, {not_contained} containment failures, {secs:.1f}s (<10s)")
    assert ok


def _small_subgraph(rng, n_rel, k):
    while True:
        n = int(rng.integers(5, 11))
        triples = [x for x in random_graph(rng, n, n_rel, int(rng.integers(n, 2 * n + 1))) if x[0] != x[2]]
        if not triples:
            continue
        g = build_graph(triples, n)
        h, r, t = triples[int(rng.integers(len(triples)))]
        sub = extract_neighbor_enhanced(g, h, r, t, k)
        if 5 <= sub.n_nodes <= 10:
            return sub


def test_criterion_2_gradient_check(report):
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    specs = ["RGR", "RRR", "GGG", "GRR", "RRG", "Bi-RRR"]
    worst, failures, skipped = 0.0, 0, 0
    for i in range(20):
        pos, neg = _small_subgraph(rng, 3, 2), _small_subgraph(rng, 3, 2)
        stack = build_stack(specs[i % len(specs)], 2, 4, 3, rng)

        def f(tape, stack=stack, pos=pos, neg=neg):
            return hinge_loss(forward_score(stack, pos, tape=tape), forward_score(stack, neg, tape=tape), 10.0, tape)

        rep = grad_check(f, stack.parameters(), step=1e-4, tol=1e-4)
        worst = max(worst, rep.max_rel_error)
        failures += not rep.passed
        skipped += rep.skipped_kinks
    secs = time.perf_counter() - start
    ok = failures == 0 and worst < 1e-4 and secs < 60
    report(2, ok, f"max rel error {worst:.2e} (<1e-4) on 20 subgraphs, {skipped} ReLU-kink entries skipped, {secs:.1f}s (<60s)")
    assert ok


def test_criterion_3_metric_oracle(report):
    rng = np.random.default_rng(3)
    worst = 0.0
    for i in range(1000):
        n_pos = int(rng.integers(1, 20))
        n_neg = int(rng.integers(1, 21 - n_pos))
        if i % 2:
            pos, neg = rng.integers(0, 4, n_pos) / 3, rng.integers(0, 4, n_neg) / 3
        else:
            pos, neg = rng.normal(size=n_pos), rng.normal(size=n_neg)
        worst = max(worst, abs(auc_pr(pos, neg) - brute_average_precision(pos.tolist(), neg.tolist())))
    five_sixths = auc_pr([0.9, 0.4], [0.6, 0.1])
    hand = five_sixths == (1 / 1 + 2 / 3) / 2 and abs(five_sixths - 5 / 6) <= 2 ** -52
    perfect = auc_pr([1.0], [0.0]) == 1.0 and auc_pr([0.0], [1.0]) == 0.5
    ok = worst < 1e-12 and hand and perfect
    report(3, ok, f"max |ap - oracle| {worst:.1e} over 1000 sets (<1e-12); 5/6 example {five_sixths!r}; perfect separation {perfect}")
    assert ok


def test_criterion_4_parameter_ordering(report):
    rows = []
    for n_rel in (1, 9, 183):
        for d in (8, 32):
            rgr, rrr = total_params("RGR", 3, d, n_rel), total_params("RRR", 3, d, n_rel)
            built = build_stack("RGR", 3, d, n_rel, 0).n_params() == rgr and build_stack("RRR", 3, d, n_rel, 0).n_params() == rrr
            rows.append(rgr < rrr and rrr - rgr == n_rel * d * d and built)
    ok = all(rows)
    report(4, ok, f"RGR < RRR with difference |R|*d^2 on {sum(rows)}/6 grid points")
    assert ok


def test_criterion_5_end_to_end(report, planted_run):
    _, history, rep, secs = planted_run("RGR", "neighbor_enhanced")
    ok = rep.auc_pr >= 0.90 and rep.hits_at_k >= 0.80 and len(history) <= 50 and secs < 600
    report(5, ok, f"test AUC-PR {rep.auc_pr:.4f} (>=0.90), Hits@10 {rep.hits_at_k:.4f} (>=0.80), "
                  f"{len(history)} epochs, {secs:.0f}s (<600s)")
    assert ok


def test_criterion_6_ablation_direction(report, planted_run):
    auc = {key: planted_run(*key)[2].auc_pr for key in
           [("RRR", "enclosing"), ("RGR", "enclosing"), ("RRR", "neighbor_enhanced"), ("RGR", "neighbor_enhanced")]}
    base = auc[("RRR", "enclosing")]
    ok = (auc[("RGR", "neighbor_enhanced")] >= base
          and auc[("RRR", "neighbor_enhanced")] >= base - 0.02
          and auc[("RGR", "enclosing")] >= base - 0.02)
    detail = ", ".join(f"{s}+{m[:3]} {v:.4f}" for (s, m), v in auc.items())
    report(6, ok, f"AUC-PR {detail}")
    assert ok


def _cli(*args):
    return subprocess.run([sys.executable, "-m", "mines", *map(str, args)], capture_output=True, text=True)


def test_criterion_7_determinism(report, tmp_path):
    data = tmp_path / "data"
    assert _cli("synth-data", "--out", data, "--n-entities", 60).returncode == 0
    flags = ["--k", "2", "--dim", "8", "--epochs", "3", "--seed", "11", "--threads", "1"]
    outs = []
    for run in ("a", "b"):
        res = _cli("train", "--data", data, "--out", tmp_path / run, *flags)
        assert res.returncode == 0, res.stderr
        res = _cli("eval", "--data", data, "--checkpoint", tmp_path / "a" / "checkpoint.json",
                   "--seed", "11", "--out", tmp_path / f"eval_{run}")
        assert res.returncode == 0, res.stderr
        outs.append(((tmp_path / run / "history.csv").read_bytes(),
                     (tmp_path / run / "checkpoint.json").read_bytes(),
                     (tmp_path / f"eval_{run}" / "eval_report.json").read_bytes()))
    same = [x == y for x, y in zip(*outs)]
    ok = all(same)
    report(7, ok, f"history.csv identical {same[0]}, checkpoint identical {same[1]}, eval_report.json identical {same[2]}")
    assert ok


def test_criterion_8_benchmark_smoke(report):
    root = os.environ.get(WN18RR_ENV)
    if not root:
        report(8, None, f"(non-gating) set {WN18RR_ENV} to the WN18RR_v1 split directory to run it")
        pytest.skip(f"{WN18RR_ENV} not set")
    g = load_triples(os.path.join(root, "train.txt"))
    counts = (g.n_entities, g.n_relations, len(g) + g.duplicates)
    _, history = train(g, [], TrainConfig(epochs=5, seed=0))
    ok = counts == (2746, 9, 6678) and len(history) == 5 and all(np.isfinite(h.train_loss) for h in history)
    report(8, ok, f"|E|={counts[0]} |R|={counts[1]} |triples|={counts[2]} (2746/9/6678), 5 epochs finished")
    assert ok
