import json

import numpy as np
import pytest

from mines.evaluation import auc_pr, evaluate, hits_at_k, pessimistic_rank
from mines.kg_store import build_graph, synthesize_dataset
from mines.layers import build_stack

from oracles import brute_average_precision


def test_auc_examples():
    assert auc_pr([1.0], [0.0]) == 1.0
    # (1/1 + 2/3) / 2 lands one ulp below the float nearest 5/6
    assert abs(auc_pr([0.9, 0.4], [0.6, 0.1]) - 5 / 6) <= 2 ** -52
    assert auc_pr([0.0], [1.0]) == 0.5
    # all tied: the i-th positive sits behind every negative
    assert auc_pr([0.3], [0.3]) == 0.5
    assert auc_pr([0.3, 0.3], [0.3, 0.3]) == pytest.approx((1 / 3 + 2 / 4) / 2)


def test_auc_empty():
    with pytest.raises(ValueError):
        auc_pr([], [1.0])
    with pytest.raises(ValueError):
        auc_pr([1.0], [])


def test_auc_matches_oracle():
    rng = np.random.default_rng(0)
    for i in range(1000):
        n_pos, n_neg = rng.integers(1, 11, size=2)
        # coarse grid forces many ties
        draw = (lambda n: rng.integers(0, 5, size=n) / 4) if i % 2 else (lambda n: rng.normal(size=n))
        pos, neg = draw(n_pos).tolist(), draw(n_neg).tolist()
        assert abs(auc_pr(pos, neg) - brute_average_precision(pos, neg)) < 1e-12


def test_auc_monotone_invariance():
    rng = np.random.default_rng(1)
    for _ in range(100):
        pos, neg = rng.normal(size=5), rng.normal(size=7)
        for f in (np.exp, lambda x: 3 * x - 2, np.arctan):
            assert auc_pr(f(pos), f(neg)) == pytest.approx(auc_pr(pos, neg), abs=1e-15)


def test_hits_examples():
    negs = np.linspace(-5, 4, 50)
    assert pessimistic_rank(10.0, negs) == 1 and hits_at_k(10.0, negs) == 1
    tied = np.concatenate([np.full(12, -1.0), np.full(38, -3.0)])
    assert pessimistic_rank(-1.0, tied) == 13 and hits_at_k(-1.0, tied) == 0
    assert pessimistic_rank(-10.0, negs) == 51 and hits_at_k(-10.0, negs) == 0
    with pytest.raises(ValueError):
        hits_at_k(0.0, [])


def test_hits_monotone():
    rng = np.random.default_rng(2)
    for _ in range(200):
        negs = rng.integers(0, 6, size=50).astype(float)
        t = float(rng.integers(0, 6))
        assert hits_at_k(t + rng.random(), negs, 10) >= hits_at_k(t, negs, 10)


@pytest.fixture(scope="module")
def synth():
    return synthesize_dataset(0, n_entities=40)


def test_zero_weight_stack(synth):
    stack = build_stack("RGR", 2, 4, synth.train.n_relations, 0)
    stack.score_W.data[...] = 0.0
    single = evaluate(stack, synth.test, synth.test_targets[:1], n_rank_negatives=5)
    assert single.auc_pr == 0.5
    report = evaluate(stack, synth.test, synth.test_targets, n_rank_negatives=5)
    n = len(synth.test_targets)
    assert report.auc_pr == pytest.approx(np.mean([i / (n + i) for i in range(1, n + 1)]), abs=1e-15)
    assert report.hits_at_k == 1.0  # rank 6 of 6 with k=10
    assert all(r.rank == 6 for r in report.records)


def test_report_recomputable_and_deterministic(synth):
    stack = build_stack("RGR", 2, 4, synth.train.n_relations, 3)
    a = evaluate(stack, synth.test, synth.test_targets, seed=5, n_rank_negatives=8)
    b = evaluate(stack, synth.test, synth.test_targets, seed=5, n_rank_negatives=8, threads=3)
    assert a.to_json() == b.to_json()
    assert a.recompute() == (a.auc_pr, a.hits_at_k)
    doc = json.loads(a.to_json())
    assert doc["records"][0]["rank"] >= 1
    for r in a.records:
        assert 1 <= r.rank <= 9 and len(r.rank_negative_scores) == 8
        assert tuple(r.negative) not in synth.test.triple_set
    assert a.summary_tsv("synth").splitlines() == ["dataset\tauc_pr\thits@10", f"synth\t{a.auc_pr:.6f}\t{a.hits_at_k:.6f}"]


def test_unknown_relation_named(synth):
    stack = build_stack("RGR", 2, 4, 1, 0)
    r = int(synth.test_targets[0][1])
    with pytest.raises(ValueError, match="relation"):
        evaluate(stack, synth.test, [(0, max(r, 1), 1)])


def test_isomorphic_subgraphs_score_equal():
    # two disjoint copies of the same pattern under different entity ids
    a = [(0, 0, 1), (1, 1, 2), (2, 0, 3)]
    b = [(h + 10, r, t + 10) for h, r, t in a]
    g = build_graph(a + b, 20)
    stack = build_stack("RGR", 2, 6, 2, 0)
    from mines.evaluation import score_triples

    s = score_triples(stack, g, [(0, 1, 2), (10, 1, 12)])
    assert s[0] == s[1]
