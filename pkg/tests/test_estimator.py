import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from mines import MINESLinkPredictor
from mines.kg_store import synthesize_dataset
from mines.validation import check_graph, check_triples


@pytest.fixture(scope="module")
def ds():
    return synthesize_dataset(0, n_entities=40)


@pytest.fixture(scope="module")
def fitted(ds):
    return MINESLinkPredictor(k=2, dim=4, epochs=2).fit(ds.train, valid_triples=ds.valid)


def test_params_round_trip():
    est = MINESLinkPredictor(spec="GGG", dim=8)
    params = est.get_params()
    assert params["spec"] == "GGG" and params["dim"] == 8 and params["random_state"] == 0
    assert clone(est).get_params() == params
    est.set_params(margin=5.0)
    assert est.margin == 5.0


def test_not_fitted(ds):
    with pytest.raises(NotFittedError):
        MINESLinkPredictor().decision_function(ds.test_targets, ds.test)


def test_invalid_params_raise_at_fit(ds):
    with pytest.raises(ValueError):
        MINESLinkPredictor(spec="RXR").fit(ds.train)


def test_fit_attributes(fitted, ds):
    assert len(fitted.history_) == 2
    assert fitted.n_relations_ == ds.train.n_relations
    assert fitted.n_params_ == fitted.stack_.n_params()


def test_inductive_scoring_shapes(fitted, ds):
    s = fitted.decision_function(ds.test_targets, ds.test)
    assert s.shape == (len(ds.test_targets),) and np.isfinite(s).all()
    X = fitted.transform(ds.test_targets, ds.test)
    assert X.shape == (len(ds.test_targets), 16)
    # the linear scorer applied to transform() reproduces the scores
    W, b = fitted.stack_.score_W.data, fitted.stack_.score_bias.data
    np.testing.assert_allclose(X @ W[:, 0] + b[0, 0], s, atol=1e-12)
    assert set(np.unique(fitted.predict(ds.test_targets, ds.test))) <= {0, 1}


def test_score_with_labels(fitted, ds):
    X = np.vstack([ds.test_targets, ds.test_targets[:, [2, 1, 0]]])
    y = np.r_[np.ones(len(ds.test_targets)), np.zeros(len(ds.test_targets))]
    assert 0.0 <= fitted.score(X, y, graph=ds.test) <= 1.0
    with pytest.raises(ValueError):
        fitted.score(X, y[:-1], graph=ds.test)


def test_evaluate_matches_report(fitted, ds):
    rep = fitted.evaluate(ds.test_targets, ds.test, n_rank_negatives=5)
    assert rep.recompute() == (rep.auc_pr, rep.hits_at_k)
    assert fitted.score(ds.test_targets, graph=ds.test) == pytest.approx(
        fitted.evaluate(ds.test_targets, ds.test, n_rank_negatives=1).auc_pr)


def test_fit_from_array_is_deterministic(ds):
    a = MINESLinkPredictor(k=2, dim=4, epochs=1).fit(ds.train.triples)
    b = MINESLinkPredictor(k=2, dim=4, epochs=1).fit(ds.train.triples)
    np.testing.assert_array_equal(a.decision_function(ds.valid), b.decision_function(ds.valid))


def test_check_triples():
    assert check_triples([[0, 1, 2]]).dtype == np.int64
    assert check_triples(np.array([[0.0, 1.0, 2.0]])).tolist() == [[0, 1, 2]]
    for bad in ([[0, 1]], [[0.5, 1, 2]], [[-1, 0, 1]], []):
        with pytest.raises(ValueError):
            check_triples(bad)
    with pytest.raises(ValueError):
        check_triples([[0, 0, 5]], n_entities=5)
    with pytest.raises(ValueError):
        check_triples([[0, 2, 1]], n_relations=2)
    assert check_triples([], allow_empty=True).shape == (0, 3)


def test_check_graph():
    g = check_graph([[0, 0, 3], [3, 1, 1]])
    assert g.n_entities == 4 and g.n_relations == 2
    assert check_graph(g) is g
