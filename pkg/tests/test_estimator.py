import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from mgad import MGAD
from mgad._validation import ValidationError
from mgad.ingest import make_synthetic_benchmark

FAST = dict(epochs=30, graph_encoder_dims=(16, 16), subgraph_encoder_dims=(16, 16), attr_decoder_dims=(16,))


@pytest.fixture(scope="module")
def bench():
    return make_synthetic_benchmark(seed=0)


@pytest.fixture(scope="module")
def fitted(bench):
    return MGAD(**FAST).fit(bench.graph)


def test_get_params_round_trip():
    est = MGAD(alpha=0.3, walk_length=4)
    params = est.get_params()
    assert params["alpha"] == 0.3 and params["walk_length"] == 4
    assert clone(est).get_params() == params


def test_fitted_attributes(fitted, bench):
    n = bench.graph.n_nodes
    assert fitted.decision_scores_.shape == (n,)
    assert sorted(fitted.ranking().tolist()) == list(range(n))
    assert len(fitted.history_) == 30
    assert fitted.labels_.sum() <= int(np.ceil(0.1 * n))
    assert fitted.subgraph_.graph.labels.any()


def test_prediction_api(fitted, bench):
    np.testing.assert_array_equal(fitted.decision_function(), fitted.decision_scores_)
    np.testing.assert_array_equal(fitted.score_samples(), -fitted.decision_scores_)
    np.testing.assert_array_equal(fitted.predict(), fitted.labels_)
    np.testing.assert_array_equal(fitted.decision_function(bench.graph), fitted.decision_scores_)
    assert fitted.transform().shape == (bench.graph.n_nodes, 32)


def test_same_seed_same_scores(bench, fitted):
    again = MGAD(**FAST).fit(bench.graph)
    np.testing.assert_array_equal(again.decision_scores_, fitted.decision_scores_)


def test_subgraph_modes(bench):
    none = MGAD(subgraph="none", **FAST).fit(bench.graph)
    assert none.subgraph_.is_empty
    ego = MGAD(subgraph="ego-net", **FAST).fit(bench.graph)
    assert ego.subgraph_.n_nodes > 0
    with pytest.raises(ValidationError):
        MGAD(subgraph="bogus", **FAST).fit(bench.graph)


def test_no_labels_degenerates_to_no_subgraph(bench):
    g = bench.graph.with_(labels=np.zeros(bench.graph.n_nodes, dtype=bool))
    a = MGAD(subgraph="metapath", **FAST).fit(g)
    b = MGAD(subgraph="none", **FAST).fit(g)
    c = MGAD(subgraph="ego-net", **FAST).fit(g)
    np.testing.assert_array_equal(a.decision_scores_, b.decision_scores_)
    np.testing.assert_array_equal(c.decision_scores_, b.decision_scores_)


def test_not_fitted():
    with pytest.raises(NotFittedError):
        MGAD().decision_function()


def test_bad_contamination(bench):
    with pytest.raises(ValidationError):
        MGAD(contamination=0.0, **FAST).fit(bench.graph)


def test_transductive_size_check(fitted):
    other = make_synthetic_benchmark(seed=1, n_nodes=200, clique_size=10, num_attribute=10).graph
    with pytest.raises(ValidationError):
        fitted.decision_function(other)
