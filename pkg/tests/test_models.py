import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from miai.dataset import Attribute, Dataset, Schema
from miai.models import (CARTClassifier, ConfusionMatrix, MalformedQueryError, SoftmaxMLPClassifier,
                         TargetModel, confusion_matrix, importance, predict, train_decision_tree,
                         train_neural_net)
from miai.models.neural import softmax

from conftest import random_toy, toy_dataset, toy_schema


def xor_dataset():
    rows = [{"a": "p", "b": "u", "s": "s0", "y": "y0"},
            {"a": "p", "b": "v", "s": "s0", "y": "y1"},
            {"a": "q", "b": "u", "s": "s0", "y": "y1"},
            {"a": "q", "b": "v", "s": "s0", "y": "y0"}]
    return toy_dataset(rows)


def test_xor_tree_perfect():
    d = xor_dataset()
    model = train_decision_tree(d, max_depth=2, min_leaf_count=1)
    labels, conf, _ = model.predict_many(d.frame)
    assert labels.tolist() == d.labels.tolist()
    # one record per leaf: (1 + 1) / (1 + 2)
    assert np.allclose(conf, 2 / 3)


def test_single_class_is_a_leaf():
    rows = [{"a": "p", "b": "u", "s": "s0", "y": "y1"}] * 4
    model = train_decision_tree(toy_dataset(rows))
    assert model.estimator.depth_ == 0
    r = predict(model, {"a": "q", "b": "w", "s": "s1"})
    assert r.label == "y1"
    assert r.confidence == pytest.approx(5 / 6)


def test_laplace_leaf_nine_to_zero():
    X = np.zeros((9, 1))
    y = np.array(["A"] * 9, dtype=object)
    tree = CARTClassifier(max_depth=0).fit(X, y, classes=["A", "B"])
    p = tree.predict_proba(np.zeros((1, 1)))[0]
    assert tree.predict(np.zeros((1, 1)))[0] == "A"
    assert p[0] == pytest.approx(10 / 11)


def test_tree_confidence_strictly_inside_unit_interval():
    d = random_toy(200, seed=3)
    model = train_decision_tree(d, min_leaf_count=1)
    s = model.scores(d.frame)
    assert (s > 0).all() and (s < 1).all()
    assert np.allclose(s.sum(axis=1), 1)


def test_unknown_category_still_answers():
    d = xor_dataset()
    model = train_decision_tree(d, max_depth=2, min_leaf_count=1)
    r = model.predict({"a": "zzz", "b": "u", "s": "s0"})
    assert r.label in ("y0", "y1")


def test_missing_attribute_rejected():
    model = train_decision_tree(xor_dataset(), max_depth=2, min_leaf_count=1)
    with pytest.raises(MalformedQueryError) as e:
        model.predict({"a": "p", "s": "s0"})
    assert e.value.attribute == "b"


def test_tree_save_load_roundtrip(tmp_path):
    d = random_toy(300, seed=5, k=3, m=3)
    model = train_decision_tree(d, min_leaf_count=2)
    model.save(tmp_path / "m.json")
    loaded = TargetModel.load(tmp_path / "m.json")
    a, b = model.predict_many(d.frame), loaded.predict_many(d.frame)
    assert a[0].tolist() == b[0].tolist()
    assert np.array_equal(a[2], b[2])


def separable():
    schema = Schema((
        Attribute("x1", "numeric", (-10, 10)),
        Attribute("x2", "numeric", (-10, 10)),
        Attribute("s", "categorical", ("n", "y"), role="sensitive"),
        Attribute("t", "categorical", ("neg", "pos"), role="target"),
    ))
    rng = np.random.default_rng(1)
    pts = rng.uniform(-5, 5, size=(20, 2))
    # closed-form separator x1 + x2 = 0 with a margin
    pts[:, 0] += np.where(pts.sum(axis=1) >= 0, 1.0, -1.0)
    label = np.where(pts.sum(axis=1) >= 0, "pos", "neg")
    frame = pd.DataFrame({"x1": pts[:, 0], "x2": pts[:, 1], "s": "n", "t": label})
    return Dataset(schema, frame, "DS_T")


def test_net_separable_accuracy():
    d = separable()
    model = train_neural_net(d)
    labels, _, scores = model.predict_many(d.frame)
    assert (labels == d.labels.to_numpy()).mean() >= 0.95
    assert np.allclose(scores.sum(axis=1), 1, atol=1e-6)


def test_net_deterministic_and_roundtrip(tmp_path):
    d = random_toy(100, seed=2)
    m1 = train_neural_net(d, epochs=3, seed=11)
    m2 = train_neural_net(d, epochs=3, seed=11)
    for w1, w2 in zip(m1.estimator.weights_, m2.estimator.weights_):
        assert np.array_equal(w1, w2)
    m1.save(tmp_path / "n.json")
    m3 = TargetModel.load(tmp_path / "n.json")
    assert np.array_equal(m1.scores(d.frame), m3.scores(d.frame))


def test_net_argmax_contract():
    assert np.argmax([0.2, 0.5, 0.3]) == 1
    net = SoftmaxMLPClassifier(hidden=(), epochs=0).fit(np.zeros((3, 1)), np.array(["a", "b", "c"]))
    p = net.predict_proba(np.zeros((1, 1)))
    assert p.sum() == pytest.approx(1)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=6))
def test_softmax_normalized(z):
    p = softmax(np.array([z]))
    assert p.min() >= 0
    assert p.sum() == pytest.approx(1, abs=1e-6)


def test_predict_is_pure():
    model = train_decision_tree(random_toy(100, seed=8), min_leaf_count=1)
    q = {"a": "p", "b": "w", "s": "s1"}
    assert model.predict(q) == model.predict(q)


class Always:
    classes_ = np.array(["y0", "y1"], dtype=object)

    def predict_proba(self, X):
        return np.tile([0.9, 0.1], (len(X), 1))


def test_confusion_always_a():
    rows = [{"a": "p", "b": "u", "s": "s0", "y": y} for y in ["y0"] * 3 + ["y1"] * 2]
    d = toy_dataset(rows)
    base = train_decision_tree(d)
    model = TargetModel("decision-tree", base.schema, base.encoder, Always())
    cm = confusion_matrix(model, d)
    assert cm.counts.tolist() == [[3, 0], [2, 0]]
    assert cm.total == 5
    assert cm.rates().tolist() == [[1.0, 0.0], [1.0, 0.0]]


def test_confusion_perfect_and_zero_row():
    cm = ConfusionMatrix(np.array([[4, 0], [0, 0]]), ("a", "b"))
    assert cm.rates().tolist() == [[1.0, 0.0], [0.0, 0.0]]
    d = xor_dataset()
    model = train_decision_tree(d, max_depth=2, min_leaf_count=1)
    assert confusion_matrix(model, d).counts.tolist() == [[2, 0], [0, 2]]


def test_confusion_adult_structure(adult_tree, adult_split):
    cm = confusion_matrix(adult_tree, adult_split[1])
    assert cm.total == 35_222
    rows = cm.counts.sum(axis=1)
    assert rows.tolist() == adult_split[1].labels.value_counts().reindex(cm.labels).tolist()
    r = cm.rates()
    assert np.allclose(r.sum(axis=1), 1)


def test_importance_rules(adult_tree):
    leaf = train_decision_tree(toy_dataset([{"a": "p", "b": "u", "s": "s0", "y": "y0"}] * 3))
    assert set(importance(leaf).values()) == {0.0}
    rows = [{"a": a, "b": "u", "s": "s0", "y": "y0" if a == "p" else "y1"} for a in "pq" * 5]
    only_a = train_decision_tree(toy_dataset(rows), min_leaf_count=1)
    assert importance(only_a)["a"] == pytest.approx(1.0)
    imp = importance(adult_tree)
    assert sum(imp.values()) == pytest.approx(1.0)
    assert imp["marital-status"] > 0.01
    net = train_neural_net(random_toy(20), epochs=1)
    with pytest.raises(ValueError):
        importance(net)


def test_sklearn_estimator_api():
    tree = CARTClassifier(max_depth=3)
    assert tree.get_params()["max_depth"] == 3
    tree.set_params(min_leaf_count=2)
    assert tree.min_leaf_count == 2
    X = np.array([[0.0], [1.0], [0.0], [1.0]])
    tree.fit(X, np.array(["a", "b", "a", "b"]))
    assert tree.score(X, np.array(["a", "b", "a", "b"])) == 1.0
