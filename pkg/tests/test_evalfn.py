import numpy as np
import pytest

from divine import model
from divine.dataset import TOY_POISONED, TOY_REG, Dataset, generate_synthetic, standardize, toy_fixture
from divine.errors import ConfigError, EmptyCellError
from divine.evalfn import (EvalFn, f_equal_accuracy, f_equal_opportunity, f_equalized_odds, f_local_loss,
                           f_loss, importance_of)


def _brute(pred, ds):
    out = {}
    for g in "ab":
        for j in (-1, 1):
            cell = [k for k in range(ds.n) if ds.sensitive[k] == g and ds.labels[k] == j]
            out[g, j, "hit"] = sum(pred[k] == j for k in cell) / len(cell)
            out[g, j, "pos"] = sum(pred[k] == 1 for k in cell) / len(cell)
    ea = abs(out["a", 1, "hit"] - out["b", 1, "hit"]) + abs(out["a", -1, "hit"] - out["b", -1, "hit"])
    eo = abs(out["a", 1, "pos"] - out["b", 1, "pos"]) + abs(out["a", -1, "pos"] - out["b", -1, "pos"])
    eop = abs(out["a", 1, "hit"] - out["b", 1, "hit"])
    return ea, eo, eop


def test_f_loss_at_zero():
    ds = generate_synthetic(20, 2, seed=0)
    assert f_loss(np.zeros(3), ds) == pytest.approx(22 * np.log(2))


def test_f_loss_poisoned_larger():
    ds = toy_fixture()
    five = ds.subset(range(5))
    assert f_loss(model.fit(ds, TOY_REG), ds) > f_loss(model.fit(five, TOY_REG), five)


def test_f_loss_vanishes_for_separable_limit():
    ds = Dataset.from_arrays([[-1.0], [1.0]], [-1, 1], ["a", "b"])
    assert f_loss(model.fit(ds, reg=1e-8, tol=1e-10), ds) < 1e-3


def test_local_loss():
    x = np.array([3.0, 1.0])
    assert f_local_loss(np.array([5.0, 0.0]), (x, 1.0)) < 1e-6
    assert f_local_loss(np.zeros(2), (x, 1.0)) == pytest.approx(np.log(2))
    ds = standardize(generate_synthetic(seed=0))[0]
    p = model.fit(ds)
    wrong = np.flatnonzero(model.predict(p, ds.features) != ds.labels)[0]
    assert f_local_loss(p, (ds.features[wrong], ds.labels[wrong])) > np.log(2)


def test_equal_accuracy_arithmetic():
    # group a: positives both predicted +1; group b: positives split; all negatives right
    X = np.array([[1.0], [1.0], [1.0], [-1.0], [-1.0], [-1.0]])
    y = np.array([1, 1, 1, 1, -1, -1])
    s = np.array(["a", "a", "b", "b", "a", "b"])
    ds = Dataset.from_arrays(X, y, s, add_intercept=False)
    # TPR a = 1, TPR b = 0.5, TNR both 1
    assert f_equal_accuracy(np.array([1.0]), ds) == pytest.approx(0.5)


def test_symmetric_groups_zero():
    X = np.array([[1.0], [1.0], [-1.0], [-1.0]])
    ds = Dataset.from_arrays(X, [1, 1, -1, -1], ["a", "b", "a", "b"], add_intercept=False)
    for f in (f_equal_accuracy, f_equal_opportunity, f_equalized_odds):
        assert f(np.array([1.0]), ds) == 0.0


def test_toy_values_and_brute_force():
    ds = toy_fixture()
    p = model.fit(ds, TOY_REG)
    assert abs(f_equal_accuracy(p, ds) - 1.0) <= 1e-9
    ea, eo, eop = _brute(model.predict(p, ds.features), ds)
    assert f_equal_accuracy(p, ds) == pytest.approx(ea)
    assert f_equalized_odds(p, ds) == pytest.approx(eo)
    assert f_equal_opportunity(p, ds) == pytest.approx(eop)


def test_bounds_and_brute_force_random(rng):
    for _ in range(40):
        n = rng.integers(8, 50)
        X = rng.normal(size=(n, 2))
        y = rng.choice([-1, 1], n)
        s = rng.choice(["a", "b"], n)
        y[:4] = [1, 1, -1, -1]
        s[:4] = ["a", "b", "a", "b"]
        ds = Dataset.from_arrays(X, y, s)
        theta = rng.normal(size=3)
        ea, eo, eop = _brute(model.predict(theta, ds.features), ds)
        v_ea, v_eo, v_eop = (f_equal_accuracy(theta, ds), f_equalized_odds(theta, ds),
                             f_equal_opportunity(theta, ds))
        assert 0 <= v_ea <= 2 and 0 <= v_eo <= 2 and 0 <= v_eop <= 1
        assert (v_ea, v_eo, v_eop) == pytest.approx((ea, eo, eop))
        swapped = Dataset.from_arrays(X, y, np.where(s == "a", "b", "a"))
        assert f_equal_accuracy(theta, swapped) == pytest.approx(f_equal_accuracy(theta, ds))


def test_empty_cell():
    ds = Dataset.from_arrays([[0.0], [1.0]], [1, -1], ["a", "a"])
    with pytest.raises(EmptyCellError, match="sensitive='b'"):
        f_equal_accuracy(np.zeros(2), ds)


def test_importance_of():
    ds = toy_fixture()
    p6 = model.fit(ds, TOY_REG)
    assert importance_of(EvalFn("loss"), p6.theta, p6.theta, ds) == 0.0
    keep = [i for i in range(6) if i != TOY_POISONED]
    p5 = model.fit(ds.subset(keep), TOY_REG)
    assert importance_of(EvalFn("equal_accuracy"), p5.theta, p6.theta, ds) < 0
    t2 = p6.theta + 0.1
    f = EvalFn("loss")
    assert importance_of(f, t2, p6.theta, ds) == f(t2, ds) - f(p6.theta, ds)


def test_evalfn_parse_and_gradient():
    ds = generate_synthetic(20, 2, seed=0)
    f = EvalFn.parse("local:5")
    assert f.kind == "local_loss" and f.point == 5 and f.name == "local:5"
    theta = np.array([0.2, -0.1, 0.3])
    assert np.allclose(f.gradient(theta, ds), model.grad_point(theta, ds.features[5], ds.labels[5]))
    assert EvalFn("loss+unfairness").is_fairness
    with pytest.raises(TypeError):
        EvalFn("equal_accuracy").gradient(theta, ds)
    with pytest.raises(ConfigError):
        EvalFn.parse("nope")
    ds = toy_fixture()
    theta = model.fit(ds, TOY_REG).theta
    comp = EvalFn("loss+unfairness")(theta, ds)
    assert comp == pytest.approx(f_loss(theta, ds) + f_equal_accuracy(theta, ds))
