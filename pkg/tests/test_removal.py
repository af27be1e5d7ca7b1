import numpy as np
import pytest

from divine import model
from divine.dataset import TOY_POISONED, TOY_REG, generate_synthetic, standardize, toy_fixture
from divine.errors import ConfigError
from divine.evalfn import EvalFn, f_equal_accuracy
from divine.removal import RemovalConfig, RemovalTrace, count_unfairness_inducing, run_removal
from divine.valuation import ImportanceScores, loo_scores

EA = EvalFn("equal_accuracy")


def _toy_cfg(**kw):
    base = dict(measure="LOO", eval_fn=EA, batch_fraction=1 / 6, max_fraction=0.5, reg=TOY_REG)
    base.update(kw)
    return RemovalConfig(**base)


def test_toy_removes_poison_first():
    ds = toy_fixture()
    tr = run_removal(ds, ds, ds, _toy_cfg())
    assert tr.removed_ids[1] == [TOY_POISONED]
    assert tr.unfairness[1] == 0.0 and tr.accuracy[1] == 1.0


def test_toy_recalc_stops_flagging():
    ds = toy_fixture()
    tr = run_removal(ds, ds, ds, _toy_cfg(recalc_every_batch=True))
    assert tr.removed_ids[1] == [TOY_POISONED]
    assert tr.all_harmful_exhausted[1]


def test_row0_is_original_model():
    ds = toy_fixture()
    tr = run_removal(ds, ds, ds, _toy_cfg())
    p = model.fit(ds, TOY_REG)
    assert tr.cumulative_fraction_removed[0] == 0.0 and tr.removed_ids[0] == []
    assert tr.accuracy[0] == model.accuracy(p, ds)
    assert tr.unfairness[0] == f_equal_accuracy(p, ds)


@pytest.fixture(scope="module")
def splits():
    from divine.dataset import SplitSpec, split
    return standardize(*split(generate_synthetic(380, 20, seed=4), SplitSpec(seed=4)))


@pytest.mark.parametrize("selection", ["importance", "divine", "diversity", "random"])
def test_trace_invariants(splits, selection):
    tr, va, te = splits
    cfg = RemovalConfig(measure="IF", eval_fn=EA, batch_fraction=0.05, max_fraction=0.2,
                        selection=selection, gamma=0.5)
    trace = run_removal(tr, va, te, cfg)
    fr = trace.cumulative_fraction_removed
    assert all(b > a for a, b in zip(fr, fr[1:]))
    removed = [i for row in trace.removed_ids for i in row]
    assert len(removed) == len(set(removed))
    assert abs(len(removed) / tr.n - fr[-1]) < 1e-12
    assert all(len(r) == int(np.ceil(0.05 * tr.n)) for r in trace.removed_ids[1:-1])


def test_synthetic_removal_does_not_raise_unfairness():
    from divine.dataset import SplitSpec, split
    tr, va, te = standardize(*split(generate_synthetic(seed=0), SplitSpec(seed=0)))
    trace = run_removal(tr, va, te, RemovalConfig(measure="IF", eval_fn=EA, max_fraction=0.05))
    assert trace.unfairness[1] <= trace.unfairness[0]


def test_report_on_test_split(splits):
    tr, va, te = splits
    trace = run_removal(tr, va, te, RemovalConfig(measure="IF", eval_fn=EA, max_fraction=0.05,
                                                  report_split="test"))
    p = model.fit(tr)
    assert trace.accuracy[0] == model.accuracy(p, te)


def test_config_validation():
    with pytest.raises(ConfigError):
        RemovalConfig(batch_fraction=0.7, max_fraction=0.6)
    with pytest.raises(ConfigError):
        RemovalConfig(selection="best")
    with pytest.raises(ConfigError):
        RemovalConfig(report_split="dev")


@pytest.mark.filterwarnings("ignore:fitting on a single label")
def test_trace_csv_round_trip(tmp_path):
    ds = toy_fixture()
    tr = run_removal(ds, ds, ds, _toy_cfg(max_fraction=0.67))
    tr.to_csv(tmp_path / "t.csv")
    back = RemovalTrace.from_csv(tmp_path / "t.csv")
    assert back.removed_ids == tr.removed_ids
    assert back.unfairness == tr.unfairness  # missing metrics survive as None


def test_count_unfairness_inducing():
    ds = toy_fixture()
    p = model.fit(ds, TOY_REG)
    helpful = ImportanceScores(np.ones(6), ds.ids, "LOO", "equal_accuracy")
    assert count_unfairness_inducing(helpful, p, ds) == {"count": 0, "count_correctly_classified": 0}
    sc = loo_scores(ds, EA, reg=TOY_REG)
    out = count_unfairness_inducing(sc, p, ds)
    assert out["count"] >= 1
    assert sc.values[TOY_POISONED] < 0
    neg = sc.negated()
    assert count_unfairness_inducing(neg, p, ds)["count"] == 6 - int(np.sum(neg.values >= 0))
