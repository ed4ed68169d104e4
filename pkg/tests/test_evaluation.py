import pytest
from hypothesis import given, settings, strategies as st

from logstitch.automata import accepts
from logstitch.dependency import linearize
from logstitch.errors import TooFewExecutions
from logstitch.evaluation import (ADD, DELETE, SWAP, EvalConfig, EvalReport, FoldResult, MutationSpec, PositiveIndex,
                                  evaluate, kfold_split, mutate, synthesize_negative)
from logstitch.inference import build_guards, entry_label, infer_models
from logstitch.logs import LogEntry
from logstitch.stitching import stitch


def entries(*tids):
    return [LogEntry(i, t, (), i, "C") for i, t in enumerate(tids)]


def plain(e):
    return (e.template_id, None)


def test_kfold_ten_of_ten():
    folds = kfold_split(list(range(10)), 10, seed=1)
    assert len(folds) == 10
    assert all(len(test) == 1 and len(train) == 9 for train, test in folds)


def test_kfold_leave_one_out():
    folds = kfold_split(list("abcdefg"), 7, seed=3)
    assert sorted(x for _, test in folds for x in test) == list("abcdefg")


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 30), st.integers(2, 10), st.integers(0, 10 ** 6))
def test_kfold_is_partition(n, k, seed):
    if n < k:
        with pytest.raises(TooFewExecutions):
            kfold_split(list(range(n)), k, seed)
        return
    folds = kfold_split(list(range(n)), k, seed)
    tests = [x for _, test in folds for x in test]
    assert sorted(tests) == list(range(n))
    sizes = [len(test) for _, test in folds]
    assert max(sizes) - min(sizes) <= 1
    for train, test in folds:
        assert set(train).isdisjoint(test) and len(train) + len(test) == n


def test_kfold_rejects_k1():
    with pytest.raises(ValueError):
        kfold_split([1, 2], 1, 0)


def _find(kind, log, index, donors=(), want=None):
    for seed in range(500):
        m = mutate(log, MutationSpec(kind, seed), index, plain, donors)
        if m is not None and (want is None or want(m)):
            return m
    raise AssertionError("no mutant found")


def test_swap_window_examples():
    log = entries("a", "b", "c")
    m = _find(SWAP, log, PositiveIndex(), want=lambda m: m.spec.location == 0 and m.entries[1].template_id == "a"
              and m.entries[2].template_id == "c")
    assert [e.template_id for e in m.entries] == ["b", "a", "c"]
    assert set(m.windows) == {(("<start>", None), ("b", None), ("a", None)), (("b", None), ("a", None), ("c", None))}
    # the same swap is rejected once its window is a positive trigram
    idx = PositiveIndex([[("b", None), ("a", None), ("c", None)]])
    assert mutate(log, m.spec, idx, plain) is None


def test_delete_and_add():
    log = entries("a", "b", "c")
    idx = PositiveIndex([[plain(e) for e in log]])
    d = _find(DELETE, log, idx)
    assert len(d.entries) == 2
    donors = entries("z")
    a = _find(ADD, log, idx, donors)
    assert len(a.entries) == 4 and any(e.template_id == "z" for e in a.entries)


def test_mutants_never_hit_positive_windows(running):
    execs, deps, arch = running["executions"], running["deps"], running["arch"]
    parts = build_guards(cl for ex in execs for cl in ex.logs.values())
    lab = lambda e: entry_label(e, parts)
    pos = [linearize(ex, deps[ex.exec_id], arch) for ex in execs]
    idx = PositiveIndex([[lab(e) for e in p] for p in pos])
    donors = [e for ex in execs for cl in ex.logs.values() for e in cl]
    for seed in range(50):
        neg = synthesize_negative(pos[seed % 2], seed, idx, lab, donors)
        assert not any(idx.seen(w) for w in neg.windows)
        assert [lab(e) for e in neg.entries] not in [[lab(e) for e in p] for p in pos]


def test_deleting_tc_accepted_is_rejected(running):
    execs, deps, arch = running["executions"], running["deps"], running["arch"]
    m_sys = stitch(execs, deps, infer_models(execs, arch.components), arch)
    lin = linearize(running["by_id"]["exec1"], deps["exec1"], arch)
    neg = [e for e in lin if e.template_id != "tmp2"]
    assert not accepts(m_sys, neg)


def test_report_formulas():
    f = FoldResult(0, 0, 9, 10, tp=5, fn=5, tn=3, fp=1)
    assert f.recall == 0.5
    assert f.specificity == 0.75
    assert FoldResult(0, 0, 1, 0).recall is None
    rep = EvalReport("d", 1, 1, {}, [f, FoldResult(1, 0, 9, 10, tp=10, fn=0, tn=4, fp=0)])
    mean, std = rep.recall
    assert mean == pytest.approx(0.75)
    assert std == pytest.approx(0.3535533905932738)


def test_sanity_mode_full_recall(running):
    rep = evaluate(running["executions"], running["arch"], running["templates"],
                   EvalConfig(repeats=3, sanity=True, seed=5))
    assert rep.recall == (1.0, 0.0)
    for f in rep.folds:
        assert f.tp + f.fn == f.test
        assert f.tn + f.fp + f.skipped_negatives == f.test
        assert 0 <= f.specificity <= 1


def test_evaluate_too_few(running):
    with pytest.raises(TooFewExecutions):
        evaluate(running["executions"], running["arch"], running["templates"], EvalConfig(folds=3))


def test_report_reproducible(running):
    cfg = EvalConfig(folds=2, repeats=2, seed=9)
    a = evaluate(running["executions"], running["arch"], running["templates"], cfg)
    b = evaluate(running["executions"], running["arch"], running["templates"], cfg)
    assert a.dumps() == b.dumps()
    assert a.tsv() == b.tsv()
    assert "prep_time" not in a.dumps()
    assert a.table().splitlines()[0].split("\t")[:5] == ["dataset", "size", "execs", "states", "transitions"]
