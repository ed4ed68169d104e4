import itertools

import pytest

from logstitch.automata import TRUE, accepts, chain, enumerate_language, parallel_composition
from logstitch.dependency import ArchitectureGraph, DependencyMap, extract_dependencies, linearize
from logstitch.errors import EmptyInput, ReplayStuck, TransitionNotFound
from logstitch.inference import infer_models
from logstitch.logs import ComponentLog, Execution, LogEntry, parse_templates
from logstitch.stitching import GraftContext, graft, graft_execution, insert, slice_model, stitch

from golden_machines import (component_models, g, insert_expected, insert_inputs, labels, machine, toy_arch,
                             toy_deps, toy_execution, toy_models)


def names(m, s):
    return sorted(m.origin[s])


def test_slice_tc_exec2(running):
    ex = running["by_id"]["exec2"]
    ctx = GraftContext(ex, running["deps"]["exec2"], component_models())
    sl = slice_model(ctx, "TC", ex.logs["TC"].entries)
    assert sl.n_states == 3
    assert [names(sl, s) for s in sl.states] == [["s0"], ["s2"], ["s4"]]
    assert enumerate_language(sl, 4) == {(("tmp1", ("Y", "f1")), ("tmp3", ()))}
    assert ctx.cursors["TC"].state == 4


def test_slice_keeps_traversed_self_loop(running):
    ex = running["by_id"]["exec2"]
    ctx = GraftContext(ex, running["deps"]["exec2"], component_models())
    sl = slice_model(ctx, "MUX", ex.logs["MUX"].entries[:3])
    assert any(t.source == t.target and t.event == "tmp5" for t in sl.transitions)
    assert sl.finals == frozenset({2})
    assert accepts(sl, labels([("tmp4",), ("tmp5", "Y"), ("tmp5", "Y"), ("tmp6", "f1")]))


def test_leaf_slice_chk_exec2(running):
    ex = running["by_id"]["exec2"]
    ctx = GraftContext(ex, running["deps"]["exec2"], component_models())
    m = graft(ctx, "CHK", ex.logs["CHK"].entries)
    assert [(t.event, t.guard) for t in m.transitions] == [("tmp10", g("0"))]


def test_empty_slice(running):
    ex = running["by_id"]["exec2"]
    ctx = GraftContext(ex, running["deps"]["exec2"], component_models())
    sl = slice_model(ctx, "MUX", ())
    assert sl.n_states == 1 and sl.finals == frozenset({0})
    assert "MUX" not in ctx.cursors


def test_slice_replays_when_out_of_order(running):
    ex = running["by_id"]["exec1"]
    ctx = GraftContext(ex, running["deps"]["exec1"], component_models())
    late = slice_model(ctx, "MUX", ex.logs["MUX"].entries[4:])
    assert [t.event for t in late.transitions] == ["tmp7"]
    early = slice_model(ctx, "MUX", ex.logs["MUX"].entries[:1])
    assert [t.event for t in early.transitions] == ["tmp4"]


def test_slice_stuck():
    m = machine(2, [1], [(0, "a", TRUE, 1)])
    ex = Execution("e", {"C": ComponentLog("C", (LogEntry(0, "b", (), 0, "C"),))})
    ctx = GraftContext(ex, DependencyMap("e"), {"C": m})
    with pytest.raises(ReplayStuck):
        slice_model(ctx, "C", ex.logs["C"].entries)


def _toy_graft(deps):
    ex = toy_execution()
    return graft(GraftContext(ex, deps, toy_models()), "X", ex.logs["X"].entries)


def test_graft_toy_example():
    m = _toy_graft(toy_deps())
    assert accepts(m, labels([("e1X",), ("e1Y",), ("e2Y",), ("e2X",), ("e3Y",)]))
    assert accepts(m, labels([("e1X",), ("e1Y",), ("e2Y",), ("e2Y",), ("e2X",), ("e3Y",)]))
    assert not accepts(m, labels([("e1X",), ("e2X",), ("e1Y",), ("e3Y",)]))


def test_graft_toy_with_extracted_dependencies():
    templates = parse_templates("e1X\t0\te1X\ne2X\t0\te2X\ne1Y\t1\te1Y\ne2Y\t0\te2Y\ne3Y\t1\te3Y\n")
    deps = extract_dependencies(toy_execution(), toy_arch(), templates)
    assert deps.relations() == toy_deps().relations()
    assert enumerate_language(_toy_graft(deps), 6) == enumerate_language(_toy_graft(toy_deps()), 6)


def test_insert_example():
    m_x, m_y = insert_inputs()
    gt = m_x.out(0)[0]
    out = insert(m_x, gt, m_y)
    assert out.is_deterministic()
    assert out.n_states == 4
    assert enumerate_language(out, 5) == enumerate_language(insert_expected(), 5)
    merged = [s for s in out.states if out.origin[s] == frozenset({"s_t", "s_i"})]
    assert len(merged) == 1


def test_insert_epsilon_machine_is_noop():
    m_x, _ = insert_inputs()
    eps = machine(1, [0], [])
    out = insert(m_x, m_x.out(0)[0], eps)
    assert enumerate_language(out, 6) == enumerate_language(m_x, 6)


def test_insert_at_final_target_without_outgoing():
    m_x = machine(2, [1], [(0, "a", TRUE, 1)])
    m_y = machine(3, [1, 2], [(0, "p", TRUE, 1), (1, "q", TRUE, 2)])
    out = insert(m_x, m_x.out(0)[0], m_y)
    assert enumerate_language(out, 4) == {(("a", ()),), (("a", ()), ("p", ())), (("a", ()), ("p", ()), ("q", ()))}


def test_insert_missing_transition():
    m_x, m_y = insert_inputs()
    with pytest.raises(TransitionNotFound):
        insert(m_x, (0, "zzz", TRUE, 1), m_y)


def test_insert_m23_under_tmp1():
    """The intermediate Exec-2 machine after grafting the first TC entry."""
    slice1 = machine(3, [2], [(0, "tmp1", g("Y", "f1"), 1), (1, "tmp3", TRUE, 2)])
    slice2 = machine(3, [2], [(0, "tmp4", TRUE, 1), (1, "tmp5", TRUE, 1), (1, "tmp6", TRUE, 2)])
    slice3 = machine(2, [1], [(0, "tmp10", g("0"), 1)])
    m23 = parallel_composition([slice2, slice3])
    out = insert(slice1, slice1.out(0)[0], m23)
    assert accepts(out, labels([("tmp1", "Y", "f1"), ("tmp3",)]))
    assert accepts(out, labels([("tmp1", "Y", "f1"), ("tmp4",), ("tmp5", "Y"), ("tmp6", "f1"), ("tmp10", "0"),
                                ("tmp3",)]))
    assert accepts(out, labels([("tmp1", "Y", "f1"), ("tmp10", "0"), ("tmp4",), ("tmp6", "f1"), ("tmp3",)]))
    assert not accepts(out, labels([("tmp1", "Y", "f1"), ("tmp10", "0"), ("tmp4",), ("tmp6", "f1")]))


def all_linearizations(execution, deps, arch):
    """Every interleaving consistent with the leads-to relation, by brute-force expansion."""
    def expand(seq):
        if not seq:
            return [()]
        head, rest = seq[0], seq[1:]
        groups = [expand(s) for _, s in deps.grouped(head)]
        mids = [()]
        for options in groups:
            mids = [w for m in mids for o in options for w in interleave(m, o)]
        return [(head,) + m + r for m in mids for r in expand(rest)]

    def interleave(u, v):
        if not u or not v:
            return [u + v]
        return [(u[0],) + w for w in interleave(u[1:], v)] + [(v[0],) + w for w in interleave(u, v[1:])]

    return expand(tuple(execution.log_of(arch.main).entries))


def test_exec2_graft_accepts_all_linearizations(running):
    ex = running["by_id"]["exec2"]
    deps = running["deps"]["exec2"]
    m = graft_execution(ex, deps, component_models(), running["arch"])
    canon = labels([("tmp1", "Y", "f1"), ("tmp10", "0"), ("tmp4",), ("tmp5", "Y"), ("tmp6", "f1"), ("tmp3",),
                    ("tmp7", "no"), ("tmp9",)])
    assert accepts(m, canon)
    variant = canon[:1] + canon[2:5] + canon[1:2] + canon[5:]
    assert accepts(m, variant)
    lins = all_linearizations(ex, deps, running["arch"])
    assert len(lins) == 4  # CHK[1] in any of four positions around MUX[1..3]
    for w in lins:
        assert accepts(m, w)


def test_exec1_graft_accepts_all_linearizations(running):
    ex = running["by_id"]["exec1"]
    deps = running["deps"]["exec1"]
    m = graft_execution(ex, deps, component_models(), running["arch"])
    for w in all_linearizations(ex, deps, running["arch"]):
        assert accepts(m, w)


def test_stitch_running_example(running):
    execs, deps, arch = running["executions"], running["deps"], running["arch"]
    for models in (component_models(), infer_models(execs, arch.components)):
        m = stitch(execs, deps, models, arch)
        assert m.is_deterministic()
        for ex in execs:
            assert accepts(m, linearize(ex, deps[ex.exec_id], arch))
            for seed in range(10):
                assert accepts(m, linearize(ex, deps[ex.exec_id], arch, seed))


def test_stitch_single_and_empty(running):
    execs, deps, arch = running["executions"], running["deps"], running["arch"]
    models = component_models()
    single = stitch(execs[:1], deps, models, arch)
    graft1 = graft_execution(execs[0], deps[execs[0].exec_id], models, arch)
    assert enumerate_language(single, 10) == enumerate_language(graft1, 10)
    with pytest.raises(EmptyInput):
        stitch([], deps, models, arch)


def test_stitch_minimize_language_equal(running):
    execs, deps, arch = running["executions"], running["deps"], running["arch"]
    plain = stitch(execs, deps, component_models(), arch)
    small = stitch(execs, deps, component_models(), arch, minimize=True)
    assert small.n_states <= plain.n_states
    assert enumerate_language(small, 10) == enumerate_language(plain, 10)


def test_stitch_jobs_and_dumps(running, tmp_path):
    execs, deps, arch = running["executions"], running["deps"], running["arch"]
    serial = stitch(execs, deps, component_models(), arch)
    parallel = stitch(execs, deps, component_models(), arch, jobs=2, dump_dir=tmp_path)
    assert serial == parallel
    assert sorted(p.name for p in tmp_path.iterdir()) == ["exec1.json", "exec2.json"]
