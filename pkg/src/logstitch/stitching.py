"""Building the system-level model from component models.

Per execution, the main component's model is sliced along the main log and
every entry that leads to downstream activity gets the (recursively grafted,
parallel-composed) downstream slices inserted under the transition that
reads it.  The per-execution machines are then unioned.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from . import automata
from .automata import GuardedFsm, Transition, determinize_with_map, parallel_composition, union
from .dependency import ArchitectureGraph, DependencyMap
from .errors import EmptyInput, InferenceTimeout, ReplayStuck, TransitionNotFound
from .logs import Execution, LogEntry

log = logging.getLogger(__name__)


@dataclass
class ReplayCursor:
    state: int
    next_seq: int = 0


@dataclass
class GraftContext:
    execution: Execution
    deps: DependencyMap
    models: Mapping[str, GuardedFsm]
    cursors: dict = field(default_factory=dict)

    def start_state(self, component: str, seq_no: int) -> int:
        """State of the component model right before reading entry ``seq_no``.

        Normally the cursor left by the previous slice; if slices arrive out
        of log order the component log is replayed instead.
        """
        model = self.models[component]
        cur = self.cursors.get(component)
        if cur is None or cur.next_seq > seq_no:
            cur = ReplayCursor(model.initial, 0)
        if cur.next_seq == seq_no:
            return cur.state
        log.debug("%s: replaying %s entries %d..%d", self.execution.exec_id, component, cur.next_seq, seq_no)
        s = cur.state
        clog = self.execution.logs[component]
        for i in range(cur.next_seq, seq_no):
            t = enabled_transition(model, s, clog[i])
            if t is None:
                raise ReplayStuck(component, i, s, clog[i])
            s = t.target
        return s


def enabled_transition(m: GuardedFsm, state: int, entry: LogEntry) -> Transition | None:
    for t in m.out_by_event(state, entry.template_id):
        if t.guard(entry.valuation):
            return t
    return None


def slice_model(ctx: GraftContext, component: str, entries: Sequence[LogEntry]) -> GuardedFsm:
    """Sub-machine of the component model traversed while reading ``entries``.

    Its only final state is the last state visited; the component's cursor
    moves there.
    """
    model = ctx.models[component]
    if not entries:
        cur = ctx.cursors.get(component)
        s = cur.state if cur else model.initial
        return GuardedFsm(1, 0, [0], [], {0: model.origin.get(s, frozenset([f"{component}:{s}"]))})
    s = ctx.start_state(component, entries[0].seq_no)
    ids = {s: 0}
    trans = []
    for i, e in enumerate(entries):
        t = enabled_transition(model, s, e)
        if t is None:
            raise ReplayStuck(component, i, s, e)
        if t.target not in ids:
            ids[t.target] = len(ids)
        trans.append((ids[t.source], t.event, t.guard, ids[t.target]))
        s = t.target
    ctx.cursors[component] = ReplayCursor(s, entries[-1].seq_no + 1)
    origin = {new: model.origin.get(old, frozenset([f"{component}:{old}"])) for old, new in ids.items()}
    return GuardedFsm(len(ids), 0, [ids[s]], trans, origin)


def insert_with_map(m_x: GuardedFsm, gt: Transition, m_y: GuardedFsm) -> tuple[GuardedFsm, list]:
    """Attach ``m_y`` at the target of ``gt`` by duplicate-and-redirect, then fold.

    A copy of ``gt`` enters ``m_y``'s initial state and copies of the target's
    outgoing transitions leave every final state of ``m_y``; the originals
    stay.  ``m_y``'s final states are final only if the target was.  Returns
    the new machine and the map from ``m_x`` states to its states.
    """
    gt = Transition(*gt)
    if gt not in set(m_x.out(gt.source)):
        raise TransitionNotFound(f"{gt} is not a transition of the machine")
    n = m_x.n_states
    s_t = gt.target
    trans = list(m_x.transitions)
    trans += [(n + t.source, t.event, t.guard, n + t.target) for t in m_y.transitions]
    trans.append((gt.source, gt.event, gt.guard, n + m_y.initial))
    for t in m_x.out(s_t):
        # a self-loop gt is also an outgoing transition of its target
        for f in m_y.finals:
            trans.append((n + f, t.event, t.guard, t.target))
    finals = set(m_x.finals)
    if s_t in m_x.finals:
        finals.update(n + f for f in m_y.finals)
    origin = dict(m_x.origin)
    origin.update({n + s: tags for s, tags in m_y.origin.items()})
    combined = GuardedFsm(n + m_y.n_states, m_x.initial, finals, trans, origin)
    folded, mapping = determinize_with_map(combined)
    return folded, mapping[:n]


def insert(m_x: GuardedFsm, gt: Transition, m_y: GuardedFsm) -> GuardedFsm:
    return insert_with_map(m_x, gt, m_y)[0]


def graft(ctx: GraftContext, component: str, entries: Sequence[LogEntry]) -> GuardedFsm:
    m_sl = slice_model(ctx, component, entries)
    s = m_sl.initial
    for i, e in enumerate(entries):
        gt = enabled_transition(m_sl, s, e)
        if gt is None:
            raise ReplayStuck(component, i, s, e)
        parts = [graft(ctx, c, seq) for c, seq in ctx.deps.grouped(e)]
        if parts:
            m_pl = parallel_composition(parts)
            m_sl, mapping = insert_with_map(m_sl, gt, m_pl)
            s = mapping[gt.target]
        else:
            s = gt.target
    return m_sl


def graft_execution(execution: Execution, deps: DependencyMap, models: Mapping[str, GuardedFsm],
                    arch: ArchitectureGraph) -> GuardedFsm:
    ctx = GraftContext(execution, deps, models)
    return graft(ctx, arch.main, execution.log_of(arch.main).entries)


def stitch(executions: Sequence[Execution], deps: Mapping[str, DependencyMap],
           models: Mapping[str, GuardedFsm], arch: ArchitectureGraph, minimize: bool = False,
           deadline: float | None = None, dump_dir=None, jobs: int = 1) -> GuardedFsm:
    """Union of the per-execution grafted machines.

    ``deadline`` is a :func:`time.monotonic` value checked between executions.
    With ``jobs > 1`` the grafts are built in worker processes.
    """
    if not executions:
        raise EmptyInput("stitch needs at least one execution")
    grafted = []
    args = [(ex, deps[ex.exec_id], models, arch) for ex in executions]
    if jobs > 1 and len(args) > 1:
        pool = ProcessPoolExecutor(max_workers=jobs)
        results = pool.map(_graft_args, args, chunksize=max(1, len(args) // (4 * jobs)))
    else:
        pool = None
        results = map(_graft_args, args)
    try:
        for ex, m in zip(executions, results):
            if deadline is not None and time.monotonic() > deadline:
                raise InferenceTimeout(f"timed out after {len(grafted)} of {len(executions)} grafts")
            _dump(m, ex.exec_id, dump_dir)
            grafted.append(m)
    finally:
        if pool is not None:
            pool.shutdown(cancel_futures=True)
    if deadline is not None and time.monotonic() > deadline:
        raise InferenceTimeout("timed out before the union")
    m_sys = union(grafted)
    if minimize:
        m_sys = automata.minimize(m_sys)
    log.info("stitched %d executions: %d states, %d transitions", len(executions), m_sys.n_states,
             len(m_sys.transitions))
    return m_sys


def _graft_args(args) -> GuardedFsm:
    return graft_execution(*args)


def _dump(m: GuardedFsm, exec_id: str, dump_dir):
    if dump_dir is None:
        return
    out = Path(dump_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{exec_id}.json").write_text(automata.dumps(m, include_origin=True))
