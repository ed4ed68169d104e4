"""Component-level model inference: prefix tree plus k-tails state merging.

Guards are equality guards fixed before merging: a template whose observed
valuations are few gets one guard per valuation, otherwise a single ``True``
guard.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

from .automata import TRUE, Guard, GuardedFsm, merge_states, renumber_bfs
from .errors import EmptyInput
from .logs import ComponentLog, LogEntry

DEFAULT_K = 2
DEFAULT_GUARD_SPLIT_LIMIT = 8


@dataclass(frozen=True)
class MergePolicy:
    k: int = DEFAULT_K
    guard_split_limit: int = DEFAULT_GUARD_SPLIT_LIMIT

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("k must be >= 0")
        if self.guard_split_limit < 1:
            raise ValueError("guard_split_limit must be >= 1")


@dataclass(frozen=True)
class GuardPartition:
    template_id: str
    guards: tuple

    def classify(self, valuation) -> Guard | None:
        for g in self.guards:
            if g(valuation):
                return g
        return None


def build_guards(logs: Iterable[ComponentLog], guard_split_limit: int = DEFAULT_GUARD_SPLIT_LIMIT
                 ) -> dict[str, GuardPartition]:
    observed: dict[str, set] = {}
    for clog in logs:
        for e in clog:
            observed.setdefault(e.template_id, set()).add(tuple(e.valuation))
    parts = {}
    for tid in sorted(observed):
        vals = observed[tid]
        if all(len(v) == 0 for v in vals) or len(vals) > guard_split_limit:
            guards = (TRUE,)
        else:
            guards = tuple(Guard.of(v) for v in sorted(vals))
        parts[tid] = GuardPartition(tid, guards)
    return parts


def entry_label(entry: LogEntry, partitions: Mapping[str, GuardPartition]):
    g = partitions[entry.template_id].classify(entry.valuation)
    return (entry.template_id, g)


def build_pta(logs: Iterable[ComponentLog], partitions: Mapping[str, GuardPartition]) -> GuardedFsm:
    child: dict = {}
    finals = set()
    trans = []
    n = 1
    for clog in logs:
        s = 0
        for e in clog:
            lab = entry_label(e, partitions)
            nxt = child.get((s, lab))
            if nxt is None:
                nxt = child[(s, lab)] = n
                n += 1
                trans.append((s, lab[0], lab[1], nxt))
            s = nxt
        finals.add(s)
    return renumber_bfs(GuardedFsm(n, 0, finals, trans))


def ktails_classes(m: GuardedFsm, k: int) -> list[list[int]]:
    """States grouped by their depth-k future (labels, targets' futures, finality)."""
    sig = [1 if s in m.finals else 0 for s in m.states]
    for _ in range(k):
        table: dict = {}
        new = []
        for s in m.states:
            key = (s in m.finals,
                   frozenset((t.event, t.guard, sig[t.target]) for t in m.out(s)))
            new.append(table.setdefault(key, len(table)))
        sig = new
    groups: dict = {}
    for s in m.states:
        groups.setdefault(sig[s], []).append(s)
    return [g for g in groups.values() if len(g) > 1]


def ktails(m: GuardedFsm, k: int) -> GuardedFsm:
    """Merge k-equivalent states and fold, until no two states are k-equivalent."""
    while True:
        classes = ktails_classes(m, k)
        if not classes:
            return renumber_bfs(m)
        m, _ = merge_states(m, classes)


def infer_component_model(logs: Iterable[ComponentLog], policy: MergePolicy = MergePolicy(),
                          partitions: Mapping[str, GuardPartition] | None = None) -> GuardedFsm:
    logs = list(logs)
    if not logs:
        raise EmptyInput("no logs to infer a component model from")
    if partitions is None:
        partitions = build_guards(logs, policy.guard_split_limit)
    comp = logs[0].component
    pta = build_pta(logs, partitions)
    model = ktails(pta, policy.k)
    if comp:
        model = GuardedFsm(model.n_states, model.initial, model.finals, model.transitions,
                           {s: frozenset([f"{comp}:{s}"]) for s in model.states})
    return model


def infer_models(executions, components: Iterable[str], policy: MergePolicy = MergePolicy()) -> dict:
    """One model per component, from that component's logs across executions."""
    models = {}
    for comp in sorted(components):
        logs = [ex.logs[comp] for ex in executions if comp in ex.logs]
        if logs:
            models[comp] = infer_component_model(logs, policy)
    return models
