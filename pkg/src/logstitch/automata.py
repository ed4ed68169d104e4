"""Guarded finite state machines and the language operations on them.

States are the integers ``0..n-1``.  A transition label is the pair
``(event, guard)``; guards compare syntactically (two guards are the same
label iff they admit the same set of valuations), which turns a gFSM into a
plain DFA over the alphabet of labels.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

from .errors import AlphabetOverlap, EmptyInput, ExplosionGuard, ModelFormatError

MODEL_FORMAT = "logstitch-gfsm"
MODEL_VERSION = 1
DEFAULT_ENUM_CAP = 10**6


class Guard:
    """``True`` (``values is None``) or an explicit set of admissible valuations."""

    __slots__ = ("values", "key", "_hash")

    def __init__(self, values=None):
        if values is not None:
            values = frozenset(tuple(v) for v in values)
            if not values:
                raise ValueError("a guard needs at least one admissible valuation; use Guard.TRUE")
        self.values = values
        self.key = (0,) if values is None else (1,) + tuple(sorted(values))
        self._hash = hash(self.key)

    @classmethod
    def of(cls, *valuations) -> "Guard":
        return cls(valuations)

    @property
    def is_true(self) -> bool:
        return self.values is None

    def __call__(self, valuation) -> bool:
        return self.values is None or tuple(valuation) in self.values

    def representative(self) -> tuple:
        return () if self.values is None else min(self.values)

    def to_json(self):
        return None if self.values is None else [list(v) for v in sorted(self.values)]

    @classmethod
    def from_json(cls, data) -> "Guard":
        return TRUE if data is None else cls(tuple(v) for v in data)

    def __eq__(self, other):
        return isinstance(other, Guard) and self.key == other.key

    def __hash__(self):
        return self._hash

    def __lt__(self, other):
        return self.key < other.key

    def __repr__(self):
        return "Guard.TRUE" if self.values is None else f"Guard({sorted(self.values)!r})"

    def __str__(self):
        if self.values is None:
            return ""
        parts = ["(" + ", ".join(v) + ")" for v in sorted(self.values)]
        return parts[0] if len(parts) == 1 else "{" + ", ".join(parts) + "}"

    def __reduce__(self):
        return (Guard, (self.values,))


TRUE = Guard()
Guard.TRUE = TRUE


class Transition(NamedTuple):
    source: int
    event: str
    guard: Guard
    target: int

    @property
    def label(self):
        return (self.event, self.guard)

    def sort_key(self):
        return (self.source, self.event, self.guard.key, self.target)


def label_text(event: str, guard: Guard) -> str:
    g = str(guard)
    return f"{event} {g}" if g else event


def _label_key(label):
    return (label[0], label[1].key)


class GuardedFsm:
    """Immutable gFSM.  ``origin`` maps a state to provenance tags (debug only)."""

    __slots__ = ("n_states", "initial", "finals", "transitions", "origin", "_out", "_by_event", "_succ")

    def __init__(self, n_states: int, initial: int, finals: Iterable[int],
                 transitions: Iterable, origin=None):
        trans = {Transition(*t) for t in transitions}
        self.n_states = int(n_states)
        self.initial = int(initial)
        self.finals = frozenset(finals)
        self.transitions = tuple(sorted(trans, key=Transition.sort_key))
        self.origin = dict(origin) if origin else {}
        if not 0 <= self.initial < self.n_states:
            raise ValueError(f"initial state {self.initial} out of range")
        for s in self.finals:
            if not 0 <= s < self.n_states:
                raise ValueError(f"final state {s} out of range")
        for t in self.transitions:
            if not (0 <= t.source < self.n_states and 0 <= t.target < self.n_states):
                raise ValueError(f"transition {t} has an endpoint out of range")
        self._out = self._by_event = self._succ = None

    @property
    def states(self) -> range:
        return range(self.n_states)

    def __eq__(self, other):
        return (isinstance(other, GuardedFsm) and self.n_states == other.n_states
                and self.initial == other.initial and self.finals == other.finals
                and self.transitions == other.transitions)

    def __hash__(self):
        return hash((self.n_states, self.initial, self.finals, self.transitions))

    def __repr__(self):
        return (f"GuardedFsm(states={self.n_states}, transitions={len(self.transitions)}, "
                f"initial={self.initial}, finals={sorted(self.finals)})")

    def __reduce__(self):
        return (GuardedFsm, (self.n_states, self.initial, self.finals, self.transitions, self.origin))

    def out(self, state: int) -> list:
        if self._out is None:
            out = [[] for _ in range(self.n_states)]
            for t in self.transitions:
                out[t.source].append(t)
            self._out = out
        return self._out[state]

    def out_by_event(self, state: int, event: str) -> list:
        if self._by_event is None:
            idx = [{} for _ in range(self.n_states)]
            for t in self.transitions:
                idx[t.source].setdefault(t.event, []).append(t)
            self._by_event = idx
        return self._by_event[state].get(event, ())

    def successors(self, state: int) -> dict:
        """``label -> [targets]`` for one state."""
        if self._succ is None:
            idx = [{} for _ in range(self.n_states)]
            for t in self.transitions:
                idx[t.source].setdefault(t.label, []).append(t.target)
            self._succ = idx
        return self._succ[state]

    @property
    def events(self) -> frozenset:
        return frozenset(t.event for t in self.transitions)

    @property
    def labels(self) -> frozenset:
        return frozenset(t.label for t in self.transitions)

    def is_deterministic(self) -> bool:
        seen = set()
        for t in self.transitions:
            k = (t.source, t.event, t.guard)
            if k in seen:
                return False
            seen.add(k)
        return True

    def with_finals(self, finals) -> "GuardedFsm":
        return GuardedFsm(self.n_states, self.initial, finals, self.transitions, self.origin)


def chain(labels: Sequence, tag: str = "") -> GuardedFsm:
    """Machine accepting exactly one label sequence; labels are events or ``(event, guard)``."""
    trans = []
    for i, lab in enumerate(labels):
        ev, g = (lab, TRUE) if isinstance(lab, str) else lab
        trans.append((i, ev, g, i + 1))
    origin = {i: frozenset([f"{tag}{i}"]) for i in range(len(labels) + 1)} if tag else None
    return GuardedFsm(len(labels) + 1, 0, [len(labels)], trans, origin)


# ---------------------------------------------------------------------------
# runs


@dataclass(frozen=True)
class RunResult:
    accepted: bool
    visited: tuple = ()
    failure_index: int | None = None

    def __bool__(self):
        return self.accepted


def _event_of(item):
    if isinstance(item, tuple):
        return item[0], item[1]
    return item.template_id, item.valuation


def accepts(m: GuardedFsm, log: Sequence) -> RunResult:
    """Run ``m`` on a log of entries (or ``(event, valuation)`` pairs).

    Works on nondeterministic machines too; ``visited`` is one witness run.
    """
    layers = [{m.initial: None}]
    cur = layers[0]
    for i, item in enumerate(log):
        ev, val = _event_of(item)
        nxt = {}
        sources = cur if len(cur) == 1 else sorted(cur)
        for s in sources:
            for t in m.out_by_event(s, ev):
                if t.target not in nxt and t.guard(val):
                    nxt[t.target] = s
        if not nxt:
            return RunResult(False, _backtrack(layers, min(cur)), i)
        layers.append(nxt)
        cur = nxt
    finals = sorted(s for s in cur if s in m.finals)
    if finals:
        return RunResult(True, _backtrack(layers, finals[0]), None)
    return RunResult(False, _backtrack(layers, min(cur)), len(log))


def _backtrack(layers, state):
    path = [state]
    for layer in reversed(layers[1:]):
        state = layer[state]
        path.append(state)
    path.reverse()
    return tuple(path)


# ---------------------------------------------------------------------------
# structural helpers


def _merge_origin(groups, origin):
    if not origin:
        return None
    out = {}
    for new, olds in groups.items():
        tags = frozenset().union(*(origin.get(o, frozenset()) for o in olds))
        if tags:
            out[new] = tags
    return out


def reachable(m: GuardedFsm) -> set:
    seen = {m.initial}
    todo = [m.initial]
    while todo:
        s = todo.pop()
        for t in m.out(s):
            if t.target not in seen:
                seen.add(t.target)
                todo.append(t.target)
    return seen


def coreachable(m: GuardedFsm) -> set:
    back = [[] for _ in m.states]
    for t in m.transitions:
        back[t.target].append(t.source)
    seen = set(m.finals)
    todo = list(seen)
    while todo:
        s = todo.pop()
        for p in back[s]:
            if p not in seen:
                seen.add(p)
                todo.append(p)
    return seen


def trim(m: GuardedFsm) -> GuardedFsm:
    """Drop unreachable states and states that cannot reach a final state.

    The initial state always survives, so the empty language is a one-state machine.
    """
    keep = reachable(m) & coreachable(m)
    keep.add(m.initial)
    order = sorted(keep)
    new = {s: i for i, s in enumerate(order)}
    trans = [(new[t.source], t.event, t.guard, new[t.target]) for t in m.transitions
             if t.source in new and t.target in new]
    origin = {new[s]: m.origin[s] for s in order if s in m.origin}
    return GuardedFsm(len(order), new[m.initial], [new[s] for s in order if s in m.finals], trans, origin)


def _bfs_build(start, expand, is_final, tag=None):
    """Breadth-first construction over hashable macro-states.

    ``expand(x)`` yields ``(label, y)`` pairs; labels are visited in sorted
    order so numbering is deterministic.
    """
    ids = {start: 0}
    order = [start]
    trans = []
    queue = deque([start])
    while queue:
        x = queue.popleft()
        sx = ids[x]
        for label, y in sorted(expand(x), key=lambda p: _label_key(p[0])):
            sy = ids.get(y)
            if sy is None:
                sy = ids[y] = len(order)
                order.append(y)
                queue.append(y)
            trans.append((sx, label[0], label[1], sy))
    finals = [i for i, x in enumerate(order) if is_final(x)]
    origin = {i: tag(x) for i, x in enumerate(order)} if tag else None
    return GuardedFsm(len(order), 0, finals, trans, origin), order


def renumber_bfs(m: GuardedFsm) -> GuardedFsm:
    """Canonical numbering: breadth-first from the initial state, labels in sorted order.

    Unreachable states keep their relative order after the reachable ones.
    """
    order = [m.initial]
    seen = {m.initial}
    i = 0
    while i < len(order):
        s = order[i]
        i += 1
        for t in sorted(m.out(s), key=lambda t: (_label_key(t.label), t.target)):
            if t.target not in seen:
                seen.add(t.target)
                order.append(t.target)
    order += [s for s in m.states if s not in seen]
    new = {s: k for k, s in enumerate(order)}
    trans = [(new[t.source], t.event, t.guard, new[t.target]) for t in m.transitions]
    origin = {new[s]: v for s, v in m.origin.items()}
    return GuardedFsm(m.n_states, 0, [new[s] for s in m.finals], trans, origin)


# ---------------------------------------------------------------------------
# union / composition


def union(ms: Sequence[GuardedFsm]) -> GuardedFsm:
    """Deterministic machine accepting the union of the input languages.

    Product construction over the disjoint union of the inputs; a missing
    component of the product tuple plays the role of the reject sink.
    """
    ms = list(ms)
    if not ms:
        raise EmptyInput("union of zero machines")
    if len(ms) == 1:
        return trim(ms[0])

    def expand(x):
        step = {}
        for i, s in x:
            for label, targets in ms[i].successors(s).items():
                bucket = step.setdefault(label, set())
                bucket.update((i, t) for t in targets)
        return [(label, frozenset(ys)) for label, ys in step.items()]

    def tag(x):
        tags = set()
        for i, s in x:
            tags.update(ms[i].origin.get(s, ()))
        return frozenset(tags)

    keep_origin = any(m.origin for m in ms)
    start = frozenset((i, m.initial) for i, m in enumerate(ms))
    product, _ = _bfs_build(start, expand, lambda x: any(s in ms[i].finals for i, s in x),
                            tag if keep_origin else None)
    return trim(product)


def parallel_composition(ms: Sequence[GuardedFsm]) -> GuardedFsm:
    """Shuffle product: each step advances exactly one operand."""
    ms = list(ms)
    if not ms:
        raise EmptyInput("composition of zero machines")
    if len(ms) == 1:
        return ms[0]
    owner = {}
    for i, m in enumerate(ms):
        for ev in m.events:
            if ev in owner and owner[ev] != i:
                raise AlphabetOverlap(ev)
            owner[ev] = i

    def expand(x):
        out = []
        for k, m in enumerate(ms):
            for t in m.out(x[k]):
                out.append((t.label, x[:k] + (t.target,) + x[k + 1:]))
        return out

    def tag(x):
        tags = set()
        for k, s in enumerate(x):
            tags.update(ms[k].origin.get(s, ()))
        return frozenset(tags)

    keep_origin = any(m.origin for m in ms)
    start = tuple(m.initial for m in ms)
    result, _ = _bfs_build(start, expand, lambda x: all(s in m.finals for s, m in zip(x, ms)),
                           tag if keep_origin else None)
    return result


# ---------------------------------------------------------------------------
# merge-based determinization


def determinize_with_map(m: GuardedFsm) -> tuple[GuardedFsm, list]:
    """Fold states until no state has two transitions with the same label.

    Whenever a state reads one label into two different targets, the
    targets are merged (finality is or-ed) and the merge is propagated.  The
    language can only grow.  Returns the machine and the old->new state map.
    The representative of a class is its smallest old id and new ids keep
    that order, so deterministic inputs come back unchanged.
    """
    n = m.n_states
    parent = list(range(n))

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    succ = [{} for _ in range(n)]
    final = [False] * n
    for s in m.finals:
        final[s] = True
    pending = []
    for t in m.transitions:
        d = succ[t.source]
        lab = t.label
        prev = d.get(lab)
        if prev is None:
            d[lab] = t.target
        elif prev != t.target:
            pending.append((prev, t.target))
    while pending:
        a, b = pending.pop()
        a, b = find(a), find(b)
        if a == b:
            continue
        if b < a:
            a, b = b, a
        parent[b] = a
        final[a] = final[a] or final[b]
        da, db = succ[a], succ[b]
        succ[b] = None
        for lab, tgt in db.items():
            prev = da.get(lab)
            if prev is None:
                da[lab] = tgt
            else:
                pending.append((prev, tgt))
    if all(parent[s] == s for s in range(n)):
        return m, list(range(n))
    reps = [s for s in range(n) if parent[s] == s]
    new = {r: i for i, r in enumerate(reps)}
    mapping = [new[find(s)] for s in range(n)]
    trans = []
    for r in reps:
        for (ev, g), tgt in succ[r].items():
            trans.append((new[r], ev, g, mapping[tgt]))
    groups = {}
    for s in range(n):
        groups.setdefault(mapping[s], []).append(s)
    origin = _merge_origin(groups, m.origin)
    out = GuardedFsm(len(reps), mapping[m.initial], [new[r] for r in reps if final[r]], trans, origin)
    return out, mapping


def determinize(m: GuardedFsm) -> GuardedFsm:
    return determinize_with_map(m)[0]


def merge_states(m: GuardedFsm, classes: Iterable[Iterable[int]]) -> tuple[GuardedFsm, list]:
    """Quotient ``m`` by the given state classes, then fold to determinism."""
    n = m.n_states
    rep = list(range(n))
    for cls in classes:
        cls = sorted(cls)
        for s in cls[1:]:
            rep[s] = cls[0]
    reps = sorted(set(rep))
    new = {r: i for i, r in enumerate(reps)}
    mapping = [new[rep[s]] for s in range(n)]
    trans = [(mapping[t.source], t.event, t.guard, mapping[t.target]) for t in m.transitions]
    groups = {}
    for s in range(n):
        groups.setdefault(mapping[s], []).append(s)
    quotient = GuardedFsm(len(reps), mapping[m.initial], {mapping[s] for s in m.finals}, trans,
                          _merge_origin(groups, m.origin))
    folded, fmap = determinize_with_map(quotient)
    return folded, [fmap[x] for x in mapping]


# ---------------------------------------------------------------------------
# minimization


def minimize(m: GuardedFsm) -> GuardedFsm:
    """Minimal deterministic machine for the same language (partition refinement)."""
    if not m.is_deterministic():
        raise ValueError("minimize expects a deterministic machine")
    m = trim(m)
    block = [1 if s in m.finals else 0 for s in m.states]
    n_blocks = len(set(block))
    while True:
        sigs = {}
        new_block = []
        for s in m.states:
            sig = (block[s], tuple(sorted(((_label_key(t.label), block[t.target]) for t in m.out(s)))))
            new_block.append(sigs.setdefault(sig, len(sigs)))
        if len(sigs) == n_blocks:
            break
        block, n_blocks = new_block, len(sigs)
    classes = {}
    for s in m.states:
        classes.setdefault(block[s], []).append(s)
    result, _ = merge_states(m, classes.values())
    return result


# ---------------------------------------------------------------------------
# bounded language enumeration


def enumerate_language(m: GuardedFsm, max_len: int, cap: int = DEFAULT_ENUM_CAP) -> set:
    """All accepted ``((event, valuation), ...)`` words of length <= max_len.

    Each guard is represented by its smallest admissible valuation (``()``
    for ``True``).
    """
    if max_len < 0:
        raise ValueError("max_len must be >= 0")
    words = set()
    frontier = {(m.initial, ())}
    for depth in range(max_len + 1):
        for s, w in frontier:
            if s in m.finals:
                words.add(w)
        if len(words) > cap:
            raise ExplosionGuard(f"more than {cap} accepted words up to length {max_len}")
        if depth == max_len:
            break
        nxt = set()
        for s, w in frontier:
            for t in m.out(s):
                nxt.add((t.target, w + ((t.event, t.guard.representative()),)))
        if len(nxt) > cap:
            raise ExplosionGuard(f"more than {cap} partial runs at depth {depth + 1}")
        frontier = nxt
    return words


# ---------------------------------------------------------------------------
# serialization


def dumps(m: GuardedFsm, include_origin: bool = False) -> str:
    lines = [
        "{",
        f' "format": {json.dumps(MODEL_FORMAT)},',
        f' "version": {MODEL_VERSION},',
        f' "states": {m.n_states},',
        f' "initial": {m.initial},',
        f' "finals": {json.dumps(sorted(m.finals))},',
    ]
    if include_origin:
        origin = {str(s): sorted(m.origin[s]) for s in sorted(m.origin)}
        lines.append(f' "origin": {json.dumps(origin, sort_keys=True)},')
    body = [json.dumps([t.source, t.event, t.guard.to_json(), t.target]) for t in m.transitions]
    if body:
        lines.append(' "transitions": [')
        lines.append(",\n".join("  " + b for b in body))
        lines.append(" ]")
    else:
        lines.append(' "transitions": []')
    lines.append("}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> GuardedFsm:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"not a model file: {exc}") from None
    if data.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"unknown model format {data.get('format')!r}")
    if data.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {data.get('version')!r}")
    trans = [(s, ev, Guard.from_json(g), t) for s, ev, g, t in data["transitions"]]
    origin = {int(k): frozenset(v) for k, v in data.get("origin", {}).items()}
    return GuardedFsm(data["states"], data["initial"], data["finals"], trans, origin)


def _dot_quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(m: GuardedFsm, name: str = "gfsm") -> str:
    out = [f"digraph {_dot_quote(name)} {{", "  rankdir=TB;", '  __start [shape=point, label=""];']
    for s in m.states:
        shape = "doublecircle" if s in m.finals else "circle"
        out.append(f'  s{s} [shape={shape}, label="s{s}"];')
    out.append(f"  __start -> s{m.initial};")
    for t in m.transitions:
        out.append(f"  s{t.source} -> s{t.target} [label={_dot_quote(label_text(t.event, t.guard))}];")
    out.append("}")
    return "\n".join(out) + "\n"
