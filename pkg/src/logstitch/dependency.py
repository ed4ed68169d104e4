"""Leads-to relations between log entries of communicating components.

For every architecture edge ``X -> Y``, each communication entry of Y is
paired with the upstream entry of X that is closest in time without being
later.  Y's log is cut into segments, each starting at a communication
entry; a segment is attached to the upstream entry its first entry was
paired with.
"""

from __future__ import annotations

import bisect
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .errors import ArchitectureError, CycleDetected
from .logs import ComponentLog, Execution, LogEntry, TemplateSet

log = logging.getLogger(__name__)

# anchor policies for the upstream side of a pairing
ANCHOR_LATEST = "latest"  # most recent upstream entry of any kind
ANCHOR_COMM = "comm"  # most recent upstream communication entry only
ANCHORS = (ANCHOR_LATEST, ANCHOR_COMM)


@dataclass(frozen=True)
class ArchitectureGraph:
    components: frozenset
    uses: frozenset  # of (from, to)
    main: str

    def __post_init__(self):
        comps = frozenset(self.components) | {c for e in self.uses for c in e}
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "uses", frozenset(tuple(e) for e in self.uses))
        if self.main not in comps:
            raise ArchitectureError(f"main component {self.main!r} is not in the architecture")
        for a, b in self.uses:
            if a == b:
                raise CycleDetected(f"{a} uses itself")
        self.topological_order()  # validates acyclicity

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[str, str]], main: str | None = None,
                   components: Iterable[str] = ()) -> "ArchitectureGraph":
        edges = frozenset(tuple(e) for e in edges)
        comps = frozenset(components) | {c for e in edges for c in e}
        if main is None:
            roots = sorted(c for c in comps if not any(b == c for _, b in edges))
            if len(roots) != 1:
                raise ArchitectureError(
                    f"cannot infer the main component, candidates: {roots or 'none'}; add 'main: <component>'")
            main = roots[0]
        return cls(comps | {main}, edges, main)

    def children(self, component: str) -> list[str]:
        return sorted(b for a, b in self.uses if a == component)

    def parents(self, component: str) -> list[str]:
        return sorted(a for a, b in self.uses if b == component)

    def topological_order(self) -> list[str]:
        indeg = {c: 0 for c in self.components}
        for _, b in self.uses:
            indeg[b] += 1
        ready = sorted(c for c, d in indeg.items() if d == 0)
        order = []
        while ready:
            c = ready.pop(0)
            order.append(c)
            for b in self.children(c):
                indeg[b] -= 1
                if indeg[b] == 0:
                    bisect.insort(ready, b)
        if len(order) != len(self.components):
            raise CycleDetected("architecture dependencies contain a cycle")
        return order

    def dumps(self) -> str:
        lines = [f"main: {self.main}"]
        lines += [f"{a} -> {b}" for a, b in sorted(self.uses)]
        lines += [f"component: {c}" for c in sorted(self.components)
                  if c != self.main and not any(c in e for e in self.uses)]
        return "\n".join(lines) + "\n"


def parse_architecture(text: str) -> ArchitectureGraph:
    """``FROM -> TO`` per line, optional ``main: <component>`` and ``component: <c>``."""
    edges, comps, main = [], [], None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("main:"):
            main = line[5:].strip()
        elif line.startswith("component:"):
            comps.append(line[10:].strip())
        elif "->" in line:
            a, _, b = line.partition("->")
            a, b = a.strip(), b.strip()
            if not a or not b:
                raise ArchitectureError(f"line {lineno}: malformed edge {raw!r}")
            edges.append((a, b))
        else:
            raise ArchitectureError(f"line {lineno}: expected 'A -> B' or 'main: C', got {raw!r}")
    if main is None and not edges and len(comps) == 1:
        main = comps[0]
    return ArchitectureGraph.from_edges(edges, main, comps)


def load_architecture(path) -> ArchitectureGraph:
    path = Path(path)
    if not path.is_file():
        raise ArchitectureError(f"architecture file not found: {path}")
    return parse_architecture(path.read_text())


@dataclass(frozen=True)
class DependencyMap:
    """``entries[(component, seq_no)]`` lists ``(downstream component, segment)`` pairs.

    ``parent_of`` maps every attached downstream entry key to the key of the
    upstream entry it was attributed to.
    """

    exec_id: str
    entries: Mapping = field(default_factory=dict)
    parent_of: Mapping = field(default_factory=dict)

    def led_by(self, entry: LogEntry) -> list:
        return self.entries.get(entry.key, [])

    def grouped(self, entry: LogEntry) -> list[tuple[str, tuple]]:
        """Segments led by ``entry``, concatenated per downstream component, by component id."""
        per = {}
        for comp, seq in self.led_by(entry):
            per.setdefault(comp, []).extend(seq)
        return [(c, tuple(sorted(per[c], key=lambda e: e.seq_no))) for c in sorted(per)]

    def relations(self) -> list[tuple]:
        """``(upstream key, downstream component, downstream seq_nos)`` sorted."""
        out = []
        for key in sorted(self.entries):
            for comp, seq in self.entries[key]:
                out.append((key, comp, tuple(e.seq_no for e in seq)))
        return out

    def __len__(self):
        return sum(len(v) for v in self.entries.values())


def _pick(timestamps: list, entries: list, ts: int):
    """Latest candidate with timestamp <= ts (ties: larger seq_no), or None."""
    i = bisect.bisect_right(timestamps, ts)
    return entries[i - 1] if i else None


def comm_leads_to(upstream: ComponentLog, downstream: ComponentLog, templates: TemplateSet,
                  anchor: str = ANCHOR_LATEST) -> dict:
    """Pair each communication entry of ``downstream`` with an upstream entry.

    Returns ``{downstream seq_no: upstream LogEntry}``.  Entries with no
    upstream candidate at or before them go to the earliest candidate (with a
    warning); if the upstream side has no candidate at all they are left out.
    """
    if anchor not in ANCHORS:
        raise ValueError(f"anchor must be one of {ANCHORS}")
    cands = [e for e in upstream if anchor == ANCHOR_LATEST or templates.is_communication(e.template_id)]
    stamps = [e.timestamp for e in cands]
    out = {}
    for e in downstream:
        if not templates.is_communication(e.template_id):
            continue
        if not cands:
            log.warning("%s[%d]: %s has no candidate entries", downstream.component, e.seq_no + 1,
                        upstream.component)
            continue
        best = _pick(stamps, cands, e.timestamp)
        if best is None:
            best = cands[0]
            log.warning("%s[%d] precedes every %s candidate; attached to %s[%d]", downstream.component,
                        e.seq_no + 1, upstream.component, upstream.component, best.seq_no + 1)
        out[e.seq_no] = best
    return out


def segments(clog: ComponentLog, templates: TemplateSet) -> list[tuple]:
    """Cut a log at its communication entries; leading entries join the first segment."""
    segs, cur = [], []
    seen_comm = False
    for e in clog:
        if templates.is_communication(e.template_id):
            if seen_comm:
                segs.append(tuple(cur))
                cur = []
            seen_comm = True
        cur.append(e)
    if cur:
        if seen_comm:
            segs.append(tuple(cur))
        else:
            return []
    return segs


def extract_dependencies(execution: Execution, arch: ArchitectureGraph, templates: TemplateSet,
                         anchor: str = ANCHOR_LATEST) -> DependencyMap:
    entries: dict = {}
    parent_of: dict = {}
    for comp in sorted(arch.components):
        parents = arch.parents(comp)
        clog = execution.logs.get(comp)
        if not parents or clog is None or not len(clog):
            continue
        pairings = {}
        for p in parents:
            up = execution.logs.get(p)
            if up is None:
                continue
            for seq_no, ue in comm_leads_to(up, clog, templates, anchor).items():
                delta = clog[seq_no].timestamp - ue.timestamp
                # negative deltas (orphans) always lose to a real pairing
                rank = (delta < 0, abs(delta), p)
                if seq_no not in pairings or rank < pairings[seq_no][0]:
                    pairings[seq_no] = (rank, ue)
        segs = segments(clog, templates)
        if not segs and len(clog):
            log.warning("%s/%s: log has no communication entry; %d entries left unattached",
                        execution.exec_id, comp, len(clog))
        for seg in segs:
            head = next((e for e in seg if templates.is_communication(e.template_id)), None)
            if head is None or head.seq_no not in pairings:
                log.warning("%s/%s[%d]: segment has no upstream entry; left unattached",
                            execution.exec_id, comp, seg[0].seq_no + 1)
                continue
            ue = pairings[head.seq_no][1]
            entries.setdefault(ue.key, []).append((comp, seg))
            for e in seg:
                parent_of[e.key] = ue.key
    for v in entries.values():
        v.sort(key=lambda cs: (cs[0], cs[1][0].seq_no))
    return DependencyMap(execution.exec_id, entries, parent_of)


def format_dependencies(deps: DependencyMap) -> str:
    """One line per relation, 1-based like ``TC[1] ~> <MUX[1], MUX[2]>``."""
    lines = []
    for (comp, seq), dcomp, seqs in deps.relations():
        body = ", ".join(f"{dcomp}[{s + 1}]" for s in seqs)
        lines.append(f"{deps.exec_id}\t{comp}[{seq + 1}] ~> <{body}>")
    return "\n".join(lines) + ("\n" if lines else "")


def linearize(execution: Execution, deps: DependencyMap, arch: ArchitectureGraph,
              seed: int | None = None) -> list[LogEntry]:
    """System-level log: main entries, each followed by what it leads to.

    With ``seed=None`` the dependent sequences of one entry are concatenated
    in component order; otherwise they are shuffled into a uniformly random
    interleaving that keeps each component's order.
    """
    rng = None if seed is None else random.Random(seed)
    active = set()

    def expand(seq) -> list:
        out = []
        for e in seq:
            if e.key in active:
                raise CycleDetected(f"entry {e.key} leads to itself")
            active.add(e.key)
            out.append(e)
            parts = [expand(s) for _, s in deps.grouped(e)]
            parts = [p for p in parts if p]
            if rng is None or len(parts) < 2:
                for p in parts:
                    out.extend(p)
            else:
                out.extend(_shuffle(parts, rng))
            active.discard(e.key)
        return out

    return expand(execution.log_of(arch.main).entries)


def _shuffle(parts: list, rng: random.Random) -> list:
    pos = [0] * len(parts)
    remaining = [len(p) for p in parts]
    total = sum(remaining)
    out = []
    while total:
        r = rng.randrange(total)
        k = 0
        while r >= remaining[k]:
            r -= remaining[k]
            k += 1
        out.append(parts[k][pos[k]])
        pos[k] += 1
        remaining[k] -= 1
        total -= 1
    return out
