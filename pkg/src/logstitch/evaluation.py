"""Cross-validated recall and specificity of stitched models.

Every execution contributes one seeded linearization as a positive log.
Negatives are mutants of the test positives (swap, delete or add an entry)
whose label window around the mutation never occurs in any positive log.
"""

from __future__ import annotations

import json
import logging
import random
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Sequence

from .automata import accepts
from .dependency import ANCHOR_LATEST, ArchitectureGraph, extract_dependencies, linearize
from .errors import InferenceTimeout, RetriesExhausted, TooFewExecutions
from .inference import GuardPartition, MergePolicy, build_guards, entry_label, infer_models
from .logs import Execution, LogEntry, TemplateSet
from .stitching import stitch

log = logging.getLogger(__name__)

SWAP, DELETE, ADD = "swap", "delete", "add"
MUTATION_KINDS = (SWAP, DELETE, ADD)
START, END = ("<start>", None), ("<end>", None)
DEFAULT_RETRIES = 100


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from a tuple of parts (independent of hash randomization)."""
    return random.Random(":".join(map(str, parts))).getrandbits(64)


# ---------------------------------------------------------------------------
# folds


def kfold_split(items: Sequence, k: int, seed: int) -> list[tuple[list, list]]:
    """``k`` (train, test) pairs; the test parts partition ``items``."""
    if k < 2:
        raise ValueError("k must be >= 2")
    items = list(items)
    if len(items) < k:
        raise TooFewExecutions(f"{len(items)} executions cannot be split into {k} folds")
    order = list(range(len(items)))
    random.Random(seed).shuffle(order)
    folds = [sorted(order[i::k]) for i in range(k)]
    out = []
    for i in range(k):
        test = set(folds[i])
        out.append(([items[j] for j in range(len(items)) if j not in test], [items[j] for j in folds[i]]))
    return out


# ---------------------------------------------------------------------------
# mutation


@dataclass(frozen=True)
class MutationSpec:
    kind: str
    seed: int
    location: int | None = None

    def __post_init__(self):
        if self.kind not in MUTATION_KINDS:
            raise ValueError(f"unknown mutation kind {self.kind!r}")


class PositiveIndex:
    """Label bigrams and trigrams (padded with start/end markers) of the positive logs."""

    def __init__(self, label_logs: Sequence[Sequence] = ()):
        self.bigrams: set = set()
        self.trigrams: set = set()
        for labels in label_logs:
            self.add(labels)

    def add(self, labels: Sequence):
        padded = [START, *labels, END]
        self.bigrams.update(zip(padded, padded[1:]))
        self.trigrams.update(zip(padded, padded[1:], padded[2:]))

    def seen(self, window: tuple) -> bool:
        return window in (self.trigrams if len(window) == 3 else self.bigrams)


@dataclass(frozen=True)
class Mutant:
    entries: tuple
    spec: MutationSpec
    windows: tuple  # label windows that had to be unseen


def _windows(labels: list, positions) -> list[tuple]:
    padded = [START, *labels, END]
    return [tuple(padded[p:p + 3]) for p in sorted(set(positions))]


def mutate(entries: Sequence[LogEntry], spec: MutationSpec, index: PositiveIndex,
           labeler: Callable, donors: Sequence[LogEntry] = ()) -> Mutant | None:
    """Apply one mutation; None if it is a no-op or its window occurs in a positive log."""
    rng = random.Random(spec.seed)
    entries = list(entries)
    n = len(entries)
    labels = [labeler(e) for e in entries]
    if spec.kind == SWAP:
        if n < 2:
            return None
        i, j = sorted(rng.sample(range(n), 2))
        if labels[i] == labels[j]:
            return None
        new = entries[:]
        new[i], new[j] = replace_ts(entries[j], entries[i].timestamp), replace_ts(entries[i], entries[j].timestamp)
        new_labels = labels[:]
        new_labels[i], new_labels[j] = labels[j], labels[i]
        windows = _windows(new_labels, (i, j))
        loc = i
    elif spec.kind == DELETE:
        if n < 2:
            return None
        loc = rng.randrange(n)
        new = entries[:loc] + entries[loc + 1:]
        padded = [START, *labels, END]
        windows = [(padded[loc], padded[loc + 2])]
    else:
        if not donors:
            return None
        loc = rng.randrange(n + 1)
        donor = donors[rng.randrange(len(donors))]
        ts = entries[loc - 1].timestamp if loc else (entries[0].timestamp if entries else 0)
        added = replace_ts(donor, ts)
        new = entries[:loc] + [added] + entries[loc:]
        windows = _windows(labels[:loc] + [labeler(donor)] + labels[loc:], (loc,))
    if any(index.seen(w) for w in windows):
        return None
    return Mutant(tuple(new), MutationSpec(spec.kind, spec.seed, loc), tuple(windows))


def replace_ts(e: LogEntry, ts: int) -> LogEntry:
    return LogEntry(ts, e.template_id, e.valuation, e.seq_no, e.component)


def synthesize_negative(entries: Sequence[LogEntry], seed: int, index: PositiveIndex, labeler: Callable,
                        donors: Sequence[LogEntry] = (), retries: int = DEFAULT_RETRIES) -> Mutant:
    rng = random.Random(seed)
    for _ in range(retries):
        spec = MutationSpec(rng.choice(MUTATION_KINDS), rng.getrandbits(64))
        m = mutate(entries, spec, index, labeler, donors)
        if m is not None:
            return m
    raise RetriesExhausted(f"no valid mutant after {retries} attempts")


# ---------------------------------------------------------------------------
# report


def _ratio(num: int, den: int):
    return num / den if den else None


@dataclass
class FoldResult:
    repeat: int
    fold: int
    train: int
    test: int
    tp: int = 0
    fn: int = 0
    tn: int = 0
    fp: int = 0
    skipped_negatives: int = 0
    states: int | None = None
    transitions: int | None = None
    prep_time: float = 0.0
    stitch_time: float = 0.0
    timed_out: bool = False

    @property
    def recall(self):
        return _ratio(self.tp, self.tp + self.fn)

    @property
    def specificity(self):
        return _ratio(self.tn, self.tn + self.fp)


def _mean_std(values):
    values = [v for v in values if v is not None]
    if not values:
        return None, None
    return statistics.fmean(values), (statistics.stdev(values) if len(values) > 1 else 0.0)


@dataclass
class EvalReport:
    dataset: str
    size: int
    executions: int
    config: dict
    folds: list = field(default_factory=list)

    def repeat_totals(self) -> list[dict]:
        """Counts pooled over the folds of each repeat."""
        out = {}
        for f in self.folds:
            t = out.setdefault(f.repeat, {"repeat": f.repeat, "tp": 0, "fn": 0, "tn": 0, "fp": 0})
            for k in ("tp", "fn", "tn", "fp"):
                t[k] += getattr(f, k)
        for t in out.values():
            t["recall"] = _ratio(t["tp"], t["tp"] + t["fn"])
            t["specificity"] = _ratio(t["tn"], t["tn"] + t["fp"])
        return [out[r] for r in sorted(out)]

    @property
    def recall(self):
        return _mean_std(t["recall"] for t in self.repeat_totals())

    @property
    def specificity(self):
        return _mean_std(t["specificity"] for t in self.repeat_totals())

    def totals(self) -> dict:
        return {k: sum(getattr(f, k) for f in self.folds) for k in ("tp", "fn", "tn", "fp", "skipped_negatives")}

    def to_dict(self, timing: bool = False) -> dict:
        folds = []
        for f in self.folds:
            d = asdict(f)
            if not timing:
                d.pop("prep_time")
                d.pop("stitch_time")
            d["recall"], d["specificity"] = f.recall, f.specificity
            folds.append(d)
        r, s = self.recall, self.specificity
        return {
            "dataset": self.dataset, "size": self.size, "executions": self.executions,
            "config": self.config, "totals": self.totals(),
            "recall_mean": r[0], "recall_std": r[1],
            "specificity_mean": s[0], "specificity_std": s[1],
            "timeouts": sum(f.timed_out for f in self.folds),
            "repeats": self.repeat_totals(), "folds": folds,
        }

    def dumps(self) -> str:
        """Deterministic JSON dump (no wall-clock values)."""
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def tsv(self) -> str:
        """Per-fold counts and metrics, deterministic."""
        cols = ["repeat", "fold", "train", "test", "tp", "fn", "tn", "fp", "skipped_negatives",
                "states", "transitions", "recall", "specificity"]
        rows = ["\t".join(cols)]
        for f in self.folds:
            vals = [getattr(f, c) for c in cols]
            rows.append("\t".join(_cell(v) for v in vals))
        return "\n".join(rows) + "\n"

    def table(self) -> str:
        """One summary row: dataset, size, execs, states, transitions, times, recall, specificity."""
        done = [f for f in self.folds if not f.timed_out]
        states = _mean_std(f.states for f in done)[0]
        trans = _mean_std(f.transitions for f in done)[0]
        prep = _mean_std(f.prep_time for f in done)[0]
        st = _mean_std(f.stitch_time for f in done)[0]
        r, s = self.recall, self.specificity
        cols = ["dataset", "size", "execs", "states", "transitions", "prep_time", "stitch_time", "total",
                "recall", "recall_std", "specificity", "specificity_std"]
        total = None if prep is None else prep + st
        vals = [self.dataset, self.size, self.executions, states, trans, prep, st, total, r[0], r[1], s[0], s[1]]
        return "\t".join(cols) + "\n" + "\t".join(_cell(v) for v in vals) + "\n"


def _cell(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


# ---------------------------------------------------------------------------
# protocol


@dataclass(frozen=True)
class EvalConfig:
    folds: int = 10
    repeats: int = 10
    seed: int = 0
    policy: MergePolicy = MergePolicy()
    anchor: str = ANCHOR_LATEST
    sanity: bool = False
    retries: int = DEFAULT_RETRIES
    timeout: float | None = None  # seconds per fold
    minimize: bool = False
    jobs: int = 1

    def describe(self) -> dict:
        return {"folds": self.folds, "repeats": self.repeats, "seed": self.seed, "k": self.policy.k,
                "guard_split_limit": self.policy.guard_split_limit, "anchor": self.anchor,
                "sanity": self.sanity, "retries": self.retries, "minimize": self.minimize}


@dataclass
class _FoldTask:
    repeat: int
    fold: int
    train: list
    test: list
    deps: Mapping
    positives: Mapping  # exec_id -> linearized entries
    index: PositiveIndex
    partitions: Mapping[str, GuardPartition]
    donors: list
    arch: ArchitectureGraph
    config: EvalConfig


def _run_fold(task: _FoldTask) -> FoldResult:
    cfg = task.config
    res = FoldResult(task.repeat, task.fold, len(task.train), len(task.test))
    deadline = None if cfg.timeout is None else time.monotonic() + cfg.timeout
    try:
        t0 = time.perf_counter()
        models = infer_models(task.train, task.arch.components, cfg.policy)
        t1 = time.perf_counter()
        m_sys = stitch(task.train, task.deps, models, task.arch, minimize=cfg.minimize, deadline=deadline)
        t2 = time.perf_counter()
    except InferenceTimeout as exc:
        log.warning("repeat %d fold %d: %s", task.repeat, task.fold, exc)
        res.timed_out = True
        return res
    res.prep_time, res.stitch_time = t1 - t0, t2 - t1
    res.states, res.transitions = m_sys.n_states, len(m_sys.transitions)

    def labeler(e):
        return entry_label(e, task.partitions)

    for i, ex in enumerate(task.test):
        pos = task.positives[ex.exec_id]
        if accepts(m_sys, pos):
            res.tp += 1
        else:
            res.fn += 1
        try:
            neg = synthesize_negative(pos, derive_seed(cfg.seed, task.repeat, task.fold, "neg", i),
                                      task.index, labeler, task.donors, cfg.retries)
        except RetriesExhausted:
            res.skipped_negatives += 1
            continue
        if accepts(m_sys, neg.entries):
            res.fp += 1
        else:
            res.tn += 1
    return res


def evaluate(executions: Sequence[Execution], arch: ArchitectureGraph, templates: TemplateSet,
             config: EvalConfig = EvalConfig(), dataset: str = "dataset",
             progress: Callable[[FoldResult], None] | None = None) -> EvalReport:
    executions = list(executions)
    if not config.sanity and len(executions) < config.folds:
        raise TooFewExecutions(f"{len(executions)} executions cannot be split into {config.folds} folds")
    deps = {ex.exec_id: extract_dependencies(ex, arch, templates, config.anchor) for ex in executions}
    partitions = build_guards((cl for ex in executions for cl in ex.logs.values()),
                              config.policy.guard_split_limit)
    donors = _donor_pool(executions)
    report = EvalReport(dataset, sum(ex.size for ex in executions), len(executions), config.describe())

    tasks = []
    for r in range(config.repeats):
        positives = {ex.exec_id: linearize(ex, deps[ex.exec_id], arch, derive_seed(config.seed, r, "lin", ex.exec_id))
                     for ex in executions}
        index = PositiveIndex([[entry_label(e, partitions) for e in p] for p in positives.values()])
        if config.sanity:
            splits = [(executions, executions)]
        else:
            splits = kfold_split(executions, config.folds, derive_seed(config.seed, r, "split"))
        for f, (train, test) in enumerate(splits):
            tasks.append(_FoldTask(r, f, train, test, deps, positives, index, partitions, donors, arch, config))

    if config.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = pool.map(_run_fold, tasks)
            for res in results:
                _record(report, res, progress)
    else:
        for t in tasks:
            _record(report, _run_fold(t), progress)
    return report


def _record(report, res, progress):
    report.folds.append(res)
    if progress is not None:
        progress(res)


def _donor_pool(executions) -> list[LogEntry]:
    """One representative entry per distinct (component, template, valuation)."""
    seen = {}
    for ex in executions:
        for cl in ex.logs.values():
            for e in cl:
                seen.setdefault((e.component, e.template_id, e.valuation), e)
    return [seen[k] for k in sorted(seen)]
