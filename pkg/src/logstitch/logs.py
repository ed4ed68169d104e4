"""Event templates, log entries and per-component execution logs.

A log line is ``<timestamp> <message>``.  The message is split into tokens
(whitespace separated, ``=`` is a token of its own) and matched against the
template set; placeholders ``$1..$n`` bind exactly one token each.
"""

from __future__ import annotations

import calendar
import logging
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import AmbiguousMatch, EmptyExecution, NoMatch, TemplateError, TimestampError

log = logging.getLogger(__name__)

Valuation = tuple  # tuple[str, ...]; position i binds placeholder $(i+1)

_TOKEN_RE = re.compile(r"=|[^\s=]+")
_PLACEHOLDER_RE = re.compile(r"^\$([1-9][0-9]*)$")
_FULL_TS_RE = re.compile(r"^(\d{8}):(\d{2}):(\d{2}):(\d{2})$")
_SHORT_TS_RE = re.compile(r"^(\d{2}):(\d{2}):(\d{2})$")

LOG_SUFFIX = ".log"


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text)


@dataclass(frozen=True)
class EventTemplate:
    id: str
    fixed_tokens: tuple[str, ...]
    is_communication: bool = False
    # slots[i] is the placeholder index bound at token position i, or None
    slots: tuple = field(init=False, repr=False, compare=False)
    param_count: int = field(init=False)

    def __post_init__(self):
        slots = []
        indices = set()
        for tok in self.fixed_tokens:
            m = _PLACEHOLDER_RE.match(tok)
            if m:
                idx = int(m.group(1)) - 1
                if idx in indices:
                    raise TemplateError(f"{self.id}: placeholder ${idx + 1} used twice")
                indices.add(idx)
                slots.append(idx)
            else:
                slots.append(None)
        if indices != set(range(len(indices))):
            raise TemplateError(f"{self.id}: placeholders must be numbered $1..$n without gaps")
        object.__setattr__(self, "slots", tuple(slots))
        object.__setattr__(self, "param_count", len(indices))

    @classmethod
    def parse(cls, id: str, pattern: str, is_communication: bool = False) -> "EventTemplate":
        tokens = tuple(tokenize(pattern))
        if not tokens:
            raise TemplateError(f"{id}: empty pattern")
        return cls(id, tokens, is_communication)

    @property
    def pattern(self) -> str:
        return " ".join(self.fixed_tokens)

    def match(self, tokens: Sequence[str]):
        """Return the valuation if ``tokens`` fit this template, else None."""
        if len(tokens) != len(self.slots):
            return None
        values = [None] * self.param_count
        for tok, fixed, slot in zip(tokens, self.fixed_tokens, self.slots):
            if slot is None:
                if tok != fixed:
                    return None
            else:
                values[slot] = tok
        return tuple(values)

    def render(self, valuation: Valuation) -> str:
        if len(valuation) != self.param_count:
            raise ValueError(
                f"{self.id} takes {self.param_count} parameters, got {len(valuation)}"
            )
        out = [tok if slot is None else valuation[slot] for tok, slot in zip(self.fixed_tokens, self.slots)]
        return " ".join(out)


class TemplateSet(Mapping[str, EventTemplate]):
    """Templates indexed by id, with a token-count index for matching."""

    def __init__(self, templates: Iterable[EventTemplate]):
        self._by_id: dict[str, EventTemplate] = {}
        for t in templates:
            if t.id in self._by_id:
                raise TemplateError(f"duplicate template id {t.id!r}")
            self._by_id[t.id] = t
        self._by_len: dict[int, list[EventTemplate]] = {}
        for t in self._by_id.values():
            self._by_len.setdefault(len(t.fixed_tokens), []).append(t)

    def __getitem__(self, key):
        return self._by_id[key]

    def __iter__(self):
        return iter(self._by_id)

    def __len__(self):
        return len(self._by_id)

    def is_communication(self, template_id: str) -> bool:
        return self._by_id[template_id].is_communication

    def match(self, message: str, where=None) -> tuple[str, Valuation]:
        tokens = tokenize(message)
        hits = []
        for t in self._by_len.get(len(tokens), ()):
            v = t.match(tokens)
            if v is not None:
                hits.append((t.id, v))
        if not hits:
            raise NoMatch(message, where)
        if len(hits) > 1:
            raise AmbiguousMatch(message, [h[0] for h in hits], where)
        return hits[0]

    def render(self, template_id: str, valuation: Valuation) -> str:
        return self._by_id[template_id].render(valuation)

    def dumps(self) -> str:
        lines = [f"{t.id}\t{int(t.is_communication)}\t{t.pattern}" for t in self._by_id.values()]
        return "\n".join(lines) + "\n"


def parse_templates(text: str) -> TemplateSet:
    """Parse ``<id>\\t<comm:0|1>\\t<pattern>`` lines; ``#`` starts a comment line."""
    templates = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 3 or parts[1].strip() not in ("0", "1"):
            raise TemplateError(f"line {lineno}: expected '<id>\\t<0|1>\\t<pattern>'")
        tid, comm, pattern = (p.strip() for p in parts)
        templates.append(EventTemplate.parse(tid, pattern, comm == "1"))
    return TemplateSet(templates)


def load_templates(path) -> TemplateSet:
    return parse_templates(Path(path).read_text())


@dataclass(frozen=True)
class TimestampFormat:
    """How timestamps are read and written.

    ``resolution`` is the number of seconds per stored unit; ``base_date``
    (``YYYYMMDD``) is used for lines that carry only ``HH:MM:SS``.
    """

    base_date: str = "19700101"
    resolution: int = 1

    def parse(self, text: str) -> int:
        m = _FULL_TS_RE.match(text)
        if m:
            date, hh, mm, ss = m.groups()
        else:
            m = _SHORT_TS_RE.match(text)
            if not m:
                raise TimestampError(f"unparseable timestamp {text!r}")
            date = self.base_date
            hh, mm, ss = m.groups()
        try:
            dt = datetime(int(date[:4]), int(date[4:6]), int(date[6:8]), int(hh), int(mm), int(ss))
        except ValueError as exc:
            raise TimestampError(f"invalid timestamp {text!r}: {exc}") from None
        return calendar.timegm(dt.timetuple()) // self.resolution

    def format(self, ts: int) -> str:
        dt = datetime.fromtimestamp(ts * self.resolution, tz=timezone.utc)
        return dt.strftime("%Y%m%d:%H:%M:%S")


DEFAULT_TS = TimestampFormat()


def match_entry(raw_line: str, templates: TemplateSet, ts_format: TimestampFormat = DEFAULT_TS,
                where=None) -> tuple[int, str, Valuation]:
    head, _, message = raw_line.strip().partition(" ")
    try:
        ts = ts_format.parse(head)
    except TimestampError as exc:
        raise TimestampError(f"{where}: {exc}" if where else str(exc)) from None
    tid, valuation = templates.match(message, where)
    return ts, tid, valuation


@dataclass(frozen=True)
class LogEntry:
    timestamp: int
    template_id: str
    valuation: Valuation = ()
    seq_no: int = 0
    component: str = ""

    @property
    def label(self) -> tuple[str, Valuation]:
        return (self.template_id, self.valuation)

    @property
    def key(self) -> tuple[str, int]:
        return (self.component, self.seq_no)


@dataclass(frozen=True)
class ComponentLog:
    component: str
    entries: tuple[LogEntry, ...] = ()

    def __post_init__(self):
        prev_ts = None
        for i, e in enumerate(self.entries):
            if e.seq_no != i:
                raise ValueError(f"{self.component}: seq_no {e.seq_no} at position {i}")
            if prev_ts is not None and e.timestamp < prev_ts:
                raise ValueError(f"{self.component}: timestamps decrease at entry {i}")
            prev_ts = e.timestamp

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    @classmethod
    def from_records(cls, component: str, records: Iterable[tuple[int, str, Valuation]]) -> "ComponentLog":
        # stable sort: equal timestamps keep file order
        ordered = sorted(records, key=lambda r: r[0])
        return cls(component, tuple(
            LogEntry(ts, tid, tuple(v), i, component) for i, (ts, tid, v) in enumerate(ordered)
        ))


@dataclass(frozen=True)
class Execution:
    exec_id: str
    logs: Mapping[str, ComponentLog]

    def __post_init__(self):
        object.__setattr__(self, "logs", dict(sorted(self.logs.items())))

    @property
    def size(self) -> int:
        return sum(len(cl) for cl in self.logs.values())

    def log_of(self, component: str) -> ComponentLog:
        return self.logs.get(component) or ComponentLog(component)

    def entry(self, component: str, seq_no: int) -> LogEntry:
        return self.logs[component].entries[seq_no]


def parse_component_log(lines: Iterable[str], component: str, templates: TemplateSet,
                        ts_format: TimestampFormat = DEFAULT_TS, source="") -> ComponentLog:
    records = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        records.append(match_entry(line, templates, ts_format, where=f"{source}:{lineno}"))
    return ComponentLog.from_records(component, records)


def load_execution(root, templates: TemplateSet, ts_format: TimestampFormat = DEFAULT_TS) -> Execution:
    root = Path(root)
    files = sorted(p for p in root.iterdir() if p.is_file() and p.suffix == LOG_SUFFIX)
    if not files:
        raise EmptyExecution(f"{root}: no <component>{LOG_SUFFIX} files")
    logs = {}
    for p in files:
        with p.open() as fh:
            logs[p.stem] = parse_component_log(fh, p.stem, templates, ts_format, source=str(p))
    return Execution(root.name, logs)


def load_dataset(root, templates: TemplateSet, ts_format: TimestampFormat = DEFAULT_TS) -> list[Execution]:
    """Every subdirectory of ``root`` holding ``*.log`` files is one execution."""
    root = Path(root)
    execs = []
    for d in sorted(p for p in root.iterdir() if p.is_dir()):
        if any(f.suffix == LOG_SUFFIX for f in d.iterdir()):
            execs.append(load_execution(d, templates, ts_format))
    if not execs:
        raise EmptyExecution(f"{root}: no execution directories")
    log.info("loaded %d executions (%d entries) from %s", len(execs), sum(e.size for e in execs), root)
    return execs


def format_entry(entry: LogEntry, templates: TemplateSet, ts_format: TimestampFormat = DEFAULT_TS) -> str:
    return f"{ts_format.format(entry.timestamp)} {templates.render(entry.template_id, entry.valuation)}"


def write_execution(execution: Execution, root, templates: TemplateSet,
                    ts_format: TimestampFormat = DEFAULT_TS) -> Path:
    out = Path(root) / execution.exec_id
    out.mkdir(parents=True, exist_ok=True)
    for comp, clog in execution.logs.items():
        text = "".join(format_entry(e, templates, ts_format) + "\n" for e in clog)
        (out / f"{comp}{LOG_SUFFIX}").write_text(text)
    return out
