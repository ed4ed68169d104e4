"""Synthetic component systems with known causal structure.

Each component owns a list of routines (the main component's are commands,
the others' are services).  A routine is a sequence of steps; a step logs one
event and may call services of child components.  Calls are synchronous:
the caller logs nothing until all callees are done, while the callees of one
step run concurrently (their entries are randomly interleaved).  A single
global clock advances one step per logged entry, so with exact timestamps
every downstream entry's cause is its component parent's latest entry.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .dependency import ArchitectureGraph
from .logs import ComponentLog, EventTemplate, Execution, LogEntry, TemplateSet, TimestampFormat, write_execution

DEFAULT_BASE_TS = 1542637560  # 2018-11-19 14:26:00 UTC


@dataclass(frozen=True)
class Step:
    template: str
    valuation: tuple = ()
    # (child component, service indices to pick one from at run time)
    calls: tuple = ()
    repeat: tuple = (1, 1)

    def to_json(self):
        return {"template": self.template, "valuation": list(self.valuation),
                "calls": [[c, list(opts)] for c, opts in self.calls], "repeat": list(self.repeat)}

    @classmethod
    def from_json(cls, d):
        return cls(d["template"], tuple(d.get("valuation", ())),
                   tuple((c, tuple(opts)) for c, opts in d.get("calls", ())), tuple(d.get("repeat", (1, 1))))


@dataclass(frozen=True)
class EmissionConfig:
    executions: int = 10
    commands: tuple = (1, 1)  # commands per execution, inclusive range
    target_entries: int | None = None  # keep adding executions until reached
    ts_step: int = 1
    coarsening: int = 1
    base_ts: int = DEFAULT_BASE_TS

    def to_json(self):
        d = dict(self.__dict__)
        d["commands"] = list(self.commands)
        return d

    @classmethod
    def from_json(cls, d):
        d = dict(d)
        if "commands" in d:
            d["commands"] = tuple(d["commands"])
        return cls(**d)


@dataclass
class GroundTruthSystem:
    arch: ArchitectureGraph
    templates: TemplateSet
    routines: Mapping[str, list]  # component -> list of routines (tuples of Step)
    emission: EmissionConfig = field(default_factory=EmissionConfig)

    def __post_init__(self):
        self.validate()

    def validate(self):
        owner = {}
        for comp, routines in self.routines.items():
            if comp not in self.arch.components:
                raise ValueError(f"{comp} is not in the architecture")
            for routine in routines:
                for k, step in enumerate(routine):
                    if step.template not in self.templates:
                        raise ValueError(f"{comp}: unknown template {step.template}")
                    if owner.setdefault(step.template, comp) != comp:
                        raise ValueError(f"template {step.template} used by {owner[step.template]} and {comp}")
                    if comp != self.arch.main and k == 0 and not self.templates.is_communication(step.template):
                        raise ValueError(f"{comp}: services must start with a communication event")
                    for child, opts in step.calls:
                        if (comp, child) not in self.arch.uses:
                            raise ValueError(f"{comp} calls {child} without an architecture edge")
                        if not opts or any(not 0 <= o < len(self.routines.get(child, ())) for o in opts):
                            raise ValueError(f"{comp}: bad service index for {child}")
        if not self.routines.get(self.arch.main):
            raise ValueError("the main component needs at least one command")

    def to_json(self) -> dict:
        return {
            "architecture": self.arch.dumps(),
            "templates": self.templates.dumps(),
            "routines": {c: [[s.to_json() for s in r] for r in rs] for c, rs in sorted(self.routines.items())},
            "emission": self.emission.to_json(),
        }

    @classmethod
    def from_json(cls, d) -> "GroundTruthSystem":
        from .dependency import parse_architecture
        from .logs import parse_templates
        routines = {c: [tuple(Step.from_json(s) for s in r) for r in rs] for c, rs in d["routines"].items()}
        return cls(parse_architecture(d["architecture"]), parse_templates(d["templates"]), routines,
                   EmissionConfig.from_json(d.get("emission", {})))


# ---------------------------------------------------------------------------
# execution


def _merge(streams: list, rng: random.Random) -> list:
    """Uniformly random interleaving keeping each stream's order."""
    streams = [s for s in streams if s]
    if len(streams) < 2:
        return streams[0] if streams else []
    pos = [0] * len(streams)
    left = [len(s) for s in streams]
    total = sum(left)
    out = []
    while total:
        r = rng.randrange(total)
        k = 0
        while r >= left[k]:
            r -= left[k]
            k += 1
        out.append(streams[k][pos[k]])
        pos[k] += 1
        left[k] -= 1
        total -= 1
    return out


def _run(system: GroundTruthSystem, comp: str, routine, parent, counters, rng) -> list:
    """Emission stream of one routine: records (component, seq_no, template, valuation, parent key)."""
    out = []
    for step in routine:
        for _ in range(rng.randint(*step.repeat)):
            seq = counters[comp] = counters.get(comp, -1) + 1
            out.append([comp, seq, step.template, step.valuation, parent])
            me = (comp, seq)
            subs = []
            for child, opts in step.calls:
                idx = opts[rng.randrange(len(opts))]
                subs.append(_run(system, child, system.routines[child][idx], me, counters, rng))
            out.extend(_merge(subs, rng))
    return out


@dataclass
class GeneratedExecution:
    execution: Execution
    parent_of: dict  # (component, seq_no) -> (component, seq_no) of the triggering entry


def run_execution(system: GroundTruthSystem, exec_id: str, rng: random.Random) -> GeneratedExecution:
    cfg = system.emission
    commands = system.routines[system.arch.main]
    counters: dict = {}
    stream = []
    for _ in range(rng.randint(*cfg.commands)):
        cmd = commands[rng.randrange(len(commands))]
        # a command's root entries have no parent
        stream.extend(_run(system, system.arch.main, cmd, None, counters, rng))
    records: dict = {}
    parent_of = {}
    for i, (comp, seq, tid, val, parent) in enumerate(stream):
        t = cfg.base_ts + i * cfg.ts_step
        t -= t % cfg.coarsening
        records.setdefault(comp, []).append(LogEntry(t, tid, tuple(val), seq, comp))
        if parent is not None:
            parent_of[(comp, seq)] = parent
    logs = {c: ComponentLog(c, tuple(es)) for c, es in records.items()}
    return GeneratedExecution(Execution(exec_id, logs), parent_of)


def generate_executions(system: GroundTruthSystem, seed: int) -> list[GeneratedExecution]:
    cfg = system.emission
    out = []
    total = 0
    i = 0
    while i < cfg.executions or (cfg.target_entries is not None and total < cfg.target_entries):
        rng = random.Random(f"{seed}:exec:{i}")
        g = run_execution(system, f"exec{i + 1:04d}", rng)
        out.append(g)
        total += g.execution.size
        i += 1
    return out


def generate(system: GroundTruthSystem, seed: int, out_dir) -> Path:
    """Write a dataset directory: templates, architecture, one folder per execution, ground truth."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "templates.tsv").write_text(system.templates.dumps())
    (out / "architecture.txt").write_text(system.arch.dumps())
    (out / "system.json").write_text(json.dumps(system.to_json(), indent=1, sort_keys=True) + "\n")
    truth = {}
    for g in generate_executions(system, seed):
        write_execution(g.execution, out, system.templates, TimestampFormat())
        truth[g.execution.exec_id] = [[c, s, pc, ps] for (c, s), (pc, ps) in sorted(g.parent_of.items())]
    (out / "ground_truth.json").write_text(json.dumps(truth, indent=0, sort_keys=True) + "\n")
    return out


def load_ground_truth(path) -> dict:
    raw = json.loads(Path(path).read_text())
    return {ex: {(c, s): (pc, ps) for c, s, pc, ps in rows} for ex, rows in raw.items()}


def attachment_mismatches(truth: Mapping, extracted: Mapping) -> tuple[int, int]:
    """Downstream entries whose extracted parent differs from the true one, and their total."""
    keys = set(truth) | set(extracted)
    bad = sum(1 for k in keys if truth.get(k) != extracted.get(k))
    return bad, len(keys)


# ---------------------------------------------------------------------------
# systems


def running_example_system(emission: EmissionConfig | None = None) -> GroundTruthSystem:
    """Four components shaped like the telecommand example (one command per execution)."""
    from .logs import parse_templates
    templates = parse_templates(
        "tmp1\t1\tsending $1 via $2\n"
        "tmp2\t1\tTC accepted\n"
        "tmp3\t1\twait message\n"
        "tmp4\t1\tinitialize\n"
        "tmp5\t0\tcmdName = $1\n"
        "tmp6\t0\tdata flow ID = $1\n"
        "tmp7\t1\tsend = $1\n"
        "tmp8\t1\tencrypt $1\n"
        "tmp9\t1\treject command\n"
        "tmp10\t1\tmode $1\n"
        "tmp11\t1\tautomatic config\n")
    arch = ArchitectureGraph.from_edges([("TC", "MUX"), ("TC", "CHK"), ("MUX", "GW")], main="TC")
    routines = {
        "TC": [
            (Step("tmp1", ("X", "f0"), (("MUX", (0,)), ("CHK", (0,)))),
             Step("tmp2", (), (("MUX", (2,)), ("CHK", (1,))))),
            (Step("tmp1", ("Y", "f1"), (("MUX", (1,)), ("CHK", (2,)))),
             Step("tmp3", (), (("MUX", (3,)),))),
        ],
        "MUX": [
            (Step("tmp4"), Step("tmp5", ("X",), repeat=(1, 3)), Step("tmp6", ("f0",), (("GW", (0,)),))),
            (Step("tmp4"), Step("tmp5", ("Y",), repeat=(1, 3)), Step("tmp6", ("f1",))),
            (Step("tmp7", ("ok",)),),
            (Step("tmp7", ("no",), (("GW", (1,)),)),),
        ],
        "GW": [(Step("tmp8", ("TC_01",)),), (Step("tmp9"),)],
        "CHK": [(Step("tmp10", ("1",)),), (Step("tmp11"),), (Step("tmp10", ("0",)),)],
    }
    return GroundTruthSystem(arch, templates, routines, emission or EmissionConfig(executions=2, commands=(1, 1)))


def random_system(n_components: int, seed: int, emission: EmissionConfig | None = None,
                  commands: int = 4, services: tuple = (1, 3), fanout: float = 0.6,
                  values: int = 3, branching: float = 0.3, repeat_prob: float = 0.1) -> GroundTruthSystem:
    """Random tree-shaped system; component ``C0`` is the main component.

    ``fanout`` is the chance that a calling step calls each child;
    ``branching`` the chance that a call leaves the choice between two
    services to run time; ``repeat_prob`` the chance that a local step
    repeats a random number of times.
    """
    if n_components < 1:
        raise ValueError("need at least one component")
    rng = random.Random(f"{seed}:system")
    comps = [f"C{i}" for i in range(n_components)]
    edges = [(comps[rng.randrange(i)], comps[i]) for i in range(1, n_components)]
    arch = ArchitectureGraph.from_edges(edges, main=comps[0], components=comps)
    templates: list[EventTemplate] = []

    def new_template(comp, comm, arity):
        n = len(templates) + 1
        words = [comp.lower(), "ev" if not comm else "msg", str(n)] + [f"${j}" for j in range(1, arity + 1)]
        t = EventTemplate(f"{comp}_t{n}", tuple(words), comm)
        templates.append(t)
        return t

    def valuation(t):
        return tuple(f"v{rng.randrange(values)}" for _ in range(t.param_count))

    routines: dict = {}
    # children first so call targets exist
    for comp in reversed(comps):
        kids = arch.children(comp)
        pool_work = [new_template(comp, False, rng.randint(0, 1)) for _ in range(2)]
        pool_comm = [new_template(comp, True, rng.randint(0, 1)) for _ in range(2)]

        def calls_for():
            chosen = [k for k in kids if rng.random() < fanout]
            if kids and not chosen:
                chosen = [rng.choice(kids)]
            out = []
            for k in chosen:
                n = len(routines[k])
                width = 2 if n > 1 and rng.random() < branching else 1
                out.append((k, tuple(sorted(rng.sample(range(n), width)))))
            return tuple(out)

        rs = []
        count = commands if comp == comps[0] else rng.randint(*services)
        for _ in range(count):
            steps = []
            if comp != comps[0]:
                t = rng.choice(pool_comm)
                steps.append(Step(t.id, valuation(t)))
            for _ in range(rng.randint(1, 3)):
                t = rng.choice(pool_work)
                rep = (1, rng.randint(2, 3)) if rng.random() < repeat_prob else (1, 1)
                steps.append(Step(t.id, valuation(t), repeat=rep))
            if kids:
                t = rng.choice(pool_comm)
                steps.append(Step(t.id, valuation(t), calls_for()))
            if comp == comps[0] and kids and rng.random() < 0.5:
                t = rng.choice(pool_comm)
                steps.append(Step(t.id, valuation(t), calls_for()))
            rs.append(tuple(steps))
        routines[comp] = rs
    return GroundTruthSystem(arch, TemplateSet(sorted(templates, key=lambda t: int(t.id.rsplit("t", 1)[1]))),
                             routines, emission or EmissionConfig())


def system_from_spec(spec: Mapping) -> tuple[GroundTruthSystem, int]:
    """Build a system from a generator spec file's contents; returns it with the seed.

    Keys: ``seed``, ``emission`` (see :class:`EmissionConfig`) and either
    ``preset: "running_example"``, ``system`` (a full system dump) or the
    :func:`random_system` parameters ``components``, ``commands``,
    ``services``, ``fanout``, ``values``, ``branching``, ``repeat_prob``.
    """
    seed = int(spec.get("seed", 0))
    emission = EmissionConfig.from_json(spec.get("emission", {}))
    if spec.get("preset") == "running_example":
        return running_example_system(emission), seed
    if "preset" in spec:
        raise ValueError(f"unknown preset {spec['preset']!r}")
    if "system" in spec:
        sysd = dict(spec["system"])
        sysd["emission"] = emission.to_json()
        return GroundTruthSystem.from_json(sysd), seed
    return random_system(int(spec.get("components", 4)), seed, emission,
                         commands=int(spec.get("commands", 4)),
                         services=tuple(spec.get("services", (1, 3))),
                         fanout=float(spec.get("fanout", 0.6)),
                         values=int(spec.get("values", 3)),
                         branching=float(spec.get("branching", 0.3)),
                         repeat_prob=float(spec.get("repeat_prob", 0.1))), seed
