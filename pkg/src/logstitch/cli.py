"""Command line entry point: ``logstitch infer|eval|deps|generate|accepts``.

Progress goes to stderr; results go to files under ``--out``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from . import automata
from .dependency import ANCHOR_LATEST, ANCHORS, extract_dependencies, format_dependencies, linearize, load_architecture
from .errors import InferenceTimeout, LogStitchError
from .evaluation import EvalConfig, evaluate
from .generator import attachment_mismatches, generate, load_ground_truth, system_from_spec
from .inference import DEFAULT_GUARD_SPLIT_LIMIT, DEFAULT_K, MergePolicy, infer_models
from .logs import TimestampFormat, load_dataset, load_execution, load_templates, parse_component_log
from .stitching import stitch

log = logging.getLogger("logstitch")

EXIT_OK, EXIT_REJECTED, EXIT_INPUT, EXIT_TIMEOUT = 0, 1, 2, 3
DEFAULT_TIMEOUT = 86400


@dataclass
class RunConfig:
    dataset: Path
    templates: Path
    architecture: Path
    k: int = DEFAULT_K
    guard_split_limit: int = DEFAULT_GUARD_SPLIT_LIMIT
    folds: int = 10
    repeats: int = 10
    seed: int = 0
    timeout: float = DEFAULT_TIMEOUT
    minimize: bool = False
    out: Path = Path("out")
    anchor: str = ANCHOR_LATEST
    jobs: int = 1
    base_date: str = "19700101"

    @classmethod
    def from_args(cls, a) -> "RunConfig":
        dataset = Path(a.dataset)
        cfg = cls(
            dataset=dataset,
            templates=Path(a.templates) if a.templates else dataset / "templates.tsv",
            architecture=Path(a.arch) if a.arch else dataset / "architecture.txt",
            k=a.k, guard_split_limit=a.guard_split_limit,
            folds=getattr(a, "folds", 10), repeats=getattr(a, "repeats", 10),
            seed=getattr(a, "seed", 0), timeout=a.timeout, minimize=getattr(a, "minimize", False),
            out=Path(a.out), anchor=a.anchor, jobs=a.jobs or (os.cpu_count() or 1), base_date=a.base_date,
        )
        cfg.validate()
        return cfg

    def validate(self):
        for name, p in (("dataset", self.dataset), ("templates", self.templates)):
            if not p.exists():
                raise InputError(f"{name} not found: {p}")
        if not self.architecture.is_file():
            raise InputError(f"architecture file not found: {self.architecture}")
        if self.k < 0 or self.guard_split_limit < 1 or self.folds < 2 or self.repeats < 1 or self.timeout <= 0:
            raise InputError("k >= 0, guard-split-limit >= 1, folds >= 2, repeats >= 1 and timeout > 0 required")

    @property
    def policy(self) -> MergePolicy:
        return MergePolicy(self.k, self.guard_split_limit)


class InputError(Exception):
    pass


def _load(cfg: RunConfig):
    templates = load_templates(cfg.templates)
    arch = load_architecture(cfg.architecture)
    executions = load_dataset(cfg.dataset, templates, TimestampFormat(cfg.base_date))
    return templates, arch, executions


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    log.info("wrote %s", path)


def cmd_infer(a) -> int:
    cfg = RunConfig.from_args(a)
    deadline = time.monotonic() + cfg.timeout
    t0 = time.perf_counter()
    templates, arch, executions = _load(cfg)
    models = infer_models(executions, arch.components, cfg.policy)
    deps = {ex.exec_id: extract_dependencies(ex, arch, templates, cfg.anchor) for ex in executions}
    t1 = time.perf_counter()
    log.info("preprocessing done in %.2fs: %d executions, %d entries", t1 - t0, len(executions),
             sum(ex.size for ex in executions))
    try:
        m_sys = stitch(executions, deps, models, arch, minimize=cfg.minimize, deadline=deadline,
                       dump_dir=a.dump_grafts, jobs=cfg.jobs)
    except InferenceTimeout as exc:
        log.error("%s", exc)
        return EXIT_TIMEOUT
    t2 = time.perf_counter()
    if a.format in ("model", "both"):
        _write(cfg.out / "model.json", automata.dumps(m_sys))
        for comp, m in models.items():
            _write(cfg.out / "components" / f"{comp}.json", automata.dumps(m))
    if a.format in ("dot", "both"):
        _write(cfg.out / "model.dot", automata.to_dot(m_sys, "system"))
    stats = ("dataset\tsize\texecs\tstates\ttransitions\tprep_time\tstitch_time\ttotal\n"
             f"{cfg.dataset.name}\t{sum(ex.size for ex in executions)}\t{len(executions)}\t{m_sys.n_states}\t"
             f"{len(m_sys.transitions)}\t{t1 - t0:.3f}\t{t2 - t1:.3f}\t{t2 - t0:.3f}\n")
    _write(cfg.out / "stats.tsv", stats)
    log.info("system model: %d states, %d transitions (%.2fs)", m_sys.n_states, len(m_sys.transitions), t2 - t0)
    return EXIT_OK


def cmd_eval(a) -> int:
    cfg = RunConfig.from_args(a)
    templates, arch, executions = _load(cfg)
    ecfg = EvalConfig(folds=cfg.folds, repeats=cfg.repeats, seed=cfg.seed, policy=cfg.policy, anchor=cfg.anchor,
                      sanity=a.sanity, timeout=cfg.timeout, minimize=cfg.minimize, jobs=cfg.jobs)

    def progress(f):
        log.info("repeat %d fold %d: tp=%d fn=%d tn=%d fp=%d%s", f.repeat, f.fold, f.tp, f.fn, f.tn, f.fp,
                 " (timed out)" if f.timed_out else "")

    report = evaluate(executions, arch, templates, ecfg, dataset=cfg.dataset.name, progress=progress)
    _write(cfg.out / "report.json", report.dumps())
    _write(cfg.out / "report.tsv", report.tsv())
    _write(cfg.out / "table.tsv", report.table())
    r, s = report.recall, report.specificity
    log.info("recall %s, specificity %s", _pm(r), _pm(s))
    return EXIT_OK


def _pm(ms):
    return "NA" if ms[0] is None else f"{ms[0]:.4f} +- {ms[1]:.4f}"


def cmd_deps(a) -> int:
    cfg = RunConfig.from_args(a)
    templates, arch, executions = _load(cfg)
    text = []
    truth_path = cfg.dataset / "ground_truth.json"
    truth = load_ground_truth(truth_path) if truth_path.is_file() else None
    bad = total = 0
    for ex in executions:
        deps = extract_dependencies(ex, arch, templates, cfg.anchor)
        text.append(format_dependencies(deps))
        if truth is not None:
            b, t = attachment_mismatches(truth.get(ex.exec_id, {}), deps.parent_of)
            bad += b
            total += t
    _write(cfg.out / "deps.txt", "".join(text))
    if truth is not None:
        check = {"mismatched": bad, "attached": total, "mismatch_rate": bad / total if total else 0.0}
        _write(cfg.out / "deps_check.json", json.dumps(check, indent=1, sort_keys=True) + "\n")
        log.info("ground truth: %d of %d attachments differ", bad, total)
    return EXIT_OK


def cmd_generate(a) -> int:
    spec_path = Path(a.spec)
    if not spec_path.is_file():
        raise InputError(f"generator spec not found: {spec_path}")
    spec = json.loads(spec_path.read_text())
    if a.seed is not None:
        spec["seed"] = a.seed
    system, seed = system_from_spec(spec)
    out = generate(system, seed, a.out)
    log.info("generated dataset in %s", out)
    return EXIT_OK


def cmd_accepts(a) -> int:
    model_path = Path(a.model)
    if not model_path.is_file():
        raise InputError(f"model not found: {model_path}")
    m = automata.loads(model_path.read_text())
    templates = load_templates(a.templates)
    target = Path(a.log)
    if target.is_dir():
        if not a.arch:
            raise InputError("--arch is required when checking an execution directory")
        arch = load_architecture(a.arch)
        ex = load_execution(target, templates, TimestampFormat(a.base_date))
        deps = extract_dependencies(ex, arch, templates, a.anchor)
        entries = linearize(ex, deps, arch, a.seed)
    elif target.is_file():
        with target.open() as fh:
            entries = parse_component_log(fh, "", templates, TimestampFormat(a.base_date), str(target)).entries
    else:
        raise InputError(f"log not found: {target}")
    res = automata.accepts(m, entries)
    if res:
        print(f"accepted ({len(entries)} entries)")
        return EXIT_OK
    print(f"rejected at entry {res.failure_index + 1 if res.failure_index is not None else '?'} of {len(entries)}")
    return EXIT_REJECTED


def _common(p, seeds=False):
    p.add_argument("dataset", help="dataset directory (one subdirectory per execution)")
    p.add_argument("--templates", help="template file (default: DATASET/templates.tsv)")
    p.add_argument("--arch", help="architecture file (default: DATASET/architecture.txt)")
    p.add_argument("--k", type=int, default=DEFAULT_K, help="k-tails merge depth")
    p.add_argument("--guard-split-limit", type=int, default=DEFAULT_GUARD_SPLIT_LIMIT,
                   help="max distinct valuations that get their own guard")
    p.add_argument("--anchor", choices=ANCHORS, default=ANCHOR_LATEST, help="upstream candidates for pairing")
    p.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT, help="seconds (per fold for eval)")
    p.add_argument("--jobs", type=int, default=0, help="worker processes (default: cores)")
    p.add_argument("--base-date", default="19700101", help="date for HH:MM:SS timestamps")
    p.add_argument("--out", default="out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="logstitch", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("infer", help="infer the system-level model")
    _common(p)
    p.add_argument("--minimize", action="store_true", help="minimize after the union")
    p.add_argument("--format", choices=("dot", "model", "both"), default="both")
    p.add_argument("--dump-grafts", metavar="DIR", help="write each per-execution machine to DIR")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="cross-validated recall and specificity")
    _common(p)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--sanity", action="store_true", help="test on the training executions")
    p.add_argument("--minimize", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("deps", help="dump leads-to relations per execution")
    _common(p)
    p.set_defaults(func=cmd_deps)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    p.add_argument("spec", help="generator spec (JSON)")
    p.add_argument("--seed", type=int, help="override the spec's seed")
    p.add_argument("--out", default="dataset")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("accepts", help="check a log against a saved model")
    p.add_argument("model")
    p.add_argument("log", help="system-level log file, or an execution directory (linearized)")
    p.add_argument("--templates", required=True)
    p.add_argument("--arch", help="architecture file, for execution directories")
    p.add_argument("--anchor", choices=ANCHORS, default=ANCHOR_LATEST)
    p.add_argument("--seed", type=int, help="linearization seed (default: canonical order)")
    p.add_argument("--base-date", default="19700101")
    p.set_defaults(func=cmd_accepts)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.verbose == 0 and args.command == "accepts" else (
        logging.DEBUG if args.verbose > 1 else logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (InputError, LogStitchError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
