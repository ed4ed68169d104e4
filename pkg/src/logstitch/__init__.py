"""System-level guarded state machines stitched from per-component logs."""

from .automata import TRUE, Guard, GuardedFsm, accepts
from .dependency import ArchitectureGraph, DependencyMap, extract_dependencies, linearize
from .inference import MergePolicy, infer_component_model, infer_models
from .logs import ComponentLog, EventTemplate, Execution, LogEntry, TemplateSet, load_dataset, load_templates
from .stitching import graft_execution, insert, stitch

__version__ = "0.1.0"
