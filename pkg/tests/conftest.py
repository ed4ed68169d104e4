import pytest

from logstitch.dependency import extract_dependencies, load_architecture
from logstitch.logs import load_dataset, load_templates

from golden_machines import RUNNING


@pytest.fixture(scope="session")
def running():
    templates = load_templates(RUNNING / "templates.tsv")
    arch = load_architecture(RUNNING / "architecture.txt")
    executions = load_dataset(RUNNING, templates)
    deps = {ex.exec_id: extract_dependencies(ex, arch, templates) for ex in executions}
    return {"templates": templates, "arch": arch, "executions": executions, "deps": deps,
            "by_id": {ex.exec_id: ex for ex in executions}}


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one result line per acceptance criterion; printed in the terminal summary."""
    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
