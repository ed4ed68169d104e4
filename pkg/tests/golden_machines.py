"""Hand-built machines and logs used as golden inputs."""

from pathlib import Path

from logstitch.automata import TRUE, Guard, GuardedFsm
from logstitch.dependency import ArchitectureGraph, DependencyMap
from logstitch.logs import ComponentLog, Execution, LogEntry

FIXTURES = Path(__file__).parent / "fixtures"
RUNNING = FIXTURES / "running_example"


def g(*vals):
    return Guard.of(tuple(vals))


def machine(n, finals, trans, names=None, initial=0):
    origin = {i: frozenset([names[i]]) for i in range(n)} if names else None
    return GuardedFsm(n, initial, finals, trans, origin)


def m_tc():
    # s0 init/final; s0 -tmp1(X,f0)-> s1 -tmp2-> s3; s0 -tmp1(Y,f1)-> s2 -tmp3-> s4
    return machine(5, [0, 3, 4], [
        (0, "tmp1", g("X", "f0"), 1), (0, "tmp1", g("Y", "f1"), 2),
        (1, "tmp2", TRUE, 3), (2, "tmp3", TRUE, 4),
    ], ["s0", "s1", "s2", "s3", "s4"])


def m_mux():
    return machine(4, [0, 3], [
        (0, "tmp4", TRUE, 1), (1, "tmp5", TRUE, 1), (1, "tmp6", TRUE, 2), (2, "tmp7", TRUE, 3),
    ], ["s5", "s6", "s7", "s8"])


def m_gw():
    return machine(3, [0, 1, 2], [(0, "tmp8", TRUE, 1), (0, "tmp9", TRUE, 2)], ["s9", "s10", "s11"])


def m_chk():
    return machine(4, [0, 2, 3], [
        (0, "tmp10", g("1"), 1), (1, "tmp11", TRUE, 2), (0, "tmp10", g("0"), 3),
    ], ["s12", "s13", "s14", "s15"])


def component_models():
    return {"TC": m_tc(), "MUX": m_mux(), "GW": m_gw(), "CHK": m_chk()}


# two-component toy: X drives Y

def toy_models():
    m_x = machine(3, [2], [(0, "e1X", TRUE, 1), (1, "e2X", TRUE, 2)], ["s0", "s1", "s2"])
    m_y = machine(3, [2], [(0, "e1Y", TRUE, 1), (1, "e2Y", TRUE, 1), (1, "e3Y", TRUE, 2)], ["s3", "s4", "s5"])
    return {"X": m_x, "Y": m_y}


def toy_execution():
    x = ComponentLog("X", (LogEntry(1, "e1X", (), 0, "X"), LogEntry(2, "e2X", (), 1, "X")))
    y = ComponentLog("Y", (LogEntry(1, "e1Y", (), 0, "Y"), LogEntry(1, "e2Y", (), 1, "Y"),
                           LogEntry(2, "e3Y", (), 2, "Y")))
    return Execution("toy", {"X": x, "Y": y})


def toy_arch():
    return ArchitectureGraph.from_edges([("X", "Y")])


def toy_deps():
    ex = toy_execution()
    y = ex.logs["Y"]
    entries = {("X", 0): [("Y", (y[0], y[1]))], ("X", 1): [("Y", (y[2],))]}
    parent_of = {("Y", 0): ("X", 0), ("Y", 1): ("X", 0), ("Y", 2): ("X", 1)}
    return DependencyMap("toy", entries, parent_of)


# insertion example: m_x = s_p -a-> s_t -b-> s_n -d-> s_p, m_y = s_i -alpha-> s_f

def insert_inputs():
    m_x = machine(3, [2], [(0, "a", TRUE, 1), (1, "b", TRUE, 2), (2, "d", TRUE, 0)], ["s_p", "s_t", "s_n"])
    m_y = machine(2, [1], [(0, "alpha", TRUE, 1)], ["s_i", "s_f"])
    return m_x, m_y


def insert_expected():
    # s_p -a-> s_m; s_m -b-> s_n; s_m -alpha-> s_f -b-> s_n; s_n -d-> s_p
    return machine(4, [2], [
        (0, "a", TRUE, 1), (1, "b", TRUE, 2), (1, "alpha", TRUE, 3), (3, "b", TRUE, 2), (2, "d", TRUE, 0),
    ], ["s_p", "s_m", "s_n", "s_f"])


def labels(seq):
    """('tmp1', 'X', 'f0') style tuples to (event, valuation) pairs."""
    return [(s[0], tuple(s[1:])) for s in seq]
