import random

import pytest
from hypothesis import given
import hypothesis.strategies as st

from cfgadv.graph import Cfg, CfgError, Label, make_cfg, parse_cfg, serialize_cfg, structurally_equal, validate
from conftest import cfgs, path_graph


def doc(*lines):
    return "\n".join(lines) + "\n"


def test_parse_single_node():
    g = parse_cfg(doc("cfg one", "entry A", "label unlabeled", "node A"))
    assert g.nodes == ("A",)
    assert g.edges == ()
    assert g.exits == {"A"}
    assert g.label is None


def test_parse_path_graph_derives_exit():
    g = parse_cfg(doc("cfg p", "entry A", "label benign", "node A", "node B", "edge A B"))
    assert g.exits == {"B"}
    assert g.entry == "A"
    assert g.label is Label.BENIGN


def test_parse_undeclared_node_in_edge():
    with pytest.raises(CfgError, match="undeclared-node: C") as info:
        parse_cfg(doc("cfg p", "entry A", "label benign", "node A", "node B", "edge A C"))
    assert info.value.line == 6


def test_parse_comments_and_blank_lines():
    text = doc("# leading comment", "cfg p  # name", "", "entry A", "label malicious",
               "node A", "node B # second", "edge A B")
    g = parse_cfg(text)
    assert g.label is Label.MALICIOUS
    assert set(g.edges) == {("A", "B")}


@pytest.mark.parametrize("text, needle, line", [
    (doc("cfg p", "label benign", "node A"), "missing entry", 2),
    (doc("cfg p", "entry A", "label benign"), "empty graph", None),
    (doc("cfg p", "entry A", "label benign", "node A", "bogus A"), "unknown directive", 5),
    (doc("cfg p", "entry A", "label benign", "node A", "edge A"), "exactly two", 5),
    (doc("cfg p", "entry A", "label sneaky", "node A"), "unknown label", 3),
    (doc("cfg p", "entry A", "label benign", "node A$"), "invalid node id", 4),
    (doc("cfg p", "entry A", "label benign", "node A", "node B", "edge A B", "node C"), "after edge", 7),
    (doc("cfg p", "entry Z", "label benign", "node A"), "undeclared-node: Z", 2),
    (doc("graph p"), "expected 'cfg'", 1),
    ("", "missing 'cfg'", None),
])
def test_parse_errors_report_location(text, needle, line):
    with pytest.raises(CfgError, match=needle) as info:
        parse_cfg(text)
    assert info.value.line == line


def test_parse_error_column_points_at_token():
    with pytest.raises(CfgError) as info:
        parse_cfg(doc("cfg p", "entry A", "label benign", "node   A$"))
    assert info.value.column == 8


def test_parse_rejects_duplicates_and_entry_self_loop():
    with pytest.raises(CfgError, match="duplicate-node: A"):
        parse_cfg(doc("cfg p", "entry A", "label benign", "node A", "node A"))
    with pytest.raises(CfgError, match="duplicate-edge: A->B"):
        parse_cfg(doc("cfg p", "entry A", "label benign", "node A", "node B", "edge A B", "edge A B"))
    with pytest.raises(CfgError, match="entry-self-loop: A"):
        parse_cfg(doc("cfg p", "entry A", "label benign", "node A", "edge A A"))


def test_serialize_single_node_layout():
    g = make_cfg(["A"], [], "A", name="one")
    lines = serialize_cfg(g).splitlines()
    # three header lines, one node line, empty edge section
    assert lines == ["cfg one", "entry A", "label unlabeled", "node A"]


def test_serialize_sorts_nodes_and_edges():
    g = Cfg(("b", "a", "c"), (("b", "c"), ("a", "b")), "a", frozenset({"c"}))
    text = serialize_cfg(g)
    assert text.index("node a") < text.index("node b") < text.index("node c")
    assert text.index("edge a b") < text.index("edge b c")


@given(cfgs(max_nodes=10))
def test_round_trip(g):
    h = parse_cfg(serialize_cfg(g))
    assert structurally_equal(g, h)
    assert h == g


@given(cfgs(max_nodes=10), st.randoms(use_true_random=False))
def test_serialization_independent_of_construction_order(g, rnd):
    nodes, edges = list(g.nodes), list(g.edges)
    rnd.shuffle(nodes)
    rnd.shuffle(edges)
    h = make_cfg(nodes, edges, g.entry, name=g.name)
    assert serialize_cfg(h) == serialize_cfg(g)


def test_fifty_node_serialization_is_byte_identical():
    rnd = random.Random(7)
    nodes = [f"n{i}" for i in range(50)]
    edges = {(rnd.choice(nodes), rnd.choice(nodes)) for _ in range(120)} - {("n0", "n0")}
    g = make_cfg(nodes, edges, "n0")
    first = serialize_cfg(g).encode()
    second = serialize_cfg(make_cfg(reversed(nodes), sorted(edges, reverse=True), "n0")).encode()
    assert first == second


def test_validate_valid_path():
    assert validate(path_graph(3)) == []


def test_validate_undeclared_node():
    g = Cfg(("A", "B"), (("A", "B"), ("B", "C")), "A", frozenset())
    assert "undeclared-node: C" in validate(g)


def test_validate_exit_with_successor():
    g = Cfg(("A", "B", "C"), (("A", "B"), ("B", "C")), "A", frozenset({"B", "C"}))
    assert validate(g) == ["exit-has-successor: B"]


# one broken graph per invariant class; each must be detected by its rule name
MUTANTS = [
    (Cfg((), (), "A", frozenset()), "empty-graph"),
    (Cfg(("A", "A"), (), "A", frozenset({"A"})), "duplicate-node"),
    (Cfg(("A", "B"), (("A", "B"), ("A", "B")), "A", frozenset({"B"})), "duplicate-edge"),
    (Cfg(("A",), (("A", "A"),), "A", frozenset()), "entry-self-loop"),
    (Cfg(("A", "B"), (("A", "B"),), "Z", frozenset({"B"})), "entry-undeclared"),
    (Cfg(("A", "B"), (("A", "B"),), "A", frozenset({"B", "Q"})), "exit-undeclared"),
    (Cfg(("A", "B"), (("A", "B"),), "A", frozenset()), "missing-exit"),
    (Cfg(("A", "B"), (("A", "B"),), "A", frozenset({"A", "B"})), "exit-has-successor"),
    (Cfg(("A", "B"), (("A", "B"), ("B", "X")), "A", frozenset()), "undeclared-node"),
    (Cfg(("A", "B c"), (("A", "B c"),), "A", frozenset({"B c"})), "bad-node-id"),
]


@pytest.mark.parametrize("g, rule", MUTANTS, ids=[r for _, r in MUTANTS])
def test_validate_detects_each_violation_class(g, rule):
    assert any(v.startswith(rule + ":") for v in validate(g))


@given(cfgs(max_nodes=8))
def test_generated_graphs_are_valid(g):
    assert validate(g) == []


def test_add_edges_recomputes_exits():
    g = path_graph(3)
    h = g.add_edges([("v2", "v0")])
    assert g.exits == {"v2"}
    assert h.exits == frozenset()
