"""Control-flow-graph data model, text format, and structural validation.

A :class:`Cfg` is a directed graph of opaque basic-block ids with a single
entry node.  Exits are not declared; they are the nodes with out-degree 0.

The text format is line oriented::

    cfg <graph-name>
    entry <node-id>
    label <benign|malicious|unlabeled>
    node <node-id>
    ...
    edge <src> <dst>
    ...

``#`` starts a comment that runs to the end of the line.
"""
from __future__ import annotations

import enum
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional

NODE_ID = re.compile(r"[A-Za-z0-9_:.-]+")


class Label(enum.IntEnum):
    BENIGN = 0
    MALICIOUS = 1

    @property
    def text(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, text: str) -> Optional["Label"]:
        if text == "unlabeled":
            return None
        try:
            return cls[text.upper()]
        except KeyError:
            raise ValueError(f"unknown label {text!r}") from None

    def opposite(self) -> "Label":
        return Label(1 - int(self))


class CfgError(ValueError):
    """Raised for malformed graph documents or structurally invalid graphs."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)


@dataclass(frozen=True)
class Cfg:
    """Immutable directed control-flow graph.

    Build instances with :func:`make_cfg`, which canonicalises ordering and
    derives the exit set.  The raw constructor performs no checks so that
    :func:`validate` can be exercised on broken graphs.
    """

    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]
    entry: str
    exits: frozenset[str]
    name: str = "g"
    label: Optional[Label] = None
    _succ: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def successors(self) -> dict[str, list[str]]:
        """Adjacency lists keyed by node id (cached, do not mutate)."""
        if self._succ is None:
            succ: dict[str, list[str]] = {v: [] for v in self.nodes}
            for u, v in self.edges:
                succ.setdefault(u, []).append(v)
            object.__setattr__(self, "_succ", succ)
        return self._succ

    def with_label(self, label: Optional[Label]) -> "Cfg":
        return Cfg(self.nodes, self.edges, self.entry, self.exits, self.name, label)

    def with_name(self, name: str) -> "Cfg":
        return Cfg(self.nodes, self.edges, self.entry, self.exits, name, self.label)

    def add_edges(self, new_edges: Iterable[tuple[str, str]]) -> "Cfg":
        """Return a copy with extra edges; exits are recomputed."""
        return make_cfg(self.nodes, list(self.edges) + list(new_edges), self.entry,
                        name=self.name, label=self.label)


def make_cfg(nodes: Iterable[str], edges: Iterable[tuple[str, str]], entry: str,
             name: str = "g", label: Optional[Label] = None) -> Cfg:
    """Build a canonical Cfg: sorted nodes and edges, exits derived.

    Duplicates are preserved so that :func:`validate` can report them.
    """
    nodes = tuple(sorted(nodes))
    edges = tuple(sorted((str(u), str(v)) for u, v in edges))
    has_out = {u for u, _ in edges}
    exits = frozenset(v for v in nodes if v not in has_out)
    return Cfg(nodes, edges, entry, exits, name, label)


def validate(g: Cfg) -> list[str]:
    """Return a list of ``"<rule>: <element>"`` violations; empty iff valid."""
    out = []
    if not g.nodes:
        out.append("empty-graph: <no nodes>")
    for v, k in sorted(Counter(g.nodes).items()):
        if k > 1:
            out.append(f"duplicate-node: {v}")
    for v in g.nodes:
        if not NODE_ID.fullmatch(v):
            out.append(f"bad-node-id: {v!r}")
    declared = set(g.nodes)
    if g.entry not in declared:
        out.append(f"entry-undeclared: {g.entry}")
    for (u, v), k in sorted(Counter(g.edges).items()):
        if k > 1:
            out.append(f"duplicate-edge: {u}->{v}")
    missing = sorted({x for e in g.edges for x in e if x not in declared})
    out.extend(f"undeclared-node: {x}" for x in missing)
    if (g.entry, g.entry) in g.edges:
        out.append(f"entry-self-loop: {g.entry}")
    has_out = {u for u, _ in g.edges}
    for x in sorted(g.exits):
        if x not in declared:
            out.append(f"exit-undeclared: {x}")
        elif x in has_out:
            out.append(f"exit-has-successor: {x}")
    for x in g.nodes:
        if x not in has_out and x not in g.exits:
            out.append(f"missing-exit: {x}")
    return out


def check(g: Cfg) -> Cfg:
    """Raise :class:`CfgError` listing all violations, else return ``g``."""
    problems = validate(g)
    if problems:
        raise CfgError("; ".join(problems))
    return g


def _strip_comment(line: str) -> str:
    i = line.find("#")
    return line if i < 0 else line[:i]


def parse_cfg(text: str) -> Cfg:
    """Parse a graph-text document into a validated :class:`Cfg`."""
    header: dict[str, tuple[str, int]] = {}
    nodes: list[str] = []
    edges: list[tuple[str, str]] = []
    edge_line: dict[tuple[str, str], int] = {}
    seen_edges = False
    expected = ["cfg", "entry", "label"]

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line.strip():
            continue
        col = len(line) - len(line.lstrip()) + 1
        parts = line.split()
        kw, args = parts[0], parts[1:]

        if expected:
            if kw != expected[0]:
                if expected[0] == "entry" and kw in ("label", "node", "edge"):
                    raise CfgError("missing entry declaration", lineno, col)
                raise CfgError(f"expected '{expected[0]}' header, got {kw!r}", lineno, col)
            if len(args) != 1:
                raise CfgError(f"'{kw}' takes exactly one argument", lineno, col)
            header[kw] = (args[0], lineno)
            expected.pop(0)
            continue

        if kw == "node":
            if seen_edges:
                raise CfgError("node declared after edge section", lineno, col)
            if len(args) != 1:
                raise CfgError("'node' takes exactly one argument", lineno, col)
            if not NODE_ID.fullmatch(args[0]):
                raise CfgError(f"invalid node id {args[0]!r}", lineno, raw.index(args[0]) + 1)
            nodes.append(args[0])
        elif kw == "edge":
            seen_edges = True
            if len(args) != 2:
                raise CfgError("'edge' takes exactly two arguments", lineno, col)
            e = (args[0], args[1])
            edge_line.setdefault(e, lineno)
            edges.append(e)
        elif kw in ("cfg", "entry", "label"):
            raise CfgError(f"duplicate '{kw}' header", lineno, col)
        else:
            raise CfgError(f"unknown directive {kw!r}", lineno, col)

    if "cfg" not in header:
        raise CfgError("empty document: missing 'cfg' header")
    if "entry" not in header:
        raise CfgError("missing entry declaration")
    if "label" not in header:
        raise CfgError("missing 'label' header")
    if not nodes:
        raise CfgError("empty graph: no nodes declared")

    name = header["cfg"][0]
    entry, entry_line = header["entry"]
    label_text, label_line = header["label"]
    try:
        label = Label.parse(label_text)
    except ValueError as exc:
        raise CfgError(str(exc), label_line) from None

    declared = set(nodes)
    for e in edges:
        for x in e:
            if x not in declared:
                raise CfgError(f"undeclared-node: {x}", edge_line[e])
    if entry not in declared:
        raise CfgError(f"undeclared-node: {entry} (entry)", entry_line)

    g = make_cfg(nodes, edges, entry, name=name, label=label)
    problems = validate(g)
    if problems:
        raise CfgError("; ".join(problems))
    return g


def serialize_cfg(g: Cfg) -> str:
    """Render ``g`` in the text format with lexicographically sorted nodes and edges."""
    label = "unlabeled" if g.label is None else g.label.text
    lines = [f"cfg {g.name}", f"entry {g.entry}", f"label {label}"]
    lines.extend(f"node {v}" for v in sorted(g.nodes))
    lines.extend(f"edge {u} {v}" for u, v in sorted(g.edges))
    return "\n".join(lines) + "\n"


def structurally_equal(a: Cfg, b: Cfg) -> bool:
    return (set(a.nodes) == set(b.nodes) and set(a.edges) == set(b.edges)
            and a.entry == b.entry and a.exits == b.exits)


def reachable(g: Cfg, start: str, allowed: Optional[set] = None) -> set[str]:
    """Nodes reachable from ``start`` (inclusive), optionally within ``allowed``."""
    succ = g.successors()
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        for v in succ.get(u, ()):
            if v not in seen and (allowed is None or v in allowed):
                seen.add(v)
                stack.append(v)
    return seen
