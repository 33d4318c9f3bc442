"""Graph embedding and augmentation (GEA).

The original graph and a selected graph of the opposite class are placed
side by side under a shared glue entry and glue exit::

    glue:entry -> org:<entry>   (the branch always taken at run time)
    glue:entry -> sel:<entry>   (never taken)
    org:<exit_i>, sel:<exit_j> -> glue:exit

Because the original subgraph is copied verbatim and the glue entry reaches
it directly, every execution path of the original survives in the combined
program.  This is checked structurally by :func:`check_splice`.
"""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .classifier import Model
from .features import DENSITY, Normalizer, extract_features
from .graph import Cfg, Label, make_cfg, reachable

GLUE_ENTRY = "glue:entry"
GLUE_EXIT = "glue:exit"
ORG, SEL = "org:", "sel:"


class InvariantViolation(AssertionError):
    pass


@dataclass(frozen=True)
class GeaSplice:
    combined: Cfg
    org_nodes: frozenset[str]
    sel_nodes: frozenset[str]
    glue_nodes: frozenset[str]
    source_label: Optional[Label]
    target_id: str


def splice(x_org: Cfg, x_sel: Cfg) -> GeaSplice:
    """Embed ``x_sel`` next to ``x_org`` behind a two-way glue entry and a common glue exit."""
    if not (reachable(x_org, x_org.entry) & x_org.exits):
        raise ValueError(f"{x_org.name}: no exit reachable from entry; nothing to preserve")
    org_nodes = [ORG + v for v in x_org.nodes]
    sel_nodes = [SEL + v for v in x_sel.nodes]
    edges = [(ORG + u, ORG + v) for u, v in x_org.edges]
    edges += [(SEL + u, SEL + v) for u, v in x_sel.edges]
    edges += [(GLUE_ENTRY, ORG + x_org.entry), (GLUE_ENTRY, SEL + x_sel.entry)]
    edges += [(ORG + v, GLUE_EXIT) for v in sorted(x_org.exits)]
    edges += [(SEL + v, GLUE_EXIT) for v in sorted(x_sel.exits)]
    combined = make_cfg(org_nodes + sel_nodes + [GLUE_ENTRY, GLUE_EXIT], edges, GLUE_ENTRY,
                        name=f"gea.{x_org.name}.{x_sel.name}", label=x_org.label)
    return GeaSplice(combined, frozenset(org_nodes), frozenset(sel_nodes),
                     frozenset({GLUE_ENTRY, GLUE_EXIT}), x_org.label, x_sel.name)


def _strip(nodes: Iterable[str], prefix: str) -> set[str]:
    return {v[len(prefix):] for v in nodes}


def check_splice(s: GeaSplice, x_org: Cfg, x_sel: Cfg) -> list[str]:
    """Return every violated splice invariant (empty list when the splice is sound)."""
    g = s.combined
    out = []
    nodes = set(g.nodes)
    parts = [s.org_nodes, s.sel_nodes, s.glue_nodes]
    if sum(map(len, parts)) != len(nodes) or set().union(*parts) != nodes:
        out.append("partition: node sets do not partition the combined graph")
    if s.glue_nodes != {GLUE_ENTRY, GLUE_EXIT}:
        out.append("glue: glue node set is not {glue:entry, glue:exit}")
    if not all(v.startswith(ORG) for v in s.org_nodes) or not all(v.startswith(SEL) for v in s.sel_nodes):
        out.append("prefix: org/sel node ids are not namespaced")

    for prefix, members, orig, tag in ((ORG, s.org_nodes, x_org, "org"), (SEL, s.sel_nodes, x_sel, "sel")):
        induced = {(u, v) for u, v in g.edges if u in members and v in members}
        if _strip(members, prefix) != set(orig.nodes):
            out.append(f"isomorphism: {tag} node set differs from its source graph")
        if {(u[len(prefix):], v[len(prefix):]) for u, v in induced} != set(orig.edges):
            out.append(f"isomorphism: induced {tag} edges differ from its source graph")

    if g.entry != GLUE_ENTRY:
        out.append(f"entry: combined entry is {g.entry}")
    entry_out = {v for u, v in g.edges if u == GLUE_ENTRY}
    if entry_out != {ORG + x_org.entry, SEL + x_sel.entry}:
        out.append(f"entry-branch: glue:entry successors are {sorted(entry_out)}")
    into_exit = {u for u, v in g.edges if v == GLUE_EXIT}
    expected = {ORG + v for v in x_org.exits} | {SEL + v for v in x_sel.exits}
    if not expected <= into_exit:
        out.append(f"exit-routing: missing edges to glue:exit from {sorted(expected - into_exit)}")
    if g.exits != {GLUE_EXIT}:
        out.append(f"unique-exit: combined exits are {sorted(g.exits)}")
    allowed = set(s.org_nodes) | {GLUE_ENTRY, GLUE_EXIT}
    if GLUE_EXIT not in reachable(g, GLUE_ENTRY, allowed):
        out.append("preserved-path: no glue:entry -> glue:exit path through org nodes only")
    return out


def expected_counts(x_org: Cfg, x_sel: Cfg) -> tuple[int, int]:
    """Closed-form (nodes, edges) of ``splice(x_org, x_sel)``."""
    return (x_org.n_nodes + x_sel.n_nodes + 2,
            x_org.n_edges + x_sel.n_edges + 2 + len(x_org.exits) + len(x_sel.exits))


def checked_splice(x_org: Cfg, x_sel: Cfg) -> GeaSplice:
    """:func:`splice` followed by the full invariant and count-law check."""
    s = splice(x_org, x_sel)
    problems = check_splice(s, x_org, x_sel)
    if (s.combined.n_nodes, s.combined.n_edges) != expected_counts(x_org, x_sel):
        problems.append("count-law: node/edge counts differ from the closed form")
    if problems:
        raise InvariantViolation(f"{s.combined.name}: " + "; ".join(problems))
    return s


class Strategy(enum.Enum):
    MIN = "min"
    MEDIAN = "median"
    MAX = "max"


def select_target(pool: Sequence[Cfg], strategy, label: Optional[Label] = None) -> Cfg:
    """Pick a target by size rank; ties go to the lexicographically smaller sample id.

    ``strategy`` is a :class:`Strategy` or an explicit sample id.  The median
    is the lower one: index ``(k - 1) // 2`` of the size-sorted pool.
    """
    if label is not None:
        pool = [g for g in pool if g.label is label]
    if not pool:
        raise ValueError("empty target pool")
    if isinstance(strategy, str) and not isinstance(strategy, Strategy):
        try:
            strategy = Strategy(strategy)
        except ValueError:
            for g in pool:
                if g.name == strategy:
                    return g
            raise ValueError(f"no graph named {strategy!r} in the pool") from None
    if strategy is Strategy.MAX:
        return min(pool, key=lambda g: (-g.n_nodes, g.name))
    ranked = sorted(pool, key=lambda g: (g.n_nodes, g.name))
    return ranked[0] if strategy is Strategy.MIN else ranked[(len(ranked) - 1) // 2]


@dataclass
class GeaOutcome:
    sample_id: str
    target_id: str
    source_label: Label
    predicted_label: Label
    success: bool
    ct_ms: float
    combined_nodes: int
    combined_edges: int
    density: float
    invariants_ok: bool
    functionality_preserving: bool = True

    def to_dict(self) -> dict:
        return {"sample_id": self.sample_id, "target_id": self.target_id,
                "source_label": self.source_label.text, "predicted_label": self.predicted_label.text,
                "success": self.success, "ct_ms": self.ct_ms, "combined_nodes": self.combined_nodes,
                "combined_edges": self.combined_edges, "density": self.density,
                "invariants_ok": self.invariants_ok,
                "functionality_preserving": self.functionality_preserving}


@dataclass
class GeaResult:
    outcomes: list[GeaOutcome] = field(default_factory=list)

    @property
    def mr(self) -> float:
        return sum(o.success for o in self.outcomes) / len(self.outcomes) if self.outcomes else 0.0

    @property
    def mean_ct_ms(self) -> float:
        return float(np.mean([o.ct_ms for o in self.outcomes])) if self.outcomes else 0.0

    @property
    def mean_density(self) -> float:
        return float(np.mean([o.density for o in self.outcomes])) if self.outcomes else 0.0


def _classify(model: Model, normalizer: Normalizer, g: Cfg) -> tuple[int, np.ndarray]:
    f = extract_features(g)
    return int(model.predict(normalizer(f))), f


def gea_attack(model: Model, normalizer: Normalizer, originals: Sequence[Cfg], target: Cfg,
               only_correct: bool = True) -> GeaResult:
    """Splice ``target`` into each original and classify the result.

    Success means the prediction moved off the original's label.  CT covers
    splice, invariant check, feature extraction and inference.  With
    ``only_correct`` originals the model already misclassifies are skipped.
    """
    if not originals:
        raise ValueError("no originals to attack")
    res = GeaResult()
    for g in originals:
        if g.label is None:
            raise ValueError(f"{g.name}: original graph is unlabeled")
        if only_correct and _classify(model, normalizer, g)[0] != int(g.label):
            continue
        t0 = time.perf_counter()
        s = checked_splice(g, target)
        pred, f = _classify(model, normalizer, s.combined)
        ct = (time.perf_counter() - t0) * 1e3
        res.outcomes.append(GeaOutcome(g.name, target.name, g.label, Label(pred), pred != int(g.label),
                                       ct, s.combined.n_nodes, s.combined.n_edges, float(f[DENSITY]),
                                       invariants_ok=True))
    return res


def absent_pairs(g: Cfg) -> list[tuple[str, str]]:
    """Ordered node pairs ``(u, v)``, ``u != v``, where adding ``u -> v`` keeps the exit set.

    Sources are restricted to non-exit blocks so each added edge raises the
    combined edge count by exactly one.
    """
    present = set(g.edges)
    return [(u, v) for u in g.nodes if u not in g.exits
            for v in g.nodes if u != v and (u, v) not in present]


def densify(g: Cfg, n_edges: int, seed: int = 0) -> list[Cfg]:
    """Nested edge augmentations: element ``k`` of the returned list adds the first ``k`` sampled edges."""
    pool = absent_pairs(g)
    if n_edges > len(pool):
        raise ValueError(f"{g.name}: requested {n_edges} extra edges but only {len(pool)} absent pairs")
    rng = np.random.default_rng(seed)
    picks = [pool[i] for i in rng.choice(len(pool), size=n_edges, replace=False)] if n_edges else []
    return [g.add_edges(picks[:k]) for k in range(n_edges + 1)]


@dataclass
class DensityLevel:
    added_edges: int
    result: GeaResult


def density_experiment(model: Model, normalizer: Normalizer, originals: Sequence[Cfg], base_target: Cfg,
                       levels: Sequence[int], seed: int = 0, only_correct: bool = True) -> list[DensityLevel]:
    """GEA with ``base_target`` densified by each level's edge count (node count fixed)."""
    levels = [int(k) for k in levels]
    if any(b <= a for a, b in zip(levels, levels[1:])) or (levels and levels[0] < 0):
        raise ValueError("levels must be strictly increasing non-negative edge counts")
    variants = densify(base_target, levels[-1] if levels else 0, seed)
    return [DensityLevel(k, gea_attack(model, normalizer, originals, variants[k], only_correct))
            for k in levels]
