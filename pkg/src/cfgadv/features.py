"""The 23-dimensional CFG feature vector.

Layout (index: feature)::

    0-4    betweenness centrality      min, max, mean, median, std
    5-9    harmonic closeness          min, max, mean, median, std
    10-14  degree centrality           min, max, mean, median, std
    15-19  shortest-path length        min, max, mean, median, std
    20     density
    21     number of edges
    22     number of nodes

Medians of even-length samples average the two central values; standard
deviations are population (``ddof=0``).  Every degenerate case (one node,
no edges, no reachable pairs) yields zeros.  Graphs need not be connected.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .graph import Cfg, Label

N_FEATURES = 23
STATS = ("min", "max", "mean", "median", "std")
GROUPS = ("betweenness", "closeness", "degree", "shortest_path")
FEATURE_NAMES = tuple(f"{g}_{s}" for g in GROUPS for s in STATS) + ("density", "n_edges", "n_nodes")
DENSITY, N_EDGES, N_NODES = 20, 21, 22


def summary_stats(values: Sequence[float]) -> np.ndarray:
    """min, max, mean, median, population std; zeros for an empty sample."""
    a = np.sort(np.asarray(values, dtype=np.float64))
    if a.size == 0:
        return np.zeros(5)
    return np.array([a[0], a[-1], a.mean(), np.median(a), a.std()])


def _node_measures(g: Cfg):
    """Betweenness, harmonic closeness and the finite path-length multiset.

    One BFS per source over integer-indexed adjacency; path counts stay exact
    Python ints and only the dependency ratios are floated.
    """
    index = {v: i for i, v in enumerate(g.nodes)}
    n = len(index)
    succ = [[] for _ in range(n)]
    for u, v in g.edges:
        succ[index[u]].append(index[v])
    between = [0.0] * n
    close = [0.0] * n
    lengths: list[int] = []
    for s in range(n):
        dist = [-1] * n
        sigma = [0] * n
        preds: list[list[int]] = [[] for _ in range(n)]
        dist[s] = 0
        sigma[s] = 1
        order = [s]
        head = 0
        while head < len(order):
            u = order[head]
            head += 1
            du1 = dist[u] + 1
            su = sigma[u]
            for w in succ[u]:
                if dist[w] < 0:
                    dist[w] = du1
                    order.append(w)
                if dist[w] == du1:
                    sigma[w] += su
                    preds[w].append(u)
        delta = [0.0] * n
        for w in reversed(order):
            coeff = (1.0 + delta[w]) / sigma[w]
            for v in preds[w]:
                delta[v] += sigma[v] * coeff
            if w != s:
                between[w] += delta[w]
        h = 0.0
        for w in order[1:]:
            d = dist[w]
            lengths.append(d)
            h += 1.0 / d
        close[s] = h
    nodes = g.nodes
    return dict(zip(nodes, between)), dict(zip(nodes, close)), lengths


def betweenness(g: Cfg) -> dict[str, float]:
    """Unnormalised directed betweenness (Brandes accumulation, unit weights)."""
    return _node_measures(g)[0]


def closeness(g: Cfg) -> dict[str, float]:
    """Harmonic closeness: sum of 1/d(v, u) over nodes u reachable from v."""
    return _node_measures(g)[1]


def degree_centrality(g: Cfg) -> dict[str, float]:
    n = g.n_nodes
    deg = dict.fromkeys(g.nodes, 0)
    for u, v in g.edges:
        deg[u] += 1
        deg[v] += 1
    if n < 2:
        return dict.fromkeys(g.nodes, 0.0)
    return {v: d / (n - 1) for v, d in deg.items()}


def shortest_path_lengths(g: Cfg) -> list[int]:
    return _node_measures(g)[2]


def shortest_path_stats(g: Cfg) -> np.ndarray:
    return summary_stats(shortest_path_lengths(g))


def density(g: Cfg) -> float:
    """Fraction of the n(n-1) possible edges between distinct blocks; self-loops excluded."""
    n = g.n_nodes
    if n < 2:
        return 0.0
    return sum(u != v for u, v in g.edges) / (n * (n - 1))


def extract_features(g: Cfg) -> np.ndarray:
    """Return the 23-feature vector for ``g`` (see module docstring for layout)."""
    between, close, lengths = _node_measures(g)
    deg = degree_centrality(g)
    order = g.nodes
    vec = np.concatenate([
        summary_stats([between[v] for v in order]),
        summary_stats([close[v] for v in order]),
        summary_stats([deg[v] for v in order]),
        summary_stats(lengths),
        [density(g), float(g.n_edges), float(g.n_nodes)],
    ])
    return vec


def extract_many(graphs: Iterable[Cfg]) -> np.ndarray:
    return np.array([extract_features(g) for g in graphs]).reshape(-1, N_FEATURES)


@dataclass(frozen=True)
class Normalizer:
    """Per-feature min-max bounds learned on a training split."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        if self.lo.shape != (N_FEATURES,) or self.hi.shape != (N_FEATURES,):
            raise ValueError("normalizer bounds must have 23 entries")
        if np.any(self.hi < self.lo):
            raise ValueError("normalizer has hi < lo")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return apply_normalizer(self, x)

    def to_json(self) -> str:
        bounds = [[float(a), float(b)] for a, b in zip(self.lo, self.hi)]
        return json.dumps({"features": list(FEATURE_NAMES), "bounds": bounds}, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Normalizer":
        bounds = np.array(json.loads(text)["bounds"], dtype=np.float64)
        return cls(bounds[:, 0].copy(), bounds[:, 1].copy())


def fit_normalizer(vectors) -> Normalizer:
    X = np.asarray(vectors, dtype=np.float64)
    if X.size == 0:
        raise ValueError("cannot fit a normalizer on an empty training set")
    X = X.reshape(-1, N_FEATURES)
    return Normalizer(X.min(axis=0), X.max(axis=0))


def apply_normalizer(spec: Normalizer, x: np.ndarray) -> np.ndarray:
    """Min-max scale into [0, 1]; constant features map to 0, outliers are clipped."""
    x = np.asarray(x, dtype=np.float64)
    span = spec.hi - spec.lo
    safe = np.where(span > 0, span, 1.0)
    z = np.where(span > 0, (x - spec.lo) / safe, 0.0)
    return np.clip(z, 0.0, 1.0)


def write_features_csv(path, ids: Sequence[str], labels: Sequence[Label], X: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "label"] + [f"f{i:02d}" for i in range(N_FEATURES)])
        for sid, lab, row in zip(ids, labels, X):
            w.writerow([sid, lab.text] + [format(float(v), ".17g") for v in row])


def read_features_csv(path) -> tuple[list[str], list[Label], np.ndarray]:
    ids, labels, rows = [], [], []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header is None or header[:2] != ["sample_id", "label"] or len(header) != 2 + N_FEATURES:
            raise ValueError(f"{Path(path)}: not a feature CSV")
        for row in r:
            ids.append(row[0])
            labels.append(Label.parse(row[1]))
            rows.append([float(v) for v in row[2:]])
    return ids, labels, np.array(rows, dtype=np.float64).reshape(-1, N_FEATURES)
