"""Synthetic labeled CFG corpus, on-disk layout and stratified splitting.

Each graph is a structured skeleton: a sequential chain where each step is
either a plain block or (with probability ``p_branch``) an if/else diamond,
and where blocks may carry a loop back-edge to an earlier block with
probability ``p_back``.  Sizes are log-normal per class.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .graph import Cfg, CfgError, Label, make_cfg, parse_cfg, serialize_cfg, validate


@dataclass(frozen=True)
class ClassProfile:
    count: int
    median_nodes: float
    dispersion: float
    p_branch: float
    p_back: float

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("class count must be >= 1")
        if self.median_nodes <= 0 or self.dispersion <= 0:
            raise ValueError("size distribution parameters must be positive")
        for p in (self.p_branch, self.p_back):
            if not 0.0 <= p <= 1.0:
                raise ValueError("probabilities must lie in [0, 1]")


@dataclass(frozen=True)
class CorpusSpec:
    benign: ClassProfile = field(default_factory=lambda: ClassProfile(276, 20.0, 1.1, 0.3, 0.0))
    malicious: ClassProfile = field(default_factory=lambda: ClassProfile(2281, 60.0, 0.4, 0.5, 0.15))
    seed: int = 42
    max_nodes: int = 1000

    def profile(self, label: Label) -> ClassProfile:
        return self.benign if label is Label.BENIGN else self.malicious

    def to_dict(self) -> dict:
        return asdict(self)


def sample_id(label: Label, index: int) -> str:
    return f"{'ben' if label is Label.BENIGN else 'mal'}{index:05d}"


def generate_skeleton(n_target: int, p_branch: float, p_back: float, rng: np.random.Generator,
                      name: str = "g", label=None) -> Cfg:
    """Chain/diamond/back-edge skeleton with about ``n_target`` blocks; exit is the last block."""
    nodes = ["b0"]
    edges: set[tuple[str, str]] = set()
    cur = "b0"

    def new():
        v = f"b{len(nodes)}"
        nodes.append(v)
        return v

    while len(nodes) < n_target:
        if len(nodes) + 3 <= n_target and rng.random() < p_branch:
            then_, else_, join = new(), new(), new()
            edges.update({(cur, then_), (cur, else_), (then_, join), (else_, join)})
            body = [then_, else_]
            cur = join
        else:
            nxt = new()
            edges.add((cur, nxt))
            body = [cur]
            cur = nxt
        # back-edges only from blocks that already have a successor, so the exit stays unique
        for src in body:
            if rng.random() < p_back:
                idx = int(rng.integers(0, nodes.index(src) + 1))
                dst = nodes[idx]
                if not (src == dst == "b0"):
                    edges.add((src, dst))
    return make_cfg(nodes, edges, "b0", name=name, label=label)


def _size(profile: ClassProfile, rng, max_nodes: int) -> int:
    n = rng.lognormal(math.log(profile.median_nodes), profile.dispersion)
    return int(min(max(1, round(n)), max_nodes))


def generate_corpus(spec: CorpusSpec = CorpusSpec()) -> list[Cfg]:
    """Deterministic corpus; sample 0 of every class is a single-block program."""
    out = []
    for label in (Label.BENIGN, Label.MALICIOUS):
        prof = spec.profile(label)
        for i in range(prof.count):
            # per-sample stream so generation order never changes a graph
            rng = np.random.default_rng([spec.seed, int(label), i])
            n = 1 if i == 0 else _size(prof, rng, spec.max_nodes)
            g = generate_skeleton(n, prof.p_branch, prof.p_back, rng,
                                  name=sample_id(label, i), label=label)
            problems = validate(g)
            if problems:
                raise AssertionError(f"generator produced invalid graph {g.name}: {problems}")
            out.append(g)
    return out


def write_corpus(graphs: Sequence[Cfg], directory, spec: CorpusSpec | None = None) -> Path:
    root = Path(directory)
    for label in Label:
        (root / label.text).mkdir(parents=True, exist_ok=True)
    for g in graphs:
        if g.label is None:
            raise ValueError(f"graph {g.name} has no label")
        (root / g.label.text / f"{g.name}.cfg").write_text(serialize_cfg(g))
    manifest = {"n_graphs": len(graphs),
                "counts": {lab.text: sum(g.label is lab for g in graphs) for lab in Label},
                "spec": spec.to_dict() if spec else None}
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return root


class CorpusError(ValueError):
    pass


def load_corpus(directory) -> list[Cfg]:
    root = Path(directory)
    if not root.is_dir():
        raise CorpusError(f"{root}: no such corpus directory")
    out = []
    for label in Label:
        for path in sorted((root / label.text).glob("*.cfg")):
            try:
                g = parse_cfg(path.read_text(encoding="utf-8"))
            except CfgError as exc:
                raise CorpusError(f"{path}: {exc}") from None
            if g.label is not label:
                raise CorpusError(f"{path}: label header {g.label} disagrees with directory {label.text}")
            out.append(g)
    if not out:
        raise CorpusError(f"{root}: no .cfg files found")
    return out


def split(labels: Sequence, ratio: float = 0.8, seed: int = 42) -> tuple[np.ndarray, np.ndarray]:
    """Stratified train/test index split.

    Each class with ``k`` samples sends ``round(k * (1 - ratio))`` to test,
    clamped to ``[1, k - 1]`` so both splits see every class.
    """
    y = np.array([int(v) for v in labels])
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in (0, 1):
        idx = np.flatnonzero(y == c)
        if len(idx) < 2:
            raise CorpusError(f"class {Label(c).text} has {len(idx)} samples; cannot appear in both splits")
        k = min(max(int(math.floor(len(idx) * (1 - ratio) + 0.5)), 1), len(idx) - 1)
        perm = rng.permutation(idx)
        test.extend(perm[:k])
        train.extend(perm[k:])
    return np.sort(np.array(train)), np.sort(np.array(test))
