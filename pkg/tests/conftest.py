import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import settings

from cfgadv.classifier import Model
from cfgadv.graph import Cfg, make_cfg

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, text = ACCEPTANCE[k]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {k}: {text}")


@st.composite
def cfgs(draw, min_nodes=1, max_nodes=8, prefix="n", need_exit=False):
    """Random valid Cfg: arbitrary directed edges, no entry self-loop, possibly disconnected."""
    n = draw(st.integers(min_nodes, max_nodes))
    nodes = [f"{prefix}{i}" for i in range(n)]
    entry = nodes[draw(st.integers(0, n - 1))]
    pairs = [(u, v) for u in nodes for v in nodes if not (u == v == entry)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=min(len(pairs), 3 * n))) if pairs else []
    g = make_cfg(nodes, chosen, entry)
    if need_exit:
        # guarantee an exit reachable from the entry: drop out-edges of one reachable node
        from cfgadv.graph import reachable
        if not (reachable(g, entry) & g.exits):
            r = sorted(reachable(g, entry))
            sink = r[draw(st.integers(0, len(r) - 1))]
            g = make_cfg(nodes, [e for e in chosen if e[0] != sink], entry)
    return g


def path_graph(n: int, prefix="v") -> Cfg:
    nodes = [f"{prefix}{i}" for i in range(n)]
    return make_cfg(nodes, list(zip(nodes, nodes[1:])), nodes[0])


def random_model(rng, sizes) -> Model:
    Ws = [rng.normal(0, 1, size=(a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
    bs = [rng.normal(0, 0.5, size=b) for b in sizes[1:]]
    return Model(Ws, bs)


def linear_model(W, b=None) -> Model:
    W = np.asarray(W, dtype=float)
    return Model([W], [np.zeros(2) if b is None else np.asarray(b, dtype=float)])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
