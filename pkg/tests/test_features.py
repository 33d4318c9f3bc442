import json

import numpy as np
import pytest
from hypothesis import given
import hypothesis.strategies as st

from cfgadv.features import (DENSITY, FEATURE_NAMES, N_FEATURES, Normalizer, apply_normalizer, betweenness,
                             closeness, degree_centrality, density, extract_features, fit_normalizer,
                             read_features_csv, shortest_path_stats, write_features_csv)
from cfgadv.graph import Label, make_cfg
from conftest import cfgs, path_graph
import oracles


def cycle3():
    return make_cfg("ABC", [("A", "B"), ("B", "C"), ("C", "A")], "A")


def complete(n):
    nodes = [f"k{i}" for i in range(n)]
    return make_cfg(nodes, [(u, v) for u in nodes for v in nodes if u != v], nodes[0])


def test_layout_has_23_named_features():
    assert len(FEATURE_NAMES) == N_FEATURES == 23
    assert FEATURE_NAMES[20:] == ("density", "n_edges", "n_nodes")


def test_single_node_is_all_zero_but_count():
    f = extract_features(make_cfg(["A"], [], "A"))
    expected = np.zeros(23)
    expected[22] = 1
    np.testing.assert_array_equal(f, expected)


def test_three_cycle_symmetry():
    f = extract_features(cycle3())
    assert f[DENSITY] == 0.5
    assert f[21] == 3 and f[22] == 3
    b = f[0:5]
    assert b[0] == b[1] == b[2] == b[3] == 1.0 and b[4] == 0.0
    d = f[10:15]
    assert d[0] == d[1] == 1.0 and d[4] == 0.0


def test_path_five_matches_enumeration_oracle():
    g = path_graph(5)
    f = extract_features(g)
    bc = oracles.betweenness_by_enumeration(g.nodes, g.edges)
    hc = oracles.harmonic_closeness_bfs(g.nodes, g.edges)
    np.testing.assert_allclose(f[0:5], oracles.stats5(list(bc.values())), atol=1e-12)
    np.testing.assert_allclose(f[5:10], oracles.stats5(list(hc.values())), atol=1e-12)
    np.testing.assert_allclose(f[15:20], oracles.shortest_path_stats_fw(g.nodes, g.edges), atol=1e-12)
    # frozen from the oracle: transit counts 0,3,4,3,0 on v0..v4
    np.testing.assert_allclose(f[0:5], [0, 4, 2, 3, np.std([0, 3, 4, 3, 0])], atol=1e-12)


def test_path_abc_hand_values():
    g = make_cfg("ABC", [("A", "B"), ("B", "C")], "A")
    assert betweenness(g) == {"A": 0.0, "B": 1.0, "C": 0.0}
    assert closeness(g) == {"A": 1.5, "B": 1.0, "C": 0.0}
    assert degree_centrality(g) == {"A": 0.5, "B": 1.0, "C": 0.5}
    np.testing.assert_allclose(shortest_path_stats(g), [1, 2, 4 / 3, 1, np.std([1, 1, 2])])


def test_three_cycle_betweenness_is_one_everywhere():
    assert betweenness(cycle3()) == {"A": 1.0, "B": 1.0, "C": 1.0}


@pytest.mark.parametrize("n", [2, 3, 5])
def test_complete_graph_closeness_and_density(n):
    g = complete(n)
    assert all(v == n - 1 for v in closeness(g).values())
    assert density(g) == 1.0


def test_degenerate_rules():
    one = make_cfg(["A"], [], "A")
    assert degree_centrality(one) == {"A": 0.0}
    assert density(one) == 0.0
    no_edges = make_cfg(["A", "B", "C"], [], "A")
    np.testing.assert_array_equal(shortest_path_stats(no_edges), np.zeros(5))


def test_diamond_chain_splits_path_counts():
    # two parallel routes a->{b,c}->d: each middle node carries half of the a->d pair
    g = make_cfg("abcd", [("a", "b"), ("a", "c"), ("b", "d"), ("c", "d")], "a")
    assert betweenness(g) == {"a": 0.0, "b": 0.5, "c": 0.5, "d": 0.0}


def test_oracle_equivalence_on_200_random_graphs():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        n = int(rng.integers(1, 9))
        nodes = [f"x{i}" for i in range(n)]
        p = rng.uniform(0.05, 0.6)
        edges = [(u, v) for u in nodes for v in nodes if rng.random() < p and not (u == v == nodes[0])]
        g = make_cfg(nodes, edges, nodes[0])
        bc = betweenness(g)
        bo = oracles.betweenness_by_enumeration(g.nodes, g.edges)
        hc = closeness(g)
        ho = oracles.harmonic_closeness_bfs(g.nodes, g.edges)
        for v in nodes:
            assert abs(bc[v] - bo[v]) <= 1e-9
            assert abs(hc[v] - ho[v]) <= 1e-9
        np.testing.assert_allclose(shortest_path_stats(g), oracles.shortest_path_stats_fw(g.nodes, g.edges),
                                   rtol=0, atol=1e-9)


@given(cfgs(max_nodes=12))
def test_stat_groups_are_ordered(g):
    f = extract_features(g)
    assert f.shape == (23,) and np.all(np.isfinite(f))
    assert f[22] >= 1 and f[21] >= 0 and 0 <= f[20] <= 1
    for k in range(4):
        mn, mx, mean, med, std = f[5 * k:5 * k + 5]
        assert mn <= med <= mx
        assert mn - 1e-12 <= mean <= mx + 1e-12
        assert std >= 0


@given(cfgs(max_nodes=10), st.randoms(use_true_random=False))
def test_relabeling_leaves_features_unchanged(g, rnd):
    perm = list(g.nodes)
    rnd.shuffle(perm)
    mapping = {v: f"r{perm.index(v)}_{rnd.randint(0, 9)}" for v in g.nodes}
    h = make_cfg([mapping[v] for v in g.nodes], [(mapping[u], mapping[v]) for u, v in g.edges], mapping[g.entry])
    # per-node sums may associate differently after relabeling; allow a few ulps
    np.testing.assert_allclose(extract_features(h), extract_features(g), rtol=1e-12, atol=1e-12)


def test_extraction_is_bitwise_deterministic():
    g = make_cfg([f"n{i}" for i in range(30)], [(f"n{i}", f"n{(i * 7 + 3) % 30}") for i in range(30)
                                              if (i * 7 + 3) % 30 != i], "n1")
    assert extract_features(g).tobytes() == extract_features(g).tobytes()


def test_normalizer_min_max_and_constant_column():
    X = np.zeros((3, 23))
    X[:, 0] = [2, 4, 6]
    X[:, 1] = [5, 5, 5]
    spec = fit_normalizer(X)
    Z = apply_normalizer(spec, X)
    np.testing.assert_allclose(Z[:, 0], [0, 0.5, 1])
    np.testing.assert_array_equal(Z[:, 1], [0, 0, 0])


def test_normalizer_clips_test_time_outliers():
    X = np.zeros((2, 23))
    X[:, 0] = [2, 6]
    spec = fit_normalizer(X)
    probe = np.zeros(23)
    probe[0] = 1.0
    assert apply_normalizer(spec, probe)[0] == 0.0
    probe[0] = 9.0
    assert apply_normalizer(spec, probe)[0] == 1.0


def test_normalizer_rejects_empty_and_round_trips_json():
    with pytest.raises(ValueError):
        fit_normalizer([])
    rng = np.random.default_rng(0)
    spec = fit_normalizer(rng.normal(size=(10, 23)))
    back = Normalizer.from_json(spec.to_json())
    np.testing.assert_array_equal(back.lo, spec.lo)
    np.testing.assert_array_equal(back.hi, spec.hi)
    assert len(json.loads(spec.to_json())["bounds"]) == 23


def test_feature_csv_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    X = rng.normal(size=(4, 23)) * 1e3
    ids = ["a", "b", "c", "d"]
    labels = [Label.BENIGN, Label.MALICIOUS, Label.MALICIOUS, Label.BENIGN]
    path = tmp_path / "f.csv"
    write_features_csv(path, ids, labels, X)
    header = path.read_text().splitlines()[0]
    assert header == "sample_id,label," + ",".join(f"f{i:02d}" for i in range(23))
    ids2, labels2, X2 = read_features_csv(path)
    assert ids2 == ids and labels2 == labels
    np.testing.assert_array_equal(X2, X)  # 17 significant digits round-trip exactly
