import os

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from validity_audit.errors import ParseError, SchemaError, ValidationError
from validity_audit.graph import (DEGREE, LEFT, RIGHT, SampleGraph, group_core_cdf,
                                  ingest_edge_list, ingest_movielens, is_k_connected,
                                  kcore_decompose, project_ternary, write_edge_list)

from conftest import random_bipartite


def peel_core_numbers(adj: dict) -> dict:
    """Core numbers by literal definition: largest k whose k-core keeps the node."""
    core = {v: 0 for v in adj}
    k = 1
    alive = set(adj)
    while alive:
        changed = True
        while changed:
            changed = False
            for v in list(alive):
                if sum(1 for u in adj[v] if u in alive) < k:
                    alive.discard(v)
                    changed = True
        for v in alive:
            core[v] = k
        k += 1
    return core


def adjacency(g):
    adj = {("L", i): set() for i in range(g.n_left)}
    adj.update({("R", j): set() for j in range(g.n_right)})
    for i, j in zip(g.rows, g.cols):
        adj[("L", int(i))].add(("R", int(j)))
        adj[("R", int(j))].add(("L", int(i)))
    return adj


class TestSampleGraph:
    def test_duplicates_keep_latest(self):
        g = SampleGraph.from_interactions(["u", "u", "v"], ["a", "a", "a"], [1, 4, 2],
                                          timestamps=[5, 9, 1], label_range=(1, 5))
        assert g.n_edges == 2
        assert g.labels[0] == 4.0
        assert list(g.multiplicity) == [2, 1]
        assert g.degrees(LEFT, multiplicity=True).degrees.tolist() == [2, 1]

    def test_tied_timestamps_take_later_row(self):
        g = SampleGraph.from_interactions([1, 1], [2, 2], [3, 5], timestamps=[7, 7])
        assert g.labels.tolist() == [5.0]

    def test_first_appearance_interning(self):
        g = SampleGraph.from_interactions(["z", "a", "z"], [3, 1, 2])
        assert g.left_ids == ("z", "a")
        assert g.right_ids == (3, 1, 2)

    def test_label_out_of_range(self):
        with pytest.raises(ValidationError):
            SampleGraph.from_interactions([0], [0], [7.0], label_range=(1, 5))

    def test_immutable_arrays(self):
        g = SampleGraph.from_interactions([0, 1], [0, 0])
        with pytest.raises(ValueError):
            g.rows[0] = 3

    def test_meta_only_nodes_are_isolated(self):
        g = SampleGraph.from_interactions([1], [1], left_meta={1: {"a": 1}, 2: {"a": 2}})
        assert g.n_left == 2
        assert g.degrees(LEFT).degrees.tolist() == [1, 0]

    def test_subgraph(self, rng):
        g = random_bipartite(rng, 12, 9, 0.4)
        s = g.subgraph([0, 3, 5], [1, 2, 8])
        dense = g.dense_labels()[np.ix_([0, 3, 5], [1, 2, 8])]
        np.testing.assert_array_equal(s.dense_labels(), dense)

    def test_unknown_attribute(self):
        g = SampleGraph.from_interactions([1], [1], left_meta={1: {"a": 1}})
        with pytest.raises(SchemaError):
            g.attribute_values(LEFT, "b")


class TestKCore:
    def test_matches_brute_force_peeling(self):
        rng = np.random.default_rng(0)
        for trial in range(200):
            nl = int(rng.integers(1, 26))
            nr = int(rng.integers(1, 51 - nl))
            g = random_bipartite(rng, nl, nr, float(rng.uniform(0.05, 0.9)))
            cd = kcore_decompose(g)
            ref = peel_core_numbers(adjacency(g))
            assert cd.left_core.tolist() == [ref[("L", i)] for i in range(nl)], trial
            assert cd.right_core.tolist() == [ref[("R", j)] for j in range(nr)], trial

    def test_matches_networkx(self, rng):
        g = random_bipartite(rng, 60, 80, 0.1)
        G = nx.Graph()
        G.add_nodes_from(range(140))
        G.add_edges_from(zip(g.rows.tolist(), (g.cols + 60).tolist()))
        ref = nx.core_number(G)
        cd = kcore_decompose(g)
        assert np.concatenate([cd.left_core, cd.right_core]).tolist() == [ref[v] for v in range(140)]

    def test_empty_graph(self):
        g = SampleGraph.from_interactions([], [])
        cd = kcore_decompose(g)
        assert cd.max_core == 0
        assert is_k_connected(g, 5)

    def test_complete_bipartite(self):
        r, c = np.meshgrid(range(4), range(7), indexing="ij")
        g = SampleGraph.from_interactions(r.ravel().tolist(), c.ravel().tolist())
        cd = kcore_decompose(g)
        assert set(cd.left_core) == {4} and set(cd.right_core) == {4}
        assert is_k_connected(g, 4) and not is_k_connected(g, 5)
        assert is_k_connected(g, 7, criterion=DEGREE) is False

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_core_bounded_by_degree(self, seed):
        g = random_bipartite(np.random.default_rng(seed), 15, 20, 0.3)
        cd = kcore_decompose(g)
        assert np.all(cd.left_core <= cd.left_degree)
        assert np.all(cd.right_core <= cd.right_degree)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_core_monotone_under_edge_removal(self, seed):
        rng = np.random.default_rng(seed)
        g = random_bipartite(rng, 15, 20, 0.3)
        if g.n_edges == 0:
            return
        keep = np.sort(rng.choice(g.n_edges, size=g.n_edges - 1, replace=False))
        h = SampleGraph(g.left_ids, g.right_ids, g.rows[keep], g.cols[keep], g.labels[keep], g.label_range)
        a, b = kcore_decompose(g), kcore_decompose(h)
        assert np.all(b.left_core <= a.left_core) and np.all(b.right_core <= a.right_core)

    def test_group_core_cdf(self):
        meta = {0: {"job": "x"}, 1: {"job": "x"}, 2: {"job": "y"}}
        g = SampleGraph.from_interactions([0, 0, 1, 1, 2], [0, 1, 0, 1, 0], left_meta=meta)
        curves = group_core_cdf(g, kcore_decompose(g), LEFT, "job")
        assert dict(curves["x"])[2] == 1.0
        assert dict(curves["y"])[2] == 0.0
        assert dict(curves["y"])[1] == 1.0


class TestProjectTernary:
    def test_counts_distinct_third_index(self):
        g = project_ternary([(0, 1, 5), (0, 1, 6), (0, 1, 6), (2, 1, 5)], mode=2)
        assert dict(zip(zip(g.rows.tolist(), g.cols.tolist()), g.labels.tolist())) == {(0, 0): 2.0, (1, 0): 1.0}

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            project_ternary([(0, 1, 2)], mode=3)


class TestIngest:
    def test_movielens_rows(self, tmp_path):
        (tmp_path / "u.data").write_text("1\t10\t5\t100\n2\t10\t3\t50\n1\t11\t4\t7\n")
        (tmp_path / "u.user").write_text("1|24|M|technician|85711\n2|53|F|other|94043\n")
        g = ingest_movielens(tmp_path / "u.data", tmp_path / "u.user")
        assert g.shape == (2, 2) and g.label_range == (1.0, 5.0)
        assert g.attribute_values(LEFT, "occupation").tolist() == ["technician", "other"]

    def test_movielens_bad_row(self, tmp_path):
        (tmp_path / "u.data").write_text("1\t10\t5\t100\n1\t10\n")
        with pytest.raises(ParseError) as exc:
            ingest_movielens(tmp_path / "u.data")
        assert exc.value.line == 2

    def test_movielens_rating_range(self, tmp_path):
        (tmp_path / "u.data").write_text("1\t10\t9\t100\n")
        with pytest.raises(ValidationError):
            ingest_movielens(tmp_path / "u.data")

    def test_edge_list_round_trip(self, tmp_path, rng):
        g = random_bipartite(rng, 30, 40, 0.2)
        path = tmp_path / "g.csv"
        write_edge_list(g, path)
        h = ingest_edge_list(path, label_range=g.label_range)
        assert h.n_edges == g.n_edges
        a = {(g.left_ids[i], g.right_ids[j]): y for i, j, y in zip(g.rows, g.cols, g.labels)}
        b = {(h.left_ids[i], h.right_ids[j]): y for i, j, y in zip(h.rows, h.cols, h.labels)}
        assert a == b

    def test_edge_list_schema(self, tmp_path):
        path = tmp_path / "e.tsv"
        path.write_text("user\titem\tstars\nu1\ti1\t3\nu2\ti1\t4\n")
        g = ingest_edge_list(path, {"left": "user", "right": "item", "label": "stars"})
        assert g.left_ids == ("u1", "u2") and g.labels.tolist() == [3.0, 4.0]
        with pytest.raises(SchemaError):
            ingest_edge_list(path, {"left": "user", "right": "movie"})

    def test_edge_list_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        assert ingest_edge_list(path).n_edges == 0

    def test_edge_list_short_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("left,right,label\na,b,1\na\n")
        with pytest.raises(ParseError):
            ingest_edge_list(path)


class TestMovieLens:
    def test_shape(self, movielens):
        assert movielens.shape == (943, 1682)
        assert movielens.n_edges == 100_000
        assert kcore_decompose(movielens).left_core.min() >= 1
