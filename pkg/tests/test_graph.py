"""CSR construction, edge-list IO, binary cache, and splitting."""
from __future__ import annotations

import io

import numpy as np
import pytest

import mlembed as ml
from mlembed.errors import EdgeListParseError, EmptyGraphError, SplitError

import synth


def test_from_edges_builds_sorted_dedup_csr():
    g = ml.from_edges([(0, 1), (1, 2), (0, 1), (2, 2)], num_vertices=3)
    assert g.num_vertices == 3
    assert g.num_edges == 4  # arcs; duplicate and self loop dropped
    assert g.xadj.tolist() == [0, 1, 3, 4]
    assert g.adj.tolist() == [1, 0, 2, 1]
    g.validate()


def test_from_edges_directed_keeps_orientation():
    g = ml.from_edges([(0, 1), (2, 1)], num_vertices=3, directed=True)
    assert g.num_edges == 2
    assert g.has_arc(0, 1) and not g.has_arc(1, 0)
    assert g.has_arc(2, 1) and not g.has_arc(1, 2)


def test_neighbors_and_degree(small_graph):
    assert small_graph.degree(2) == 3
    assert small_graph.neighbors(2).tolist() == [0, 1, 3]
    assert small_graph.degrees().tolist() == [2, 2, 3, 3, 2, 2]
    assert small_graph.has_arc(2, 3)
    assert not small_graph.has_arc(0, 5)


def test_validate_rejects_unsorted_rows(small_graph):
    g = ml.Graph(num_vertices=small_graph.num_vertices,
                 num_edges=small_graph.num_edges,
                 xadj=small_graph.xadj.copy(),
                 adj=small_graph.adj[::-1].copy())
    with pytest.raises(ValueError):
        g.validate()


def test_load_edge_list_skips_comments_and_densifies():
    text = "# a SNAP-style header\n\n5 9\n9 40\n# trailing note\n40 5\n"
    g = ml.load_edge_list(io.StringIO(text))
    assert g.num_vertices == 3
    assert g.orig_ids is not None
    assert g.orig_ids.tolist() == [5, 9, 40]
    assert g.num_edges == 6  # triangle, both arc directions


def test_load_edge_list_reports_line_numbers():
    with pytest.raises(EdgeListParseError) as ei:
        ml.load_edge_list(io.StringIO("0 1\n0 one\n"))
    assert ei.value.line_number == 2
    with pytest.raises(EdgeListParseError) as ei:
        ml.load_edge_list(io.StringIO("0 1\n1 2 3\n"))
    assert ei.value.line_number == 2


def test_load_edge_list_empty_input():
    with pytest.raises(EmptyGraphError):
        ml.load_edge_list(io.StringIO("# only comments\n\n"))


def test_edge_list_round_trip(small_graph):
    buf = io.StringIO()
    ml.write_edge_list(small_graph, buf)
    back = ml.load_edge_list(io.StringIO(buf.getvalue()))
    assert np.array_equal(back.xadj, small_graph.xadj)
    assert np.array_equal(back.adj, small_graph.adj)


def test_edge_list_round_trip_keeps_original_ids():
    g = ml.load_edge_list(io.StringIO("10 30\n30 20\n"))
    buf = io.StringIO()
    ml.write_edge_list(g, buf)
    pairs = sorted(tuple(map(int, ln.split()))
                   for ln in buf.getvalue().splitlines())
    assert pairs == [(10, 30), (20, 30)]


def test_binary_cache_round_trip(tmp_path, small_graph):
    path = str(tmp_path / "g.bin")
    ml.save_graph(small_graph, path)
    back = ml.load_graph(path)
    assert back.num_vertices == small_graph.num_vertices
    assert back.num_edges == small_graph.num_edges
    assert np.array_equal(back.xadj, small_graph.xadj)
    assert np.array_equal(back.adj, small_graph.adj)


def test_binary_cache_rejects_garbage(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"not a graph at all")
    with pytest.raises(ValueError):
        ml.load_graph(str(path))


def test_undirected_pairs(small_graph):
    pairs = small_graph.undirected_pairs()
    assert pairs.shape == (7, 2)
    assert np.all(pairs[:, 0] < pairs[:, 1])
    listed = {tuple(p) for p in pairs.tolist()}
    assert listed == {(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)}


def test_split_withholds_rounded_fraction():
    g = synth.path_graph(11)  # 10 edges
    res = ml.split_train_test(g, 0.3, seed=5)
    # exactly k = round(0.3 * 10) = 3 edges leave the train graph
    assert res.train_graph.num_edges // 2 == 7
    # a withheld edge is only reported when both endpoints survive
    assert 1 <= res.test_edges.shape[0] <= 3


def test_split_edges_are_disjoint_and_valid():
    g = synth.gnp_graph(60, 0.12, seed=9)
    res = ml.split_train_test(g, 0.3, seed=1)
    tg = res.train_graph
    tg.validate()
    # no test edge may appear in the train graph
    for u, v in res.test_edges.tolist():
        assert not tg.has_arc(u, v)
    # kept_vertices maps back into the original id space
    assert res.kept_vertices.shape[0] == tg.num_vertices
    assert res.kept_vertices.max() < g.num_vertices
    # remapped test endpoints are in range
    if res.test_edges.size:
        assert res.test_edges.max() < tg.num_vertices


def test_split_removes_isolated_endpoints():
    g = synth.star_graph(4)
    res = ml.split_train_test(g, 0.5, seed=2)
    tg = res.train_graph
    assert np.all(tg.degrees() > 0)


def test_split_rejects_degenerate_fractions():
    g = synth.path_graph(6)
    with pytest.raises(SplitError):
        ml.split_train_test(g, 0.01, seed=0)  # rounds to zero test edges
    with pytest.raises(SplitError):
        ml.split_train_test(g, 1.0, seed=0)  # would empty the train graph


def test_split_is_deterministic():
    g = synth.gnp_graph(40, 0.2, seed=3)
    a = ml.split_train_test(g, 0.2, seed=7)
    b = ml.split_train_test(g, 0.2, seed=7)
    assert np.array_equal(a.test_edges, b.test_edges)
    assert np.array_equal(a.train_graph.adj, b.train_graph.adj)
    c = ml.split_train_test(g, 0.2, seed=8)
    assert not np.array_equal(a.test_edges, c.test_edges)
