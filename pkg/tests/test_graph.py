import io

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rigel.graph import (UNREACHABLE, EdgeListError, GraphFormatError, PairBFS, bfs_distances,
                         bfs_many, components, from_edges, load_csr, load_edge_list, read_graph,
                         sample_nodes, save_csr, shortest_path, write_edge_list)
from rigel.generators import path_graph, star_graph


def to_nx(g):
    h = nx.Graph()
    h.add_nodes_from(range(g.node_count))
    h.add_edges_from(g.edges())
    return h


def test_minimal_path_edge_list():
    g = load_edge_list("0 1\n1 2")
    assert g.node_count == 3
    assert sorted(g.edges()) == [(0, 1), (1, 2)]


def test_duplicates_and_reversed_edges_collapse():
    g = load_edge_list("a b\nb a\na b")
    assert g.edge_count == 1
    assert g.labels == ("a", "b")


def test_self_loop_dropped_and_counted():
    g = load_edge_list("x x")
    assert g.edge_count == 0
    assert g.self_loops_dropped == 1


def test_comments_blank_lines_and_bytes():
    g = load_edge_list(b"# header\n\n7 9\n9 11\n")
    assert g.labels == ("7", "9", "11")
    assert g.node_id("11") == 2


def test_malformed_line_reports_line_number():
    with pytest.raises(EdgeListError, match="line 2"):
        load_edge_list("0 1\n1 2 3\n")


def test_edge_list_roundtrip(tmp_path):
    g = load_edge_list("u v\nv w\nw u\nw z")
    p = tmp_path / "g.txt"
    write_edge_list(g, p)
    h = load_edge_list(p)
    assert [tuple(g.labels[x] for x in e) for e in g.edges()] == \
        [tuple(h.labels[x] for x in e) for e in h.edges()]


def test_csr_roundtrip_and_sniffing(tmp_path, sw_graph):
    p = tmp_path / "g.rgl"
    save_csr(sw_graph, p)
    h = read_graph(p)
    assert np.array_equal(h.indptr, sw_graph.indptr)
    assert np.array_equal(h.indices, sw_graph.indices)


def test_csr_rejects_truncation():
    buf = io.BytesIO()
    save_csr(path_graph(5), buf)
    with pytest.raises(GraphFormatError):
        load_csr(io.BytesIO(buf.getvalue()[:-3]))
    with pytest.raises(GraphFormatError):
        load_csr(io.BytesIO(b"XXXX" + buf.getvalue()[4:]))


def test_bfs_small_cases():
    assert bfs_distances(path_graph(3), 0).tolist() == [0, 1, 2]
    assert bfs_distances(star_graph(6), 0).tolist() == [0, 1, 1, 1, 1, 1]
    two = from_edges(4, [0, 2], [1, 3])
    assert bfs_distances(two, 0).tolist() == [0, 1, UNREACHABLE, UNREACHABLE]


def test_bfs_matches_networkx(sw_graph):
    h = to_nx(sw_graph)
    for s in (0, 17, 399):
        want = nx.single_source_shortest_path_length(h, s)
        got = bfs_distances(sw_graph, s)
        assert all(got[v] == d for v, d in want.items())


def test_bfs_many_independent_of_workers(sw_graph):
    src = list(range(0, 400, 37))
    assert np.array_equal(bfs_many(sw_graph, src, 1), bfs_many(sw_graph, src, 3))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 30), st.lists(st.tuples(st.integers(0, 29), st.integers(0, 29)), max_size=60),
       st.data())
def test_pair_bfs_and_shortest_path_agree_with_networkx(n, edges, data):
    edges = [(a % n, b % n) for a, b in edges]
    g = from_edges(n, [a for a, _ in edges], [b for _, b in edges])
    h = to_nx(g)
    u = data.draw(st.integers(0, n - 1))
    v = data.draw(st.integers(0, n - 1))
    pb = PairBFS(g)
    if nx.has_path(h, u, v):
        d = nx.shortest_path_length(h, u, v)
        assert pb(u, v) == d
        path = shortest_path(g, u, v)
        assert path[0] == u and path[-1] == v and len(path) == d + 1
        assert all(g.has_edge(a, b) for a, b in zip(path, path[1:]))
    else:
        assert pb(u, v) == UNREACHABLE
        assert shortest_path(g, u, v) is None


def test_shortest_path_examples():
    assert shortest_path(path_graph(3), 0, 2) == [0, 1, 2]
    assert shortest_path(path_graph(3), 1, 1) == [1]
    assert shortest_path(from_edges(4, [0, 2], [1, 3]), 0, 3) is None


def test_sample_nodes():
    g = path_graph(20)
    assert sample_nodes(g, 0, 1) == []
    assert sorted(sample_nodes(g, 20, 1)) == list(range(20))
    assert sample_nodes(g, 7, 3) == sample_nodes(g, 7, 3)
    with pytest.raises(ValueError):
        sample_nodes(g, 21, 0)


def test_components_and_node_checks():
    g = from_edges(5, [0, 3], [1, 4])
    assert components(g).tolist() == [0, 0, 2, 3, 3]
    with pytest.raises(IndexError):
        bfs_distances(g, 5)
