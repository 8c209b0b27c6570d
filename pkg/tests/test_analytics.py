import io
import itertools

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rigel.analytics import (BFSDistance, bucketed_metrics, centrality_scores, centrality_topk,
                             error_metrics, separation_metrics, social_search, topk_overlap,
                             write_csv)
from rigel.generators import path_graph, small_world, star_graph
from rigel.graph import from_edges
from rigel.query import QueryEngine


def test_single_pair_metrics():
    r = error_metrics([(6, 5)])
    assert r.are == pytest.approx(0.2)
    assert r.aae == pytest.approx(1.0)
    assert r.aer == pytest.approx(1.2)
    assert r.acr == 1.0
    assert r.aspd == pytest.approx(1.2)
    assert r.sd == pytest.approx(1.2)


def test_two_pair_metrics():
    r = error_metrics([(4, 5), (6, 5)])
    assert r.aae == pytest.approx(1.0)
    assert r.are == pytest.approx(0.2)
    assert r.aer == pytest.approx(1.2)
    assert r.acr == pytest.approx(1.25)
    assert r.aspd == pytest.approx(1.225)
    assert r.sd == pytest.approx(1.5)
    assert r.pair_count == 2


def test_metric_input_validation():
    with pytest.raises(ValueError):
        error_metrics([])
    with pytest.raises(ValueError):
        error_metrics([(1.0, 0)])
    with pytest.raises(ValueError):
        error_metrics([(0.0, 3)])


@settings(max_examples=100)
@given(st.lists(st.tuples(st.floats(0.01, 50), st.integers(1, 20)), min_size=1, max_size=30))
def test_metric_bounds(pairs):
    r = error_metrics(pairs)
    assert r.aer >= 1 and r.acr >= 1 and r.aspd >= 1 and r.sd >= 1
    assert r.aae >= 0 and r.are >= 0
    exact = error_metrics([(d, d) for _, d in pairs])
    assert exact.aae == 0 and exact.sd == 1


def test_bucketed():
    out = bucketed_metrics([1, 2, 2.5, 4], [1, 2, 2, 3])
    assert sorted(out) == [1, 2, 3]
    assert out[2].aae == pytest.approx(0.25)


def brute_separation(g, nodes):
    h = nx.Graph(list(g.edges()))
    h.add_nodes_from(range(g.node_count))
    d = dict(nx.all_pairs_shortest_path_length(h))
    ecc = [max(d[u][v] for v in nodes if v != u) for u in nodes]
    pairs = [d[u][v] for u, v in itertools.combinations(nodes, 2)]
    return min(ecc), max(ecc), sum(pairs) / len(pairs)


def test_separation_examples():
    r = separation_metrics(BFSDistance(path_graph(3)), [0, 1, 2])
    assert (r.radius, r.diameter) == (1, 2)
    assert r.avg_path_length == pytest.approx(4 / 3)
    clique = from_edges(4, [0, 0, 0, 1, 1, 2], [1, 2, 3, 2, 3, 3])
    r = separation_metrics(BFSDistance(clique), range(4))
    assert (r.radius, r.diameter, r.avg_path_length) == (1, 1, 1)


def test_separation_matches_brute_force():
    g = small_world(200, 6, 0.1, seed=4)
    nodes = list(range(200))
    r = separation_metrics(BFSDistance(g), nodes)
    rad, diam, avg = brute_separation(g, nodes)
    assert (r.radius, r.diameter) == (rad, diam)
    assert r.avg_path_length == pytest.approx(avg, rel=1e-12)


def test_separation_skips_unreachable_and_rejected_nodes():
    g = from_edges(5, [0, 1, 3], [1, 2, 4])
    bfs = BFSDistance(g)

    def fn(u, v):
        if 4 in (u, v):
            raise KeyError(4)
        return bfs(u, v)

    r = separation_metrics(fn, range(5))
    assert r.skipped_nodes == 1
    assert r.skipped_pairs == 3
    assert r.sample_size == 4


def test_centrality_examples():
    s = star_graph(7)
    assert centrality_topk(BFSDistance(s), range(7), range(7), 1) == [0]
    p = path_graph(5)
    assert centrality_topk(BFSDistance(p), range(5), range(5), 1) == [2]
    scores = centrality_scores(BFSDistance(p), [0], range(5))
    assert scores[0] == pytest.approx(10 / 4)
    with pytest.raises(ValueError):
        centrality_topk(BFSDistance(p), range(5), range(5), 6)


def test_social_search(sw_graph, sw_embedding):
    eng = QueryEngine(sw_graph, sw_embedding)
    q = 10
    nb = int(sw_graph.neighbors(q)[0])
    rng = np.random.default_rng(0)
    responders = [int(r) for r in rng.choice([x for x in range(400) if x != q], 40, replace=False)]
    if nb not in responders:
        responders[0] = nb
    for k in (1, 3, 10):
        assert nb in social_search(eng.estimate, q, responders, k)
    bfs = BFSDistance(sw_graph)
    truth = sorted(responders, key=lambda r: (bfs(q, r), r))[:5]
    got = social_search(bfs, q, responders, 5)
    assert got == truth
    assert topk_overlap(got, truth, 5) == 1.0


@settings(max_examples=50)
@given(st.lists(st.integers(0, 30), min_size=1, max_size=15, unique=True), st.data())
def test_rank_invariance_under_monotone_map(nodes, data):
    dist = {}

    def fn(u, v):
        key = (min(u, v), max(u, v))
        if key not in dist:
            dist[key] = data.draw(st.integers(1, 6)) if u != v else 0
        return dist[key]

    k = data.draw(st.integers(1, len(nodes)))
    base = centrality_topk(fn, nodes, nodes, k)
    mapped = centrality_topk(lambda u, v: 2 * fn(u, v) + 1, nodes, nodes, k)
    assert base == mapped


def test_topk_overlap():
    assert topk_overlap([1, 2, 3], [1, 2, 3], 3) == 1.0
    assert topk_overlap([1, 2], [3, 4], 2) == 0.0
    assert topk_overlap([1, 2, 3, 4], [3, 4, 5, 6], 4) == 0.5
    with pytest.raises(ValueError):
        topk_overlap([1], [1], 2)


def test_bfs_distance_cache_bounds():
    bfs = BFSDistance(path_graph(10), cache_rows=2)
    for u in range(5):
        bfs(u, 9)
    assert len(bfs._rows) == 2
    assert bfs(0, 9) == 9


def test_write_csv():
    buf = io.StringIO()
    text = write_csv([{"a": 1, "b": 0.5}, {"a": 2, "b": 1 / 3}], buf)
    assert text == buf.getvalue() == "a,b\n1,0.5\n2,0.333333\n"
