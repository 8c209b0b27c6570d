import io
import itertools
import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rigel.embedder import EmbedConfig, Embedding, embed_graph
from rigel.generators import path_graph
from rigel.geometry import Space, distance
from rigel.graph import bfs_distances, from_edges
from rigel.query import (LikelihoodModel, ModelFormatError, QueryConfig, QueryEngine, QueryError,
                         estimate_distance, estimate_distance_hybrid, fit_likelihood_model,
                         hybrid_estimate_many, load_likelihood_model, local_hops, mle_estimate,
                         save_likelihood_model)


def line_embedding(n, excluded=()):
    """Path graph nodes at (i, 0): coordinate distance equals hop distance."""
    coords = np.zeros((n, 2))
    coords[:, 0] = np.arange(n)
    ex = np.zeros(n, dtype=bool)
    ex[list(excluded)] = True
    coords[ex] = np.nan
    return Embedding(space=Space.euclidean(2), coords=coords, landmark_ids=np.array([0]),
                     config=EmbedConfig(space=Space.euclidean(2), landmark_count=1, primary_count=1,
                                        refs_per_node=1, n_local=0),
                     excluded=ex)


def test_identity_and_local_hops(sw_graph, sw_embedding):
    eng = QueryEngine(sw_graph, sw_embedding)
    assert eng.estimate(5, 5) == 0.0
    u = 7
    nb = int(sw_graph.neighbors(u)[0])
    assert eng.estimate(u, nb) == 1.0
    d = bfs_distances(sw_graph, u)
    two = int(np.flatnonzero(d == 2)[0])
    assert eng.estimate(u, two) == 2.0
    far = int(np.flatnonzero(d >= 3)[0])
    assert eng.estimate(u, far) == eng.coordinate_distance(u, far)


def test_local_optimization_off_uses_coordinates(sw_graph, sw_embedding):
    eng = QueryEngine(sw_graph, sw_embedding, QueryConfig(local_optimization=False))
    u, v = 7, int(sw_graph.neighbors(7)[0])
    want = distance(sw_embedding.space, sw_embedding.coords[u], sw_embedding.coords[v])
    assert eng.estimate(u, v) == pytest.approx(want, abs=1e-12)
    assert QueryConfig(local_optimization=False).mode == "Rigel-S"
    assert QueryConfig().mode == "Rigel"


def test_symmetric_and_matches_vectorized(sw_graph, sw_embedding):
    eng = QueryEngine(sw_graph, sw_embedding)
    rng = np.random.default_rng(0)
    us, vs = rng.integers(0, 400, 300), rng.integers(0, 400, 300)
    many = eng.estimate_many(us, vs)
    one = [eng.estimate(int(u), int(v)) for u, v in zip(us, vs)]
    assert np.allclose(many, one, rtol=0, atol=1e-12)
    assert np.allclose(many, eng.estimate_many(vs, us), rtol=0, atol=1e-12)
    assert np.array_equal(local_hops(sw_graph, us, vs) >= 0,
                          [eng.hops(int(u), int(v)) is not None for u, v in zip(us, vs)])


def test_errors():
    g = path_graph(5)
    emb = line_embedding(5, excluded=[4])
    eng = QueryEngine(g, emb)
    with pytest.raises(QueryError, match="excluded"):
        eng.estimate(0, 4)
    with pytest.raises(QueryError):
        eng.estimate_many([0], [4])
    with pytest.raises(IndexError):
        eng.estimate(0, 9)
    with pytest.raises(IndexError):
        eng.estimate(-1, 0)
    with pytest.raises(ValueError):
        QueryEngine(path_graph(6), emb)


def test_estimate_distance_wrapper(sw_graph, sw_embedding):
    assert estimate_distance(sw_graph, sw_embedding, 3, 3) == 0.0
    with pytest.raises(ValueError):
        estimate_distance(sw_graph, sw_embedding, 0, 1, QueryConfig(hybrid=object()))


def test_euclidean_engine_on_line():
    g = path_graph(8)
    eng = QueryEngine(g, line_embedding(8), QueryConfig(local_optimization=False))
    assert eng.estimate(0, 7) == 7.0
    assert eng.estimate(6, 2) == 4.0


# -- likelihood model --------------------------------------------------------

def holdout(g):
    n = g.node_count
    rows = []
    for u, v in itertools.combinations(range(n), 2):
        rows.append((u, v, int(bfs_distances(g, u)[v])))
    return rows


def test_perfect_estimator_peaks_on_diagonal():
    g = path_graph(10)
    emb = line_embedding(10)
    m = fit_likelihood_model(g, emb, emb, holdout(g), theta_range=(1, 9))
    for t, row in zip(m.thetas, m.table_L):
        assert np.argmax(row) == m.bin_index(t)[0]
    assert np.allclose(m.table_L.sum(axis=1), 1.0)
    assert np.allclose(m.table_S.sum(axis=1), 1.0)
    assert (m.table_L > 0).all() and (m.table_S > 0).all()


def test_missing_theta_gets_uniform_row(caplog):
    g = path_graph(10)
    emb = line_embedding(10)
    pairs = [p for p in holdout(g) if p[2] != 7]
    with caplog.at_level(logging.WARNING):
        m = fit_likelihood_model(g, emb, emb, pairs, theta_range=(1, 9))
    row = m.table_L[7 - 1]
    assert np.allclose(row, 1.0 / m.bins)
    assert m.empty_thetas == [7]
    assert "7" in caplog.text


def test_out_of_range_pairs_skipped():
    g = path_graph(10)
    emb = line_embedding(10)
    m = fit_likelihood_model(g, emb, emb, holdout(g), theta_range=(1, 5))
    assert m.skipped == sum(1 for p in holdout(g) if p[2] > 5)


def hand_model(peak_L, peak_S, thetas=(1, 8), bins=(0, 10)):
    nt = thetas[1] - thetas[0] + 1
    nb = bins[1] - bins[0] + 1
    tL = np.full((nt, nb), 1.0)
    tS = np.full((nt, nb), 1.0)
    for t in range(nt):
        tL[t, peak_L(t + thetas[0]) - bins[0]] += 10
        tS[t, peak_S(t + thetas[0]) - bins[0]] += 10
    tL /= tL.sum(axis=1, keepdims=True)
    tS /= tS.sum(axis=1, keepdims=True)
    return LikelihoodModel(thetas[0], thetas[1], 1.0, 1.0, bins[0], bins[1], tL, tS)


def test_mle_examples():
    m = hand_model(lambda t: t, lambda t: t)
    assert mle_estimate(m, 5.2, 4.9) == 5
    assert mle_estimate(m, 6.4, 5.6) == 6
    flat = LikelihoodModel(1, 8, 1.0, 1.0, 0, 10, np.full((8, 11), 1 / 11), np.full((8, 11), 1 / 11))
    assert mle_estimate(flat, 3.0, 7.0) == 1
    theta, clamped = mle_estimate(m, 40.0, 3.0, return_flag=True)
    assert clamped and 1 <= theta <= 8


def brute_argmax(m, xL, xS):
    best, arg = -1.0, None
    for t in m.thetas:
        p = m.likelihood(int(t), xL, xS)
        if p > best:
            best, arg = p, int(t)
    return arg


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-3, 30), st.floats(-3, 30))
def test_mle_matches_exhaustive_scan(seed, xL, xS):
    rng = np.random.default_rng(seed)
    nt, nb = int(rng.integers(1, 12)), int(rng.integers(1, 15))
    # coarse probabilities make exact ties common
    tL = rng.integers(1, 4, size=(nt, nb)).astype(float)
    tS = rng.integers(1, 4, size=(nt, nb)).astype(float)
    m = LikelihoodModel(1, nt, 1.0, 1.0, 0, nb - 1, tL, tS)
    assert mle_estimate(m, xL, xS) == brute_argmax(m, xL, xS)


def test_hybrid_uses_shortcut_then_mle():
    g = path_graph(10)
    emb = line_embedding(10)
    m = hand_model(lambda t: t, lambda t: t, thetas=(1, 9))
    assert estimate_distance_hybrid(g, emb, emb, m, 3, 4) == 1.0
    assert estimate_distance_hybrid(g, emb, emb, m, 0, 6) == 6.0
    us = np.arange(10).repeat(10)
    vs = np.tile(np.arange(10), 10)
    out = hybrid_estimate_many(g, emb, emb, m, us, vs)
    assert out.tolist() == np.abs(us - vs).astype(float).tolist()


def test_hybrid_output_stays_in_range(sw_graph, sw_embedding):
    m = hand_model(lambda t: min(t + 2, 10), lambda t: max(t - 1, 0), thetas=(1, 6))
    rng = np.random.default_rng(1)
    us, vs = rng.integers(0, 400, 500), rng.integers(0, 400, 500)
    keep = us != vs
    out = hybrid_estimate_many(sw_graph, sw_embedding, sw_embedding, m, us[keep], vs[keep],
                               local_optimization=False)
    assert out.min() >= 1 and out.max() <= 6


def test_model_file_roundtrip():
    g = path_graph(10)
    emb = line_embedding(10)
    m = fit_likelihood_model(g, emb, emb, holdout(g), theta_range=(1, 9), bin_width=0.5, alpha=0.3)
    buf = io.StringIO()
    save_likelihood_model(m, buf)
    text = buf.getvalue()
    assert text.splitlines()[2].startswith("L 1 ")
    back = load_likelihood_model(io.StringIO(text))
    assert np.array_equal(back.table_L, m.table_L) and np.array_equal(back.table_S, m.table_S)
    assert (back.bin_width, back.alpha, back.bin_lo, back.bin_hi) == \
        (m.bin_width, m.alpha, m.bin_lo, m.bin_hi)
    with pytest.raises(ModelFormatError):
        load_likelihood_model(io.StringIO("\n".join(text.splitlines()[:-1])))
    with pytest.raises(ModelFormatError):
        load_likelihood_model(io.StringIO("nonsense"))
