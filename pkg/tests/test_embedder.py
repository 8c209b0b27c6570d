import io

import numpy as np
import pytest

from rigel.embedder import (BootstrapError, EmbedConfig, EmbeddingFormatError, ObjectiveKind,
                            bootstrap_landmarks, cascade_levels, embed_graph, embed_node,
                            load_embedding, residual, save_embedding, select_landmarks)
from rigel.generators import path_graph, small_world, star_graph
from rigel.geometry import Space, distance, rowwise_distance
from rigel.graph import from_edges


def test_select_landmarks_by_degree_then_id():
    assert select_landmarks(star_graph(6), 1) == [0]
    cycle = from_edges(4, [0, 1, 2, 3], [1, 2, 3, 0])
    assert select_landmarks(cycle, 2) == [0, 1]
    g = small_world(50, 4, 0.3, seed=1)
    every = select_landmarks(g, 50)
    assert sorted(every) == list(range(50))
    degs = [g.degree(u) for u in every]
    assert degs == sorted(degs, reverse=True)
    with pytest.raises(ValueError):
        select_landmarks(g, 51)


def test_single_landmark_sits_at_origin():
    g = path_graph(5)
    emb = bootstrap_landmarks(g, [2], EmbedConfig(landmark_count=1, primary_count=1, refs_per_node=1,
                                                  n_local=0))
    assert np.array_equal(emb.coords[2], np.zeros(10))
    assert emb.excluded.tolist() == [True, True, False, True, True]


def test_disconnected_landmarks_rejected():
    g = from_edges(4, [0, 2], [1, 3])
    with pytest.raises(BootstrapError):
        bootstrap_landmarks(g, [0, 2], EmbedConfig(landmark_count=2, primary_count=2,
                                                   refs_per_node=2))


def test_embed_node_recovers_a_reference_point():
    space = Space.hyperboloid(-1.0, 3)
    rng = np.random.default_rng(4)
    target = np.array([0.3, -0.2, 0.5])
    pts = [target] + [rng.normal(size=3) for _ in range(6)]
    refs = [(p, distance(space, target, p)) for p in pts]
    got = embed_node(0, refs, space)
    assert distance(space, got, target) < 0.05
    assert residual(got, np.array(pts), [d for _, d in refs], space) < 1e-3


def test_embed_node_rejects_empty_and_bad_refs():
    space = Space.euclidean(2)
    with pytest.raises(ValueError):
        embed_node(0, [], space)
    with pytest.raises(ValueError):
        embed_node(0, [(np.zeros(2), -1.0)], space)


def test_cascade_levels_and_exclusion():
    # 0-1-2 reachable from landmark 0, {3, 4} isolated
    g = from_edges(5, [0, 1, 3], [1, 2, 4])
    cfg = EmbedConfig(landmark_count=1, primary_count=1, refs_per_node=1, n_local=0)
    emb = bootstrap_landmarks(g, [0], cfg)
    assert cascade_levels(g, emb).tolist() == [0, 1, 2, -1, -1]
    full = embed_graph(g, cfg)
    assert full.excluded.tolist() == [False, False, False, True, True]
    assert np.isnan(full.coords[3]).all()
    with pytest.raises(KeyError):
        full.point(4)


def test_config_validation():
    with pytest.raises(ValueError):
        EmbedConfig(n_local=16, refs_per_node=16)
    with pytest.raises(ValueError):
        EmbedConfig(primary_count=200)
    with pytest.raises(ValueError):
        EmbedConfig(workers=0)
    assert EmbedConfig(n_local=0).variant == "Raw Rigel"
    assert EmbedConfig(n_local=4).variant == "Rigel (local landmarks=4)"


def test_deterministic_across_workers(sw_graph):
    cfg = EmbedConfig(landmark_count=30, seed=9)
    base = embed_graph(sw_graph, cfg)
    for w in (2, 8):
        other = embed_graph(sw_graph, EmbedConfig(landmark_count=30, seed=9, workers=w))
        assert np.array_equal(base.coords, other.coords, equal_nan=True)


def test_seed_changes_result(sw_graph):
    a = embed_graph(sw_graph, EmbedConfig(landmark_count=30, seed=1))
    b = embed_graph(sw_graph, EmbedConfig(landmark_count=30, seed=2))
    assert not np.array_equal(a.coords, b.coords)


def test_residual_improves_and_local_landmarks_help_short_pairs(sw_graph, sw_embedding):
    emb = sw_embedding
    live = ~emb.excluded
    assert np.all(emb.residual[live] <= emb.residual_init[live] + 1e-9)
    raw = embed_graph(sw_graph, EmbedConfig(landmark_count=40, seed=1, n_local=0))
    us, vs = np.array([e[0] for e in sw_graph.edges()]), np.array([e[1] for e in sw_graph.edges()])
    err_local = np.abs(rowwise_distance(emb.space, emb.coords[us], emb.coords[vs]) - 1)
    err_raw = np.abs(rowwise_distance(raw.space, raw.coords[us], raw.coords[vs]) - 1)
    # neighbors land closer together when they calibrate against each other
    assert err_local.mean() < err_raw.mean()


@pytest.mark.parametrize("kind", list(ObjectiveKind))
def test_objective_kinds_run(kind):
    g = small_world(120, 6, 0.2, seed=3)
    emb = embed_graph(g, EmbedConfig(landmark_count=20, objective_kind=kind, seed=0))
    assert np.isfinite(emb.coords).all()


def test_save_load_roundtrip(tmp_path, sw_embedding):
    p = tmp_path / "e.rge"
    save_embedding(sw_embedding, p)
    back = load_embedding(p)
    assert np.array_equal(back.coords, sw_embedding.coords, equal_nan=True)
    assert np.array_equal(back.excluded, sw_embedding.excluded)
    assert np.array_equal(back.landmark_ids, sw_embedding.landmark_ids)
    assert back.space == sw_embedding.space
    assert back.config.seed == sw_embedding.config.seed
    buf = io.BytesIO()
    save_embedding(back, buf)
    assert buf.getvalue() == p.read_bytes()


def test_load_rejects_corrupt_files(sw_embedding):
    buf = io.BytesIO()
    save_embedding(sw_embedding, buf)
    data = buf.getvalue()
    with pytest.raises(EmbeddingFormatError):
        load_embedding(io.BytesIO(data[:-5]))
    with pytest.raises(EmbeddingFormatError):
        load_embedding(io.BytesIO(b"NOPE" + data[4:]))
    # bump the dimension field so it disagrees with the vector payload
    bad = bytearray(data)
    bad[16] += 1
    with pytest.raises(EmbeddingFormatError):
        load_embedding(io.BytesIO(bytes(bad)))
