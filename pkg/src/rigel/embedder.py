"""Landmark-based embedding of a graph into a coordinate space.

Pipeline (``embed_graph``):

1. one BFS per landmark, spread over the worker pool;
2. landmark bootstrap: a seeded subset of *primary* landmarks is placed by
   jointly minimizing their pairwise error, then each remaining *expander* is
   placed alone against every landmark placed before it;
3. all other nodes, level by level (level = hop distance to the nearest
   landmark).  A node calibrates against ``refs_per_node`` references: up to
   ``n_local`` already-embedded neighbors from a strictly lower level, topped up
   with randomly drawn landmarks.  Nodes of one level only read coordinates of
   lower levels, so they are embedded in parallel and the result does not
   depend on the worker count.
"""

from __future__ import annotations

import enum
import logging
import math
import os
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .geometry import Model, Space, point_dist
from .graph import Graph, bfs_many
from .simplex import NONFINITE, OK, OptimizerConfig, nm_best, nm_start, nm_tell

log = logging.getLogger(__name__)

EMBED_MAGIC = b"RGE1"
FORMAT_VERSION = 1


class ObjectiveKind(enum.IntEnum):
    SQUARED_ABS = 0
    ABS = 1
    SQUARED_REL = 2


class BootstrapError(RuntimeError):
    pass


class EmbeddingFormatError(ValueError):
    pass


# Coordinate-space stop at 1e-2: hop distances are integers, and tightening to
# 1e-3 triples the iteration count without moving the error metrics.
EMBED_OPTIMIZER = OptimizerConfig(tolerance=1e-2, initial_step=1.0)


@dataclass(frozen=True)
class EmbedConfig:
    space: Space = field(default_factory=Space)
    landmark_count: int = 100
    primary_count: int = 16
    refs_per_node: int = 16
    n_local: int = 1
    seed: int = 0
    workers: int = 1
    objective_kind: ObjectiveKind = ObjectiveKind.SQUARED_ABS
    optimizer: OptimizerConfig = EMBED_OPTIMIZER
    bootstrap_sweeps: int = 30

    def __post_init__(self):
        object.__setattr__(self, "objective_kind", ObjectiveKind(self.objective_kind))
        if self.landmark_count < 1:
            raise ValueError("landmark_count must be >= 1")
        if not 1 <= self.primary_count <= self.landmark_count:
            raise ValueError("primary_count must be in [1, landmark_count]")
        if not 1 <= self.refs_per_node <= self.landmark_count:
            raise ValueError("refs_per_node must be in [1, landmark_count]")
        if not 0 <= self.n_local < self.refs_per_node:
            raise ValueError("n_local must be in [0, refs_per_node)")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")

    @property
    def variant(self) -> str:
        return "Raw Rigel" if self.n_local == 0 else f"Rigel (local landmarks={self.n_local})"


@dataclass
class Embedding:
    space: Space
    coords: np.ndarray            # (N, dim); NaN rows for excluded nodes
    landmark_ids: np.ndarray      # (l,) in degree order
    config: EmbedConfig
    excluded: np.ndarray          # (N,) bool
    landmark_bfs: np.ndarray | None = None   # (l, N) int32
    levels: np.ndarray | None = None
    residual_init: np.ndarray | None = None
    residual: np.ndarray | None = None
    bootstrap_objective: float = float("nan")
    timings: dict = field(default_factory=dict)

    @property
    def node_count(self) -> int:
        return self.coords.shape[0]

    @property
    def excluded_count(self) -> int:
        return int(self.excluded.sum())

    def point(self, u: int) -> np.ndarray:
        if self.excluded[u]:
            raise KeyError(f"node {u} is excluded from the embedding")
        return self.coords[u]


# -- objective ------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _residual(p, args):
    # args: refs (k, n), |ref|^2 (k,), sqrt(1 + |ref|^2) (k,), graph distances (k,), model, scale, kind
    refs, rsq, rlift, dists, model, scale, kind = args
    n = p.shape[0]
    sp = 0.0
    for k in range(n):
        sp += p[k] * p[k]
    plift = math.sqrt(1.0 + sp)
    s = 0.0
    for i in range(refs.shape[0]):
        d2 = 0.0
        for k in range(n):
            t = p[k] - refs[i, k]
            d2 += t * t
        if model == 0:
            # same stable form as geometry.hyp_dist, with the lifts precomputed
            h = (sp - rsq[i]) / (plift + rlift[i])
            q = d2 - h * h
            dist = 2.0 * math.asinh(0.5 * math.sqrt(q)) * scale if q > 0.0 else 0.0
        else:
            dist = math.sqrt(d2)
        e = dist - dists[i]
        if kind == 0:
            s += e * e
        elif kind == 1:
            s += abs(e)
        else:
            d = dists[i] if dists[i] > 0.0 else 1.0
            s += (e / d) * (e / d)
    return s


@njit(cache=True, nogil=True)
def _pack(refs, dists, model, scale, kind):
    k = refs.shape[0]
    rsq = np.empty(k)
    rlift = np.empty(k)
    for i in range(k):
        s = 0.0
        for j in range(refs.shape[1]):
            s += refs[i, j] * refs[i, j]
        rsq[i] = s
        rlift[i] = math.sqrt(1.0 + s)
    return (refs, rsq, rlift, dists, model, scale, kind)


@njit(cache=True, nogil=True)
def _simplex_run(args, x0, step, params):
    st = nm_start(x0, step, params)
    while True:
        f = _residual(st.work[2], args)
        if not math.isfinite(f):
            return st.work[2].copy(), f, 0, False, NONFINITE
        if nm_tell(st, f):
            break
    x, f, it, conv = nm_best(st)
    return x, f, it, conv, OK


@njit(cache=True, nogil=True)
def _calibrate(args, x0, step, params, restart):
    # simplex fit with one halved-step restart when the budget runs out
    x, f, it, conv, status = _simplex_run(args, x0, step, params)
    if status == OK and restart and not conv:
        x2, f2, it2, conv, status = _simplex_run(args, x, 0.5 * step, params)
        it += it2
        if status != OK:
            return x2, f2, it, False, status
        if f2 <= f:
            x, f = x2, f2
    return x, f, it, conv, status


def residual(point, refs, dists, space: Space, kind=ObjectiveKind.SQUARED_ABS) -> float:
    """Calibration error of ``point`` against reference points at known graph distances."""
    args = _pack(np.ascontiguousarray(refs, dtype=np.float64),
                 np.ascontiguousarray(dists, dtype=np.float64),
                 int(space.model), space.scale, int(kind))
    return float(_residual(np.asarray(point, dtype=np.float64), args))


def _fit(refs, dists, x0, space: Space, kind, opt: OptimizerConfig):
    args = _pack(np.ascontiguousarray(refs, dtype=np.float64),
                 np.ascontiguousarray(dists, dtype=np.float64),
                 int(space.model), space.scale, int(kind))
    x, f, _, _, status = _calibrate(args, np.array(x0, dtype=np.float64), opt.initial_step,
                                    opt.params(space.dim), opt.restart)
    if status != OK:
        raise FloatingPointError(f"non-finite calibration objective at {x}")
    return x, float(f)


def embed_node(node, refs, space: Space, optimizer_config: OptimizerConfig | None = None,
               objective_kind=ObjectiveKind.SQUARED_ABS) -> np.ndarray:
    """Coordinates for ``node`` fitted to ``refs``: a list of ``(point, graph_distance)``.

    The search starts at the reference point with the smallest graph distance.
    """
    if not refs:
        raise ValueError(f"node {node}: no references to calibrate against")
    pts = np.array([np.asarray(p, dtype=np.float64) for p, _ in refs])
    dists = np.array([float(d) for _, d in refs])
    if pts.shape[1] != space.dim:
        raise ValueError("reference dimension does not match the space")
    if np.any(dists < 0) or not np.all(np.isfinite(dists)):
        raise ValueError("reference distances must be finite and non-negative")
    start = pts[int(np.argmin(dists))]
    x, _ = _fit(pts, dists, start, space, objective_kind, optimizer_config or EMBED_OPTIMIZER)
    return x


# -- landmarks ------------------------------------------------------------------

def select_landmarks(graph: Graph, l: int) -> list[int]:
    """The ``l`` highest-degree nodes, ties broken by ascending id."""
    n = graph.node_count
    if not 0 <= l <= n:
        raise ValueError(f"cannot select {l} landmarks from {n} nodes")
    deg = graph.degree()
    order = np.lexsort((np.arange(n), -deg))
    return order[:l].tolist()


def _check_connected(landmark_ids, lm_bfs):
    for i, li in enumerate(landmark_ids):
        row = lm_bfs[i, landmark_ids]
        bad = np.flatnonzero(row < 0)
        if len(bad):
            raise BootstrapError(
                f"landmarks {li} and {landmark_ids[bad[0]]} lie in different components")


def _joint_objective(coords, dist, space, kind):
    total = 0.0
    k = len(coords)
    args_kind = int(kind)
    for i in range(k):
        for j in range(i + 1, k):
            e = point_dist(coords[i], coords[j], int(space.model), space.scale) - dist[i, j]
            if args_kind == 0:
                total += e * e
            elif args_kind == 1:
                total += abs(e)
            else:
                d = dist[i, j] if dist[i, j] > 0 else 1.0
                total += (e / d) ** 2
    return total


def bootstrap_landmarks(graph: Graph, landmark_ids, config: EmbedConfig,
                        landmark_bfs: np.ndarray | None = None) -> Embedding:
    """Place the landmarks: primaries jointly, then expanders one at a time.

    The joint fit is block-coordinate descent on the summed pairwise error: each
    sweep re-fits every primary against all the others with the simplex method,
    which can only lower the total. Returns a partial embedding holding
    landmark coordinates only.
    """
    landmark_ids = np.asarray(landmark_ids, dtype=np.int64)
    l = len(landmark_ids)
    if len(set(landmark_ids.tolist())) != l:
        raise ValueError("landmark ids must be distinct")
    space, kind, opt = config.space, config.objective_kind, config.optimizer
    if landmark_bfs is None:
        landmark_bfs = bfs_many(graph, landmark_ids.tolist(), config.workers)
    _check_connected(landmark_ids, landmark_bfs)
    dist = landmark_bfs[:, landmark_ids].astype(np.float64)

    n_primary = min(config.primary_count, l)
    rng = np.random.default_rng(config.seed)
    primary = np.sort(rng.choice(l, size=n_primary, replace=False))
    is_primary = np.zeros(l, dtype=bool)
    is_primary[primary] = True
    expanders = np.flatnonzero(~is_primary)

    lm_coords = np.zeros((l, space.dim))
    placed: list[int] = [int(primary[0])]
    for i in primary[1:]:
        refs = lm_coords[placed]
        d = dist[i, placed]
        lm_coords[i], _ = _fit(refs, d, refs[int(np.argmin(d))], space, kind, opt)
        placed.append(int(i))

    prim_dist = dist[np.ix_(primary, primary)]
    total = _joint_objective(lm_coords[primary], prim_dist, space, kind)
    for _ in range(config.bootstrap_sweeps if n_primary > 1 else 0):
        for a, i in enumerate(primary):
            others = np.delete(primary, a)
            lm_coords[i], _ = _fit(lm_coords[others], dist[i, others], lm_coords[i], space, kind, opt)
        new_total = _joint_objective(lm_coords[primary], prim_dist, space, kind)
        improved = total - new_total
        total = new_total
        if improved <= 1e-4 * max(total, 1e-12):
            break

    for i in expanders:
        refs = lm_coords[placed]
        d = dist[i, placed]
        lm_coords[i], _ = _fit(refs, d, refs[int(np.argmin(d))], space, kind, opt)
        placed.append(int(i))

    n = graph.node_count
    coords = np.full((n, space.dim), np.nan)
    coords[landmark_ids] = lm_coords
    excluded = np.ones(n, dtype=bool)
    excluded[landmark_ids] = False
    return Embedding(space=space, coords=coords, landmark_ids=landmark_ids, config=config,
                     excluded=excluded, landmark_bfs=landmark_bfs,
                     bootstrap_objective=_joint_objective(lm_coords, dist, space, kind))


def cascade_levels(graph: Graph, embedding: Embedding) -> np.ndarray:
    """Per-node hop distance to the nearest landmark; -1 marks nodes no landmark reaches.

    Reuses the landmark BFS rows already held by the embedding.
    """
    if embedding.landmark_bfs is None:
        raise ValueError("embedding carries no landmark BFS vectors")
    bfs = embedding.landmark_bfs
    reach = bfs >= 0
    big = np.where(reach, bfs, np.iinfo(np.int32).max)
    level = big.min(axis=0).astype(np.int64)
    level[~reach.any(axis=0)] = -1
    return level


# -- phase 3 kernel -------------------------------------------------------------

@njit(cache=True, nogil=True)
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def _below(state, m):
    # (new_state, uniform integer in [0, m))
    state = state + np.uint64(0x9E3779B97F4A7C15)
    r = _mix64(state)
    u = (r >> np.uint64(11)) * (1.0 / 9007199254740992.0)
    k = int(u * m)
    if k >= m:
        k = m - 1
    return state, k


@njit(cache=True, nogil=True)
def _embed_nodes(nodes, indptr, indices, level, lm_ids, lm_bfs, lm_index, coords,
                 seed, n_local, k_refs, model, scale, kind,
                 step, params, restart, res_init, res_final, status_out):
    n_lm = lm_ids.shape[0]
    dim = coords.shape[1]
    refs = np.empty((k_refs, dim))
    dists = np.empty(k_refs)
    cand = np.empty(indptr.shape[0], dtype=np.int64)  # scratch, sized generously
    lm_pool = np.empty(n_lm, dtype=np.int64)
    lm_taken = np.zeros(n_lm, dtype=np.bool_)
    for t in range(nodes.shape[0]):
        u = nodes[t]
        state = _mix64(seed ^ (np.uint64(u) * np.uint64(0x9E3779B97F4A7C15)))
        lu = level[u]
        # 1-hop neighbors already embedded on a lower level
        nc = 0
        if n_local > 0:
            for j in range(indptr[u], indptr[u + 1]):
                v = indices[j]
                if level[v] >= 0 and level[v] < lu:
                    cand[nc] = v
                    nc += 1
        n_loc = n_local if n_local < nc else nc
        for i in range(n_lm):
            lm_taken[i] = False
        r = 0
        for i in range(n_loc):
            state, pick = _below(state, nc - i)
            v = cand[i + pick]
            cand[i + pick] = cand[i]
            cand[i] = v
            for k in range(dim):
                refs[r, k] = coords[v, k]
            dists[r] = 1.0
            if lm_index[v] >= 0:
                lm_taken[lm_index[v]] = True
            r += 1
        npool = 0
        for i in range(n_lm):
            if not lm_taken[i]:
                lm_pool[npool] = i
                npool += 1
        fill = k_refs - r
        for i in range(fill):
            state, pick = _below(state, npool - i)
            li = lm_pool[i + pick]
            lm_pool[i + pick] = lm_pool[i]
            lm_pool[i] = li
            for k in range(dim):
                refs[r, k] = coords[lm_ids[li], k]
            dists[r] = lm_bfs[li, u]
            r += 1
        best = 0
        for i in range(1, r):
            if dists[i] < dists[best]:
                best = i
        x0 = refs[best].copy()
        args = _pack(refs[:r], dists[:r], model, scale, kind)
        res_init[u] = _residual(x0, args)
        x, f, it, conv, status = _calibrate(args, x0, step, params, restart)
        status_out[u] = status
        res_final[u] = f
        for k in range(dim):
            coords[u, k] = x[k]


def embed_graph(graph: Graph, config: EmbedConfig | None = None) -> Embedding:
    """Embed every node reachable from the landmarks; see the module docstring."""
    cfg = config or EmbedConfig()
    n = graph.node_count
    if n == 0:
        raise ValueError("cannot embed an empty graph")
    if cfg.landmark_count > n:
        raise ValueError(f"{cfg.landmark_count} landmarks requested but graph has {n} nodes")
    timings = {}

    t0 = time.perf_counter()
    lm_ids = select_landmarks(graph, cfg.landmark_count)
    lm_bfs = bfs_many(graph, lm_ids, cfg.workers)
    timings["bootstrap_bfs"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    emb = bootstrap_landmarks(graph, lm_ids, cfg, landmark_bfs=lm_bfs)
    timings["bootstrap_landmarks"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    level = cascade_levels(graph, emb)
    excluded = level < 0
    lm_arr = emb.landmark_ids
    todo = np.flatnonzero(level > 0)
    order = np.lexsort((todo, level[todo]))
    todo = todo[order]
    bounds = np.flatnonzero(np.diff(level[todo])) + 1
    batches = np.split(todo, bounds) if len(todo) else []
    W = cfg.workers
    parts = [[b[w::W] for w in range(W)] for b in batches]
    timings["partition"] = time.perf_counter() - t0
    if excluded.any():
        log.warning("%d node(s) unreachable from the landmarks are excluded", int(excluded.sum()))

    t0 = time.perf_counter()
    coords = emb.coords
    lm_index = np.full(n, -1, dtype=np.int64)
    lm_index[lm_arr] = np.arange(len(lm_arr))
    res_init = np.zeros(n)
    res_final = np.zeros(n)
    status = np.zeros(n, dtype=np.int64)
    opt = cfg.optimizer
    shared = (graph.indptr, graph.indices, level, lm_arr, lm_bfs, lm_index, coords,
              np.uint64(_mix64(np.uint64(cfg.seed))), cfg.n_local, cfg.refs_per_node,
              int(cfg.space.model), cfg.space.scale, int(cfg.objective_kind),
              opt.initial_step, opt.params(cfg.space.dim), opt.restart,
              res_init, res_final, status)

    def work(nodes):
        if len(nodes):
            _embed_nodes(nodes.astype(np.int64), *shared)

    if W == 1:
        for level_parts in parts:
            work(level_parts[0])
    else:
        with ThreadPoolExecutor(W) as pool:
            for level_parts in parts:
                list(pool.map(work, level_parts))
    timings["embedding"] = time.perf_counter() - t0
    if np.any(status != OK):
        bad = int(np.flatnonzero(status != OK)[0])
        raise FloatingPointError(f"non-finite calibration objective while embedding node {bad}")

    emb.excluded = excluded
    emb.levels = level
    emb.residual_init = res_init
    emb.residual = res_final
    emb.timings = timings
    return emb


# -- serialization --------------------------------------------------------------

_HEADER = struct.Struct("<4sHBBdIQIQIII" + "Iddddddb")


def save_embedding(embedding: Embedding, sink) -> None:
    """Write the RGE1 binary format (little-endian throughout)."""
    cfg = embedding.config
    sp = embedding.space
    opt = cfg.optimizer
    n, dim = embedding.coords.shape
    header = _HEADER.pack(
        EMBED_MAGIC, FORMAT_VERSION, int(sp.model), int(cfg.objective_kind), float(sp.curvature),
        dim, n, len(embedding.landmark_ids), cfg.seed, cfg.n_local, cfg.primary_count,
        cfg.refs_per_node, opt.max_iterations or 0, opt.tolerance, opt.initial_step,
        opt.reflection, opt.expansion, opt.contraction, opt.shrink, int(opt.restart))
    payload = b"".join([
        header,
        np.asarray(embedding.landmark_ids).astype("<u4").tobytes(),
        np.ascontiguousarray(embedding.coords).astype("<f8").tobytes(),
        np.packbits(embedding.excluded.astype(np.uint8), bitorder="little").tobytes(),
    ])
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "wb") as fh:
            fh.write(payload)
    else:
        sink.write(payload)


def load_embedding(source) -> Embedding:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            data = fh.read()
    else:
        data = source.read()
    if len(data) < 4 or data[:4] != EMBED_MAGIC:
        raise EmbeddingFormatError("bad magic: not an RGE1 embedding file")
    if len(data) < _HEADER.size:
        raise EmbeddingFormatError("truncated header")
    (_, version, model, kind, curv, dim, n, l, seed, n_local, n_primary, refs, max_it, tol, step,
     a, g, r, s, restart) = _HEADER.unpack_from(data)
    if version != FORMAT_VERSION:
        raise EmbeddingFormatError(f"unsupported format version {version}")
    expected = _HEADER.size + 4 * l + 8 * n * dim + (n + 7) // 8
    if len(data) != expected:
        raise EmbeddingFormatError(
            f"size mismatch: header (N={n}, dim={dim}, l={l}) implies {expected} bytes, found {len(data)}")
    try:
        space = Space(Model(model), curv, dim)
        opt = OptimizerConfig(max_iterations=max_it or None, tolerance=tol, initial_step=step,
                              reflection=a, expansion=g, contraction=r, shrink=s,
                              restart=bool(restart))
        cfg = EmbedConfig(space=space, landmark_count=l, primary_count=n_primary,
                          refs_per_node=refs, n_local=n_local, seed=seed,
                          objective_kind=ObjectiveKind(kind), optimizer=opt)
    except ValueError as exc:
        raise EmbeddingFormatError(f"invalid header: {exc}") from exc
    off = _HEADER.size
    lm = np.frombuffer(data, dtype="<u4", count=l, offset=off).astype(np.int64)
    off += 4 * l
    coords = np.frombuffer(data, dtype="<f8", count=n * dim, offset=off).reshape(n, dim).copy()
    off += 8 * n * dim
    bits = np.frombuffer(data, dtype=np.uint8, offset=off)
    excluded = np.unpackbits(bits, count=n, bitorder="little").astype(bool)
    if np.any(lm >= max(n, 1)):
        raise EmbeddingFormatError("landmark id out of range")
    return Embedding(space=space, coords=coords, landmark_ids=lm, config=cfg, excluded=excluded)


def with_space(config: EmbedConfig, space: Space) -> EmbedConfig:
    return replace(config, space=space)
