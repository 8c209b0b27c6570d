"""Node-distance queries over an embedding.

Before touching coordinates, a query checks the adjacency lists: neighbors are
1 hop apart and nodes sharing a neighbor are 2 hops apart.  Everything else is
answered by the coordinate distance.  The hybrid estimator fuses two
embeddings (one tuned for short, one for long distances) by maximum
likelihood over the true distance.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np
from numba import njit, typeof

from .embedder import Embedding
from .geometry import Model, rowwise_distance
from .graph import Graph

log = logging.getLogger(__name__)


class QueryError(KeyError):
    """Query touched a node that has no coordinates."""

    def __str__(self):
        return str(self.args[0])


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class QueryConfig:
    local_optimization: bool = True
    hybrid: "LikelihoodModel | None" = None

    @property
    def mode(self) -> str:
        return "Rigel" if self.local_optimization else "Rigel-S"


@njit(cache=True, nogil=True)
def _pack_adjacency(indptr, indices):
    # offsets rebased to point into the same array as the neighbor ids
    n = indptr.shape[0]
    out = np.empty(n + indices.shape[0], dtype=np.int64)
    for i in range(n):
        out[i] = indptr[i] + n
    for j in range(indices.shape[0]):
        out[n + j] = indices[j]
    return out


@njit(cache=True, nogil=True)
def _hops(u, v, adj):
    if u == v:
        return 0
    a0, a1 = adj[u], adj[u + 1]
    b0, b1 = adj[v], adj[v + 1]
    for a in range(a0, a1):
        if adj[a] == v:
            return 1
    # sorted-merge intersection, O(deg u + deg v)
    a, b = a0, b0
    while a < a1 and b < b1:
        x = adj[a]
        y = adj[b]
        if x == y:
            return 2
        if x < y:
            a += 1
        else:
            b += 1
    return -1


# Point tables carry one trailing parameter row: [scale, local_optimization, ...].
# Keeping every setting inside the two arrays keeps the per-query call down to
# four arguments, which is most of its cost.

@njit(cache=True, nogil=True, inline="always")
def _prelude(u, v, pts, adj):
    # -1 for an id out of range, NaN for an excluded node, hop count if known
    n = pts.shape[0] - 1
    if u < 0 or v < 0 or u >= n or v >= n:
        return -1.0
    if pts[u, 0] != pts[u, 0] or pts[v, 0] != pts[v, 0]:
        return np.nan
    if u == v:
        return 0.0
    if pts[n, 1] != 0.0:
        h = _hops(u, v, adj)
        if h > 0:
            return float(h)
    return -2.0


@njit(cache=True, nogil=True)
def _query_hyp(u, v, pts, adj):
    r = _prelude(u, v, pts, adj)
    if r != -2.0:
        return r
    # column 0 holds the lift; stable form as in the geometry module
    s = 0.0
    for k in range(1, pts.shape[1]):
        t = pts[u, k] - pts[v, k]
        s += t * t
    h = pts[u, 0] - pts[v, 0]
    q = s - h * h
    if q <= 0.0:
        return 0.0
    return 2.0 * np.arcsinh(0.5 * np.sqrt(q)) * pts[pts.shape[0] - 1, 0]


@njit(cache=True, nogil=True)
def _query_euc(u, v, pts, adj):
    r = _prelude(u, v, pts, adj)
    if r != -2.0:
        return r
    s = 0.0
    for k in range(pts.shape[1]):
        t = pts[u, k] - pts[v, k]
        s += t * t
    return np.sqrt(s)


@njit(cache=True, nogil=True)
def _local_hops(adj, us, vs, out):
    for t in range(us.shape[0]):
        out[t] = _hops(us[t], vs[t], adj)
    return out


class QueryEngine:
    """Constant-time distance estimates for one (graph, embedding) pair.

    Adjacency is packed into one array and hyperboloid points carry their
    lift ``sqrt(1 + |x|^2)`` as an extra leading column, so a query touches a
    few cache lines and makes a single compiled call.
    """

    def __init__(self, graph: Graph, embedding: Embedding, config: QueryConfig | None = None):
        if graph.node_count != embedding.node_count:
            raise ValueError(f"graph has {graph.node_count} nodes, embedding {embedding.node_count}")
        self.graph = graph
        self.embedding = embedding
        self.config = config or QueryConfig()
        coords = embedding.coords
        hyp = embedding.space.model is Model.HYPERBOLOID
        if hyp:
            lift = np.sqrt(1.0 + (coords * coords).sum(axis=1))
            pts = np.column_stack([lift, coords])
        else:
            pts = coords.copy()
        pts[embedding.excluded] = np.nan
        params = np.zeros((1, pts.shape[1]))
        params[0, 0] = embedding.space.scale
        self._raw = np.ascontiguousarray(np.vstack([pts, params]))
        self._pts = self._raw.copy()
        self._pts[-1, 1] = 1.0 if self.config.local_optimization else 0.0
        self._raw.flags.writeable = False
        self._pts.flags.writeable = False
        self._adj = _pack_adjacency(graph.indptr, graph.indices)
        self._adj.flags.writeable = False
        self._kernel = _query_hyp if hyp else _query_euc
        self.estimate = self._bind(self._pts)
        self.coordinate_distance = self._bind(self._raw)

    def _bind(self, pts):
        kernel, adj, fail = self._kernel, self._adj, self._fail
        # Argument types never change, so call the compiled specialization
        # directly and skip the dispatcher's per-call type resolution.
        kernel(0, 0, pts, adj)
        sig = tuple(typeof(x) for x in (0, 0, pts, adj))
        cres = kernel.overloads.get(sig)
        if cres is not None:
            kernel = cres.entry_point

        def query(u: int, v: int) -> float:
            r = kernel(u, v, pts, adj)
            if not r >= 0.0:
                fail(u, v)
            return r

        return query

    def _fail(self, u, v):
        n = self.graph.node_count
        for w in (u, v):
            if not 0 <= w < n:
                raise IndexError(f"node id {w} out of range [0, {n})")
        for w in (u, v):
            if self.embedding.excluded[w]:
                raise QueryError(f"node {w} is excluded from the embedding")
        raise AssertionError("unreachable")

    def hops(self, u: int, v: int) -> int | None:
        """Exact distance when it is 0, 1 or 2; ``None`` otherwise."""
        self.graph.check_node(u)
        self.graph.check_node(v)
        h = _hops(u, v, self._adj)
        return None if h < 0 else int(h)

    def __call__(self, u: int, v: int) -> float:
        return self.estimate(u, v)

    def estimate_many(self, us, vs, local_optimization: bool | None = None) -> np.ndarray:
        """Vectorized ``estimate`` over parallel id arrays."""
        us = np.asarray(us, dtype=np.int64)
        vs = np.asarray(vs, dtype=np.int64)
        n = self.graph.node_count
        for w in (us, vs):
            if len(w) and (w.min() < 0 or w.max() >= n):
                raise IndexError("node id out of range")
        ex = self.embedding.excluded
        bad = np.concatenate([us[ex[us]], vs[ex[vs]]])
        if len(bad):
            raise QueryError(f"node {int(bad[0])} is excluded from the embedding")
        coords = self.embedding.coords
        out = rowwise_distance(self.embedding.space, coords[us], coords[vs])
        out[us == vs] = 0.0
        lo = self.config.local_optimization if local_optimization is None else local_optimization
        if lo:
            hops = _local_hops(self._adj, us, vs, np.empty(len(us), dtype=np.int64))
            known = hops >= 0
            out[known] = hops[known]
        return out


def local_hops(graph: Graph, us, vs) -> np.ndarray:
    """0/1/2 where the pair is identical, adjacent or shares a neighbor; -1 otherwise."""
    us = np.asarray(us, dtype=np.int64)
    vs = np.asarray(vs, dtype=np.int64)
    adj = _pack_adjacency(graph.indptr, graph.indices)
    return _local_hops(adj, us, vs, np.empty(len(us), dtype=np.int64))


def _engine(graph: Graph, embedding: Embedding, config: QueryConfig | None) -> QueryEngine:
    cache = embedding.__dict__.setdefault("_engines", {})
    key = (id(graph), config)
    eng = cache.get(key)
    if eng is None or eng.graph is not graph:
        eng = cache[key] = QueryEngine(graph, embedding, config)
    return eng


def estimate_distance(graph: Graph, embedding: Embedding, u: int, v: int,
                      config: QueryConfig | None = None) -> float:
    cfg = config or QueryConfig()
    if cfg.hybrid is not None:
        raise ValueError("hybrid queries need both embeddings; use estimate_distance_hybrid")
    return _engine(graph, embedding, cfg).estimate(u, v)


# -- maximum-likelihood hybrid --------------------------------------------------

@dataclass
class LikelihoodModel:
    """Per-distance histograms ``P(binned estimate | true distance)`` for two estimators.

    Row ``t`` of each table covers true distance ``theta_min + t``; column ``b``
    covers the estimate bin centered at ``(bin_lo + b) * bin_width``.
    """

    theta_min: int
    theta_max: int
    bin_width: float
    alpha: float
    bin_lo: int
    bin_hi: int
    table_L: np.ndarray
    table_S: np.ndarray
    skipped: int = 0
    empty_thetas: list = field(default_factory=list)

    @property
    def thetas(self) -> np.ndarray:
        return np.arange(self.theta_min, self.theta_max + 1)

    @property
    def bins(self) -> int:
        return self.bin_hi - self.bin_lo + 1

    def bin_index(self, x: float) -> tuple[int, bool]:
        """Column for estimate ``x`` and whether it had to be clamped into the support."""
        b = math.floor(x / self.bin_width + 0.5) - self.bin_lo
        if b < 0:
            return 0, True
        if b >= self.bins:
            return self.bins - 1, True
        return b, False

    def likelihood(self, theta: int, x_L: float, x_S: float) -> float:
        t = theta - self.theta_min
        return float(self.table_L[t, self.bin_index(x_L)[0]] * self.table_S[t, self.bin_index(x_S)[0]])


def _bins(x, width):
    return np.floor(np.asarray(x, dtype=np.float64) / width + 0.5).astype(np.int64)


def fit_likelihood_model(graph: Graph, emb_L: Embedding, emb_S: Embedding, holdout_pairs,
                         theta_range=(1, 18), bin_width: float = 1.0,
                         alpha: float = 1.0) -> LikelihoodModel:
    """Fit both conditional histograms from ``(u, v, true_distance)`` holdout triples.

    Estimates are raw coordinate distances (no adjacency shortcut).  Pairs whose
    true distance falls outside ``theta_range`` are skipped and counted; a
    distance with no samples gets the smoothed-uniform row and a warning.
    """
    lo, hi = int(theta_range[0]), int(theta_range[1])
    if lo > hi:
        raise ValueError("empty theta range")
    if not bin_width > 0 or not alpha > 0:
        raise ValueError("bin_width and alpha must be > 0")
    pairs = np.asarray(holdout_pairs, dtype=np.float64).reshape(-1, 3)
    truth = pairs[:, 2].astype(np.int64)
    keep = (truth >= lo) & (truth <= hi)
    skipped = int((~keep).sum())
    us = pairs[keep, 0].astype(np.int64)
    vs = pairs[keep, 1].astype(np.int64)
    truth = truth[keep]
    cfg = QueryConfig(local_optimization=False)
    xL = _bins(QueryEngine(graph, emb_L, cfg).estimate_many(us, vs), bin_width)
    xS = _bins(QueryEngine(graph, emb_S, cfg).estimate_many(us, vs), bin_width)
    bin_lo = int(min(lo, xL.min(initial=lo), xS.min(initial=lo)))
    bin_hi = int(max(hi, xL.max(initial=hi), xS.max(initial=hi)))
    nb = bin_hi - bin_lo + 1
    nt = hi - lo + 1
    tables = []
    for x in (xL, xS):
        counts = np.zeros((nt, nb))
        np.add.at(counts, (truth - lo, x - bin_lo), 1.0)
        counts += alpha
        tables.append(counts / counts.sum(axis=1, keepdims=True))
    present = np.bincount(truth - lo, minlength=nt) if len(truth) else np.zeros(nt, dtype=int)
    empty = [lo + int(t) for t in np.flatnonzero(present == 0)]
    if empty:
        log.warning("no holdout samples for true distance(s) %s; using uniform rows", empty)
    if skipped:
        log.info("skipped %d holdout pair(s) outside theta range [%d, %d]", skipped, lo, hi)
    return LikelihoodModel(lo, hi, float(bin_width), float(alpha), bin_lo, bin_hi,
                           tables[0], tables[1], skipped=skipped, empty_thetas=empty)


def mle_estimate(model: LikelihoodModel, x_L: float, x_S: float, return_flag: bool = False):
    """Distance maximizing ``P_L(bin(x_L) | d) * P_S(bin(x_S) | d)``; ties go to the smaller d.

    With ``return_flag`` also reports whether either estimate fell outside the
    learned bin support and was clamped.
    """
    bL, cL = model.bin_index(x_L)
    bS, cS = model.bin_index(x_S)
    score = model.table_L[:, bL] * model.table_S[:, bS]
    theta = model.theta_min + int(np.argmax(score))
    return (theta, cL or cS) if return_flag else theta


def estimate_distance_hybrid(graph: Graph, emb_L: Embedding, emb_S: Embedding,
                             model: LikelihoodModel, u: int, v: int) -> float:
    raw = QueryConfig(local_optimization=False)
    eng_L = _engine(graph, emb_L, raw)
    eng_S = _engine(graph, emb_S, raw)
    xL = eng_L.coordinate_distance(u, v)
    xS = eng_S.coordinate_distance(u, v)
    h = eng_L.hops(u, v)
    if h is not None:
        return float(h)
    return float(mle_estimate(model, xL, xS))


def hybrid_estimate_many(graph: Graph, emb_L: Embedding, emb_S: Embedding,
                         model: LikelihoodModel, us, vs, local_optimization: bool = True) -> np.ndarray:
    raw = QueryConfig(local_optimization=False)
    xL = QueryEngine(graph, emb_L, raw).estimate_many(us, vs)
    xS = QueryEngine(graph, emb_S, raw).estimate_many(us, vs)
    bL = np.clip(_bins(xL, model.bin_width) - model.bin_lo, 0, model.bins - 1)
    bS = np.clip(_bins(xS, model.bin_width) - model.bin_lo, 0, model.bins - 1)
    score = model.table_L[:, bL] * model.table_S[:, bS]
    out = (model.theta_min + np.argmax(score, axis=0)).astype(np.float64)
    if local_optimization:
        hops = local_hops(graph, us, vs)
        known = hops >= 0
        out[known] = hops[known]
    return out


def save_likelihood_model(model: LikelihoodModel, sink) -> None:
    lines = [
        "# rigel likelihood model",
        f"theta_range {model.theta_min} {model.theta_max} bin_width {model.bin_width!r} "
        f"alpha {model.alpha!r} bins {model.bin_lo} {model.bin_hi}",
    ]
    for tag, table in (("L", model.table_L), ("S", model.table_S)):
        for t, row in enumerate(table):
            lines.append(f"{tag} {model.theta_min + t} " + " ".join(repr(float(p)) for p in row))
    text = "\n".join(lines) + "\n"
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "w") as fh:
            fh.write(text)
    else:
        sink.write(text)


def load_likelihood_model(source) -> LikelihoodModel:
    if isinstance(source, (str, os.PathLike)):
        with open(source) as fh:
            text = fh.read()
    else:
        text = source.read()
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not rows or rows[0][0] != "theta_range" or len(rows[0]) != 10:
        raise ModelFormatError("missing header line")
    h = rows[0]
    try:
        lo, hi = int(h[1]), int(h[2])
        width, alpha = float(h[4]), float(h[6])
        bin_lo, bin_hi = int(h[8]), int(h[9])
    except ValueError as exc:
        raise ModelFormatError(f"bad header: {exc}") from None
    nt, nb = hi - lo + 1, bin_hi - bin_lo + 1
    tables = {"L": np.full((nt, nb), np.nan), "S": np.full((nt, nb), np.nan)}
    for r in rows[1:]:
        if r[0] not in tables or len(r) != nb + 2:
            raise ModelFormatError(f"bad row: {' '.join(r[:3])} ...")
        t = int(r[1]) - lo
        if not 0 <= t < nt:
            raise ModelFormatError(f"theta {r[1]} outside header range")
        tables[r[0]][t] = [float(p) for p in r[2:]]
    if any(np.isnan(tb).any() for tb in tables.values()):
        raise ModelFormatError("missing rows")
    return LikelihoodModel(lo, hi, width, alpha, bin_lo, bin_hi, tables["L"], tables["S"])
