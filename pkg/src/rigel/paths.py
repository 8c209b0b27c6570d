"""Coordinate-guided greedy path search.

Short pairs are answered from the adjacency lists.  Longer ones grow a
bounded frontier hop by hop from the source, admitting a neighbor only when
its estimated distance to the target is close to what a node on a shortest
path would show, and stop as soon as the frontier touches the target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .embedder import Embedding
from .graph import Graph, PairBFS
from .query import QueryConfig, QueryEngine, _engine


@dataclass(frozen=True)
class PathConfig:
    delta: float = 0.3
    c_max: int = 30
    max_hops: int | None = None   # None -> 2 * ceil(estimate) + 2
    relax_retry: bool = True
    # expected remaining distance at hop h: "parent" uses est(parent, b) - 1,
    # "source" uses est(a, b) - h
    reference: str = "parent"

    def __post_init__(self):
        if self.reference not in ("parent", "source"):
            raise ValueError("reference must be 'parent' or 'source'")
        if not self.delta >= 0:
            raise ValueError("delta must be >= 0")
        if self.c_max < 1:
            raise ValueError("c_max must be >= 1")
        if self.max_hops is not None and self.max_hops < 1:
            raise ValueError("max_hops must be >= 1")

    def relaxed(self) -> "PathConfig":
        return replace(self, delta=2 * self.delta, c_max=2 * self.c_max)


@dataclass
class PathResult:
    path: list[int]
    hops_explored: int = 0
    nodes_explored: int = 0
    peak_candidates: int = 0
    retried: bool = False
    exact: bool | None = None

    @property
    def length(self) -> int:
        return len(self.path) - 1

    def __bool__(self):
        return True


class _NotFound:
    __slots__ = ()

    def __bool__(self):
        return False

    def __repr__(self):
        return "PATH_NOT_FOUND"


PATH_NOT_FOUND = _NotFound()


# Bounds never drop below 2: the adjacency shortcut reports nodes two hops from
# the target exactly, and those are the ones the last hops must admit.
_FLOOR = 2.0


def _search(engine: QueryEngine, adj, a: int, b: int, est_ab: float, cfg: PathConfig):
    estimate = engine.estimate
    max_hops = cfg.max_hops if cfg.max_hops is not None else 2 * math.ceil(est_ab) + 2
    from_parent = cfg.reference == "parent"
    slack = 1.0 + cfg.delta
    target_adj = adj[b]
    parent = {a: -1}
    est = {a: est_ab}
    frontier = [a]
    explored = 0
    peak = 0
    h = 0
    while frontier:
        h += 1
        if h > max_hops:
            break
        admitted = {}
        for c in frontier:
            expected = est[c] - 1.0 if from_parent else est_ab - h
            bound = max(expected, _FLOOR) * slack
            for v in adj[c]:
                if v in parent or v in admitted:
                    continue
                e = estimate(v, b)
                explored += 1
                if e <= bound:
                    admitted[v] = (e, c)
        ranked = sorted(admitted, key=lambda v: (admitted[v][0], v))[:cfg.c_max]
        peak = max(peak, len(ranked))
        for v in ranked:
            est[v], parent[v] = admitted[v]
        for v in ranked:
            if v in target_adj:
                path = [b, v]
                while parent[path[-1]] >= 0:
                    path.append(parent[path[-1]])
                return path[::-1], h, explored, peak
        frontier = ranked
    return None, h, explored, peak


def find_path(graph: Graph, embedding: Embedding, a: int, b: int,
              config: PathConfig | None = None, oracle=None):
    """Path from ``a`` to ``b`` guided by the embedding, or ``PATH_NOT_FOUND``.

    ``oracle`` is an exact distance function ``(u, v) -> int``; when given
    (or ``True`` for a BFS oracle) the result's ``exact`` flag is filled in.
    Raises ``QueryError`` for nodes without coordinates.
    """
    cfg = config or PathConfig()
    engine = _engine(graph, embedding, QueryConfig())
    # validates both ids and raises for excluded nodes
    engine.estimate(a, b)
    if a == b:
        raise ValueError("source and target coincide")
    adj = graph.adjacency_sets()
    if b in adj[a]:
        result = PathResult([a, b])
    else:
        common = adj[a] & adj[b]
        if common:
            result = PathResult([a, min(common), b])
        else:
            est_ab = engine.coordinate_distance(a, b)
            attempts = [cfg, cfg.relaxed()] if cfg.relax_retry else [cfg]
            result = None
            hops = explored = peak = 0
            for i, attempt in enumerate(attempts):
                path, h, e, p = _search(engine, adj, a, b, est_ab, attempt)
                hops += h
                explored += e
                peak = max(peak, p)
                if path is not None:
                    result = PathResult(path, hops, explored, peak, retried=i > 0)
                    break
            if result is None:
                return PATH_NOT_FOUND
    if oracle is not None:
        dist = PairBFS(graph) if oracle is True else oracle
        result.exact = result.length == dist(a, b)
    return result


def is_valid_walk(graph: Graph, path, a: int, b: int) -> bool:
    if not path or path[0] != a or path[-1] != b:
        return False
    return all(graph.has_edge(x, y) for x, y in zip(path, path[1:]))
