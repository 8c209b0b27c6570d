"""Immutable undirected graphs in CSR form, edge-list I/O and the exact BFS oracle."""

from __future__ import annotations

import io
import logging
import os
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Sequence

import numpy as np
from numba import njit

log = logging.getLogger(__name__)

UNREACHABLE = -1
CSR_MAGIC = b"RGL1"


class EdgeListError(ValueError):
    """Malformed edge-list input."""


class GraphFormatError(ValueError):
    """Corrupt or mismatched binary adjacency cache."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected, unweighted graph over dense ids ``0..N-1``.

    ``indices[indptr[u]:indptr[u+1]]`` is the ascending neighbor list of ``u``.
    ``labels[i]`` is the external label of internal id ``i``.
    """

    indptr: np.ndarray
    indices: np.ndarray
    labels: tuple = ()
    self_loops_dropped: int = 0
    _label_index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.indptr.setflags(write=False)
        self.indices.setflags(write=False)
        if not self.labels:
            object.__setattr__(self, "labels", tuple(str(i) for i in range(self.node_count)))

    @property
    def node_count(self) -> int:
        return len(self.indptr) - 1

    @property
    def edge_count(self) -> int:
        return len(self.indices) // 2

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    def degree(self, u: int | None = None):
        deg = np.diff(self.indptr)
        return deg if u is None else int(deg[u])

    def has_edge(self, u: int, v: int) -> bool:
        nb = self.neighbors(u)
        i = np.searchsorted(nb, v)
        return bool(i < len(nb) and nb[i] == v)

    def edges(self) -> Iterable[tuple[int, int]]:
        """Each undirected edge once, as ``(u, v)`` with ``u < v``."""
        for u in range(self.node_count):
            for v in self.neighbors(u):
                if u < v:
                    yield u, int(v)

    def node_id(self, label: str) -> int:
        if self._label_index is None:
            object.__setattr__(self, "_label_index", {lab: i for i, lab in enumerate(self.labels)})
        return self._label_index[label]

    def check_node(self, u: int) -> int:
        if not 0 <= u < self.node_count:
            raise IndexError(f"node id {u} out of range [0, {self.node_count})")
        return int(u)

    def adjacency_sets(self) -> list[frozenset]:
        """Python-level neighbor sets, built once and cached."""
        cached = self.__dict__.get("_adj_sets")
        if cached is None:
            ptr = self.indptr.tolist()
            idx = self.indices.tolist()
            cached = [frozenset(idx[ptr[u]:ptr[u + 1]]) for u in range(self.node_count)]
            object.__setattr__(self, "_adj_sets", cached)
        return cached


def from_edges(n: int, us: Sequence[int], vs: Sequence[int], labels=None) -> Graph:
    """Build a graph from parallel endpoint arrays; duplicates collapse, self-loops drop."""
    us = np.asarray(us, dtype=np.int64)
    vs = np.asarray(vs, dtype=np.int64)
    if us.shape != vs.shape:
        raise ValueError("endpoint arrays differ in length")
    if len(us) and (min(us.min(), vs.min()) < 0 or max(us.max(), vs.max()) >= n):
        raise ValueError("edge endpoint outside [0, n)")
    loops = us == vs
    n_loops = int(loops.sum())
    us, vs = us[~loops], vs[~loops]
    src = np.concatenate([us, vs])
    dst = np.concatenate([vs, us])
    key = np.unique(src * n + dst) if len(src) else np.empty(0, dtype=np.int64)
    src, dst = key // max(n, 1), key % max(n, 1)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    return Graph(indptr, dst.astype(np.int32), tuple(labels) if labels is not None else (),
                 self_loops_dropped=n_loops)


def load_edge_list(stream) -> Graph:
    """Parse whitespace-separated ``<label> <label>`` lines; ``#`` starts a comment line.

    Accepts a binary or text stream, raw ``bytes``/``str``, or a path.
    Labels map to dense ids in first-appearance order.
    """
    if isinstance(stream, (str, os.PathLike)) and os.path.exists(stream):
        with open(stream, "rb") as fh:
            return load_edge_list(fh)
    if isinstance(stream, bytes):
        stream = io.BytesIO(stream)
    elif isinstance(stream, str):
        stream = io.StringIO(stream)
    ids: dict[str, int] = {}
    us: list[int] = []
    vs: list[int] = []
    for lineno, raw in enumerate(stream, start=1):
        line = raw.decode() if isinstance(raw, bytes) else raw
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise EdgeListError(f"line {lineno}: expected 2 tokens, got {len(parts)}: {line!r}")
        a, b = parts
        ia = ids.setdefault(a, len(ids))
        ib = ids.setdefault(b, len(ids))
        us.append(ia)
        vs.append(ib)
    g = from_edges(len(ids), us, vs, labels=list(ids))
    if g.self_loops_dropped:
        log.warning("dropped %d self-loop(s)", g.self_loops_dropped)
    return g


def write_edge_list(graph: Graph, sink, use_labels: bool = True) -> None:
    lines = []
    for u, v in graph.edges():
        if use_labels:
            lines.append(f"{graph.labels[u]} {graph.labels[v]}")
        else:
            lines.append(f"{u} {v}")
    text = "\n".join(lines)
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "w") as fh:
            fh.write(text)
    else:
        try:
            sink.write(text)
        except TypeError:
            sink.write(text.encode())


def save_csr(graph: Graph, sink: BinaryIO | str | os.PathLike) -> None:
    """Binary adjacency cache: magic, u64 N, u64 E, u64 offsets[N+1], u32 neighbors[2E]."""
    payload = b"".join([
        CSR_MAGIC,
        struct.pack("<QQ", graph.node_count, graph.edge_count),
        graph.indptr.astype("<u8").tobytes(),
        graph.indices.astype("<u4").tobytes(),
    ])
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "wb") as fh:
            fh.write(payload)
    else:
        sink.write(payload)


def load_csr(source: BinaryIO | str | os.PathLike) -> Graph:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            data = fh.read()
    else:
        data = source.read()
    if data[:4] != CSR_MAGIC:
        raise GraphFormatError("bad magic: not an RGL1 adjacency file")
    if len(data) < 20:
        raise GraphFormatError("truncated header")
    n, e = struct.unpack_from("<QQ", data, 4)
    expected = 20 + 8 * (n + 1) + 4 * 2 * e
    if len(data) != expected:
        raise GraphFormatError(f"size mismatch: header implies {expected} bytes, found {len(data)}")
    indptr = np.frombuffer(data, dtype="<u8", count=n + 1, offset=20).astype(np.int64)
    indices = np.frombuffer(data, dtype="<u4", count=2 * e, offset=20 + 8 * (n + 1)).astype(np.int32)
    if indptr[0] != 0 or indptr[-1] != 2 * e or np.any(np.diff(indptr) < 0):
        raise GraphFormatError("inconsistent CSR offsets")
    return Graph(indptr, indices)


def read_graph(path) -> Graph:
    """Load either the binary cache or an edge-list text file, sniffing the magic bytes."""
    with open(path, "rb") as fh:
        head = fh.read(4)
        fh.seek(0)
        if head == CSR_MAGIC:
            return load_csr(fh)
        return load_edge_list(fh)


# -- BFS kernels -------------------------------------------------------------

@njit(cache=True, nogil=True)
def _bfs(indptr, indices, source, dist):
    n = len(indptr) - 1
    for i in range(n):
        dist[i] = -1
    queue = np.empty(n, dtype=np.int32)
    dist[source] = 0
    queue[0] = source
    head, tail = 0, 1
    while head < tail:
        u = queue[head]
        head += 1
        du = dist[u] + 1
        for j in range(indptr[u], indptr[u + 1]):
            v = indices[j]
            if dist[v] < 0:
                dist[v] = du
                queue[tail] = v
                tail += 1
    return dist


@njit(cache=True, nogil=True)
def _bfs_pair(indptr, indices, source, target, dist):
    # Early-exit single-pair BFS; ``dist`` must arrive filled with -1 and is restored on exit.
    if source == target:
        return 0
    queue = np.empty(len(indptr) - 1, dtype=np.int32)
    dist[source] = 0
    queue[0] = source
    head, tail = 0, 1
    found = -1
    while head < tail and found < 0:
        u = queue[head]
        head += 1
        du = dist[u] + 1
        for j in range(indptr[u], indptr[u + 1]):
            v = indices[j]
            if dist[v] < 0:
                dist[v] = du
                queue[tail] = v
                tail += 1
                if v == target:
                    found = du
                    break
    for i in range(tail):
        dist[queue[i]] = -1
    return found


@njit(cache=True, nogil=True)
def _bfs_parents(indptr, indices, source, target, parent):
    n = len(indptr) - 1
    for i in range(n):
        parent[i] = -1
    queue = np.empty(n, dtype=np.int32)
    parent[source] = source
    queue[0] = source
    head, tail = 0, 1
    while head < tail:
        u = queue[head]
        head += 1
        if u == target:
            return True
        for j in range(indptr[u], indptr[u + 1]):
            v = indices[j]
            if parent[v] < 0:
                parent[v] = u
                queue[tail] = v
                tail += 1
    return False


def bfs_distances(graph: Graph, source: int) -> np.ndarray:
    """Exact hop distances from ``source``; unreachable nodes hold ``UNREACHABLE``."""
    source = graph.check_node(source)
    dist = np.empty(graph.node_count, dtype=np.int32)
    return _bfs(graph.indptr, graph.indices, source, dist)


def bfs_many(graph: Graph, sources: Sequence[int], workers: int = 1) -> np.ndarray:
    """One BFS per source, rows in source order; sources are split across ``workers`` threads."""
    sources = [graph.check_node(s) for s in sources]
    out = np.empty((len(sources), graph.node_count), dtype=np.int32)

    def run(rows):
        for r in rows:
            _bfs(graph.indptr, graph.indices, sources[r], out[r])

    if workers <= 1 or len(sources) <= 1:
        run(range(len(sources)))
    else:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(run, [range(w, len(sources), workers) for w in range(workers)]))
    return out


class PairBFS:
    """Reusable early-exit single-pair BFS (the exact baseline for latency comparisons)."""

    def __init__(self, graph: Graph):
        self.graph = graph
        self._dist = np.full(graph.node_count, -1, dtype=np.int32)

    def __call__(self, u: int, v: int) -> int:
        return int(_bfs_pair(self.graph.indptr, self.graph.indices, u, v, self._dist))


def shortest_path(graph: Graph, u: int, v: int) -> list[int] | None:
    """A shortest ``u``-``v`` path, expanding neighbors in ascending id order; ``None`` if disconnected."""
    u = graph.check_node(u)
    v = graph.check_node(v)
    parent = np.empty(graph.node_count, dtype=np.int32)
    if not _bfs_parents(graph.indptr, graph.indices, u, v, parent):
        return None
    path = [v]
    while path[-1] != u:
        path.append(int(parent[path[-1]]))
    return path[::-1]


def sample_nodes(graph: Graph, k: int, seed: int) -> list[int]:
    """``k`` distinct node ids, uniform without replacement, reproducible from ``seed``."""
    n = graph.node_count
    if not 0 <= k <= n:
        raise ValueError(f"cannot sample {k} nodes from a graph with {n}")
    rng = np.random.default_rng(seed)
    return rng.choice(n, size=k, replace=False).tolist()


@njit(cache=True)
def _components(indptr, indices, comp):
    n = len(indptr) - 1
    queue = np.empty(n, dtype=np.int32)
    for s in range(n):
        if comp[s] >= 0:
            continue
        comp[s] = s
        queue[0] = s
        head, tail = 0, 1
        while head < tail:
            u = queue[head]
            head += 1
            for j in range(indptr[u], indptr[u + 1]):
                v = indices[j]
                if comp[v] < 0:
                    comp[v] = s
                    queue[tail] = v
                    tail += 1
    return comp


def components(graph: Graph) -> np.ndarray:
    """Component label per node (labels are the smallest id in each component)."""
    comp = np.full(graph.node_count, -1, dtype=np.int64)
    return _components(graph.indptr, graph.indices, comp)
