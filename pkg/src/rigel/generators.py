"""Deterministic synthetic graphs for desk-scale experiments."""

from __future__ import annotations

import numpy as np

from .graph import Graph, from_edges

KINDS = ("path", "star", "grid", "smallworld", "scalefree")


def path_graph(n: int) -> Graph:
    if n < 1:
        raise ValueError("path needs n >= 1")
    a = np.arange(n - 1)
    return from_edges(n, a, a + 1)


def star_graph(n: int) -> Graph:
    """Center 0 joined to leaves 1..n-1."""
    if n < 1:
        raise ValueError("star needs n >= 1")
    leaves = np.arange(1, n)
    return from_edges(n, np.zeros_like(leaves), leaves)


def grid_graph(rows: int, cols: int) -> Graph:
    if rows < 1 or cols < 1:
        raise ValueError("grid needs rows, cols >= 1")
    ids = np.arange(rows * cols).reshape(rows, cols)
    us = np.concatenate([ids[:, :-1].ravel(), ids[:-1, :].ravel()])
    vs = np.concatenate([ids[:, 1:].ravel(), ids[1:, :].ravel()])
    return from_edges(rows * cols, us, vs)


def small_world(n: int, k: int, p: float, seed: int = 0) -> Graph:
    """Watts-Strogatz: ring lattice with ``k`` neighbors per node, each edge rewired with prob. ``p``.

    Rewiring never creates self-loops or duplicate edges; the graph stays simple.
    """
    if k % 2 or k < 2 or k >= n:
        raise ValueError("smallworld needs even k with 2 <= k < n")
    if not 0.0 <= p <= 1.0:
        raise ValueError("rewiring probability must be in [0, 1]")
    rng = np.random.default_rng(seed)
    adj = [set() for _ in range(n)]
    for u in range(n):
        for j in range(1, k // 2 + 1):
            v = (u + j) % n
            adj[u].add(v)
            adj[v].add(u)
    for j in range(1, k // 2 + 1):
        flips = rng.random(n) < p
        targets = rng.integers(0, n, size=n)
        for u in np.flatnonzero(flips):
            u = int(u)
            v = (u + j) % n
            if v not in adj[u] or len(adj[u]) >= n - 1:
                continue
            w = int(targets[u])
            while w == u or w in adj[u]:
                w = int(rng.integers(0, n))
            adj[u].discard(v)
            adj[v].discard(u)
            adj[u].add(w)
            adj[w].add(u)
    us = [u for u in range(n) for v in adj[u] if u < v]
    vs = [v for u in range(n) for v in adj[u] if u < v]
    return from_edges(n, us, vs)


def scale_free(n: int, m: int, seed: int = 0) -> Graph:
    """Barabasi-Albert preferential attachment; each new node brings ``m`` edges."""
    if m < 1 or m >= n:
        raise ValueError("scalefree needs 1 <= m < n")
    rng = np.random.default_rng(seed)
    # seed clique keeps the result connected
    us = [i for i in range(m + 1) for j in range(i + 1, m + 1)]
    vs = [j for i in range(m + 1) for j in range(i + 1, m + 1)]
    repeated = us + vs
    for new in range(m + 1, n):
        chosen: set[int] = set()
        while len(chosen) < m:
            draws = rng.integers(0, len(repeated), size=m - len(chosen))
            chosen.update(repeated[int(d)] for d in draws)
        for t in sorted(chosen):
            us.append(new)
            vs.append(t)
            repeated.append(new)
            repeated.append(t)
    return from_edges(n, us, vs)


def generate(kind: str, params: dict, seed: int = 0) -> Graph:
    try:
        if kind == "path":
            return path_graph(int(params["n"]))
        if kind == "star":
            return star_graph(int(params["n"]))
        if kind == "grid":
            return grid_graph(int(params["rows"]), int(params["cols"]))
        if kind == "smallworld":
            return small_world(int(params["n"]), int(params.get("k", 10)),
                               float(params.get("p", 0.1)), seed)
        if kind == "scalefree":
            return scale_free(int(params["n"]), int(params.get("m", 5)), seed)
    except KeyError as exc:
        raise ValueError(f"{kind}: missing parameter {exc.args[0]!r}") from None
    raise ValueError(f"unknown graph kind {kind!r}; choose from {', '.join(KINDS)}")
