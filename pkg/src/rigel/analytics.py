"""Distortion metrics and the distance-driven applications built on them.

Every application takes a plain ``distance_fn(u, v)`` so the same code runs
against coordinate estimates and against exact BFS, which is how accuracy is
measured.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, fields

import numpy as np

from .graph import UNREACHABLE, Graph, bfs_distances

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetricsReport:
    are: float
    aae: float
    aer: float
    acr: float
    aspd: float
    sd: float
    pair_count: int

    def to_kv(self, prefix: str = "") -> str:
        return "\n".join(f"{prefix}{k}={_fmt(v)}" for k, v in asdict(self).items())


def _fmt(v):
    return f"{v:.6g}" if isinstance(v, float) else str(v)


def error_metrics(pairs) -> MetricsReport:
    """Distortion of estimates against truth over ``(estimate, truth)`` pairs.

    Expansion is averaged over pairs the estimate stretches (``est >= truth``),
    contraction over pairs it shrinks; either is 1 when no pair qualifies.
    Space distortion is worst expansion times worst contraction, each at
    least 1, so a direction no pair takes contributes nothing.
    """
    arr = np.asarray(pairs, dtype=np.float64).reshape(-1, 2)
    if len(arr) == 0:
        raise ValueError("error_metrics needs at least one pair")
    est, d = arr[:, 0], arr[:, 1]
    if not np.all(d >= 1):
        raise ValueError("true distances must be >= 1")
    if not np.all(est > 0):
        raise ValueError("estimates must be > 0")
    err = np.abs(est - d)
    expand = est / d
    contract = d / est
    up = est >= d
    return MetricsReport(
        are=float(np.mean(err / d)),
        aae=float(np.mean(err)),
        aer=float(np.mean(expand[up])) if up.any() else 1.0,
        acr=float(np.mean(contract[~up])) if (~up).any() else 1.0,
        aspd=float(np.mean(np.maximum(expand, contract))),
        sd=float(max(1.0, np.max(expand)) * max(1.0, np.max(contract))),
        pair_count=len(arr),
    )


def bucketed_metrics(estimates, truths) -> dict[int, MetricsReport]:
    """``error_metrics`` per true distance, keyed by that distance."""
    est = np.asarray(estimates, dtype=np.float64)
    truth = np.asarray(truths, dtype=np.int64)
    out = {}
    for d in np.unique(truth[truth >= 1]):
        m = truth == d
        out[int(d)] = error_metrics(np.column_stack([est[m], truth[m]]))
    return out


class BFSDistance:
    """Exact hop distance with a bounded cache of whole BFS rows.

    Callers that iterate pairs grouped by source get one BFS per source.
    Unreachable pairs return ``UNREACHABLE``.
    """

    def __init__(self, graph: Graph, cache_rows: int = 256):
        self.graph = graph
        self.cache_rows = cache_rows
        self._rows: OrderedDict[int, np.ndarray] = OrderedDict()

    def row(self, u: int) -> np.ndarray:
        r = self._rows.get(u)
        if r is None:
            r = bfs_distances(self.graph, u)
            self._rows[u] = r
            if len(self._rows) > self.cache_rows:
                self._rows.popitem(last=False)
        else:
            self._rows.move_to_end(u)
        return r

    def __call__(self, u: int, v: int) -> int:
        return int(self.row(u)[v])


def _usable(d) -> bool:
    return d is not None and d != UNREACHABLE and math.isfinite(d)


@dataclass(frozen=True)
class SeparationReport:
    radius: float
    diameter: float
    avg_path_length: float
    sample_size: int
    skipped_nodes: int = 0
    skipped_pairs: int = 0

    def to_kv(self, prefix: str = "") -> str:
        return "\n".join(f"{prefix}{k}={_fmt(v)}" for k, v in asdict(self).items())


def separation_metrics(distance_fn, node_sample) -> SeparationReport:
    """Radius, diameter and mean distance over a node sample.

    ``distance_fn`` is taken to be symmetric, so each unordered pair is
    evaluated once.  Nodes the function rejects (``KeyError``, e.g. excluded
    from an embedding) are dropped; unreachable pairs are skipped.  Both are
    counted in the report.
    """
    nodes = list(dict.fromkeys(int(u) for u in node_sample))
    if len(nodes) < 2:
        raise ValueError("separation metrics need at least 2 sample nodes")
    n = len(nodes)
    dropped = np.zeros(n, dtype=bool)
    for i, u in enumerate(nodes):
        # the self-distance probe rejects nodes without coordinates
        try:
            distance_fn(u, u)
        except KeyError as exc:
            dropped[i] = True
            log.info("separation: dropping node %d (%s)", u, exc)
    dist = np.full((n, n), np.nan)
    skipped_pairs = 0
    live = np.flatnonzero(~dropped).tolist()
    for a, i in enumerate(live):
        for j in live[a + 1:]:
            d = distance_fn(nodes[i], nodes[j])
            if _usable(d):
                dist[i, j] = dist[j, i] = d
            else:
                skipped_pairs += 1
    keep = ~dropped
    sub = dist[np.ix_(keep, keep)]
    iu = np.triu_indices(len(sub), k=1)
    vals = sub[iu]
    vals = vals[~np.isnan(vals)]
    if len(vals) == 0:
        raise ValueError("no sample pair has a usable distance")
    with np.errstate(all="ignore"):
        ecc = np.nanmax(np.where(np.isnan(sub), -np.inf, sub), axis=1)
    ecc = ecc[np.isfinite(ecc)]
    return SeparationReport(
        radius=float(ecc.min()),
        diameter=float(ecc.max()),
        avg_path_length=float(vals.mean()),
        sample_size=int(keep.sum()),
        skipped_nodes=int(dropped.sum()),
        skipped_pairs=skipped_pairs,
    )


def _ranked(scores: dict[int, float]) -> list[int]:
    return sorted(scores, key=lambda u: (scores[u], u))


def centrality_scores(distance_fn, candidates, reference_set) -> dict[int, float]:
    """Mean distance from each candidate to the references (itself excluded)."""
    refs = [int(r) for r in reference_set]
    if not refs:
        raise ValueError("reference set is empty")
    scores = {}
    for c in candidates:
        c = int(c)
        ds = [distance_fn(c, r) for r in refs if r != c]
        ds = [d for d in ds if _usable(d)]
        scores[c] = math.fsum(ds) / len(ds) if ds else math.inf
    return scores


def centrality_topk(distance_fn, candidates, reference_set, k: int) -> list[int]:
    """The ``k`` candidates with the lowest mean distance to the reference set, ties by id."""
    cands = [int(c) for c in candidates]
    if not 1 <= k <= len(cands):
        raise ValueError(f"k must be in [1, {len(cands)}]")
    return _ranked(centrality_scores(distance_fn, cands, reference_set))[:k]


def social_search(distance_fn, query_node: int, responders, k: int) -> list[int]:
    """Responders closest to ``query_node``, ties by id."""
    resp = [int(r) for r in responders]
    if not 1 <= k <= len(resp):
        raise ValueError(f"k must be in [1, {len(resp)}]")
    scores = {}
    for r in resp:
        d = distance_fn(query_node, r)
        scores[r] = d if _usable(d) else math.inf
    return _ranked(scores)[:k]


def topk_overlap(list_a, list_b, k: int) -> float:
    if k <= 0:
        raise ValueError("k must be >= 1")
    if len(list_a) < k or len(list_b) < k:
        raise ValueError("both lists need at least k entries")
    return len(set(list_a[:k]) & set(list_b[:k])) / k


def write_csv(rows, sink=None, columns=None) -> str:
    """Rows of dicts or dataclasses as CSV with a header; returns the text."""
    rows = [asdict(r) if hasattr(r, "__dataclass_fields__") else dict(r) for r in rows]
    if columns is None:
        columns = list(dict.fromkeys(k for r in rows for k in r))
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(v) for k, v in r.items()})
    text = buf.getvalue()
    if sink is not None:
        if isinstance(sink, str) or hasattr(sink, "__fspath__"):
            with open(sink, "w", newline="") as fh:
                fh.write(text)
        else:
            sink.write(text)
    return text


METRIC_COLUMNS = [f.name for f in fields(MetricsReport)]
