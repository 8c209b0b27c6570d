"""Command-line entry point: ``rigel <command> ...``.

Every run writes one JSON manifest (argv, resolved configuration, input and
output digests, phase timings).  ``rigel replay MANIFEST`` re-executes it and
checks that the deterministic outputs come out byte-identical.

Exit codes: 0 success, 1 runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from collections import Counter
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import (BFSDistance, bucketed_metrics, centrality_scores, error_metrics,
                        separation_metrics, social_search, topk_overlap, write_csv, _ranked)
from .bench import bfs_latency, embedding_speedup, latency, mean_latency, random_pairs
from .embedder import EmbedConfig, ObjectiveKind, embed_graph, load_embedding, save_embedding
from .generators import KINDS, generate
from .geometry import Space
from .graph import UNREACHABLE, Graph, read_graph, save_csr, write_edge_list
from .paths import PATH_NOT_FOUND, PathConfig, find_path, is_valid_walk
from .query import (QueryConfig, QueryEngine, QueryError, fit_likelihood_model,
                    hybrid_estimate_many, load_likelihood_model, save_likelihood_model)

log = logging.getLogger("rigel")


class UsageError(Exception):
    pass


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Collects what the manifest records while a command executes."""

    def __init__(self, command: str, args: argparse.Namespace, argv: list[str]):
        self.command = command
        self.args = args
        self.argv = argv
        self.inputs: dict[str, str] = {}
        self.outputs: list[dict] = []
        self.timings: dict[str, float] = {}
        self.results: dict = {}

    def input(self, path):
        self.inputs[str(path)] = _sha256(path)
        return path

    def output(self, path, reproducible: bool = True):
        self.outputs.append({"path": str(path), "sha256": _sha256(path), "reproducible": reproducible})

    def timed(self, name):
        run = self

        class _T:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                run.timings[name] = run.timings.get(name, 0.0) + time.perf_counter() - self.t0

        return _T()

    def manifest(self) -> dict:
        config = {k: v for k, v in vars(self.args).items() if k not in ("func", "manifest", "verbose")}
        return {
            "tool": "rigel",
            "version": __version__,
            "command": self.command,
            "cwd": os.getcwd(),
            "argv": self.argv,
            "config": config,
            "seed": getattr(self.args, "seed", None),
            "inputs": self.inputs,
            "timings": self.timings,
            "outputs": self.outputs,
            "results": self.results,
        }


def _emit(lines: dict, stream=None):
    stream = stream or sys.stdout
    for k, v in lines.items():
        stream.write(f"{k}={v:.6g}\n" if isinstance(v, float) else f"{k}={v}\n")


def _parse_list(text: str, kind=float) -> list:
    try:
        return [kind(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise UsageError(f"cannot parse list {text!r}") from None


def _load_graph(run: Run, path) -> Graph:
    with run.timed("load_graph"):
        return read_graph(run.input(path))


def _load_embedding(run: Run, path, graph: Graph):
    with run.timed("load_embedding"):
        emb = load_embedding(run.input(path))
    if emb.node_count != graph.node_count:
        raise ValueError(f"embedding covers {emb.node_count} nodes but graph has {graph.node_count}")
    return emb


def _node(graph: Graph, label: str) -> int:
    try:
        return graph.node_id(label)
    except KeyError:
        raise UsageError(f"unknown node label {label!r}") from None


def _pairs(args, graph: Graph) -> np.ndarray:
    """Pairs from --pairs / --pairs-file, else --random N drawn with --seed."""
    texts = list(args.pairs or [])
    if args.pairs_file:
        with open(args.pairs_file) as fh:
            texts += [ln for ln in fh if ln.strip() and not ln.startswith("#")]
    if texts:
        out = []
        for t in texts:
            parts = t.split()
            if len(parts) != 2:
                raise UsageError(f"a pair needs two node labels, got {t!r}")
            out.append((_node(graph, parts[0]), _node(graph, parts[1])))
        return np.array(out, dtype=np.int64).reshape(-1, 2)
    if args.random:
        return random_pairs(graph.node_count, args.random, args.seed)
    raise UsageError("give --pairs, --pairs-file or --random N")


def _out_path(args, default_name: str):
    return Path(args.out) if getattr(args, "out", None) else None


def _figure_dir(args) -> Path | None:
    if not getattr(args, "figures", None):
        return None
    d = Path(args.figures)
    d.mkdir(parents=True, exist_ok=True)
    return d


# -- commands ---------------------------------------------------------------------

def cmd_generate(args, run: Run) -> int:
    params = {"n": args.n, "k": args.k, "p": args.p, "m": args.m, "rows": args.rows, "cols": args.cols}
    params = {k: v for k, v in params.items() if v is not None}
    try:
        with run.timed("generate"):
            g = generate(args.kind, params, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.format == "csr":
        save_csr(g, args.out)
    else:
        write_edge_list(g, args.out)
    run.output(args.out)
    run.results = {"nodes": g.node_count, "edges": g.edge_count}
    _emit({"nodes": g.node_count, "edges": g.edge_count, "out": args.out})
    return 0


_OBJECTIVES = {"squared-abs": ObjectiveKind.SQUARED_ABS, "abs": ObjectiveKind.ABS,
               "squared-rel": ObjectiveKind.SQUARED_REL}


def _embed_config(args, curvature=None) -> EmbedConfig:
    c = args.curvature if curvature is None else curvature
    primaries = args.primaries if args.primaries is not None else min(16, args.landmarks)
    refs = args.refs if args.refs is not None else min(16, args.landmarks)
    try:
        return EmbedConfig(space=Space.for_curvature(c, args.dim), landmark_count=args.landmarks,
                           primary_count=primaries, refs_per_node=refs,
                           n_local=args.local_landmarks, seed=args.seed, workers=args.workers,
                           objective_kind=_OBJECTIVES[args.objective])
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_embed(args, run: Run) -> int:
    g = _load_graph(run, args.graph)
    cfg = _embed_config(args)
    if cfg.landmark_count > g.node_count:
        raise UsageError(f"--landmarks {cfg.landmark_count} exceeds node count {g.node_count}")
    emb = embed_graph(g, cfg)
    run.timings.update(emb.timings)
    save_embedding(emb, args.out)
    run.output(args.out)
    run.results = {"variant": cfg.variant, "space": cfg.space.tag, "nodes": emb.node_count,
                   "excluded": emb.excluded_count, "workers": cfg.workers}
    t = emb.timings
    _emit({"variant": cfg.variant, "space": cfg.space.tag, "nodes": emb.node_count,
           "excluded": emb.excluded_count,
           "bootstrap_s": t["bootstrap_bfs"] + t["bootstrap_landmarks"],
           "partition_s": t["partition"], "embedding_s": t["embedding"], "out": args.out})
    return 0


def cmd_query(args, run: Run) -> int:
    g = _load_graph(run, args.graph)
    emb = _load_embedding(run, args.embedding, g)
    cfg = QueryConfig(local_optimization=not args.no_local_opt)
    eng = QueryEngine(g, emb, cfg)
    pairs = _pairs(args, g)
    labels = g.labels
    rows = []
    est = []
    skipped = 0
    for u, v in pairs.tolist():
        try:
            est.append(eng.estimate(u, v))
        except QueryError as exc:
            log.warning("%s", exc)
            skipped += 1
            est.append(float("nan"))
    truth = None
    if args.exact:
        bfs = BFSDistance(g)
        with run.timed("oracle"):
            truth = [bfs(u, v) for u, v in pairs.tolist()]
    for i, (u, v) in enumerate(pairs.tolist()):
        row = {"u": labels[u], "v": labels[v], "estimate": est[i]}
        if truth is not None:
            t = truth[i]
            row["exact"] = t if t != UNREACHABLE else ""
            row["abs_error"] = abs(est[i] - t) if t != UNREACHABLE else ""
        rows.append(row)

    # latency: warm caches, single thread, over a seeded random workload
    ok = ~emb.excluded
    live = np.flatnonzero(ok)
    lat_pairs = random_pairs(len(live), args.latency_queries, args.seed)
    lat_pairs = live[lat_pairs]
    with run.timed("latency"):
        stats = latency(eng.estimate, lat_pairs)
    summary = {"mode": cfg.mode, "pairs": len(pairs), "skipped_excluded": skipped}
    summary.update(stats.as_dict("latency"))
    if args.bfs_baseline:
        bfs_us = bfs_latency(g, lat_pairs[:args.bfs_baseline])
        summary["bfs_mean_us"] = bfs_us
        summary["speedup_vs_bfs"] = bfs_us / stats.mean_us
    if truth is not None:
        e = np.array(est)
        t = np.array(truth, dtype=float)
        m = (t != UNREACHABLE) & ~np.isnan(e)
        if m.any():
            summary["aae"] = float(np.mean(np.abs(e[m] - t[m])))
    out = _out_path(args, "query.csv")
    if out:
        write_csv(rows, out)
        run.output(out)
        _emit(summary)
    else:
        sys.stdout.write(write_csv(rows))
        sys.stdout.write("\n")
        _emit(summary)
    run.results = summary
    return 0


def cmd_path(args, run: Run) -> int:
    g = _load_graph(run, args.graph)
    emb = _load_embedding(run, args.embedding, g)
    try:
        cfg = PathConfig(delta=args.delta, c_max=args.c_max, max_hops=args.max_hops,
                         relax_retry=not args.no_retry, reference=args.reference)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    pairs = _pairs(args, g)
    bfs = BFSDistance(g) if args.oracle else None
    labels = g.labels
    rows = []
    failures = invalid = exact = skipped = 0
    hist: Counter = Counter()
    with run.timed("paths"):
        for a, b in pairs.tolist():
            if a == b:
                skipped += 1
                continue
            try:
                res = find_path(g, emb, a, b, cfg)
            except QueryError as exc:
                log.warning("%s", exc)
                skipped += 1
                continue
            row = {"a": labels[a], "b": labels[b]}
            if res is PATH_NOT_FOUND:
                failures += 1
                row.update(found=0, length="", path="")
            else:
                valid = is_valid_walk(g, res.path, a, b)
                invalid += not valid
                row.update(found=1, length=res.length, path=" ".join(labels[x] for x in res.path),
                           hops_explored=res.hops_explored, retried=int(res.retried))
            if bfs is not None:
                d = bfs(a, b)
                row["bfs"] = d
                if res is not PATH_NOT_FOUND and d != UNREACHABLE:
                    err = res.length - d
                    row["abs_error"] = err
                    hist[err] += 1
                    exact += err == 0
            rows.append(row)
    attempted = len(rows)
    summary = {"pairs": attempted, "skipped": skipped, "failures": failures,
               "failure_rate": failures / attempted if attempted else 0.0,
               "invalid_paths": invalid}
    if bfs is not None:
        summary["exact_fraction"] = exact / attempted if attempted else 0.0
        for k in sorted(hist):
            summary[f"abs_error_{k}"] = hist[k]
    out = _out_path(args, "paths.csv")
    cols = ["a", "b", "found", "length", "hops_explored", "retried", "bfs", "abs_error", "path"]
    cols = [c for c in cols if any(c in r for r in rows)]
    if out:
        write_csv(rows, out, columns=cols)
        run.output(out)
    else:
        sys.stdout.write(write_csv(rows, columns=cols) + "\n")
    figs = _figure_dir(args)
    if figs is not None and hist:
        from .plotting import hop_error_histogram
        p = hop_error_histogram(dict(hist), figs / "path_error.png", failures)
        run.output(p)
    _emit(summary)
    run.results = summary
    return 0 if invalid == 0 else 1


def _eval_pairs(args, g: Graph, emb_list):
    """Seeded pairs with exact truth; unreachable or excluded pairs are dropped and counted."""
    pairs = random_pairs(g.node_count, args.pairs, args.seed)
    order = np.argsort(pairs[:, 0], kind="stable")
    bfs = BFSDistance(g)
    truth = np.empty(len(pairs), dtype=np.int64)
    for i in order:
        truth[i] = bfs(int(pairs[i, 0]), int(pairs[i, 1]))
    keep = truth != UNREACHABLE
    unreachable = int((~keep).sum())
    excl = np.zeros(len(pairs), dtype=bool)
    for e in emb_list:
        excl |= e.excluded[pairs[:, 0]] | e.excluded[pairs[:, 1]]
    excluded = int((keep & excl).sum())
    keep &= ~excl
    return pairs[keep], truth[keep], unreachable, excluded


def _bucket_rows(columns: dict[str, np.ndarray], truth: np.ndarray) -> tuple[list[dict], dict]:
    rows = []
    series = {}
    for d in np.unique(truth):
        m = truth == d
        row = {"distance": int(d), "count": int(m.sum())}
        for name, est in columns.items():
            err = np.abs(est[m] - d)
            row[f"{name}_aae"] = float(err.mean())
            row[f"{name}_are"] = float((err / d).mean())
            series.setdefault(name, {})[int(d)] = float(err.mean())
        rows.append(row)
    return rows, series


def cmd_eval(args, run: Run) -> int:
    g = _load_graph(run, args.graph)
    if args.sweep_curvature:
        return _eval_sweep(args, run, g)
    if not args.embedding:
        raise UsageError("--embedding is required (unless --sweep-curvature)")
    emb = _load_embedding(run, args.embedding, g)
    local = not args.no_local_opt
    columns: dict[str, np.ndarray] = {}
    if args.hybrid:
        if not args.embedding_s:
            raise UsageError("--hybrid needs --embedding-s (the short-distance embedding)")
        emb_s = _load_embedding(run, args.embedding_s, g)
        model = load_likelihood_model(run.input(args.hybrid))
        pairs, truth, unreachable, excluded = _eval_pairs(args, g, [emb, emb_s])
        us, vs = pairs[:, 0], pairs[:, 1]
        with run.timed("estimate"):
            columns["L"] = QueryEngine(g, emb).estimate_many(us, vs, local_optimization=local)
            columns["S"] = QueryEngine(g, emb_s).estimate_many(us, vs, local_optimization=local)
            columns["hybrid"] = hybrid_estimate_many(g, emb, emb_s, model, us, vs,
                                                     local_optimization=local)
    else:
        pairs, truth, unreachable, excluded = _eval_pairs(args, g, [emb])
        with run.timed("estimate"):
            columns["rigel" if local else "rigel_s"] = QueryEngine(g, emb).estimate_many(
                pairs[:, 0], pairs[:, 1], local_optimization=local)
    rows, series = _bucket_rows(columns, truth)
    summary = {"mode": "Rigel" if local else "Rigel-S", "space": emb.space.tag,
               "requested": args.pairs, "evaluated": len(truth),
               "skipped_unreachable": unreachable, "skipped_excluded": excluded}
    for name, est in columns.items():
        pos = est > 0
        summary[f"{name}_nonpositive_skipped"] = int((~pos).sum())
        if pos.any():
            rep = error_metrics(np.column_stack([est[pos], truth[pos]]))
            for k, v in vars(rep).items():
                summary[f"{name}_{k}"] = v
    out = _out_path(args, "eval.csv")
    if out:
        write_csv(rows, out)
        run.output(out)
    else:
        sys.stdout.write(write_csv(rows) + "\n")
    figs = _figure_dir(args)
    if figs is not None:
        from .plotting import bucket_errors
        run.output(bucket_errors(series, figs / "eval_aae.png"))
    _emit(summary)
    run.results = summary
    return 0


def _eval_sweep(args, run: Run, g: Graph) -> int:
    curvatures = _parse_list(args.sweep_curvature)
    if any(c > 0 for c in curvatures):
        raise UsageError("curvatures must be <= 0 (0 selects the euclidean model)")
    pairs, truth, unreachable, _ = _eval_pairs(args, g, [])
    rows = []
    for c in curvatures:
        cfg = _embed_config(args, curvature=c)
        with run.timed(f"embed_c{c:g}"):
            emb = embed_graph(g, cfg)
        ok = ~(emb.excluded[pairs[:, 0]] | emb.excluded[pairs[:, 1]])
        est = QueryEngine(g, emb).estimate_many(pairs[ok, 0], pairs[ok, 1], local_optimization=False)
        pos = est > 0
        rep = error_metrics(np.column_stack([est[pos], truth[ok][pos]]))
        rows.append({"curvature": float(c), "space": cfg.space.tag, **vars(rep)})
    out = _out_path(args, "sweep.csv")
    if out:
        write_csv(rows, out)
        run.output(out)
    else:
        sys.stdout.write(write_csv(rows) + "\n")
    figs = _figure_dir(args)
    if figs is not None:
        from .plotting import curvature_sweep
        run.output(curvature_sweep([r["curvature"] for r in rows], [r["are"] for r in rows],
                                   figs / "curvature_sweep.png"))
    best = min(rows, key=lambda r: r["are"])
    summary = {"evaluated": len(truth), "skipped_unreachable": unreachable,
               "best_curvature": best["curvature"], "best_are": best["are"]}
    _emit(summary)
    run.results = summary
    return 0


def cmd_fit_hybrid(args, run: Run) -> int:
    g = _load_graph(run, args.graph)
    emb_l = _load_embedding(run, args.embedding_l, g)
    emb_s = _load_embedding(run, args.embedding_s, g)
    pairs = random_pairs(g.node_count, args.holdout, args.seed)
    bfs = BFSDistance(g)
    order = np.argsort(pairs[:, 0], kind="stable")
    truth = np.empty(len(pairs), dtype=np.int64)
    with run.timed("oracle"):
        for i in order:
            truth[i] = bfs(int(pairs[i, 0]), int(pairs[i, 1]))
    ok = (truth != UNREACHABLE) & ~emb_l.excluded[pairs[:, 0]] & ~emb_l.excluded[pairs[:, 1]] \
        & ~emb_s.excluded[pairs[:, 0]] & ~emb_s.excluded[pairs[:, 1]]
    hold = np.column_stack([pairs[ok], truth[ok]])
    observed = int(truth[ok].max()) if ok.any() else 1
    theta_max = min(args.theta_max, observed) if args.theta_max else min(18, observed)
    try:
        model = fit_likelihood_model(g, emb_l, emb_s, hold, theta_range=(1, theta_max),
                                     bin_width=args.bin_width, alpha=args.alpha)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    save_likelihood_model(model, args.out)
    run.output(args.out)
    summary = {"holdout": int(ok.sum()), "theta_max": theta_max, "bins": model.bins,
               "skipped": model.skipped, "empty_thetas": len(model.empty_thetas), "out": args.out}
    _emit(summary)
    run.results = summary
    return 0


def _sample(rng, n: int, k: int) -> np.ndarray:
    return np.sort(rng.choice(n, size=min(k, n), replace=False))


def cmd_app(args, run: Run) -> int:
    g = _load_graph(run, args.graph)
    emb = _load_embedding(run, args.embedding, g)
    eng = QueryEngine(g, emb, QueryConfig(local_optimization=not args.no_local_opt))
    live = np.flatnonzero(~emb.excluded)
    rng = np.random.default_rng(args.seed)
    bfs = BFSDistance(g, cache_rows=max(256, args.sample))
    rows = []
    summary: dict = {"app": args.app}
    if args.app == "separation":
        sample = live[_sample(rng, len(live), args.sample)]
        with run.timed("estimate"):
            est = separation_metrics(eng.estimate, sample)
        with run.timed("oracle"):
            ex = separation_metrics(bfs, sample)
        for name, rep in (("rigel", est), ("bfs", ex)):
            rows.append({"source": name, **vars(rep)})
        summary.update({f"rigel_{k}": v for k, v in vars(est).items()})
        summary.update({f"bfs_{k}": v for k, v in vars(ex).items()})
        summary["delta_radius"] = est.radius - ex.radius
        summary["delta_diameter"] = est.diameter - ex.diameter
        summary["delta_avg_path_length"] = est.avg_path_length - ex.avg_path_length
    elif args.app == "centrality":
        ks = [int(k) for k in _parse_list(args.k_list)]
        cands = live[_sample(rng, len(live), args.candidates)]
        refs = live[_sample(rng, len(live), args.references)]
        if max(ks) > len(cands):
            raise UsageError(f"k={max(ks)} exceeds the {len(cands)} candidates")
        with run.timed("estimate"):
            rank_est = _ranked(centrality_scores(eng.estimate, cands, refs))
        with run.timed("oracle"):
            exact_scores = {}
            for c in cands.tolist():
                row = bfs.row(c)[refs]
                row = row[(refs != c) & (row != UNREACHABLE)]
                exact_scores[c] = float(row.mean()) if len(row) else float("inf")
            rank_bfs = _ranked(exact_scores)
        for k in ks:
            rows.append({"k": k, "overlap": topk_overlap(rank_est, rank_bfs, k)})
        summary.update({"candidates": len(cands), "references": len(refs),
                        "top1_rigel": g.labels[rank_est[0]], "top1_bfs": g.labels[rank_bfs[0]]})
        summary.update({f"overlap_k{r['k']}": r["overlap"] for r in rows})
    else:
        k = args.k
        if k > args.responders:
            raise UsageError("--k exceeds --responders")
        overlaps = []
        for q in range(args.queries):
            node = int(live[rng.integers(len(live))])
            others = live[live != node]
            resp = rng.choice(others, size=min(args.responders, len(others)), replace=False)
            with run.timed("estimate"):
                top_est = social_search(eng.estimate, node, resp, min(k, len(resp)))
            with run.timed("oracle"):
                top_bfs = social_search(bfs, node, resp, min(k, len(resp)))
            ov = topk_overlap(top_est, top_bfs, min(k, len(resp)))
            overlaps.append(ov)
            rows.append({"query": q, "node": g.labels[node], "overlap": ov})
        summary.update({"queries": args.queries, "responders": args.responders, "k": k,
                        "mean_overlap": float(np.mean(overlaps)),
                        "random_baseline": k / args.responders})
    out = _out_path(args, f"{args.app}.csv")
    if out:
        write_csv(rows, out)
        run.output(out)
    else:
        sys.stdout.write(write_csv(rows) + "\n")
    figs = _figure_dir(args)
    if figs is not None and args.app == "centrality":
        from .plotting import accuracy_curve
        run.output(accuracy_curve([r["k"] for r in rows], [r["overlap"] for r in rows],
                                  figs / "centrality_accuracy.png"))
    _emit(summary)
    run.results = summary
    return 0


def cmd_bench(args, run: Run) -> int:
    g = _load_graph(run, args.graph)
    cfg = _embed_config(args)
    workers = [int(w) for w in _parse_list(args.workers_list)]
    rows = []
    summary = {}
    emb = None
    if not args.skip_embed:
        with run.timed("embed_sweep"):
            speed = embedding_speedup(g, cfg, workers)
        for r in speed:
            rows.append({"kind": "embed", **vars(r)})
            summary[f"speedup_w{r.workers}"] = r.speedup
        summary["identical_across_workers"] = all(r.identical for r in speed)
        summary["cpu_count"] = os.cpu_count()
    if args.embedding:
        emb = _load_embedding(run, args.embedding, g)
    elif args.queries:
        emb = embed_graph(g, cfg)
    if args.queries and emb is not None:
        live = np.flatnonzero(~emb.excluded)
        pairs = live[random_pairs(len(live), args.queries, args.seed)]
        eng = QueryEngine(g, emb)
        q_us = mean_latency(eng.estimate, pairs)
        b_us = bfs_latency(g, pairs[:args.bfs_queries])
        summary.update({"rigel_mean_us": q_us, "bfs_mean_us": b_us, "speedup_vs_bfs": b_us / q_us})
        rows.append({"kind": "query", "rigel_mean_us": q_us, "bfs_mean_us": b_us,
                     "speedup": b_us / q_us})
    out = _out_path(args, "bench.csv")
    if out:
        write_csv(rows, out)
        run.output(out, reproducible=False)
    else:
        sys.stdout.write(write_csv(rows) + "\n")
    figs = _figure_dir(args)
    if figs is not None and not args.skip_embed:
        from .plotting import speedup
        run.output(speedup(workers, [summary[f"speedup_w{w}"] for w in workers],
                           figs / "speedup.png"), reproducible=False)
    _emit(summary)
    run.results = summary
    return 0


def cmd_replay(args, run: Run) -> int:
    with open(args.manifest_file) as fh:
        man = json.load(fh)
    argv = list(man["argv"])
    # the replay writes its own manifest next to the original
    if "--manifest" in argv:
        i = argv.index("--manifest")
        del argv[i:i + 2]
    replay_manifest = str(Path(args.manifest_file).with_suffix(".replay.json"))
    cwd = os.getcwd()
    os.chdir(man.get("cwd", cwd))
    try:
        code = main(argv + ["--manifest", replay_manifest])
        mismatched = []
        for o in man["outputs"]:
            if not o.get("reproducible", True):
                continue
            if not os.path.exists(o["path"]) or _sha256(o["path"]) != o["sha256"]:
                mismatched.append(o["path"])
    finally:
        os.chdir(cwd)
    run.results = {"replayed": man["command"], "exit_code": code, "mismatched": mismatched}
    _emit({"replayed": man["command"], "exit_code": code,
           "outputs_checked": sum(o.get("reproducible", True) for o in man["outputs"]),
           "mismatched": len(mismatched)})
    for p in mismatched:
        print(f"mismatch: {p}", file=sys.stderr)
    return 1 if code or mismatched else 0


# -- parser -------------------------------------------------------------------------

def _add_pairs(p):
    p.add_argument("--pairs", action="append", metavar='"A B"', help="node-label pair (repeatable)")
    p.add_argument("--pairs-file", help="file with one 'A B' pair per line")
    p.add_argument("--random", type=int, metavar="N", help="draw N random pairs with --seed")


def _add_embed_flags(p):
    p.add_argument("--landmarks", type=int, default=100)
    p.add_argument("--primaries", type=int, help="default: min(16, landmarks)")
    p.add_argument("--refs", type=int, help="references per node (default: min(16, landmarks))")
    p.add_argument("--local-landmarks", type=int, default=1, help="0 gives Raw Rigel")
    p.add_argument("--dim", type=int, default=10)
    p.add_argument("--curvature", type=float, default=-1.0, help="0 selects the euclidean model")
    p.add_argument("--objective", choices=sorted(_OBJECTIVES), default="squared-abs")
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--manifest", help="manifest path (default: next to --out, or ./rigel-<command>.manifest.json)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="rigel", description="Graph coordinate system: embed, query, path-find.")
    parser.add_argument("--version", action="version", version=f"rigel {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="write a synthetic graph")
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int, help="smallworld: ring neighbors (even)")
    p.add_argument("--p", type=float, help="smallworld: rewiring probability")
    p.add_argument("--m", type=int, help="scalefree: edges per new node")
    p.add_argument("--rows", type=int)
    p.add_argument("--cols", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("edges", "csr"), default="edges")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("embed", parents=[common], help="embed a graph")
    p.add_argument("graph")
    _add_embed_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("query", parents=[common], help="estimate node distances")
    p.add_argument("--graph", required=True)
    p.add_argument("--embedding", required=True)
    _add_pairs(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--exact", action="store_true", help="add BFS truth and error columns")
    p.add_argument("--no-local-opt", action="store_true", help="skip the 1/2-hop shortcut (Rigel-S)")
    p.add_argument("--latency-queries", type=int, default=10000)
    p.add_argument("--bfs-baseline", type=int, default=0, metavar="N",
                   help="also time N single-pair BFS queries")
    p.add_argument("--out")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("path", parents=[common], help="find paths guided by coordinates")
    p.add_argument("--graph", required=True)
    p.add_argument("--embedding", required=True)
    _add_pairs(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--delta", type=float, default=0.3)
    p.add_argument("--c-max", type=int, default=30)
    p.add_argument("--max-hops", type=int)
    p.add_argument("--no-retry", action="store_true")
    p.add_argument("--reference", choices=("parent", "source"), default="parent")
    p.add_argument("--oracle", action="store_true", help="compare against BFS distances")
    p.add_argument("--out")
    p.add_argument("--figures", metavar="DIR")
    p.set_defaults(func=cmd_path)

    p = sub.add_parser("eval", parents=[common], help="error metrics by true distance")
    p.add_argument("--graph", required=True)
    p.add_argument("--embedding")
    p.add_argument("--embedding-s", help="short-distance embedding for --hybrid")
    p.add_argument("--hybrid", metavar="MODEL", help="likelihood model from fit-hybrid")
    p.add_argument("--pairs", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-local-opt", action="store_true")
    p.add_argument("--sweep-curvature", metavar="LIST",
                   help="re-embed at each curvature (0 = euclidean) and compare")
    _add_embed_flags(p)
    p.add_argument("--out")
    p.add_argument("--figures", metavar="DIR")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("fit-hybrid", parents=[common], help="fit the L/S likelihood model")
    p.add_argument("--graph", required=True)
    p.add_argument("--embedding-l", required=True)
    p.add_argument("--embedding-s", required=True)
    p.add_argument("--holdout", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--theta-max", type=int, help="default: min(18, observed diameter)")
    p.add_argument("--bin-width", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit_hybrid)

    p = sub.add_parser("app", parents=[common], help="separation, centrality or social search")
    p.add_argument("app", choices=("separation", "centrality", "search"))
    p.add_argument("--graph", required=True)
    p.add_argument("--embedding", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-local-opt", action="store_true")
    p.add_argument("--sample", type=int, default=5000, help="separation: sample size")
    p.add_argument("--candidates", type=int, default=500, help="centrality: candidate sample")
    p.add_argument("--references", type=int, default=500, help="centrality: reference sample")
    p.add_argument("--k-list", default="5,10,15,20,25,30,35,40,45,50")
    p.add_argument("--queries", type=int, default=200, help="search: query count")
    p.add_argument("--responders", type=int, default=100)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--out")
    p.add_argument("--figures", metavar="DIR")
    p.set_defaults(func=cmd_app)

    p = sub.add_parser("bench", parents=[common], help="embedding speedup and query latency")
    p.add_argument("--graph", required=True)
    p.add_argument("--embedding", help="embedding for the latency test (default: embed with W=1)")
    _add_embed_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers-list", default="1,2,4,8")
    p.add_argument("--skip-embed", action="store_true")
    p.add_argument("--queries", type=int, default=10000)
    p.add_argument("--bfs-queries", type=int, default=200)
    p.add_argument("--out")
    p.add_argument("--figures", metavar="DIR")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("replay", parents=[common], help="re-run a manifest and verify outputs")
    p.add_argument("manifest_file")
    p.set_defaults(func=cmd_replay)
    return parser


def _manifest_path(args) -> Path:
    if args.manifest:
        return Path(args.manifest)
    if getattr(args, "out", None):
        return Path(str(args.out) + ".manifest.json")
    return Path(f"rigel-{args.command}.manifest.json")


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    run = Run(args.command, args, argv)
    try:
        code = args.func(args, run)
    except UsageError as exc:
        print(f"rigel {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError, KeyError, ArithmeticError) as exc:
        print(f"rigel {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    path = _manifest_path(args)
    with open(path, "w") as fh:
        json.dump(run.manifest(), fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")
    return code


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


if __name__ == "__main__":
    sys.exit(main())
