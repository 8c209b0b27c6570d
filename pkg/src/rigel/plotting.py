"""Figures for the CLI reports, rendered off-screen to PNG."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

# no timestamps or version strings, so reruns give identical bytes
_META = {"Software": None}


def _finish(fig, ax, path, xlabel, ylabel, title=None):
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
    return str(path)


def bucket_errors(buckets: dict[str, dict[int, float]], path, metric="AAE"):
    """One line per estimator: error against true hop distance."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, series in buckets.items():
        ds = sorted(series)
        ax.plot(ds, [series[d] for d in ds], marker="o", label=label)
    ax.set_xticks(sorted({d for s in buckets.values() for d in s}))
    ax.legend()
    return _finish(fig, ax, path, "true distance (hops)", metric)


def curvature_sweep(curvatures, values, path, metric="ARE"):
    fig, ax = plt.subplots(figsize=(6, 4))
    order = sorted(range(len(curvatures)), key=lambda i: curvatures[i])
    xs = [curvatures[i] for i in order]
    ax.plot(xs, [values[i] for i in order], marker="o")
    ax.set_xticks(xs)
    ax.set_xticklabels([f"{c:g}" for c in xs])
    return _finish(fig, ax, path, "curvature (0 = euclidean)", metric)


def hop_error_histogram(counts: dict[int, int], path, failures: int = 0):
    fig, ax = plt.subplots(figsize=(6, 4))
    ks = sorted(counts)
    ax.bar(ks, [counts[k] for k in ks], color="tab:blue")
    title = f"{failures} not found" if failures else None
    ax.set_xticks(ks)
    return _finish(fig, ax, path, "path length - shortest (hops)", "pairs", title)


def accuracy_curve(ks, values, path, ylabel="top-k overlap"):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ks, values, marker="o")
    ax.set_ylim(0, 1.05)
    return _finish(fig, ax, path, "k", ylabel)


def speedup(workers, values, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(workers, values, marker="o", label="measured")
    ax.plot(workers, workers, ls="--", color="grey", label="linear")
    ax.legend()
    return _finish(fig, ax, path, "workers", "embedding-phase speedup")
