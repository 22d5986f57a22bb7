"""Interpretability statistics over spike logs and temporal attention maps.

All outputs are plain tables; plotting is left to external tools.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NEAR_ZERO = 0.01


@dataclass
class FiringStats:
    layer: int
    mean_rate: float
    silence_ratio: float
    rate_q1: float
    rate_median: float
    rate_q3: float


def _check_binary(spikes: np.ndarray) -> None:
    if not np.all((spikes == 0) | (spikes == 1)):
        raise ValueError("spike log holds values other than 0 and 1")


def firing_stats(spikes: list[np.ndarray]) -> list[FiringStats]:
    """Per layer: fraction of ones, silent (sample, neuron) share, per-sample rate quartiles.

    Each array is ``(samples, neurons, steps)``.  A (sample, neuron) pair is
    silent when it emits no spike anywhere in the window.
    """
    if not spikes:
        raise ValueError("empty spike log")
    out = []
    for k, s in enumerate(spikes):
        s = np.asarray(s, dtype=np.float64)
        if s.ndim != 3 or s.size == 0:
            raise ValueError(f"layer {k}: expected a non-empty (samples, neurons, steps) array")
        _check_binary(s)
        per_sample = s.mean(axis=(1, 2))
        q1, med, q3 = np.percentile(per_sample, [25, 50, 75])
        silent = float((s.sum(axis=2) == 0).mean())
        out.append(FiringStats(k, float(s.mean()), silent, float(q1), float(med), float(q3)))
    return out


@dataclass
class MembraneHistogram:
    layer: int
    counts: np.ndarray
    edges: np.ndarray
    mean: float
    std: float
    sparse_pct: float


def membrane_histogram(membrane: list[np.ndarray], bins: int = 50) -> list[MembraneHistogram]:
    """Histogram of pre-reset potentials with the share of values below 0.01 in magnitude."""
    if bins < 2:
        raise ValueError(f"need at least 2 bins, got {bins}")
    out = []
    for k, u in enumerate(membrane):
        u = np.asarray(u, dtype=np.float64).ravel()
        if u.size == 0:
            raise ValueError(f"layer {k}: empty membrane log")
        counts, edges = np.histogram(u, bins=bins)
        sparse = 100.0 * float((np.abs(u) < NEAR_ZERO).mean())
        out.append(MembraneHistogram(k, counts, edges, float(u.mean()), float(u.std()), sparse))
    return out


def temporal_importance(attn: np.ndarray) -> np.ndarray:
    """Attention mass per key step, averaged over samples, heads and query positions.

    ``attn`` is ``(samples, heads, queries, keys)`` with rows summing to one.
    """
    attn = np.asarray(attn, dtype=np.float64)
    if attn.ndim != 4 or attn.size == 0:
        raise ValueError(f"expected a non-empty (samples, heads, T, T) array, got {attn.shape}")
    if np.any(attn < 0):
        raise ValueError("attention weights must be non-negative")
    imp = attn.mean(axis=(0, 1, 2))
    return imp / imp.sum()


# ----------------------------------------------------------------------------
# tables


FIRING_COLUMNS = ("layer", "mean_rate", "silence_ratio", "rate_q1", "rate_median", "rate_q3")
MEMBRANE_COLUMNS = ("layer", "mean", "std", "sparse_pct")
HISTOGRAM_COLUMNS = ("layer", "bin_left", "bin_right", "count")
IMPORTANCE_COLUMNS = ("step", "importance")
RASTER_COLUMNS = ("layer", "sample", "neuron", "step")


def _table(columns, rows) -> str:
    lines = ["\t".join(columns)]
    for r in rows:
        lines.append("\t".join(repr(float(x)) if isinstance(x, float) else str(x) for x in r))
    return "\n".join(lines) + "\n"


def firing_table(stats: list[FiringStats]) -> str:
    return _table(FIRING_COLUMNS, [(s.layer, s.mean_rate, s.silence_ratio, s.rate_q1,
                                    s.rate_median, s.rate_q3) for s in stats])


def membrane_table(hists: list[MembraneHistogram]) -> str:
    return _table(MEMBRANE_COLUMNS, [(h.layer, h.mean, h.std, h.sparse_pct) for h in hists])


def histogram_table(hists: list[MembraneHistogram]) -> str:
    rows = []
    for h in hists:
        for i, c in enumerate(h.counts):
            rows.append((h.layer, float(h.edges[i]), float(h.edges[i + 1]), int(c)))
    return _table(HISTOGRAM_COLUMNS, rows)


def importance_table(imp: np.ndarray) -> str:
    return _table(IMPORTANCE_COLUMNS, [(t + 1, float(v)) for t, v in enumerate(imp)])


def raster_table(spikes: list[np.ndarray], max_samples: int = 20) -> str:
    """Sparse raster: one row per emitted spike of the first ``max_samples`` samples."""
    rows = []
    for k, s in enumerate(spikes):
        for b, n, t in zip(*np.nonzero(np.asarray(s)[:max_samples])):
            rows.append((k, int(b), int(n), int(t) + 1))
    return _table(RASTER_COLUMNS, rows)
