"""Snapshot sequences, cumulative adjacency, and hybrid neighbour sampling.

Time steps are 0-based throughout: step ``t`` has edge set ``edges[t]`` and
the cumulative graph at step ``t`` is the union of ``edges[0..t-1]`` (empty
at ``t = 0``).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

SPLIT_NAMES = ("train", "val", "test")


class LoadError(ValueError):
    """Malformed dataset file; message names the file and line."""


@dataclass(frozen=True)
class Csr:
    """Compressed neighbour lists: ``indices[indptr[v]:indptr[v+1]]``."""

    indptr: np.ndarray
    indices: np.ndarray

    @classmethod
    def from_pairs(cls, n: int, pairs: np.ndarray) -> "Csr":
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        if len(pairs):
            pairs = np.unique(pairs, axis=0)  # sorts by (src, dst) and dedups
        counts = np.bincount(pairs[:, 0], minlength=n) if len(pairs) else np.zeros(n, np.int64)
        indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        return cls(indptr, pairs[:, 1].copy() if len(pairs) else np.zeros(0, np.int64))

    def degree(self, v=None) -> np.ndarray:
        deg = np.diff(self.indptr)
        return deg if v is None else deg[v]

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def as_sets(self) -> list[set[int]]:
        return [set(self.neighbors(v).tolist()) for v in range(len(self.indptr) - 1)]


@dataclass(frozen=True)
class CumulativeAdjacency:
    step: int
    adj: Csr


@dataclass
class SnapshotSequence:
    num_nodes: int
    edges: list[np.ndarray]            # per step, (E_t, 2) sorted unique int pairs
    features: np.ndarray               # (T, N, d)
    labels: np.ndarray = None          # (N,), -1 where unlabeled
    splits: dict[str, np.ndarray] = field(default_factory=dict)
    directed: bool = False

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 3 or self.features.shape[1] != self.num_nodes:
            raise ValueError(
                f"features must be (T, N={self.num_nodes}, d), got {self.features.shape}")
        if len(self.edges) != self.features.shape[0]:
            raise ValueError(f"{len(self.edges)} edge steps vs {self.features.shape[0]} feature steps")
        clean = []
        for t, e in enumerate(self.edges):
            e = np.asarray(e, dtype=np.int64).reshape(-1, 2)
            if len(e) and (e.min() < 0 or e.max() >= self.num_nodes):
                raise ValueError(f"step {t}: node id out of range [0, {self.num_nodes})")
            clean.append(np.unique(e, axis=0) if len(e) else e)
        self.edges = clean
        if self.labels is None:
            self.labels = np.full(self.num_nodes, -1, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)

    @property
    def num_steps(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[2]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if (self.labels >= 0).any() else 0

    def _lookup_pairs(self, e: np.ndarray) -> np.ndarray:
        if self.directed or not len(e):
            return e
        return np.concatenate([e, e[:, ::-1]])

    @cached_property
    def current(self) -> list[Csr]:
        """Neighbour lists of each snapshot."""
        return [Csr.from_pairs(self.num_nodes, self._lookup_pairs(e)) for e in self.edges]

    @cached_property
    def cumulative(self) -> list[Csr]:
        """Cumulative neighbour lists for steps ``0..T`` (``T + 1`` entries).

        Built incrementally: step ``t`` adds only the edges of step ``t - 1``.
        """
        sets: list[set[int]] = [set() for _ in range(self.num_nodes)]
        out = []
        for t in range(self.num_steps + 1):
            if t > 0:
                for u, v in self._lookup_pairs(self.edges[t - 1]).tolist():
                    sets[u].add(v)
            out.append(_csr_from_sets(sets))
        return out

    def last_only(self) -> "SnapshotSequence":
        """One-step sequence holding only the final snapshot (static ablation)."""
        return SnapshotSequence(
            self.num_nodes, [self.edges[-1]], self.features[-1:], self.labels.copy(),
            {k: v.copy() for k, v in self.splits.items()}, self.directed,
        )


def _csr_from_sets(sets: list[set[int]]) -> Csr:
    counts = np.fromiter((len(s) for s in sets), dtype=np.int64, count=len(sets))
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    indices = np.fromiter(
        (u for s in sets for u in sorted(s)), dtype=np.int64, count=int(indptr[-1]))
    return Csr(indptr, indices)


def build_cumulative(seq: SnapshotSequence, t: int) -> CumulativeAdjacency:
    if not 0 <= t <= seq.num_steps:
        raise IndexError(f"step {t} outside [0, {seq.num_steps}]")
    return CumulativeAdjacency(t, seq.cumulative[t])


# ----------------------------------------------------------------------------
# loading / saving


def standardize(features: np.ndarray) -> np.ndarray:
    """Zero mean, unit variance per column over all steps and nodes."""
    flat = features.reshape(-1, features.shape[-1])
    mu = flat.mean(axis=0)
    sd = flat.std(axis=0)
    sd[sd == 0] = 1.0
    return (features - mu) / sd


def _rows(path: str):
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if line and not line.startswith("#"):
                yield lineno, line.split()


def _read_features(path: str) -> np.ndarray:
    rows = _rows(path)
    try:
        lineno, head = next(rows)
    except StopIteration:
        raise LoadError(f"{path}: empty file") from None
    if len(head) != 3:
        raise LoadError(f"{path}:{lineno}: header must be 'T N d' or 'static N d'")
    try:
        static = head[0] == "static"
        steps = 1 if static else int(head[0])
        n, d = int(head[1]), int(head[2])
    except ValueError:
        raise LoadError(f"{path}:{lineno}: bad header {head}") from None
    block = np.empty((steps * n, d))
    i = 0
    for lineno, parts in rows:
        if len(parts) != d:
            raise LoadError(f"{path}:{lineno}: expected {d} values, got {len(parts)}")
        if i >= steps * n:
            raise LoadError(f"{path}:{lineno}: more rows than header announces")
        try:
            block[i] = [float(x) for x in parts]
        except ValueError:
            raise LoadError(f"{path}:{lineno}: non-numeric feature value") from None
        i += 1
    if i != steps * n:
        raise LoadError(f"{path}: expected {steps * n} feature rows, found {i}")
    feats = block.reshape(steps, n, d)
    return feats, static


def load_snapshots(dataset_dir: str, directed: bool = False, num_steps: int | None = None,
                   standardize_features: bool = True) -> SnapshotSequence:
    """Read ``edges.tsv``, ``features.tsv``, ``labels.tsv`` and ``splits.tsv``."""
    feats, static = _read_features(os.path.join(dataset_dir, "features.tsv"))
    n = feats.shape[1]

    epath = os.path.join(dataset_dir, "edges.tsv")
    triples = []
    for lineno, parts in _rows(epath):
        if len(parts) != 3:
            raise LoadError(f"{epath}:{lineno}: expected 't u v'")
        try:
            t, u, v = (int(x) for x in parts)
        except ValueError:
            raise LoadError(f"{epath}:{lineno}: non-integer field") from None
        if u < 0 or u >= n or v < 0 or v >= n:
            raise LoadError(f"{epath}:{lineno}: node id out of range [0, {n})")
        if t < 0:
            raise LoadError(f"{epath}:{lineno}: unknown timestep {t}")
        triples.append((lineno, t, u, v))

    if static:
        steps = num_steps or (max((t for _, t, _, _ in triples), default=0) + 1)
        feats = np.repeat(feats, steps, axis=0)
    steps = feats.shape[0]
    per_step: list[list[tuple[int, int]]] = [[] for _ in range(steps)]
    for lineno, t, u, v in triples:
        if t >= steps:
            raise LoadError(f"{epath}:{lineno}: unknown timestep {t} (T={steps})")
        per_step[t].append((u, v))

    labels = np.full(n, -1, dtype=np.int64)
    lpath = os.path.join(dataset_dir, "labels.tsv")
    if os.path.exists(lpath):
        for lineno, parts in _rows(lpath):
            try:
                node, cls = int(parts[0]), int(parts[1])
            except (ValueError, IndexError):
                raise LoadError(f"{lpath}:{lineno}: expected 'node class'") from None
            if not 0 <= node < n or cls < 0:
                raise LoadError(f"{lpath}:{lineno}: node or class out of range")
            labels[node] = cls

    splits: dict[str, list[int]] = {k: [] for k in SPLIT_NAMES}
    spath = os.path.join(dataset_dir, "splits.tsv")
    if os.path.exists(spath):
        for lineno, parts in _rows(spath):
            if len(parts) != 2 or parts[1] not in splits:
                raise LoadError(f"{spath}:{lineno}: expected 'node train|val|test'")
            node = int(parts[0])
            if not 0 <= node < n:
                raise LoadError(f"{spath}:{lineno}: node id out of range [0, {n})")
            splits[parts[1]].append(node)

    if standardize_features:
        feats = standardize(feats)
    return SnapshotSequence(
        n, [np.array(p, dtype=np.int64).reshape(-1, 2) for p in per_step], feats, labels,
        {k: np.array(v, dtype=np.int64) for k, v in splits.items()}, directed,
    )


def save_snapshots(seq: SnapshotSequence, dataset_dir: str) -> None:
    """Write a sequence in the on-disk format read by :func:`load_snapshots`."""
    os.makedirs(dataset_dir, exist_ok=True)
    with open(os.path.join(dataset_dir, "edges.tsv"), "w") as fh:
        for t, e in enumerate(seq.edges):
            for u, v in e.tolist():
                fh.write(f"{t}\t{u}\t{v}\n")
    with open(os.path.join(dataset_dir, "features.tsv"), "w") as fh:
        T, n, d = seq.features.shape
        fh.write(f"{T}\t{n}\t{d}\n")
        for row in seq.features.reshape(-1, d):
            fh.write("\t".join(repr(float(x)) for x in row) + "\n")
    with open(os.path.join(dataset_dir, "labels.tsv"), "w") as fh:
        for v, c in enumerate(seq.labels.tolist()):
            if c >= 0:
                fh.write(f"{v}\t{c}\n")
    with open(os.path.join(dataset_dir, "splits.tsv"), "w") as fh:
        for name in SPLIT_NAMES:
            for v in np.sort(seq.splits.get(name, np.zeros(0, np.int64))).tolist():
                fh.write(f"{v}\t{name}\n")


# ----------------------------------------------------------------------------
# hybrid sampling


@dataclass(frozen=True)
class NeighborSample:
    """Sampled neighbours for a batch of centres at one step.

    ``ids`` and ``historical`` have shape ``(len(centers), S)``.
    """

    centers: np.ndarray
    step: int
    ids: np.ndarray
    historical: np.ndarray


def _draw_from(adj: Csr, centers: np.ndarray, want: np.ndarray, rng: np.random.Generator):
    """For each centre, an (M, S) table of picks from its neighbour list.

    Row ``m`` only needs its first ``want[m]`` entries.  Rows whose pool is at
    least ``want[m]`` draw without replacement; smaller pools draw with.
    """
    m = len(centers)
    S = int(want.max()) if m else 0
    if S == 0 or len(adj.indices) == 0:
        return np.zeros((m, S), dtype=np.int64)
    deg = adj.degree(centers)
    width = max(int(deg.max()), S)
    keys = rng.random((m, width))
    keys[np.arange(width)[None, :] >= deg[:, None]] = np.inf
    distinct = np.argsort(keys, axis=1, kind="stable")[:, :S]
    repeated = np.floor(rng.random((m, S)) * deg[:, None]).astype(np.int64)
    pos = np.where((deg >= want)[:, None], distinct, repeated)
    flat = np.clip(adj.indptr[centers][:, None] + pos, 0, len(adj.indices) - 1)
    return adj.indices[flat]


def sample_batch(seq: SnapshotSequence, centers, t: int, S: int, p: float,
                 rng: np.random.Generator) -> NeighborSample:
    """Hybrid sample of ``S`` neighbours for every centre at step ``t``.

    Each slot picks the cumulative graph with probability ``p``, else the
    current snapshot; an empty source falls back to the other, and if both
    are empty the slot holds the centre itself.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"sampling probability must lie in [0, 1], got {p}")
    centers = np.asarray(centers, dtype=np.int64).reshape(-1)
    cur, hist = seq.current[t], seq.cumulative[t]
    m = len(centers)
    want_hist = rng.random((m, S)) < p
    dh, dc = hist.degree(centers), cur.degree(centers)
    want_hist = np.where((dh == 0)[:, None], False, want_hist)
    want_hist = np.where(((dc == 0) & (dh > 0))[:, None], True, want_hist)

    n_hist = want_hist.sum(axis=1)
    picks_h = _draw_from(hist, centers, np.maximum(n_hist, 1), rng)
    picks_c = _draw_from(cur, centers, np.maximum(S - n_hist, 1), rng)
    # the r-th historical slot takes the r-th historical pick, likewise for current
    rank_h = np.cumsum(want_hist, axis=1) - 1
    rank_c = np.cumsum(~want_hist, axis=1) - 1
    rows = np.arange(m)[:, None]
    ids = np.where(
        want_hist,
        picks_h[rows, np.clip(rank_h, 0, picks_h.shape[1] - 1)],
        picks_c[rows, np.clip(rank_c, 0, picks_c.shape[1] - 1)],
    )
    isolated = (dh == 0) & (dc == 0)
    ids[isolated] = centers[isolated, None]
    return NeighborSample(centers, t, ids, want_hist & ~isolated[:, None])


def sample_neighbors(seq: SnapshotSequence, v: int, t: int, S: int, p: float,
                     rng: np.random.Generator) -> NeighborSample:
    """Single-centre form of :func:`sample_batch`."""
    return sample_batch(seq, [v], t, S, p, rng)


def sample_tree(seq: SnapshotSequence, batch, t: int, fanouts, p: float,
                rng: np.random.Generator) -> list[np.ndarray]:
    """Top-down neighbourhood tree for a batch at step ``t``.

    Returns ``levels``: ``levels[0]`` is the batch (shape ``(B,)``) and
    ``levels[j]`` has shape ``(B * S_1 * ... * S_j,)``; the children of entry
    ``i`` of level ``j`` are ``levels[j+1][i*S_{j+1}:(i+1)*S_{j+1}]``.
    """
    levels = [np.asarray(batch, dtype=np.int64)]
    for S in fanouts:
        levels.append(sample_batch(seq, levels[-1], t, S, p, rng).ids.reshape(-1))
    return levels
