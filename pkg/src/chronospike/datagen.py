"""Seeded synthetic dynamic graphs with a planted migration signal.

Nodes start in one of ``C`` communities.  At ``switch_step`` a fraction of
them migrate to a different community, and the label is the community held
after the switch.  Features at each step are the current community's one-hot
code plus Gaussian noise, and edges follow the current communities, so a
single snapshot is a noisy view while the post-switch history pins the label.

Each noisy one-hot entry is repeated over ``block_width`` columns.  The copies
carry no extra information but give the spiking layers enough input drive to
fire at their default initialisation; with only ``C`` columns the membranes
rarely reach threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import SnapshotSequence, save_snapshots


@dataclass(frozen=True)
class GenConfig:
    num_nodes: int = 200
    num_steps: int = 10
    num_classes: int = 4
    p_intra: float = 0.03
    p_inter: float = 0.01
    switch_step: int = 5
    feature_noise: float = 0.6
    migrate_fraction: float = 0.1
    block_width: int = 6
    train_fraction: float = 0.5
    val_fraction: float = 0.2
    seed: int = 7

    def __post_init__(self):
        for name in ("p_intra", "p_inter", "migrate_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not 2 <= self.num_classes <= self.num_nodes:
            raise ValueError("need 2 <= num_classes <= num_nodes")
        if not 0 <= self.switch_step <= self.num_steps:
            raise ValueError("switch_step must lie in [0, num_steps]")
        if self.block_width < 1:
            raise ValueError("block_width must be at least 1")
        if self.feature_noise < 0:
            raise ValueError("feature_noise must be non-negative")
        if self.train_fraction + self.val_fraction >= 1.0:
            raise ValueError("train and val fractions must leave room for a test split")


@dataclass
class Planted:
    seq: SnapshotSequence
    initial: np.ndarray      # community before the switch
    final: np.ndarray        # community after the switch (the label)
    community: np.ndarray    # (T, N) community held at each step


def _sbm_edges(comm: np.ndarray, p_in: float, p_out: float, rng) -> np.ndarray:
    n = len(comm)
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(comm[iu] == comm[ju], p_in, p_out)
    keep = rng.random(len(iu)) < prob
    pairs = np.stack([iu[keep], ju[keep]], axis=1)
    # every node gets at least one edge: attach isolated nodes inside their community
    deg = np.bincount(pairs.reshape(-1), minlength=n)
    extra = []
    for v in np.flatnonzero(deg == 0):
        mates = np.flatnonzero((comm == comm[v]) & (np.arange(n) != v))
        pool = mates if len(mates) else np.flatnonzero(np.arange(n) != v)
        u = int(rng.choice(pool))
        extra.append((min(u, v), max(u, v)))
    if extra:
        pairs = np.concatenate([pairs, np.array(extra, dtype=np.int64)])
    return np.unique(pairs, axis=0)


def generate(cfg: GenConfig = GenConfig()) -> Planted:
    rng = np.random.default_rng(cfg.seed)
    N, T, C = cfg.num_nodes, cfg.num_steps, cfg.num_classes
    initial = rng.permutation(np.arange(N) % C)
    final = initial.copy()
    movers = rng.permutation(N)[: int(round(cfg.migrate_fraction * N))]
    final[movers] = (initial[movers] + rng.integers(1, C, len(movers))) % C

    community = np.empty((T, N), dtype=np.int64)
    edges, feats = [], []
    w = cfg.block_width
    for t in range(T):
        comm = initial if t < cfg.switch_step else final
        community[t] = comm
        edges.append(_sbm_edges(comm, cfg.p_intra, cfg.p_inter, rng))
        x = np.eye(C)[comm] + rng.normal(0.0, cfg.feature_noise, size=(N, C))
        x = np.repeat(x, w, axis=1)
        feats.append(x)

    order = rng.permutation(N)
    n_tr = int(round(cfg.train_fraction * N))
    n_va = int(round(cfg.val_fraction * N))
    splits = {
        "train": np.sort(order[:n_tr]),
        "val": np.sort(order[n_tr:n_tr + n_va]),
        "test": np.sort(order[n_tr + n_va:]),
    }
    seq = SnapshotSequence(N, edges, np.stack(feats), final, splits)
    return Planted(seq, initial, final, community)


def write_dataset(cfg: GenConfig, out_dir: str) -> Planted:
    planted = generate(cfg)
    save_snapshots(planted.seq, out_dir)
    return planted
