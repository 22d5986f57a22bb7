"""Executable checks of the LIF stability results, a 1-WL oracle and cost accounting.

Everything here is a checker rather than an estimator: bounds such as the
input magnitude ``M`` or the maximum weight are taken from the configuration
under test, never inferred from data.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import SurrogateConfig, Tape, Tensor
from .config import TrainConfig
from .graph import SnapshotSequence
from .lif import LifParams, LifState, effective_tau, lif_step, tau_raw_for
from .model import ChronoSpike, FixedSampler, forward_encoder, xavier_uniform
from .spatial import SpatialLayer, layer_forward

BOUND_TOL = 1e-12
RATIO_TOL = 1e-9

DEFAULT_TAUS = (0.6, 1.0, 2.0, 5.0)
DEFAULT_MS = (0.5, 1.0, 5.0)
DEFAULT_VTHS = (0.5, 1.0, 2.0)


# ----------------------------------------------------------------------------
# single-neuron boundedness


def membrane_bound(tau: float, v_th: float, M: float, u_reset: float = 0.0) -> float:
    """``max{V_th, |u_r| + (M + |u_r|) / (tau (1 - |1 - 1/tau|))}``."""
    if not tau > 0.5:
        raise ValueError(f"the bound needs tau > 0.5, got {tau}")
    if M < 0:
        raise ValueError(f"input bound M must be non-negative, got {M}")
    lam = abs(1.0 - 1.0 / tau)
    sub = abs(u_reset) + (M + abs(u_reset)) / (tau * (1.0 - lam))
    return max(v_th, sub)


@dataclass
class BoundReport:
    tau: float
    v_th: float
    M: float
    u_reset: float
    steps: int
    stream: str
    bound: float
    max_abs_u: float

    @property
    def passed(self) -> bool:
        return self.max_abs_u <= self.bound + BOUND_TOL

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return (f"bound\t{flag}\ttau={self.tau:g}\tv_th={self.v_th:g}\tM={self.M:g}"
                f"\tstream={self.stream}\tmax|u|={self.max_abs_u:.6g}\tbound={self.bound:.6g}")


def _simulate_lanes(tau: np.ndarray, v_th: np.ndarray, u_reset: float, draw, steps: int) -> np.ndarray:
    """Run independent neurons (one per lane) through ``lif_step``; max |u| per lane.

    Both the pre-reset and post-reset potentials are tracked from step 1 on.
    """
    params = LifParams(Tensor(np.array([tau_raw_for(t) for t in tau])), Tensor(v_th), u_reset)
    state = LifState(Tensor(np.full((1, len(tau)), float(u_reset))))
    peak = np.zeros(len(tau))
    for step in range(steps):
        _, state = lif_step(state, Tensor(draw(step)[None, :]), params)
        np.maximum(peak, np.abs(state.u_pre.data[0]), out=peak)
        np.maximum(peak, np.abs(state.u.data[0]), out=peak)
    return peak


def verify_boundedness(taus=DEFAULT_TAUS, Ms=DEFAULT_MS, v_ths=DEFAULT_VTHS, *,
                       steps: int = 10_000, seeds: int = 20, u_reset: float = 0.0,
                       rng: np.random.Generator | None = None,
                       adversarial: bool = True) -> list[BoundReport]:
    """Simulate every grid point under random and worst-case input streams.

    The random stream draws ``h ~ U[-M, M]`` i.i.d. per step and seed; the
    adversarial stream holds ``h = +M``.  One report per grid point and stream,
    carrying the worst lane over all seeds.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    grid = [(t, m, v) for t in taus for m in Ms for v in v_ths]
    for t, _, _ in grid:
        if not t > 0.5:
            raise ValueError(f"grid contains tau={t}, outside tau > 0.5")
    tau_l = np.repeat([g[0] for g in grid], seeds).astype(np.float64)
    m_l = np.repeat([g[1] for g in grid], seeds).astype(np.float64)
    v_l = np.repeat([g[2] for g in grid], seeds).astype(np.float64)
    # the bound is evaluated at the tau actually realised by the positive map
    tau_eff = effective_tau(LifParams(Tensor(np.array([tau_raw_for(t) for t in tau_l])),
                                      Tensor(v_l))).data

    streams = {"uniform": lambda step: rng.uniform(-m_l, m_l)}
    if adversarial:
        streams["constant+M"] = lambda step: m_l
    reports = []
    for name, draw in streams.items():
        peak = _simulate_lanes(tau_l, v_l, u_reset, draw, steps)
        for g, (t, m, v) in enumerate(grid):
            lanes = slice(g * seeds, (g + 1) * seeds)
            bound = min(membrane_bound(te, v, m, u_reset) for te in tau_eff[lanes])
            reports.append(BoundReport(t, v, m, u_reset, steps, name, bound,
                                       float(peak[lanes].max())))
    return reports


# ----------------------------------------------------------------------------
# recurrent toy networks


@dataclass
class RecurrentNet:
    """``h_w(t+1) = sum_v W[w, v] s_v(t) + ext_w(t+1)``, one LIF neuron per row."""

    weights: np.ndarray
    tau: np.ndarray
    v_th: np.ndarray
    u_reset: float = 0.0
    alpha: float = 1.0

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def fan_in(self) -> int:
        return int((self.weights != 0).sum(axis=1).max())

    @property
    def w_max(self) -> float:
        return float(np.abs(self.weights).max())

    def lif(self, tape: Tape | None = None) -> LifParams:
        raw = np.array([tau_raw_for(t) for t in self.tau])
        tau_raw = tape.leaf(raw, "tau_raw") if tape else Tensor(raw)
        return LifParams(tau_raw, Tensor(self.v_th.copy()), self.u_reset,
                         SurrogateConfig(self.alpha), "hard")

    def effective_tau(self) -> np.ndarray:
        return effective_tau(self.lif()).data


def random_recurrent_net(n: int, fan_in: int, w_max: float, rng: np.random.Generator, *,
                         tau_range=(0.6, 5.0), v_th_range=(0.5, 2.0),
                         u_reset: float = 0.0, alpha: float = 1.0) -> RecurrentNet:
    W = np.zeros((n, n))
    for w in range(n):
        k = int(rng.integers(1, fan_in + 1))
        src = rng.choice(n, size=k, replace=False)
        W[w, src] = rng.uniform(-w_max, w_max, size=k)
    tau = rng.uniform(*tau_range, size=n)
    v_th = rng.uniform(*v_th_range, size=n)
    return RecurrentNet(W, tau, v_th, u_reset, alpha)


def network_bound(net: RecurrentNet, m_ext: float) -> float:
    """Largest per-neuron bound with ``M = S W_max + M_ext``."""
    M = net.fan_in * net.w_max + m_ext
    return max(membrane_bound(t, v, M, net.u_reset)
               for t, v in zip(net.effective_tau(), net.v_th))


def simulate_network(net: RecurrentNet, drive: np.ndarray, tape: Tape | None = None):
    """Run the net over ``drive`` (steps x n).

    Returns ``(pre_reset, post_reset)`` lists of per-step tensors.
    """
    lif = net.lif(tape)
    W_t = Tensor(net.weights.T)
    state = LifState(Tensor(np.full((1, net.size), float(net.u_reset))))
    s = Tensor(np.zeros((1, net.size)))
    pre, post = [], []
    for ext in drive:
        h = ad.add(ad.matmul(s, W_t), ext[None, :])
        s, state = lif_step(state, h, lif)
        pre.append(state.u_pre)
        post.append(state.u)
    return pre, post


@dataclass
class NetworkBoundReport:
    size: int
    fan_in: int
    w_max: float
    m_ext: float
    steps: int
    bound: float
    max_abs_u: float
    spike_rate: float
    stream: str = "uniform"

    @property
    def passed(self) -> bool:
        return self.max_abs_u <= self.bound + BOUND_TOL

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return (f"network\t{flag}\tn={self.size}\tfan_in={self.fan_in}\tw_max={self.w_max:.3g}"
                f"\tM_ext={self.m_ext:g}\tstream={self.stream}\tmax|u|={self.max_abs_u:.6g}"
                f"\tbound={self.bound:.6g}\trate={self.spike_rate:.3f}")


def verify_network_bound(n: int = 20, fan_in: int = 5, w_max: float = 0.5, m_ext: float = 1.0,
                         steps: int = 10_000, nets: int = 3,
                         rng: np.random.Generator | None = None) -> list[NetworkBoundReport]:
    """Each random net runs under an i.i.d. uniform drive and a constant ``+M_ext`` drive."""
    rng = rng if rng is not None else np.random.default_rng(0)
    reports = []
    for _ in range(nets):
        net = random_recurrent_net(n, fan_in, w_max, rng)
        streams = {"uniform": rng.uniform(-m_ext, m_ext, size=(steps, n)),
                   "constant+M": np.full((steps, n), m_ext)}
        for name, drive in streams.items():
            pre, post = simulate_network(net, drive)
            peak = max(max(np.abs(a.data).max() for a in pre), max(np.abs(a.data).max() for a in post))
            fired = np.mean([(a.data >= net.v_th).mean() for a in pre])
            reports.append(NetworkBoundReport(n, net.fan_in, net.w_max, m_ext, steps,
                                              network_bound(net, m_ext), float(peak),
                                              float(fired), name))
    return reports


# ----------------------------------------------------------------------------
# gradient contraction


def contraction_factor(tau, alpha: float, weights) -> float:
    """``max |1 - 1/tau| + alpha * max_w sum_v |W[w, v]|``.

    ``weights[w, v]`` is the synapse from ``v`` onto ``w``; for a layer applied
    as ``x @ W`` pass ``W.T``.
    """
    tau = np.asarray(tau, dtype=np.float64)
    lam = np.abs(1.0 - 1.0 / tau).max() if tau.size else 0.0
    W = np.abs(np.asarray(weights, dtype=np.float64))
    row = W.sum(axis=1).max() if W.size else 0.0
    return float(lam + alpha * row)


def model_contraction_factors(model: ChronoSpike) -> dict[str, float]:
    """Diagnostic factor per spatial layer, with the self weights playing ``W``."""
    out = {}
    for k in range(model.num_layers):
        p = model.params
        tau = effective_tau(LifParams(Tensor(p[f"lif.{k}.tau_raw"]), Tensor(p[f"lif.{k}.v_th"]))).data
        out[f"layer{k}"] = contraction_factor(tau, model.cfg.alpha, p[f"spatial.{k}.w_s"].T)
    return out


@dataclass
class ContractionReport:
    lambda_max: float
    alpha: float
    weight_sum: float
    rho: float
    horizon: int
    norms: list[float]
    ratios: list[float]
    skipped: bool = False
    finite: bool = True

    @property
    def envelope_ok(self) -> bool:
        last = self.norms[-1]
        lag = len(self.norms) - 1
        return all(n <= self.rho ** (lag - i) * last + RATIO_TOL for i, n in enumerate(self.norms))

    @property
    def passed(self) -> bool:
        if self.skipped:
            return self.finite
        return self.finite and all(r <= self.rho + RATIO_TOL for r in self.ratios) and self.envelope_ok

    def line(self) -> str:
        flag = "SKIP" if self.skipped else ("PASS" if self.passed else "FAIL")
        worst = max(self.ratios) if self.ratios else 0.0
        return (f"contraction\t{flag}\trho={self.rho:.6g}\tlambda_max={self.lambda_max:.4g}"
                f"\talpha={self.alpha:g}\tmax_row_sum={self.weight_sum:.4g}"
                f"\tworst_ratio={worst:.6g}\thorizon={self.horizon}")


def membrane_gradients(net: RecurrentNet, drive: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """``dL/du(t)`` for ``L = coeffs . u(t')`` with ``t'`` the last drive step.

    ``u(t)`` is the post-update, pre-reset potential; rows are time steps.
    """
    tape = Tape()
    pre, _ = simulate_network(net, drive, tape)
    loss = ad.sum(ad.mul(pre[-1], coeffs[None, :]))
    grads = tape.backward(loss)
    return np.stack([grads[u][0] for u in pre])


def verify_contraction(net: RecurrentNet, horizon: int = 30, m_ext: float = 1.5,
                       rng: np.random.Generator | None = None) -> ContractionReport:
    """Backpropagate a random linear loss at ``t' = horizon`` and measure ``||Delta(t)||_1``."""
    rng = rng if rng is not None else np.random.default_rng(0)
    tau = net.effective_tau()
    lam = float(np.abs(1.0 - 1.0 / tau).max())
    wsum = float(np.abs(net.weights).sum(axis=1).max())
    rho = contraction_factor(tau, net.alpha, net.weights)
    drive = rng.uniform(-m_ext, m_ext, size=(horizon, net.size)) + net.v_th * 0.5
    coeffs = rng.normal(size=net.size)
    delta = membrane_gradients(net, drive, coeffs)
    norms = np.abs(delta).sum(axis=1)
    finite = bool(np.all(np.isfinite(norms)))
    ratios = []
    for t in range(horizon - 1):
        nxt = norms[t + 1]
        ratios.append(float(norms[t] / nxt) if nxt > 0 else (0.0 if norms[t] == 0 else np.inf))
    return ContractionReport(lam, net.alpha, wsum, rho, horizon, norms.tolist(), ratios,
                             skipped=rho >= 1.0, finite=finite)


def random_contractive_net(n: int, rng: np.random.Generator, *, fan_in: int = 5,
                           alpha: float = 1.0, target: tuple[float, float] = (0.3, 0.95)) -> RecurrentNet:
    """A random net rescaled so its factor lands inside ``target``.

    Time constants are kept at or above 1 so the spike-to-membrane gain
    ``W / tau`` never exceeds ``W``.
    """
    net = random_recurrent_net(n, fan_in, 1.0, rng, tau_range=(1.0, 3.0), alpha=alpha)
    tau = net.effective_tau()
    lam = float(np.abs(1.0 - 1.0 / tau).max())
    goal = rng.uniform(max(target[0], lam + 0.05), target[1])
    wsum = np.abs(net.weights).sum(axis=1).max()
    net.weights *= (goal - lam) / (alpha * wsum)
    return net


def verify_contraction_suite(nets: int = 20, n: int = 20, horizon: int = 30,
                             rng: np.random.Generator | None = None) -> list[ContractionReport]:
    rng = rng if rng is not None else np.random.default_rng(0)
    return [verify_contraction(random_contractive_net(n, rng), horizon, rng=rng) for _ in range(nets)]


# ----------------------------------------------------------------------------
# 1-WL colour refinement


def _adjacency(n: int, edges) -> list[list[int]]:
    adj = [[] for _ in range(n)]
    for u, v in edges:
        u, v = int(u), int(v)
        if u == v:
            raise ValueError("self-loops are not allowed in a simple graph")
        adj[u].append(v)
        adj[v].append(u)
    return adj


def _digest(obj) -> str:
    return hashlib.blake2b(repr(obj).encode(), digest_size=8).hexdigest()


def wl_refinement(n: int, edges, rounds: int | None = None) -> list[Counter]:
    """Colour histogram after each round, round 0 being the uniform colouring.

    Colours are content hashes, so histograms of different graphs are directly
    comparable round by round.
    """
    adj = _adjacency(n, edges)
    rounds = n if rounds is None else rounds
    colors = ["0"] * n
    hist = [Counter(colors)]
    for _ in range(rounds):
        colors = [_digest((colors[v], tuple(sorted(colors[u] for u in adj[v])))) for v in range(n)]
        hist.append(Counter(colors))
    return hist


def wl_partitions(n: int, edges, rounds: int | None = None) -> list[frozenset]:
    """The node partition induced by the hashed colours after each round."""
    adj = _adjacency(n, edges)
    rounds = n if rounds is None else rounds
    colors = ["0"] * n
    parts = [_partition(colors)]
    for _ in range(rounds):
        colors = [_digest((colors[v], tuple(sorted(colors[u] for u in adj[v])))) for v in range(n)]
        parts.append(_partition(colors))
    return parts


def _partition(colors) -> frozenset:
    groups: dict = {}
    for v, c in enumerate(colors):
        groups.setdefault(c, []).append(v)
    return frozenset(frozenset(g) for g in groups.values())


def wl_distinguishes(g1: tuple[int, list], g2: tuple[int, list]) -> bool:
    """True when some refinement round yields different histograms."""
    rounds = max(g1[0], g2[0])
    h1 = wl_refinement(g1[0], g1[1], rounds)
    h2 = wl_refinement(g2[0], g2[1], rounds)
    return any(a != b for a, b in zip(h1, h2))


@dataclass
class SeparationResult:
    separated: bool
    gamma: float | None
    skipped: bool
    counts: dict = field(default_factory=dict)

    def line(self) -> str:
        flag = "SKIP" if self.skipped else ("PASS" if self.separated else "FAIL")
        return f"wl_separation\t{flag}\tgamma={self.gamma}"


def _padded_neighbors(n: int, edges) -> np.ndarray:
    """Neighbour ids padded with ``n`` (an all-zero row) to the max degree."""
    adj = _adjacency(n, edges)
    width = max(1, max((len(a) for a in adj), default=0))
    out = np.full((n, width), n, dtype=np.int64)
    for v, a in enumerate(adj):
        out[v, :len(a)] = a
    return out


def spike_counts(n: int, edges, gamma: float, *, window: int = 8, dims=(4, 16, 16),
                 tau: float = 2.0, seed: int = 0) -> np.ndarray:
    """Per-node spike counts of a sum-aggregation spiking encoder.

    Inputs are the constant feature ``gamma`` on every node; membranes carry
    over the whole window so counts grade with input strength.  Returns an
    ``(n, sum(dims[1:]))`` integer array, one block per layer.
    """
    rng = np.random.default_rng(seed)
    layers, lifs = [], []
    for d_prev, d in zip(dims[:-1], dims[1:]):
        ws = [Tensor(xavier_uniform(rng, d_prev, d)) for _ in range(4)]
        layers.append(SpatialLayer(*ws, Tensor(xavier_uniform(rng, d, d)), heads=4, aggregator="sum"))
        lifs.append(LifParams.init(d, tau=tau))
    nbr = _padded_neighbors(n, edges)
    x = np.full((n, dims[0]), float(gamma))
    states = [None] * len(layers)
    counts = [np.zeros((n, d)) for d in dims[1:]]
    for _ in range(window):
        h = x
        for k, (layer, lif) in enumerate(zip(layers, lifs)):
            padded = np.vstack([h, np.zeros((1, h.shape[1]))])
            s, states[k], _ = layer_forward(Tensor(h), Tensor(padded[nbr]), layer, lif, state=states[k])
            counts[k] += s.data
            h = s.data
    return np.concatenate(counts, axis=1).astype(np.int64)


def _multiset(counts: np.ndarray) -> list[tuple]:
    return sorted(map(tuple, counts.tolist()))


def wl_separation_check(g1: tuple[int, list], g2: tuple[int, list],
                        gammas=(0.5, 1.0, 2.0, 4.0), window: int = 8, seed: int = 0) -> SeparationResult:
    """Search the gamma grid for spike-count multisets that tell the graphs apart.

    Skipped (not failed) when 1-WL itself cannot distinguish the pair.
    """
    if not wl_distinguishes(g1, g2):
        return SeparationResult(False, None, True)
    seen = {}
    for gamma in gammas:
        a = _multiset(spike_counts(*g1, gamma, window=window, seed=seed))
        b = _multiset(spike_counts(*g2, gamma, window=window, seed=seed))
        seen[gamma] = (a, b)
        if a != b:
            return SeparationResult(True, gamma, False, seen)
    return SeparationResult(False, None, False, seen)


def star(k: int) -> tuple[int, list]:
    return k + 1, [(0, i) for i in range(1, k + 1)]


def path(n: int) -> tuple[int, list]:
    return n, [(i, i + 1) for i in range(n - 1)]


def cycle(n: int) -> tuple[int, list]:
    return n, [(i, (i + 1) % n) for i in range(n)]


def two_triangles() -> tuple[int, list]:
    return 6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]


def complete(n: int) -> tuple[int, list]:
    return n, [(i, j) for i in range(n) for j in range(i + 1, n)]


# ----------------------------------------------------------------------------
# complexity accounting


@dataclass
class ComplexityEstimate:
    spatial_ops: int      # N S K d^2 T
    attention_ops: int    # N d^2 T^2
    memory: int           # B T d + B S K d
    full_memory: int      # N T d, all embeddings held at once

    @property
    def time_ops(self) -> int:
        return self.spatial_ops + self.attention_ops


def complexity_estimate(N: int, T: int, S: int, K: int, d: int, B: int) -> ComplexityEstimate:
    for name, v in (("N", N), ("T", T), ("S", S), ("K", K), ("d", d), ("B", B)):
        if int(v) != v or v <= 0:
            raise ValueError(f"{name} must be a positive integer, got {v}")
    return ComplexityEstimate(N * S * K * d * d * T, N * d * d * T * T,
                              B * T * d + B * S * K * d, N * T * d)


def random_sequence(N: int, T: int, d_in: int, rng: np.random.Generator,
                    avg_degree: float = 4.0) -> SnapshotSequence:
    edges = []
    m = max(1, int(N * avg_degree / 2))
    for _ in range(T):
        u = rng.integers(0, N, size=m)
        v = rng.integers(0, N, size=m)
        keep = u != v
        edges.append(np.stack([u[keep], v[keep]], axis=1))
    feats = rng.normal(size=(T, N, d_in))
    labels = rng.integers(0, 2, size=N)
    return SnapshotSequence(N, edges, feats, labels, {"train": np.arange(N)})


def measure_macs(N: int, T: int, cfg: TrainConfig | None = None, d_in: int = 8, seed: int = 0) -> int:
    """Multiply-accumulates of one evaluation-mode encoder pass over all ``N`` nodes."""
    cfg = cfg or TrainConfig(hidden=(16, 8), heads=4, temporal_heads=4, t_max=max(32, T))
    rng = np.random.default_rng(seed)
    seq = random_sequence(N, T, d_in, rng)
    model = ChronoSpike(cfg, d_in, 2, np.random.default_rng([seed, 1]))
    with ad.count_macs() as counter:
        forward_encoder(model.bind(None), seq, np.arange(N), training=False,
                        sampler=FixedSampler(seed))
    return counter.total


def r_squared(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss_tot = np.sum((y - y.mean()) ** 2)
    return float(1.0 - np.sum(resid ** 2) / ss_tot) if ss_tot > 0 else 1.0


@dataclass
class LinearityReport:
    axis: str
    grid: list[int]
    macs: list[int]
    r2: float

    @property
    def passed(self) -> bool:
        return self.r2 > 0.99

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        pts = ",".join(f"{g}:{m}" for g, m in zip(self.grid, self.macs))
        return f"macs_vs_{self.axis}\t{flag}\tR2={self.r2:.6f}\t{pts}"


def mac_linearity(n_grid=(50, 100, 150, 200), t_grid=(2, 4, 6, 8), fixed_T: int = 4,
                  fixed_N: int = 100, seed: int = 0) -> list[LinearityReport]:
    by_n = [measure_macs(n, fixed_T, seed=seed) for n in n_grid]
    by_t = [measure_macs(fixed_N, t, seed=seed) for t in t_grid]
    return [LinearityReport("N", list(n_grid), by_n, r_squared(n_grid, by_n)),
            LinearityReport("T", list(t_grid), by_t, r_squared(t_grid, by_t))]


# ----------------------------------------------------------------------------
# full suite


def run_suite(rng_seed: int = 0, quick: bool = False) -> list[tuple[str, bool, str]]:
    """Every check as ``(name, passed, record line)``; ``quick`` shrinks step counts."""
    steps = 1_000 if quick else 10_000
    seeds = 5 if quick else 20
    out = []
    for r in verify_boundedness(steps=steps, seeds=seeds, rng=np.random.default_rng(rng_seed)):
        out.append(("boundedness", r.passed, r.line()))
    for r in verify_network_bound(steps=steps, rng=np.random.default_rng([rng_seed, 1])):
        out.append(("network_bound", r.passed, r.line()))
    for r in verify_contraction_suite(rng=np.random.default_rng([rng_seed, 2])):
        out.append(("contraction", r.passed, r.line()))
    d1 = wl_distinguishes(star(3), path(4))
    d2 = wl_distinguishes(two_triangles(), cycle(6))
    out.append(("wl_refinement", d1 and not d2,
                f"wl_refinement\t{'PASS' if d1 and not d2 else 'FAIL'}"
                f"\tS3_vs_P4_distinguished={d1}\t2K3_vs_C6_distinguished={d2}"))
    sep = wl_separation_check(star(3), path(4))
    out.append(("wl_separation", sep.separated, sep.line()))
    for r in mac_linearity():
        out.append(("complexity", r.passed, r.line()))
    return out
