"""Parameter container, encoder forward pass, classifier head and parameter accounting."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import SurrogateConfig, Tape, Tensor
from .config import TrainConfig
from .graph import SnapshotSequence, sample_batch
from .lif import LifParams, tau_raw_for
from .spatial import SpatialLayer, layer_forward
from .temporal import TransformerBlock, add_positional, encode_sequence


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class ChronoSpike:
    """All trainable arrays of the model, keyed by dotted name."""

    def __init__(self, cfg: TrainConfig, d_in: int, num_classes: int,
                 rng: np.random.Generator | None = None):
        self.cfg = cfg
        self.d_in = int(d_in)
        self.num_classes = int(num_classes)
        rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        p: OrderedDict[str, np.ndarray] = OrderedDict()
        d_prev = self.d_in
        for k, d in enumerate(cfg.hidden):
            for w in ("w_s", "w_q", "w_k", "w_n"):
                p[f"spatial.{k}.{w}"] = xavier_uniform(rng, d_prev, d)
            p[f"spatial.{k}.w_o"] = xavier_uniform(rng, d, d)
            p[f"lif.{k}.tau_raw"] = np.full(d, tau_raw_for(cfg.tau_init))
            p[f"lif.{k}.v_th"] = np.full(d, float(cfg.vth_init))
            d_prev = d
        d = cfg.hidden[-1]
        p["temporal.pos"] = rng.normal(0.0, 0.02, size=(cfg.t_max, d))
        for w in ("q", "k", "v", "o"):
            p[f"temporal.w_{w}"] = xavier_uniform(rng, d, d)
            p[f"temporal.b_{w}"] = np.zeros(d)
        p["temporal.ln_gamma"] = np.ones(d)
        p["temporal.ln_beta"] = np.zeros(d)
        p["temporal.w_ff1"] = xavier_uniform(rng, d, cfg.ffn_mult * d)
        p["temporal.b_ff1"] = np.zeros(cfg.ffn_mult * d)
        p["temporal.w_ff2"] = xavier_uniform(rng, cfg.ffn_mult * d, d)
        p["temporal.b_ff2"] = np.zeros(d)
        p["classifier.w"] = xavier_uniform(rng, d, self.num_classes)
        p["classifier.b"] = np.zeros(self.num_classes)
        self.params = p

    @property
    def num_layers(self) -> int:
        return len(self.cfg.hidden)

    def bind(self, tape: Tape | None = None) -> "Bound":
        """Wrap every array as a tensor (a tape leaf when ``tape`` is given)."""
        if tape is None:
            ts = OrderedDict((k, Tensor(v, name=k)) for k, v in self.params.items())
        else:
            ts = OrderedDict((k, tape.leaf(v, name=k)) for k, v in self.params.items())
        return Bound(self, ts)


@dataclass
class Bound:
    model: ChronoSpike
    t: OrderedDict

    def spatial(self, k: int) -> SpatialLayer:
        g = self.t
        return SpatialLayer(
            g[f"spatial.{k}.w_s"], g[f"spatial.{k}.w_q"], g[f"spatial.{k}.w_k"],
            g[f"spatial.{k}.w_n"], g[f"spatial.{k}.w_o"],
            heads=self.model.cfg.heads, aggregator=self.model.cfg.aggregator,
        )

    def lif(self, k: int) -> LifParams:
        cfg = self.model.cfg
        return LifParams(
            self.t[f"lif.{k}.tau_raw"], self.t[f"lif.{k}.v_th"], cfg.u_reset,
            SurrogateConfig(cfg.alpha), cfg.spike_mode,
        )

    def transformer(self) -> TransformerBlock:
        g = self.t
        names = ("w_q", "b_q", "w_k", "b_k", "w_v", "b_v", "w_o", "b_o", "ln_gamma",
                 "ln_beta", "w_ff1", "b_ff1", "w_ff2", "b_ff2")
        return TransformerBlock(*(g[f"temporal.{n}"] for n in names),
                                heads=self.model.cfg.temporal_heads,
                                causal=self.model.cfg.causal)


# ----------------------------------------------------------------------------
# neighbourhood sampling policies


class RandomSampler:
    """Fresh draws from a running generator (training)."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def tree(self, seq, batch, t, fanouts, p):
        levels = [np.asarray(batch, dtype=np.int64)]
        for S in fanouts:
            levels.append(sample_batch(seq, levels[-1], t, S, p, self.rng).ids.reshape(-1))
        return levels


class FixedSampler:
    """Per-(step, depth) sample tables over all nodes, seeded once.

    A node gets the same neighbours whichever batch it is in, so evaluation
    is deterministic and independent of the batch size.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._tables: dict = {}

    def _table(self, seq, t, depth, S, p):
        key = (id(seq), t, depth, S, p)
        if key not in self._tables:
            rng = np.random.default_rng([self.seed, t, depth])
            self._tables[key] = sample_batch(seq, np.arange(seq.num_nodes), t, S, p, rng).ids
        return self._tables[key]

    def tree(self, seq, batch, t, fanouts, p):
        levels = [np.asarray(batch, dtype=np.int64)]
        for depth, S in enumerate(fanouts):
            levels.append(self._table(seq, t, depth, S, p)[levels[-1]].reshape(-1))
        return levels


# ----------------------------------------------------------------------------
# forward


@dataclass
class SpikeLog:
    """Per layer: batch spikes and pre-reset membrane values, ``(B, d_k, T)``."""

    spikes: list[np.ndarray] = field(default_factory=list)
    membrane: list[np.ndarray] = field(default_factory=list)


@dataclass
class EncoderOutput:
    z: Tensor
    spike_log: SpikeLog
    attn: np.ndarray          # (B, H, T, T)
    sequence: Tensor          # stacked final-layer outputs, (B, T, d)


def forward_encoder(bound: Bound, seq: SnapshotSequence, nodes, *, training: bool,
                    rng: np.random.Generator | None = None, sampler=None) -> EncoderOutput:
    """Encode a batch of nodes over every step of ``seq``."""
    model, cfg = bound.model, bound.model.cfg
    nodes = np.asarray(nodes, dtype=np.int64)
    if nodes.size and (nodes.min() < 0 or nodes.max() >= seq.num_nodes):
        raise IndexError("batch contains node ids outside the graph")
    if seq.feature_dim != model.d_in:
        raise ad.ShapeError(f"model expects {model.d_in} input features, graph has {seq.feature_dim}")
    if sampler is None:
        sampler = RandomSampler(rng) if training else FixedSampler(cfg.seed)
    K = model.num_layers
    layers = [bound.spatial(k) for k in range(K)]
    lifs = [bound.lif(k) for k in range(K)]
    per_step = []
    spikes_log = [[] for _ in range(K)]
    mem_log = [[] for _ in range(K)]
    for t in range(seq.num_steps):
        levels = sampler.tree(seq, nodes, t, cfg.fanouts, cfg.sampling_p)
        reps = [Tensor(seq.features[t][lv]) for lv in levels]
        for k in range(K):
            drop = cfg.dropout if k < K - 1 else 0.0
            nxt = []
            for j in range(K - k):
                centre = reps[j]
                S = cfg.fanouts[j]
                nbrs = ad.reshape(reps[j + 1], (centre.shape[0], S, centre.shape[1]))
                out, state, _ = layer_forward(centre, nbrs, layers[k], lifs[k],
                                              training=training, dropout=drop, rng=rng)
                if j == 0:
                    u = state.u_pre.data
                    spikes_log[k].append((u >= lifs[k].v_th.data).astype(np.float64)
                                         if cfg.spike_mode == "hard" else out.data.copy())
                    mem_log[k].append(u.copy())
                nxt.append(out)
            reps = nxt
        # neuron states are rebuilt from zero at the next step
        per_step.append(reps[0])
    seq_t = ad.stack(per_step, axis=1)
    x = add_positional(seq_t, bound.t["temporal.pos"])
    z, attn = encode_sequence(x, bound.transformer())
    log = SpikeLog([np.stack(s, axis=-1) for s in spikes_log],
                   [np.stack(m, axis=-1) for m in mem_log])
    return EncoderOutput(z, log, attn.data.copy(), seq_t)


def logits(z: Tensor, bound: Bound) -> Tensor:
    return ad.add(ad.matmul(z, bound.t["classifier.w"]), bound.t["classifier.b"])


def classify(z: Tensor, bound: Bound) -> Tensor:
    """Class probabilities from a linear map followed by softmax."""
    return ad.softmax_lastdim(logits(z, bound))


# ----------------------------------------------------------------------------
# parameter accounting


def formula_estimate(K: int, d: int) -> int:
    """``4 K d^2 + 2 d^2 + 2 d``."""
    return 4 * K * d * d + 2 * d * d + 2 * d


def formula_terms(K: int, d: int) -> dict[str, int]:
    """The estimate split into its spatial, temporal and neuron terms."""
    return {"spatial": 4 * K * d * d, "temporal": 2 * d * d, "lif": 2 * d}


@dataclass
class ParamReport:
    exact: int
    formula: int
    groups: dict[str, int]
    terms: dict[str, int] = field(default_factory=dict)

    def lines(self) -> list[str]:
        out = [f"exact\t{self.exact}", f"formula\t{self.formula}",
               f"ratio\t{self.exact / self.formula:.4f}"]
        out += [f"group.{k}\t{v}" for k, v in self.groups.items()]
        # side by side with the estimate; groups the estimate omits show formula 0
        for k in self.groups:
            f = self.terms.get(k, 0)
            out.append(f"term.{k}\texact={self.groups[k]}\tformula={f}\tgap={self.groups[k] - f}")
        return out


def count_parameters(model: ChronoSpike) -> ParamReport:
    groups: dict[str, int] = {}
    for name, arr in model.params.items():
        head = name.split(".")[0]
        if name == "temporal.pos":
            head = "positional"
        groups[head] = groups.get(head, 0) + int(arr.size)
    exact = sum(groups.values())
    K, d = model.num_layers, max(model.cfg.hidden)
    return ParamReport(exact, formula_estimate(K, d), groups, formula_terms(K, d))
