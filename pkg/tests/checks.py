"""Heavier verification routines shared by unit and acceptance tests."""

from __future__ import annotations

import numpy as np

from chronospike import autodiff as ad
from chronospike.autodiff import Tape, Tensor
from chronospike.losses import cross_entropy_from_logits, info_nce
from chronospike.metrics import macro_f1, micro_f1
from chronospike.model import ChronoSpike, FixedSampler, forward_encoder, logits
from chronospike.spatial import SpatialLayer, aggregate, attention_weights
from chronospike.temporal import TransformerBlock, encode_sequence
from conftest import tiny_config, toy_sequence
from oracles import (aggregate_loop, central_diff, cross_entropy_loop, f1_scores_loop,
                     info_nce_loop, rel_err, softmax_loop, transformer_loop)


def soft_mode_gradient_errors(h: float = 1e-4, seed: int = 0) -> dict[str, float]:
    """Relative error of tape gradients against central differences, per parameter group.

    Runs the whole encoder with smooth spikes on a 5-node, 3-step graph; the
    loss is cross-entropy plus a weighted InfoNCE term on the readout.
    """
    seq = toy_sequence(5, 3, d_in=3, seed=seed)
    cfg = tiny_config(spike_mode="soft", hidden=(8, 4), fanouts=(2, 2), seed=seed)
    model = ChronoSpike(cfg, seq.feature_dim, 2, np.random.default_rng(seed))
    nodes = np.arange(5)
    sampler = FixedSampler(seed)

    def loss_on(bound):
        enc = forward_encoder(bound, seq, nodes, training=False, sampler=sampler)
        ce = cross_entropy_from_logits(logits(enc.z, bound), seq.labels[nodes])
        return ad.add(ce, ad.scale(info_nce(enc.z, enc.z, 0.5), 0.1))

    tape = Tape()
    grads = tape.backward(loss_on(model.bind(tape))).leaves()
    errors = {}
    for name, arr in model.params.items():
        def f(x, arr=arr):
            old = arr.copy()
            arr[...] = x
            try:
                return loss_on(model.bind(None)).item()
            finally:
                arr[...] = old
        errors[name] = rel_err(grads[name], central_diff(f, arr.copy(), h))
    return errors


def _layer(rng, d_prev, d, heads):
    ws = [Tensor(rng.normal(size=(d_prev, d))) for _ in range(4)]
    return SpatialLayer(*ws, Tensor(rng.normal(size=(d, d))), heads=heads)


def _block(rng, d, heads):
    names = ("w_q", "b_q", "w_k", "b_k", "w_v", "b_v", "w_o", "b_o", "ln_gamma", "ln_beta",
             "w_ff1", "b_ff1", "w_ff2", "b_ff2")
    shapes = {"w_ff1": (d, 2 * d), "b_ff1": (2 * d,), "w_ff2": (2 * d, d)}
    p = {}
    for n in names:
        shape = shapes.get(n, (d, d) if n.startswith("w_") else (d,))
        p[n] = rng.normal(size=shape) / np.sqrt(shape[0] if len(shape) == 2 else 1)
    return p, TransformerBlock(*(Tensor(p[n]) for n in names), heads=heads)


def _rel(a, b) -> float:
    return rel_err(a, b, floor=1e-300)


def oracle_equivalence(instances: int = 50, seed: int = 0) -> dict[str, float]:
    """Worst relative error of each vectorised component against its loop oracle."""
    rng = np.random.default_rng(seed)
    worst = dict.fromkeys(("aggregation", "attention_softmax", "transformer", "cross_entropy",
                           "info_nce", "micro_f1", "macro_f1"), 0.0)
    for _ in range(instances):
        heads = int(rng.choice([1, 2, 4]))
        d_prev, d, S = int(rng.integers(2, 7)), heads * int(rng.integers(1, 4)), int(rng.integers(1, 6))
        layer = _layer(rng, d_prev, d, heads)
        x, nb = rng.normal(size=(1, d_prev)), rng.normal(size=(1, S, d_prev))
        a = attention_weights(Tensor(x), Tensor(nb), layer)
        h = aggregate(Tensor(x), Tensor(nb), a, layer)
        ref_h, ref_a = aggregate_loop(x[0], nb[0], *(getattr(layer, w).data for w in
                                                      ("w_s", "w_q", "w_k", "w_n", "w_o")), heads)
        worst["aggregation"] = max(worst["aggregation"], _rel(h.data[0], ref_h))
        worst["attention_softmax"] = max(worst["attention_softmax"], _rel(a.data[0], ref_a))

        th = int(rng.choice([1, 2, 4]))
        dt, T = th * int(rng.integers(1, 4)), int(rng.integers(1, 6))
        p, blk = _block(rng, dt, th)
        seq = rng.normal(size=(1, T, dt))
        z, attn = encode_sequence(Tensor(seq), blk)
        ref_z, ref_attn = transformer_loop(seq[0], p, th)
        worst["transformer"] = max(worst["transformer"], _rel(z.data[0], ref_z))
        worst["attention_softmax"] = max(worst["attention_softmax"], _rel(attn.data[0], ref_attn))

        B, C = int(rng.integers(1, 9)), int(rng.integers(2, 6))
        lg, y = rng.normal(size=(B, C)) * 2, rng.integers(0, C, size=B)
        ce = cross_entropy_from_logits(Tensor(lg), y).item()
        worst["cross_entropy"] = max(worst["cross_entropy"], _rel(ce, cross_entropy_loop(lg, y)))

        v1, v2 = rng.normal(size=(B, 4)), rng.normal(size=(B, 4))
        nce = info_nce(Tensor(v1), Tensor(v2), 0.5).item()
        worst["info_nce"] = max(worst["info_nce"], _rel(nce, info_nce_loop(v1, v2, 0.5)))

        n = int(rng.integers(1, 40))
        yt, yp = rng.integers(0, C, size=n), rng.integers(0, C, size=n)
        mic, mac = f1_scores_loop(yt.tolist(), yp.tolist())
        worst["micro_f1"] = max(worst["micro_f1"], _rel(micro_f1(yt, yp), mic))
        worst["macro_f1"] = max(worst["macro_f1"], _rel(macro_f1(yt, yp), mac))
    # the loop softmax is also checked against the library softmax on raw scores
    s = rng.normal(size=7)
    worst["attention_softmax"] = max(worst["attention_softmax"],
                                     _rel(ad.softmax_lastdim(s).data, softmax_loop(s.tolist())))
    return worst
