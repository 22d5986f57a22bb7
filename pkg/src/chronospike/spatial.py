"""Multi-head attentive aggregation over sampled neighbourhoods, followed by spiking."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .lif import LifParams, LifState, lif_step, reset_state

AGGREGATORS = ("attention", "mean", "sum")


@dataclass
class SpatialLayer:
    """Weights of one aggregation layer.

    ``w_q``, ``w_k`` and ``w_n`` are ``d_prev x d_k`` with head ``h`` owning
    columns ``h*d_h:(h+1)*d_h``; ``w_o`` projects the concatenated heads.
    """

    w_s: Tensor
    w_q: Tensor
    w_k: Tensor
    w_n: Tensor
    w_o: Tensor
    heads: int = 4
    aggregator: str = "attention"

    def __post_init__(self):
        d_k = self.w_s.shape[1]
        if d_k % self.heads:
            raise ValueError(f"output width {d_k} not divisible by {self.heads} heads")
        if self.aggregator not in AGGREGATORS:
            raise ValueError(f"unknown aggregator {self.aggregator!r}")

    @property
    def d_out(self) -> int:
        return self.w_s.shape[1]

    @property
    def d_head(self) -> int:
        return self.d_out // self.heads


def _heads(x: Tensor, heads: int) -> Tensor:
    """(..., d_k) -> (..., H, d_h)."""
    return ad.reshape(x, x.shape[:-1] + (heads, x.shape[-1] // heads))


def attention_weights(center: Tensor, neighbors: Tensor, layer: SpatialLayer) -> Tensor:
    """Per-head softmax over the sampled neighbours; shape ``(M, H, S)``."""
    M, S, _ = neighbors.shape
    H, dh = layer.heads, layer.d_head
    if layer.aggregator != "attention":
        w = 1.0 / S if layer.aggregator == "mean" else 1.0
        return Tensor(np.full((M, H, S), w))
    q = _heads(ad.matmul(center, layer.w_q), H)                     # M,H,dh
    k = _heads(ad.matmul(neighbors, layer.w_k), H)                  # M,S,H,dh
    q = ad.reshape(q, (M, H, 1, dh))
    k = ad.transpose(k, (0, 2, 3, 1))                               # M,H,dh,S
    scores = ad.scale(ad.matmul(q, k), 1.0 / math.sqrt(dh))         # M,H,1,S
    return ad.reshape(ad.softmax_lastdim(scores), (M, H, S))


def aggregate(center: Tensor, neighbors: Tensor, alpha: Tensor, layer: SpatialLayer) -> Tensor:
    """``W_s x_v + W_o concat_h(sum_u alpha_vu^h W_n^h x_u)``."""
    M, S, _ = neighbors.shape
    H, dh = layer.heads, layer.d_head
    if neighbors.shape[-1] != center.shape[-1]:
        raise ad.ShapeError(
            f"aggregate: centre width {center.shape[-1]} vs neighbour width {neighbors.shape[-1]}")
    v = _heads(ad.matmul(neighbors, layer.w_n), H)                  # M,S,H,dh
    v = ad.transpose(v, (0, 2, 1, 3))                               # M,H,S,dh
    a = ad.reshape(alpha, (M, H, 1, S))
    mixed = ad.reshape(ad.matmul(a, v), (M, H * dh))
    return ad.add(ad.matmul(center, layer.w_s), ad.matmul(mixed, layer.w_o))


def dropout_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout mask: zeros with probability ``rate``, else ``1/(1-rate)``."""
    if rate <= 0:
        return np.ones(shape)
    return (rng.random(shape) >= rate) / (1.0 - rate)


def layer_forward(center: Tensor, neighbors: Tensor, layer: SpatialLayer, lif: LifParams,
                  *, training: bool = False, dropout: float = 0.0,
                  rng: np.random.Generator | None = None,
                  state: LifState | None = None) -> tuple[Tensor, LifState, Tensor]:
    """Aggregate, spike, and (in training, when ``dropout > 0``) drop.

    Returns ``(output, new_state, alpha)``; ``new_state.u_pre`` carries the
    pre-reset membrane potential.
    """
    alpha = attention_weights(center, neighbors, layer)
    h = aggregate(center, neighbors, alpha, layer)
    if state is None:
        state = reset_state(h.shape[0], h.shape[1])
    s, new_state = lif_step(state, h, lif)
    if training and dropout > 0:
        s = ad.dropout_mask_apply(s, dropout_mask(s.shape, dropout, rng))
    return s, new_state, alpha
