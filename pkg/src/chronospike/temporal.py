"""Learned positional encodings and a single-block Transformer readout over spike sequences."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass
class TransformerBlock:
    w_q: Tensor
    b_q: Tensor
    w_k: Tensor
    b_k: Tensor
    w_v: Tensor
    b_v: Tensor
    w_o: Tensor
    b_o: Tensor
    ln_gamma: Tensor
    ln_beta: Tensor
    w_ff1: Tensor
    b_ff1: Tensor
    w_ff2: Tensor
    b_ff2: Tensor
    heads: int = 4
    causal: bool = False


def add_positional(spikes: Tensor, pos: Tensor) -> Tensor:
    """Add rows ``0..T-1`` of the positional table to a ``(B, T, d)`` sequence."""
    T = spikes.shape[1]
    if T > pos.shape[0]:
        raise ValueError(f"sequence length {T} exceeds positional table size {pos.shape[0]}")
    return ad.add(spikes, ad.index(pos, slice(0, T)))


def _linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return ad.add(ad.matmul(x, w), b)


def multihead_attention(x: Tensor, blk: TransformerBlock) -> tuple[Tensor, Tensor]:
    """Scaled dot-product self-attention over the time axis.

    Returns the projected output ``(B, T, d)`` and the attention maps
    ``(B, H, T, T)``.
    """
    B, T, d = x.shape
    H = blk.heads
    dh = d // H

    def split(y):
        return ad.transpose(ad.reshape(y, (B, T, H, dh)), (0, 2, 1, 3))   # B,H,T,dh

    q = split(_linear(x, blk.w_q, blk.b_q))
    k = split(_linear(x, blk.w_k, blk.b_k))
    v = split(_linear(x, blk.w_v, blk.b_v))
    scores = ad.scale(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
    if blk.causal:
        mask = np.triu(np.full((T, T), -1e9), k=1)
        scores = ad.add(scores, mask)
    attn = ad.softmax_lastdim(scores)
    ctx = ad.matmul(attn, v)                                               # B,H,T,dh
    ctx = ad.reshape(ad.transpose(ctx, (0, 2, 1, 3)), (B, T, d))
    return _linear(ctx, blk.w_o, blk.b_o), attn


def encode_sequence(x: Tensor, blk: TransformerBlock) -> tuple[Tensor, Tensor]:
    """``FFN(LayerNorm(x + MHA(x)))``, read out at the last step.

    Returns ``(z, attn)`` with ``z`` of shape ``(B, d)``.
    """
    a, attn = multihead_attention(x, blk)
    y = ad.add(ad.mul(ad.layernorm(ad.add(x, a)), blk.ln_gamma), blk.ln_beta)
    # only the final row feeds the readout
    y_last = ad.index(y, (slice(None), -1))
    hidden = ad.relu(_linear(y_last, blk.w_ff1, blk.b_ff1))
    return _linear(hidden, blk.w_ff2, blk.b_ff2), attn
