"""Cross-entropy and InfoNCE objectives."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .spatial import dropout_mask


def _pick(x: Tensor, labels: np.ndarray) -> Tensor:
    labels = np.asarray(labels, dtype=np.int64)
    return ad.index(x, (np.arange(len(labels)), labels))


def classification_loss(probs: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of the true class."""
    return ad.neg(ad.mean(ad.log(_pick(probs, labels))))


def cross_entropy_from_logits(logits: Tensor, labels) -> Tensor:
    """Same value as :func:`classification_loss` on ``softmax(logits)``, computed stably."""
    return ad.neg(ad.mean(_pick(ad.log_softmax_lastdim(logits), labels)))


def info_nce(view1: Tensor, view2: Tensor, temperature: float) -> Tensor:
    """Row ``i`` of ``view1`` should match row ``i`` of ``view2`` among all rows."""
    a = ad.l2_normalize(view1)
    b = ad.l2_normalize(view2)
    sim = ad.scale(ad.matmul(a, ad.transpose(b)), 1.0 / temperature)
    logp = ad.log_softmax_lastdim(sim)
    n = sim.shape[0]
    return ad.neg(ad.mean(ad.index(logp, (np.arange(n), np.arange(n)))))


def contrastive_loss(z: Tensor, temperature: float, view_dropout: float,
                     rng: np.random.Generator) -> Tensor:
    """InfoNCE between two independently dropped-out views of ``z``."""
    v1 = ad.dropout_mask_apply(z, dropout_mask(z.shape, view_dropout, rng))
    v2 = ad.dropout_mask_apply(z, dropout_mask(z.shape, view_dropout, rng))
    return info_nce(v1, v2, temperature)


def total_loss(lcls: Tensor, lcon: Tensor, weight: float) -> Tensor:
    return ad.add(lcls, ad.scale(lcon, weight))
