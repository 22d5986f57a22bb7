"""Adaptive leaky integrate-and-fire layer with learnable per-channel tau and threshold."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import SurrogateConfig, Tensor

TAU_EPS = 1e-3
TAU_FLOOR = 0.5 + TAU_EPS


def tau_raw_for(tau: float) -> float:
    """Inverse of the positive map: the raw value giving effective ``tau``."""
    if tau <= TAU_FLOOR:
        raise ValueError(f"tau must exceed {TAU_FLOOR}, got {tau}")
    return math.log(math.expm1(tau - TAU_FLOOR))


@dataclass
class LifParams:
    tau_raw: Tensor
    v_th: Tensor
    u_reset: float = 0.0
    surrogate: SurrogateConfig = SurrogateConfig()
    mode: str = "hard"

    @classmethod
    def init(cls, d: int, tau: float = 1.0, v_th: float = 1.0, **kw) -> "LifParams":
        return cls(
            tau_raw=Tensor(np.full(d, tau_raw_for(tau))),
            v_th=Tensor(np.full(d, float(v_th))),
            **kw,
        )


@dataclass
class LifState:
    u: Tensor
    u_pre: Tensor | None = None  # pre-reset potential of the last step, for analysis


def effective_tau(params: LifParams) -> Tensor:
    """``0.5 + eps + softplus(tau_raw)``; always strictly above one half."""
    return ad.add(ad.softplus(params.tau_raw), TAU_FLOOR)


def reset_state(batch_size: int, d: int) -> LifState:
    if batch_size <= 0 or d <= 0:
        raise ValueError(f"state sizes must be positive, got ({batch_size}, {d})")
    return LifState(Tensor(np.zeros((batch_size, d))))


def lif_step(state: LifState, h: Tensor, params: LifParams) -> tuple[Tensor, LifState]:
    """One forward-Euler membrane update, threshold test and reset.

    The reset is straight-through in the backward pass: the jump to
    ``u_reset`` is added as a constant, so the gradient of the post-reset
    potential with respect to the previous one is the leak factor
    ``1 - 1/tau`` whether or not the neuron fired.
    """
    h = ad.as_tensor(h)
    if h.shape != state.u.shape:
        raise ad.ShapeError(f"lif_step: input {h.shape} vs state {state.u.shape}")
    if not np.all(np.isfinite(h.data)):
        raise ad.NonFiniteError("lif_step: non-finite synaptic input")
    tau = effective_tau(params)
    u_prev = state.u
    drive = ad.sub(h, ad.sub(u_prev, params.u_reset))
    u = ad.add(u_prev, ad.div(drive, tau))
    s = ad.spike(ad.sub(u, params.v_th), params.surrogate, params.mode)
    jump = s.data * (params.u_reset - u.data)
    u_post = ad.add(u, jump)
    return s, LifState(u_post, u_pre=u)
