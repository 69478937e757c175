"""Cross-modal Attention Promotion (CAP).

One direction enhances sequence ``a`` with information from ``b`` through
three pre-norm residual sublayers::

    x1  = MCA(LN(a), LN(b)) + a        # queries from a, keys/values from b
    x2  = MSA(LN(x1)) + x1
    out = FN(LN(x2)) + x2

A pair runs both directions on the original inputs.
"""
from __future__ import annotations

import numpy as np

from . import nn
from .errors import ContractError
from .tensor import Tensor


def declare_cap(s: nn.Scope, d: int, heads: int, d_ff: int) -> None:
    nn.declare_layer_norm(s.scope("ln_q"), d)
    nn.declare_layer_norm(s.scope("ln_kv"), d)
    nn.declare_attention(s.scope("mca"), d, heads)
    nn.declare_layer_norm(s.scope("ln_sa"), d)
    nn.declare_attention(s.scope("msa"), d, heads)
    nn.declare_layer_norm(s.scope("ln_ff"), d)
    nn.declare_feed_forward(s.scope("ff"), d, d_ff)


def cap_direction(h_a: Tensor, h_b: Tensor, s: nn.Scope, heads: int,
                  mask_a: np.ndarray | None = None, mask_b: np.ndarray | None = None,
                  activation: str = "gelu", eps: float = 1e-5, record: list | None = None) -> Tensor:
    """Enhance ``h_a`` ([..., n_a, d]) by attending into ``h_b`` ([..., n_b, d])."""
    if h_a.shape[-1] != h_b.shape[-1]:
        raise ContractError(f"CAP width mismatch: {h_a.shape} vs {h_b.shape}")
    if h_a.shape[:-2] != h_b.shape[:-2]:
        raise ContractError(f"CAP batch mismatch: {h_a.shape} vs {h_b.shape}")
    q = nn.layer_norm(h_a, s.scope("ln_q"), eps)
    kv = nn.layer_norm(h_b, s.scope("ln_kv"), eps)
    x1 = h_a + nn.multi_head_attention(q, kv, s.scope("mca"), heads, mask_b, kind="cross", record=record)[0]
    h = nn.layer_norm(x1, s.scope("ln_sa"), eps)
    x2 = x1 + nn.multi_head_attention(h, h, s.scope("msa"), heads, mask_a, kind="self", record=record)[0]
    return x2 + nn.feed_forward(nn.layer_norm(x2, s.scope("ln_ff"), eps), s.scope("ff"), activation)


def cap_pair(h_a: Tensor, h_b: Tensor, s_ab: nn.Scope, s_ba: nn.Scope, heads: int,
             mask_a=None, mask_b=None, activation: str = "gelu", eps: float = 1e-5,
             record: list | None = None) -> tuple[Tensor, Tensor]:
    """Symmetric CAP: returns (a enhanced by b, b enhanced by a)."""
    ab = cap_direction(h_a, h_b, s_ab, heads, mask_a, mask_b, activation, eps, record)
    ba = cap_direction(h_b, h_a, s_ba, heads, mask_b, mask_a, activation, eps, record)
    return ab, ba
