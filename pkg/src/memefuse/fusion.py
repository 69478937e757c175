"""Global-local interaction, prediction heads and their combination.

The global context holds one mean-pooled token per modality. Each layer runs
CAP between the text sequence and the context and between the image sequence
and the context; both read the same incoming context and the two updated
context copies are averaged. The local-local baseline runs CAP directly
between the two modality sequences.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from . import tensor as T
from .cap import cap_pair, declare_cap
from .config import TASKS, ModelConfig
from .errors import ConfigError, ContractError
from .tensor import Tensor


def masked_mean(x: Tensor, mask: np.ndarray | None) -> Tensor:
    """Mean over the sequence axis (-2) counting only valid positions."""
    if x.shape[-2] == 0:
        raise ContractError("cannot pool an empty sequence")
    if mask is None:
        return T.mean(x, axis=-2)
    counts = mask.sum(axis=-1, keepdims=True).astype(np.float64)
    if (counts == 0).any():
        raise ContractError("cannot pool an empty sequence")
    return T.sum_(x * mask[..., None], axis=-2) * (1.0 / counts)


@dataclass
class GlobalLocalState:
    layer: int
    h_text: Tensor
    h_image: Tensor
    context: Tensor
    mask_text: np.ndarray | None = None
    mask_image: np.ndarray | None = None
    mask_context: np.ndarray | None = None


def build_global_context(h_text: Tensor, h_image: Tensor, mask_text=None, mask_image=None,
                         mode: str = "pooled"):
    """Context sequence g and its mask.

    ``pooled``: ``[mean(h_T); mean(h_I)]`` (length 2).
    ``concat``: the full ``[h_T; h_I]`` sequences (quadratic cost, for comparison).
    """
    if mode == "pooled":
        g = T.stack([masked_mean(h_text, mask_text), masked_mean(h_image, mask_image)], axis=-2)
        return g, None
    if mode == "concat":
        g = T.concat([h_text, h_image], axis=-2)
        if mask_text is None and mask_image is None:
            return g, None
        mt = np.ones(h_text.shape[:-1], bool) if mask_text is None else mask_text
        mi = np.ones(h_image.shape[:-1], bool) if mask_image is None else mask_image
        return g, np.concatenate([mt, mi], axis=-1)
    raise ConfigError(f"unknown context mode {mode!r}")


def declare_gl_layer(store: nn.ParamStore, i: int, cfg: ModelConfig) -> None:
    for name in ("tg", "gt", "ig", "gi"):
        if cfg.tie_pair and name in ("gt", "gi"):
            continue
        declare_cap(store.scope(f"gl.{i}.{name}"), cfg.d, cfg.heads, cfg.d_ff)


def declare_ll_layer(store: nn.ParamStore, i: int, cfg: ModelConfig) -> None:
    declare_cap(store.scope(f"ll.{i}.ti"), cfg.d, cfg.heads, cfg.d_ff)
    if not cfg.tie_pair:
        declare_cap(store.scope(f"ll.{i}.it"), cfg.d, cfg.heads, cfg.d_ff)


def _pair_scopes(store: nn.ParamStore, prefix: str, ab: str, ba: str, tie: bool):
    return store.scope(f"{prefix}.{ab}"), store.scope(f"{prefix}.{ab if tie else ba}")


def gl_layer(state: GlobalLocalState, store: nn.ParamStore, cfg: ModelConfig,
             record: list | None = None) -> GlobalLocalState:
    i = state.layer
    tg, gt = _pair_scopes(store, f"gl.{i}", "tg", "gt", cfg.tie_pair)
    ig, gi = _pair_scopes(store, f"gl.{i}", "ig", "gi", cfg.tie_pair)
    kw = dict(activation=cfg.activation, eps=cfg.ln_eps, record=record)
    h_t, g_t = cap_pair(state.h_text, state.context, tg, gt, cfg.heads,
                        state.mask_text, state.mask_context, **kw)
    h_i, g_i = cap_pair(state.h_image, state.context, ig, gi, cfg.heads,
                        state.mask_image, state.mask_context, **kw)
    g = (g_t + g_i) * 0.5
    return GlobalLocalState(i + 1, h_t, h_i, g, state.mask_text, state.mask_image, state.mask_context)


def gl_stack(h_text: Tensor, h_image: Tensor, store: nn.ParamStore, cfg: ModelConfig,
             mask_text=None, mask_image=None, record: list | None = None) -> GlobalLocalState:
    if cfg.layers < 1:
        raise ConfigError("global-local stack needs at least one layer")
    g, mask_g = build_global_context(h_text, h_image, mask_text, mask_image, cfg.context)
    state = GlobalLocalState(0, h_text, h_image, g, mask_text, mask_image, mask_g)
    for _ in range(cfg.layers):
        state = gl_layer(state, store, cfg, record)
    return state


def local_local_stack(h_text: Tensor, h_image: Tensor, store: nn.ParamStore, cfg: ModelConfig,
                      mask_text=None, mask_image=None, record: list | None = None):
    if cfg.layers < 1:
        raise ConfigError("local-local stack needs at least one layer")
    for i in range(cfg.layers):
        ti, it = _pair_scopes(store, f"ll.{i}", "ti", "it", cfg.tie_pair)
        h_text, h_image = cap_pair(h_text, h_image, ti, it, cfg.heads, mask_text, mask_image,
                                   cfg.activation, cfg.ln_eps, record)
    return h_text, h_image


# ---------------------------------------------------------------------- heads

def declare_heads(store: nn.ParamStore, cfg: ModelConfig, classes: dict, unimodal: bool) -> None:
    nn.declare_attention(store.scope("fusion.msa"), cfg.d, cfg.heads)
    for t in TASKS:
        nn.declare_linear(store.scope(f"head.{t}.multi"), cfg.d, classes[t])
        if unimodal:
            nn.declare_linear(store.scope(f"head.{t}.text"), cfg.d, classes[t])
            nn.declare_linear(store.scope(f"head.{t}.image"), cfg.d, classes[t])


def head_param_names(store: nn.ParamStore, task: str) -> list[str]:
    return [n for n in store if n.startswith(f"head.{task}.")]


def fused_representation(seqs: list[Tensor], masks: list, store: nn.ParamStore, cfg: ModelConfig,
                         record: list | None = None) -> Tensor:
    """MSA over the concatenated sequences, mean-pooled to one d-vector per sample."""
    x = T.concat(seqs, axis=-2)
    if all(m is None for m in masks):
        mask = None
    else:
        mask = np.concatenate([np.ones(s.shape[:-1], bool) if m is None else m
                               for s, m in zip(seqs, masks)], axis=-1)
    out, _ = nn.multi_head_attention(x, x, store.scope("fusion.msa"), cfg.heads, mask,
                                     kind="fusion", record=record)
    return masked_mean(out, mask)


def task_head(pooled: Tensor, store: nn.ParamStore, task: str, which: str) -> Tensor:
    """softmax(W pooled + b) for one task; ``which`` is multi / text / image."""
    name = f"head.{task}.{which}"
    if f"{name}.w" not in store:
        raise ContractError(f"no {which} head for task {task!r}")
    return T.softmax(nn.linear(pooled, store.scope(name)))


def fusion_head(h_text: Tensor, h_image: Tensor, context: Tensor | None, store: nn.ParamStore,
                cfg: ModelConfig, task: str, mask_text=None, mask_image=None, mask_context=None) -> Tensor:
    if task not in TASKS:
        raise ContractError(f"unknown task {task!r}")
    seqs, masks = [h_text, h_image], [mask_text, mask_image]
    if context is not None:
        seqs.append(context)
        masks.append(mask_context)
    return task_head(fused_representation(seqs, masks, store, cfg), store, task, "multi")


def unimodal_head(h_x: Tensor, store: nn.ParamStore, task: str, which: str, mask=None) -> Tensor:
    if task not in TASKS:
        raise ContractError(f"unknown task {task!r}")
    if which not in ("text", "image"):
        raise ContractError(f"unimodal head must be text or image, got {which!r}")
    return task_head(masked_mean(h_x, mask), store, task, which)


def combine_predictions(*dists: Tensor) -> Tensor:
    """Elementwise sum of the per-branch distributions."""
    shape = dists[0].shape
    for d in dists[1:]:
        if d.shape != shape:
            raise ContractError(f"prediction length mismatch: {shape} vs {d.shape}")
    out = dists[0]
    for d in dists[1:]:
        out = out + d
    return out


def predict_class(scores: np.ndarray) -> np.ndarray:
    """Argmax over the last axis; ties go to the lowest index."""
    return np.argmax(np.asarray(scores), axis=-1)


@dataclass
class TaskPredictions:
    multi: dict = field(default_factory=dict)
    text: dict = field(default_factory=dict)
    image: dict = field(default_factory=dict)
    combined: dict = field(default_factory=dict)

    def n_branches(self, task: str) -> int:
        return 1 + (task in self.text) + (task in self.image)

    def probabilities(self, task: str) -> np.ndarray:
        return self.combined[task].data / self.n_branches(task)

    def predicted(self, task: str) -> np.ndarray:
        return predict_class(self.combined[task].data)


# ----------------------------------------------------------------- cost model

def attention_entries(n_text: int, n_image: int, layers: int, heads: int, variant: str,
                      context: int = 2) -> dict:
    """Closed-form attention-score counts (heads x queries x keys) for one sample."""
    if variant == "global_local":
        cross = 2 * n_text * context + 2 * n_image * context
        self_ = n_text ** 2 + n_image ** 2 + 2 * context ** 2
    elif variant == "local_local":
        cross = 2 * n_text * n_image
        self_ = n_text ** 2 + n_image ** 2
    else:
        raise ValueError(variant)
    return {"cross": heads * layers * cross, "self": heads * layers * self_}
