"""Parameter store and the layers the architecture is assembled from."""
from __future__ import annotations

import threading
import time
import zlib
from collections import OrderedDict
from contextlib import contextmanager
from typing import Iterator

import numpy as np

from . import tensor as T
from .errors import ConfigError
from .tensor import Tensor


def tensor_rng(seed: int, name: str) -> np.random.Generator:
    """Independent stream per (seed, parameter name).

    Adding or removing parameters never shifts the initial values of the others.
    """
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(name.encode())])


class ParamStore:
    """Ordered name -> leaf Tensor mapping with hierarchical prefixes."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.tensors: "OrderedDict[str, Tensor]" = OrderedDict()

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self.tensors:
            raise ConfigError(f"parameter {name!r} declared twice")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True)
        self.tensors[name] = t
        return t

    def xavier(self, name: str, fan_in: int, fan_out: int, shape=None) -> Tensor:
        shape = shape or (fan_in, fan_out)
        a = np.sqrt(6.0 / (fan_in + fan_out))
        return self.add(name, tensor_rng(self.seed, name).uniform(-a, a, size=shape))

    def normal(self, name: str, shape, std: float = 0.02) -> Tensor:
        return self.add(name, tensor_rng(self.seed, name).normal(0.0, std, size=shape))

    def zeros(self, name: str, shape) -> Tensor:
        return self.add(name, np.zeros(shape))

    def ones(self, name: str, shape) -> Tensor:
        return self.add(name, np.ones(shape))

    def scope(self, prefix: str) -> "Scope":
        return Scope(self, prefix)

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def state(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, v.data.copy()) for k, v in self.tensors.items())

    def load_state(self, state) -> None:
        for k, v in state.items():
            if k not in self.tensors:
                raise KeyError(k)
            if self.tensors[k].shape != tuple(v.shape):
                raise ValueError(f"{k}: shape {self.tensors[k].shape} vs {tuple(v.shape)}")
            self.tensors[k].data = np.array(v, dtype=np.float64)


class Scope:
    """View of a ParamStore under a name prefix (``scope["wq"]`` -> ``prefix.wq``)."""

    def __init__(self, store: ParamStore, prefix: str):
        self.store = store
        self.prefix = prefix

    def name(self, key: str) -> str:
        return f"{self.prefix}.{key}" if self.prefix else key

    def __getitem__(self, key: str) -> Tensor:
        return self.store[self.name(key)]

    def __contains__(self, key: str) -> bool:
        return self.name(key) in self.store

    def scope(self, sub: str) -> "Scope":
        return Scope(self.store, self.name(sub))

    def names(self) -> list[str]:
        p = self.prefix + "."
        return [n for n in self.store if n.startswith(p)]


# ------------------------------------------------------------- declarations

def declare_linear(s: Scope, fan_in: int, fan_out: int, w: str = "w", b: str = "b") -> None:
    s.store.xavier(s.name(w), fan_in, fan_out)
    s.store.zeros(s.name(b), (fan_out,))


def declare_layer_norm(s: Scope, d: int) -> None:
    s.store.ones(s.name("gain"), (d,))
    s.store.zeros(s.name("bias"), (d,))


def declare_attention(s: Scope, d: int, heads: int) -> None:
    if heads < 1 or d % heads:
        raise ConfigError(f"model width {d} is not divisible by {heads} heads")
    # no key bias: it shifts every logit of a row equally and has zero gradient
    for proj in ("q", "k", "v", "o"):
        if proj == "k":
            s.store.xavier(s.name("wk"), d, d)
        else:
            declare_linear(s, d, d, w=f"w{proj}", b=f"b{proj}")


def declare_feed_forward(s: Scope, d: int, d_ff: int) -> None:
    declare_linear(s, d, d_ff, w="w1", b="b1")
    declare_linear(s, d_ff, d, w="w2", b="b2")


# ------------------------------------------------------------------- layers

def linear(x: Tensor, s: Scope, w: str = "w", b: str = "b") -> Tensor:
    if x.ndim == 1:
        return (T.matmul(x.reshape((1, -1)), s[w]) + s[b]).reshape((-1,))
    return T.matmul(x, s[w]) + s[b]


def layer_norm(x: Tensor, s: Scope, eps: float = 1e-5) -> Tensor:
    return T.layer_norm(x, s["gain"], s["bias"], eps)


def feed_forward(x: Tensor, s: Scope, activation: str = "gelu") -> Tensor:
    """Two affine maps with a pointwise nonlinearity between them."""
    h = linear(x, s, "w1", "b1")
    if activation == "gelu":
        h = T.gelu(h)
    elif activation == "relu":
        h = T.relu(h)
    else:
        raise ConfigError(f"unknown activation {activation!r}")
    return linear(h, s, "w2", "b2")


class AttentionCounter:
    """Tallies attention-score entries (heads x queries x keys) per label."""

    def __init__(self):
        self.counts: dict[str, int] = {}
        self.calls: dict[str, int] = {}
        self.seconds: dict[str, float] = {}

    def add(self, label: str, n: int, seconds: float = 0.0) -> None:
        self.counts[label] = self.counts.get(label, 0) + n
        self.calls[label] = self.calls.get(label, 0) + 1
        self.seconds[label] = self.seconds.get(label, 0.0) + seconds

    def total(self, prefix: str = "") -> int:
        return sum(v for k, v in self.counts.items() if k.startswith(prefix))


_local = threading.local()


@contextmanager
def count_attention() -> Iterator[AttentionCounter]:
    counter = AttentionCounter()
    prev = getattr(_local, "counter", None)
    _local.counter = counter
    try:
        yield counter
    finally:
        _local.counter = prev


def mask_bias(mask: np.ndarray | None) -> np.ndarray | None:
    """Additive logit bias: 0 for valid keys, -inf for padding."""
    if mask is None:
        return None
    return np.where(mask, 0.0, -np.inf)


def multi_head_attention(q_seq: Tensor, kv_seq: Tensor, s: Scope, heads: int,
                         kv_mask: np.ndarray | None = None, kind: str = "attn",
                         record: list | None = None):
    """Scaled dot-product attention with ``heads`` heads.

    ``q_seq`` is ``[..., n_q, d]`` and ``kv_seq`` is ``[..., n_kv, d]``; the
    optional boolean ``kv_mask`` (``[..., n_kv]``) excludes padded keys.
    Returns the ``[..., n_q, d]`` output and the ``[..., heads, n_q, n_kv]``
    attention weights as a plain array.
    """
    counter = getattr(_local, "counter", None)
    t0 = time.perf_counter() if counter is not None else 0.0
    d = q_seq.shape[-1]
    if d % heads:
        raise ConfigError(f"model width {d} is not divisible by {heads} heads")
    if kv_seq.shape[-1] != d:
        raise ConfigError(f"query width {d} differs from key width {kv_seq.shape[-1]}")
    dh = d // heads

    def split(x: Tensor) -> Tensor:
        return T.swapaxes(x.reshape(x.shape[:-1] + (heads, dh)), -2, -3)

    q = split(linear(q_seq, s, "wq", "bq"))
    k = split(T.matmul(kv_seq, s["wk"]))
    v = split(linear(kv_seq, s, "wv", "bv"))
    logits = T.matmul(q, T.transpose(k)) * (1.0 / np.sqrt(dh))
    bias = mask_bias(kv_mask)
    if bias is not None:
        logits = logits + bias[..., None, None, :]
    weights = T.softmax(logits)
    ctx = T.matmul(weights, v)
    ctx = T.swapaxes(ctx, -2, -3)
    ctx = ctx.reshape(ctx.shape[:-2] + (d,))
    out = linear(ctx, s, "wo", "bo")
    if counter is not None:
        counter.add(kind, int(weights.data.size), time.perf_counter() - t0)
    if record is not None:
        record.append((kind, weights.data))
    return out, weights.data
