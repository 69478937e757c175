"""Task cross-entropy, the dual-semantic contrastive loss, and their total."""
from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .errors import ContractError, TrainingError
from .tensor import Tensor


def task_ce_loss(scores: Tensor, labels: np.ndarray, n_branches: int = 3,
                 head_params: list[Tensor] = (), l2: float = 0.0) -> Tensor:
    """Mean of ``-log(y / n_branches)[label]`` plus ``l2 * ||head params||^2``.

    ``scores`` is B x C (summed branch distributions).
    """
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = scores.shape[-1]
    if labels.shape != scores.shape[:-1]:
        raise ContractError(f"labels shape {labels.shape} does not match scores {scores.shape}")
    if (labels < 0).any() or (labels >= n_classes).any():
        raise ContractError(f"label out of range [0, {n_classes})")
    picked = scores[np.arange(len(labels)), labels] * (1.0 / n_branches)
    loss = -T.mean(T.log(picked))
    if l2 and head_params:
        reg = T.sum_(T.square(head_params[0]))
        for p in head_params[1:]:
            reg = reg + T.sum_(T.square(p))
        loss = loss + reg * l2
    return loss


def _normalize_rows(x: Tensor) -> Tensor:
    norms = np.linalg.norm(x.data, axis=-1)
    if (norms == 0).any():
        raise ContractError("zero vector in contrastive loss (cosine similarity undefined)")
    return x / T.sqrt(T.sum_(T.square(x), axis=-1, keepdims=True))


def dual_semantic_loss(h_text: Tensor, h_image: Tensor, tau: float = 0.07, mode: str = "symmetric") -> Tensor:
    """Temperature-scaled cosine contrastive loss over a batch of N pairs.

    ``symmetric``: mean of text->image and image->text InfoNCE where pair i
    is the positive and the other cross pairs are negatives.
    ``literal``: over the 2N set ``[h_T; h_I]``, anchor k scores
    ``sim(T_j, I_j)`` (``j = k mod N``) against the sum over all other
    entries' paired similarities; averaged over the 2N anchors.
    """
    if h_text.ndim != 2 or h_text.shape != h_image.shape:
        raise ContractError(f"expected two N x d batches, got {h_text.shape} and {h_image.shape}")
    n = h_text.shape[0]
    if n < 2:
        raise ContractError("contrastive loss needs a batch of at least 2 pairs")
    if tau <= 0:
        raise ContractError("temperature must be positive")
    t = _normalize_rows(h_text)
    v = _normalize_rows(h_image)
    if mode == "symmetric":
        logits = T.matmul(t, T.transpose(v)) * (1.0 / tau)
        diag = (np.arange(n), np.arange(n))
        l_ti = -T.mean(T.log_softmax(logits)[diag])
        l_it = -T.mean(T.log_softmax(T.transpose(logits))[diag])
        return (l_ti + l_it) * 0.5
    if mode == "literal":
        paired = T.sum_(t * v, axis=-1) * (1.0 / tau)       # N
        s = T.concat([paired, paired], axis=0)              # 2N
        big = s.reshape((1, 2 * n)) * np.ones((2 * n, 1))   # row k holds all 2N scores
        # denominator over k' != k; numerator is the anchor's own paired score
        masked = big + np.where(np.eye(2 * n, dtype=bool), -np.inf, 0.0)
        m = masked.data.max(axis=-1, keepdims=True)
        lse = T.log(T.sum_(T.exp(masked - m), axis=-1)) + m[:, 0]
        return T.mean(lse - s)
    raise ContractError(f"unknown contrastive mode {mode!r}")


def total_loss(components: dict[str, Tensor | None]) -> Tensor:
    """Unweighted sum of the enabled (non-None) components."""
    total = None
    for name, value in components.items():
        if value is None:
            continue
        v = float(value.data.reshape(-1)[0])
        if math.isnan(v) or math.isinf(v):
            raise TrainingError(f"loss component {name!r} is not finite ({v})")
        total = value if total is None else total + value
    if total is None:
        return Tensor(0.0)
    return total
