"""Full model: encoders -> interaction trunk -> multi-granular heads -> losses."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import encoders as enc
from . import nn
from . import tensor as T
from .config import TASKS, RunConfig
from .errors import DataError
from .fusion import (TaskPredictions, combine_predictions, declare_gl_layer, declare_heads,
                     declare_ll_layer, fused_representation, gl_stack, head_param_names,
                     local_local_stack, masked_mean, task_head)
from .losses import dual_semantic_loss, task_ce_loss, total_loss
from .tensor import Tensor


@dataclass
class Batch:
    ids: list
    text: tuple
    source: tuple
    target: tuple
    labels: dict
    whole: np.ndarray | None = None
    regions: np.ndarray | None = None
    region_index: np.ndarray | None = None
    features: np.ndarray | None = None
    feature_mask: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.ids)


class BatchBuilder:
    """Turns samples into padded arrays; pixel preprocessing is cached per sample id."""

    def __init__(self, config: RunConfig, cache: dict | None = None):
        self.cfg = config.model
        self._cache: dict[str, tuple] = {} if cache is None else cache

    def _image(self, s):
        hit = self._cache.get(s.id)
        if hit is None:
            hit = s.features() if self.cfg.feature_dim else enc.sample_patches(s, self.cfg)
            self._cache[s.id] = hit
        return hit

    def build(self, samples) -> Batch:
        if not samples:
            raise DataError("empty batch")
        b = Batch(
            ids=[s.id for s in samples],
            text=enc.pad_ids([s.text_tokens for s in samples]),
            source=enc.pad_ids([s.source_tokens for s in samples]),
            target=enc.pad_ids([s.target_tokens for s in samples]),
            labels={t: np.array([s.labels[t] for s in samples], dtype=np.int64) for t in TASKS},
        )
        imgs = [self._image(s) for s in samples]
        if self.cfg.feature_dim:
            k = max(f.shape[0] for f in imgs)
            feats = np.zeros((len(imgs), k, self.cfg.feature_dim))
            mask = np.zeros((len(imgs), k), bool)
            for i, f in enumerate(imgs):
                if f.shape[1] != self.cfg.feature_dim:
                    raise DataError(f"sample {b.ids[i]}: feature width {f.shape[1]} != {self.cfg.feature_dim}")
                feats[i, :len(f)] = f
                mask[i, :len(f)] = True
            b.features, b.feature_mask = feats, mask
            return b
        b.whole = np.stack([w for w, _ in imgs])
        counts = [r.shape[0] for _, r in imgs]
        b.regions = np.concatenate([r for _, r in imgs], axis=0)
        index = np.full((len(imgs), max(max(counts), 1)), -1, dtype=np.int64)
        start = 0
        for i, c in enumerate(counts):
            index[i, :c] = np.arange(start, start + c)
            start += c
        b.region_index = index
        return b


@dataclass
class ForwardOutput:
    h_text: Tensor
    h_image: Tensor
    mask_text: np.ndarray
    mask_image: np.ndarray
    h_text_out: Tensor
    h_image_out: Tensor
    context: Tensor | None
    mask_context: np.ndarray | None
    predictions: TaskPredictions
    attention: list = field(default_factory=list)


class Model:
    """Parameters plus forward/loss for one configuration (ablations included)."""

    def __init__(self, config: RunConfig, seed: int | None = None):
        self.config = config
        self.cfg = config.model
        self.ab = config.ablation
        self.store = nn.ParamStore(config.optim.seed if seed is None else seed)
        enc.declare_encoders(self.store, self.cfg)
        for i in range(self.cfg.layers):
            if self.ab.gl:
                declare_gl_layer(self.store, i, self.cfg)
            else:
                declare_ll_layer(self.store, i, self.cfg)
        declare_heads(self.store, self.cfg, config.classes, unimodal=self.ab.up)
        self._heads = {t: head_param_names(self.store, t) for t in TASKS}
        self.builder = BatchBuilder(config)

    # ------------------------------------------------------------- encoding
    def encode_text_side(self, b: Batch):
        cfg = self.cfg
        h, mask = enc.encode_text_ids(*b.text, "text", self.store, cfg), b.text[1]
        if cfg.use_domains:
            hs = enc.encode_text_ids(*b.source, "source", self.store, cfg)
            ha = enc.encode_text_ids(*b.target, "target", self.store, cfg)
            h = T.concat([h, hs, ha], axis=1)
            mask = np.concatenate([mask, b.source[1], b.target[1]], axis=1)
        return h, mask

    def encode_image_side(self, b: Batch):
        cfg = self.cfg
        if cfg.feature_dim:
            s = self.store.scope("image")
            feats, mask = b.features, b.feature_mask
            if not self.ab.om:
                feats, mask = feats[:, :1], mask[:, :1]
            h = nn.layer_norm(nn.linear(Tensor(feats), s.scope("feat")), s.scope("ln_out"), cfg.ln_eps)
            return h, mask
        h_c = enc.encode_patch_sequences(enc.patch_sequence(b.whole, self.store), self.store, cfg)
        h_c = h_c.reshape((len(b), 1, cfg.d))
        ones = np.ones((len(b), 1), bool)
        if not self.ab.om or b.regions.shape[0] == 0:
            return h_c, ones
        r = enc.encode_patch_sequences(enc.patch_sequence(b.regions, self.store), self.store, cfg)
        h_r = T.take_rows(r, b.region_index)
        return T.concat([h_c, h_r], axis=1), np.concatenate([ones, b.region_index >= 0], axis=1)

    # -------------------------------------------------------------- forward
    def forward(self, b: Batch, record: bool = False) -> ForwardOutput:
        cfg = self.cfg
        rec: list | None = [] if record else None
        h_t, m_t = self.encode_text_side(b)
        h_i, m_i = self.encode_image_side(b)
        if self.ab.gl:
            st = gl_stack(h_t, h_i, self.store, cfg, m_t, m_i, rec)
            h_t_out, h_i_out, g, m_g = st.h_text, st.h_image, st.context, st.mask_context
            fused = fused_representation([h_t_out, h_i_out, g], [m_t, m_i, m_g], self.store, cfg, rec)
        else:
            h_t_out, h_i_out = local_local_stack(h_t, h_i, self.store, cfg, m_t, m_i, rec)
            g = m_g = None
            fused = fused_representation([h_t_out, h_i_out], [m_t, m_i], self.store, cfg, rec)
        preds = TaskPredictions()
        if self.ab.up:
            src_t, src_i = (h_t, h_i) if cfg.unimodal_input == "pre" else (h_t_out, h_i_out)
            pooled_t, pooled_i = masked_mean(src_t, m_t), masked_mean(src_i, m_i)
        for task in TASKS:
            preds.multi[task] = task_head(fused, self.store, task, "multi")
            parts = [preds.multi[task]]
            if self.ab.up:
                preds.text[task] = task_head(pooled_t, self.store, task, "text")
                preds.image[task] = task_head(pooled_i, self.store, task, "image")
                parts += [preds.text[task], preds.image[task]]
            preds.combined[task] = combine_predictions(*parts)
        return ForwardOutput(h_t, h_i, m_t, m_i, h_t_out, h_i_out, g, m_g, preds, rec or [])

    # ----------------------------------------------------------------- loss
    def loss_components(self, b: Batch, out: ForwardOutput) -> dict:
        lc = self.config.loss
        comps: dict[str, Tensor | None] = {}
        for task in TASKS:
            if not lc.tasks[task]:
                comps[task] = None
                continue
            heads = [self.store[n] for n in self._heads[task]]
            comps[task] = task_ce_loss(out.predictions.combined[task], b.labels[task],
                                       out.predictions.n_branches(task), heads, lc.l2[task])
        if self.ab.dg and len(b) >= 2:
            if self.cfg.contrast_input == "post":
                ht, hi = out.h_text_out, out.h_image_out
            else:
                ht, hi = out.h_text, out.h_image
            comps["dg"] = dual_semantic_loss(masked_mean(ht, out.mask_text), masked_mean(hi, out.mask_image),
                                             lc.tau, lc.mode)
        else:
            comps["dg"] = None
        return comps

    def loss(self, b: Batch) -> tuple[Tensor, dict, ForwardOutput]:
        out = self.forward(b)
        comps = self.loss_components(b, out)
        return total_loss(comps), comps, out

    def head_names(self) -> set[str]:
        return {n for names in self._heads.values() for n in names}
