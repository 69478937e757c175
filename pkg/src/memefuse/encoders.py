"""Trainable stand-ins for the text and image backbones.

Text: token embedding + role-offset position embedding + one pre-norm
transformer block. Image: every region (and the whole image) is resized to
S x S, cut into (S/P)^2 flattened patches, projected, given a class token and
position embeddings, passed through one pre-norm block; the class-token output
is the region vector. The image representation is ``[h_c; h_1 .. h_m']``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from . import tensor as T
from .config import ModelConfig
from .errors import DataError
from .ingest.image import crop, resize, to_patches
from .tensor import Tensor

ROLES = ("text", "source", "target")


def role_offset(cfg: ModelConfig, role: str) -> int:
    return {"text": 0, "source": cfg.max_text_len,
            "target": cfg.max_text_len + cfg.max_source_len}[role]


def declare_block(s: nn.Scope, cfg: ModelConfig) -> None:
    nn.declare_layer_norm(s.scope("ln1"), cfg.d)
    nn.declare_attention(s.scope("attn"), cfg.d, cfg.heads)
    nn.declare_layer_norm(s.scope("ln2"), cfg.d)
    nn.declare_feed_forward(s.scope("ff"), cfg.d, cfg.d_ff)


def encoder_block(x: Tensor, s: nn.Scope, cfg: ModelConfig, mask=None) -> Tensor:
    h = nn.layer_norm(x, s.scope("ln1"), cfg.ln_eps)
    x = x + nn.multi_head_attention(h, h, s.scope("attn"), cfg.heads, mask, kind="encoder")[0]
    return x + nn.feed_forward(nn.layer_norm(x, s.scope("ln2"), cfg.ln_eps), s.scope("ff"), cfg.activation)


def n_patches(cfg: ModelConfig) -> int:
    return (cfg.region_size // cfg.patch) ** 2


def declare_encoders(store: nn.ParamStore, cfg: ModelConfig) -> None:
    t = store.scope("text")
    store.normal(t.name("emb"), (cfg.vocab_size, cfg.d))
    store.normal(t.name("pos"), (cfg.max_text_len + cfg.max_source_len + cfg.max_target_len, cfg.d))
    declare_block(t.scope("block"), cfg)
    nn.declare_layer_norm(t.scope("ln_out"), cfg.d)

    v = store.scope("image")
    if cfg.feature_dim:
        nn.declare_linear(v.scope("feat"), cfg.feature_dim, cfg.d)
    else:
        patch_dim = cfg.patch * cfg.patch * cfg.channels
        nn.declare_linear(v.scope("proj"), patch_dim, cfg.d)
        store.normal(v.name("cls"), (cfg.d,))
        store.normal(v.name("pos"), (n_patches(cfg) + 1, cfg.d))
        declare_block(v.scope("block"), cfg)
    nn.declare_layer_norm(v.scope("ln_out"), cfg.d)


# ----------------------------------------------------------------------- text

def pad_ids(seqs: list[list[int]]) -> tuple[np.ndarray, np.ndarray]:
    n = max(len(s) for s in seqs)
    ids = np.full((len(seqs), n), -1, dtype=np.int64)
    for i, s in enumerate(seqs):
        ids[i, :len(s)] = s
    return ids, ids >= 0


def encode_text_ids(ids: np.ndarray, mask: np.ndarray, role: str, store: nn.ParamStore,
                    cfg: ModelConfig) -> Tensor:
    """Batched text encoder: ``ids`` is B x n with -1 padding; returns B x n x d."""
    s = store.scope("text")
    if (ids >= cfg.vocab_size).any():
        raise DataError(f"token id {int(ids.max())} is out of vocabulary (size {cfg.vocab_size})")
    emb = T.take_rows(s["emb"], ids)
    n = ids.shape[1]
    off = role_offset(cfg, role)
    pos = s["pos"][off:off + n]
    x = emb + pos * mask[..., None]
    x = encoder_block(x, s.scope("block"), cfg, mask)
    return nn.layer_norm(x, s.scope("ln_out"), cfg.ln_eps)


def encode_text(tokens: list[int], role: str, store: nn.ParamStore, cfg: ModelConfig,
                sample_id: str = "?") -> Tensor:
    """Encode one token sequence; returns len x d."""
    if role not in ROLES:
        raise ValueError(f"unknown role {role!r}")
    bad = [t for t in tokens if not 0 <= t < cfg.vocab_size]
    if bad:
        raise DataError(f"sample {sample_id}: token id {bad[0]} is out of vocabulary (size {cfg.vocab_size})")
    ids, mask = pad_ids([list(tokens)])
    return encode_text_ids(ids, mask, role, store, cfg)[0]


# ---------------------------------------------------------------------- image

@dataclass
class PatchSequence:
    class_token: Tensor
    patch_embeddings: Tensor
    position_embeddings: Tensor

    @property
    def m(self) -> int:
        return self.patch_embeddings.shape[-2]

    def matrix(self) -> Tensor:
        """``[z_cls; z_1 .. z_m] + E_pos`` with any leading batch axes."""
        lead = self.patch_embeddings.shape[:-2]
        d = self.class_token.shape[-1]
        cls = self.class_token.reshape((1,) * len(lead) + (1, d))
        if lead:
            cls = cls * np.ones(lead + (1, 1))
        return T.concat([cls, self.patch_embeddings], axis=-2) + self.position_embeddings


def patch_sequence(patches: np.ndarray, store: nn.ParamStore) -> PatchSequence:
    """Project flattened patches (``[..., m, P*P*C]``) into a PatchSequence."""
    s = store.scope("image")
    z = nn.linear(Tensor(patches), s.scope("proj"))
    return PatchSequence(s["cls"], z, s["pos"])


def patchify_region(pixels: np.ndarray, store: nn.ParamStore, cfg: ModelConfig) -> PatchSequence:
    """S x S x C region -> PatchSequence with (S/P)^2 patches."""
    return patch_sequence(to_patches(np.asarray(pixels, dtype=np.float64), cfg.patch), store)


def encode_patch_sequences(z: PatchSequence, store: nn.ParamStore, cfg: ModelConfig) -> Tensor:
    """Class-token output of the region encoder: ``[..., m+1, d] -> [..., d]``."""
    s = store.scope("image")
    x = encoder_block(z.matrix(), s.scope("block"), cfg)
    return nn.layer_norm(x[..., 0, :], s.scope("ln_out"), cfg.ln_eps)


def encode_region(z: PatchSequence, store: nn.ParamStore, cfg: ModelConfig) -> Tensor:
    return encode_patch_sequences(z, store, cfg)


def region_pixels(img: np.ndarray, box, cfg: ModelConfig) -> np.ndarray:
    return resize(crop(img, box), cfg.region_size, cfg.resize)


def sample_patches(sample, cfg: ModelConfig) -> tuple[np.ndarray, np.ndarray]:
    """(whole-image patches m x PPC, region patches R x m x PPC) for one sample."""
    img = sample.pixels()
    if img.shape[2] != cfg.channels:
        raise DataError(f"sample {sample.id}: image has {img.shape[2]} channels, expected {cfg.channels}")
    whole = to_patches(resize(img, cfg.region_size, cfg.resize), cfg.patch)
    regions = [to_patches(region_pixels(img, box, cfg), cfg.patch) for box in sample.regions]
    width = cfg.patch * cfg.patch * cfg.channels
    stacked = np.stack(regions) if regions else np.zeros((0, n_patches(cfg), width))
    return whole, stacked


@dataclass
class ImageRepresentation:
    image_level: Tensor
    region_features: Tensor | None

    def sequence(self) -> Tensor:
        h_c = self.image_level.reshape((1, -1))
        if self.region_features is None or self.region_features.shape[0] == 0:
            return h_c
        return T.concat([h_c, self.region_features], axis=0)

    def __len__(self) -> int:
        return 1 + (0 if self.region_features is None else self.region_features.shape[0])


def encode_image(sample, store: nn.ParamStore, cfg: ModelConfig, use_regions: bool = True) -> ImageRepresentation:
    """Image-level vector plus one vector per bounding region."""
    if cfg.feature_dim:
        feats = nn.layer_norm(nn.linear(Tensor(sample.features()), store.scope("image").scope("feat")),
                              store.scope("image").scope("ln_out"), cfg.ln_eps)
        regions = feats[1:] if use_regions and feats.shape[0] > 1 else None
        return ImageRepresentation(feats[0], regions)
    whole, regions = sample_patches(sample, cfg)
    h_c = encode_region(patch_sequence(whole, store), store, cfg)
    if not use_regions or regions.shape[0] == 0:
        return ImageRepresentation(h_c, None)
    return ImageRepresentation(h_c, encode_region(patch_sequence(regions, store), store, cfg))
