"""Synthetic meme datasets driven by a latent class.

Every sample draws a latent class ``c``; the four task labels are fixed
functions ``(c // STRIDE[t] + OFFSET[t]) mod C_t`` of it. In ``aligned`` mode
the text keywords and the texture of one object region both encode ``c``.
In ``weak`` mode each modality independently carries ``c`` with probability
``carry_prob``, redrawn until at least one does; a modality that does not
carry it shows only filler text or distractor objects. Text and image thus
agree on some samples and neither alone suffices.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..config import TASKS, SynthConfig
from ..errors import ConfigError
from . import blob as blobio
from .image import render_synthetic
from .manifest import MemeSample, write_manifest

STRIDE = {"mr": 1, "sa": 1, "id": 1, "od": 2}
OFFSET = {"mr": 0, "sa": 0, "id": 1, "od": 0}

N_FILLER = 32
KEYWORDS_PER_VALUE = 4
N_PATTERNS = 16


def labels_for(c: int, classes: dict) -> dict:
    return {t: (c // STRIDE[t] + OFFSET[t]) % classes[t] for t in TASKS}


def required_vocab(cfg: SynthConfig) -> int:
    return N_FILLER + KEYWORDS_PER_VALUE * cfg.latent_classes


def _place(rng, n: int, size: int, img: int) -> list[list[int]]:
    boxes: list[list[int]] = []
    for _ in range(200 * max(n, 1)):
        if len(boxes) == n:
            break
        x, y = (int(v) for v in rng.integers(0, img - size + 1, size=2))
        if all(abs(x - bx) >= size or abs(y - by) >= size for bx, by, _, _ in boxes):
            boxes.append([x, y, size, size])
    if len(boxes) < n:
        raise ConfigError(f"cannot place {n} objects of size {size} in a {img}px image")
    return boxes


def _draw_latent(rng, cfg: SynthConfig) -> tuple[int, str]:
    c = int(rng.integers(cfg.latent_classes))
    if cfg.mode == "aligned":
        return c, "both"
    while True:
        t, i = rng.random(2) < cfg.carry_prob
        if t or i:
            return c, "both" if t and i else ("text" if t else "image")


def make_sample(index: int, cfg: SynthConfig, classes: dict, prefix: str) -> MemeSample:
    rng = np.random.default_rng([cfg.seed, index])
    k = cfg.latent_classes
    if k + 1 > N_PATTERNS:
        raise ConfigError("too many latent classes for the synthetic texture bank")
    c, carrier = _draw_latent(rng, cfg)

    text = [int(t) for t in rng.integers(0, N_FILLER, size=cfg.text_len)]
    slots = rng.choice(cfg.text_len, size=min(cfg.signal_tokens, cfg.text_len), replace=False)
    if carrier in ("text", "both"):
        for pos in slots:
            text[int(pos)] = N_FILLER + KEYWORDS_PER_VALUE * c + int(rng.integers(KEYWORDS_PER_VALUE))
    source = [int(t) for t in rng.integers(0, N_FILLER, size=cfg.domain_len)]
    target = [int(t) for t in rng.integers(0, N_FILLER, size=cfg.domain_len)]

    boxes = _place(rng, cfg.n_objects, cfg.object_size, cfg.image_size)
    signal_slot = int(rng.integers(len(boxes))) if boxes and carrier in ("image", "both") else -1
    objects = []
    for j, box in enumerate(boxes):
        pattern = c if j == signal_slot else int(rng.integers(k, N_PATTERNS))
        objects.append({"box": box, "pattern": pattern, "phase": int(rng.integers(2))})
    image = {"synthetic": {"height": cfg.image_size, "width": cfg.image_size, "channels": 3,
                           "seed": int(rng.integers(2**31)), "noise": cfg.noise, "objects": objects}}
    return MemeSample(id=f"{prefix}{index:06d}", text_tokens=text, source_tokens=source,
                      target_tokens=target, image=image, regions=[list(b) for b in boxes],
                      labels=labels_for(c, classes))


def latent_of(sample: MemeSample, cfg: SynthConfig) -> tuple[int, str]:
    """Recover (latent class, carrying modality) by replaying the generator (oracle use)."""
    rng = np.random.default_rng([cfg.seed, int(sample.id[-6:])])
    return _draw_latent(rng, cfg)


def synth_generate(cfg: SynthConfig, classes: dict, out_dir: str | Path | None = None):
    """Build (train, test) sample lists; write manifests and blobs if ``out_dir``."""
    if cfg.mode not in ("aligned", "weak"):
        raise ConfigError(f"unknown synthetic mode {cfg.mode!r}")
    if not 0.0 < cfg.carry_prob <= 1.0:
        raise ConfigError("carry_prob must lie in (0, 1]")
    train = [make_sample(i, cfg, classes, "tr") for i in range(cfg.n_train)]
    test = [make_sample(cfg.n_train + i, cfg, classes, "te") for i in range(cfg.n_test)]
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if cfg.write_blobs:
            (out / "blobs").mkdir(exist_ok=True)
            for s in train + test:
                rel = f"blobs/{s.id}.mgmf"
                blobio.write_blob(out / rel, render_synthetic(s.image["synthetic"]))
                s.image = {"blob": rel}
                s.base_dir = out
        write_manifest(out / "train.jsonl", train)
        write_manifest(out / "test.jsonl", test)
    return train, test
