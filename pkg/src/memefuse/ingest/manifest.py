"""Line-delimited JSON manifests of meme samples.

One object per line::

    {"id": "s0", "text_tokens": [...], "source_tokens": [...], "target_tokens": [...],
     "image": {"blob": "img/s0.mgmf"} | {"synthetic": {...}} | {"features": "f/s0.mgmf"},
     "regions": [[x, y, w, h], ...],
     "labels": {"mr": 0, "sa": 2, "id": 1, "od": 0}}

Blob paths are relative to the manifest's directory. Loading is all or
nothing: the first invalid line aborts with its line number.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..config import TASKS
from ..errors import DataError
from . import blob as blobio
from .image import render_synthetic


@dataclass
class MemeSample:
    id: str
    text_tokens: list
    source_tokens: list
    target_tokens: list
    image: dict
    regions: list = field(default_factory=list)
    labels: dict = field(default_factory=dict)
    base_dir: Path | None = field(default=None, compare=False, repr=False)

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "text_tokens": list(self.text_tokens),
            "source_tokens": list(self.source_tokens),
            "target_tokens": list(self.target_tokens),
            "image": self.image,
            "regions": [list(b) for b in self.regions],
            "labels": dict(self.labels),
        }

    @property
    def image_kind(self) -> str:
        return next(iter(self.image))

    def _path(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() or self.base_dir is None else self.base_dir / p

    def pixels(self) -> np.ndarray:
        """H x W x C image in [0, 1]."""
        kind = self.image_kind
        if kind == "synthetic":
            return render_synthetic(self.image["synthetic"])
        if kind == "blob":
            arr = blobio.read_blob(self._path(self.image["blob"]))
            if arr.ndim == 2:
                arr = arr[..., None]
            return arr
        raise DataError(f"sample {self.id}: image is given as features, not pixels")

    def features(self) -> np.ndarray:
        """Precomputed (1 + regions) x F feature rows."""
        if self.image_kind != "features":
            raise DataError(f"sample {self.id}: no precomputed features")
        return blobio.read_blob(self._path(self.image["features"]))

    def image_size(self) -> tuple[int, int] | None:
        kind = self.image_kind
        if kind == "synthetic":
            s = self.image["synthetic"]
            return int(s["height"]), int(s["width"])
        if kind == "blob":
            dims = blobio.read_blob_header(self._path(self.image["blob"]))
            return int(dims[0]), int(dims[1])
        return None


@dataclass
class ManifestLimits:
    classes: dict
    vocab_size: int | None = None
    max_text_len: int | None = None
    max_source_len: int | None = None
    max_target_len: int | None = None

    @classmethod
    def from_config(cls, config) -> "ManifestLimits":
        m = config.model
        return cls(dict(config.classes), m.vocab_size, m.max_text_len, m.max_source_len, m.max_target_len)


_KEYS = ("id", "text_tokens", "source_tokens", "target_tokens", "image", "regions", "labels")


def _check_tokens(sample_id: str, name: str, toks, max_len, vocab) -> None:
    if not isinstance(toks, list) or not toks:
        raise DataError(f"sample {sample_id}: {name} must be a non-empty list")
    if max_len is not None and len(toks) > max_len:
        raise DataError(f"sample {sample_id}: {name} has {len(toks)} tokens, max is {max_len}")
    for t in toks:
        if not isinstance(t, int) or t < 0:
            raise DataError(f"sample {sample_id}: {name} contains invalid id {t!r}")
        if vocab is not None and t >= vocab:
            raise DataError(f"sample {sample_id}: {name} id {t} is out of vocabulary (size {vocab})")


def validate_sample(s: MemeSample, limits: ManifestLimits | None) -> None:
    lim = limits or ManifestLimits(classes={})
    if not isinstance(s.id, str) or not s.id:
        raise DataError("sample id must be a non-empty string")
    _check_tokens(s.id, "text_tokens", s.text_tokens, lim.max_text_len, lim.vocab_size)
    _check_tokens(s.id, "source_tokens", s.source_tokens, lim.max_source_len, lim.vocab_size)
    _check_tokens(s.id, "target_tokens", s.target_tokens, lim.max_target_len, lim.vocab_size)
    if not isinstance(s.image, dict) or len(s.image) != 1 or s.image_kind not in ("blob", "synthetic", "features"):
        raise DataError(f"sample {s.id}: image must be one of blob/synthetic/features")
    if set(s.labels) != set(TASKS):
        raise DataError(f"sample {s.id}: labels must cover {TASKS}")
    for t in TASKS:
        y = s.labels[t]
        if not isinstance(y, int) or y < 0:
            raise DataError(f"sample {s.id}: label {t}={y!r} is not a non-negative integer")
        if t in lim.classes and y >= lim.classes[t]:
            raise DataError(f"sample {s.id}: label {t}={y} >= class count {lim.classes[t]}")
    for ref_key in ("blob", "features"):
        if ref_key in s.image and not s._path(s.image[ref_key]).is_file():
            raise DataError(f"sample {s.id}: dangling blob reference {s.image[ref_key]!r}")
    size = s.image_size()
    for box in s.regions:
        if len(box) != 4 or not all(isinstance(v, int) for v in box):
            raise DataError(f"sample {s.id}: malformed box {box!r}")
        x, y, w, h = box
        if w <= 0 or h <= 0 or x < 0 or y < 0:
            raise DataError(f"sample {s.id}: malformed box {box!r}")
        if size is not None and (x + w > size[1] or y + h > size[0]):
            raise DataError(f"sample {s.id}: box {box!r} exceeds image bounds {size}")
    if s.image_kind == "features":
        dims = blobio.read_blob_header(s._path(s.image["features"]))
        if len(dims) != 2 or dims[0] != 1 + len(s.regions):
            raise DataError(f"sample {s.id}: feature blob shape {dims} != (1 + {len(s.regions)} regions, F)")


def sample_from_record(rec: dict, base_dir: Path | None = None) -> MemeSample:
    if not isinstance(rec, dict):
        raise DataError("record must be a JSON object")
    missing = [k for k in _KEYS if k not in rec]
    extra = set(rec) - set(_KEYS)
    if missing or extra:
        raise DataError(f"record fields: missing {missing}, unknown {sorted(extra)}")
    return MemeSample(
        id=rec["id"], text_tokens=rec["text_tokens"], source_tokens=rec["source_tokens"],
        target_tokens=rec["target_tokens"], image=rec["image"],
        regions=[list(b) if isinstance(b, (list, tuple)) else b for b in rec["regions"]],
        labels=rec["labels"], base_dir=base_dir,
    )


def load_manifest(path: str | Path, limits: ManifestLimits | None = None) -> list[MemeSample]:
    path = Path(path)
    base = path.parent
    samples: list[MemeSample] = []
    seen: set[str] = set()
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                s = sample_from_record(rec, base)
                validate_sample(s, limits)
                if s.id in seen:
                    raise DataError(f"duplicate sample id {s.id!r}")
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: parse error: {exc.msg}") from None
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            seen.add(s.id)
            samples.append(s)
    return samples


def write_manifest(path: str | Path, samples) -> None:
    with open(path, "w") as f:
        for s in samples:
            f.write(json.dumps(s.to_record(), separators=(",", ":")) + "\n")
