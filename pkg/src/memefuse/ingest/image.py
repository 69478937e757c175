"""Pixel utilities: resizing, cropping, patch extraction, synthetic rendering."""
from __future__ import annotations

import numpy as np

from ..errors import ConfigError


def _bilinear_axis(n_in: int, n_out: int):
    # half-pixel centres, edge-clamped
    x = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    x = np.clip(x, 0.0, n_in - 1)
    lo = np.floor(x).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, x - lo


def resize(img: np.ndarray, size: int, method: str = "bilinear") -> np.ndarray:
    """Resize an H x W x C array to size x size."""
    h, w = img.shape[:2]
    if (h, w) == (size, size):
        return img.astype(np.float64, copy=True)
    if method == "nearest":
        ri = np.minimum((np.arange(size) * h) // size, h - 1)
        ci = np.minimum((np.arange(size) * w) // size, w - 1)
        return img[ri][:, ci].astype(np.float64)
    if method != "bilinear":
        raise ConfigError(f"unknown resize method {method!r}")
    r0, r1, fr = _bilinear_axis(h, size)
    c0, c1, fc = _bilinear_axis(w, size)
    fr = fr[:, None, None]
    fc = fc[None, :, None]
    top = img[r0][:, c0] * (1 - fc) + img[r0][:, c1] * fc
    bot = img[r1][:, c0] * (1 - fc) + img[r1][:, c1] * fc
    return top * (1 - fr) + bot * fr


def crop(img: np.ndarray, box) -> np.ndarray:
    x, y, w, h = (int(v) for v in box)
    return img[y:y + h, x:x + w]


def to_patches(img: np.ndarray, patch: int) -> np.ndarray:
    """S x S x C -> (S/P)^2 x (P*P*C), patches in row-major grid order."""
    s, s2, c = img.shape
    if s != s2:
        raise ConfigError(f"region must be square, got {img.shape}")
    if s % patch:
        raise ConfigError(f"patch side {patch} does not divide region size {s}")
    g = s // patch
    return (img.reshape(g, patch, g, patch, c)
               .transpose(0, 2, 1, 3, 4)
               .reshape(g * g, patch * patch * c))


def render_pattern(pattern: int, size: int, channels: int, phase: int = 0) -> np.ndarray:
    """Fine-grained texture for object class ``pattern``.

    Textures are zero-mean high-frequency stripe/checker families (period 2-3
    pixels) with a small colour code, so a heavily downsampled whole image
    keeps little of them while a region crop keeps all of it.
    """
    yy, xx = np.mgrid[0:size, 0:size]
    family = pattern % 4
    if family == 0:
        tex = ((yy + phase) % 2) * 2.0 - 1.0
    elif family == 1:
        tex = ((xx + phase) % 2) * 2.0 - 1.0
    elif family == 2:
        tex = ((xx + yy + phase) % 2) * 2.0 - 1.0
    else:
        tex = (((xx - yy + phase) % 3) == 0) * 3.0 - 1.0
    tint = np.ones(channels)
    if pattern >= 4 and channels > 1:
        tint[(pattern // 4) % channels] = -1.0
    return tex[..., None] * tint


def render_synthetic(spec: dict) -> np.ndarray:
    """Deterministically render a synthetic meme image from its parameters."""
    h, w, c = int(spec["height"]), int(spec["width"]), int(spec["channels"])
    rng = np.random.default_rng(int(spec["seed"]))
    img = 0.5 + float(spec.get("noise", 0.1)) * rng.standard_normal((h, w, c))
    for obj in spec.get("objects", []):
        x, y, bw, bh = obj["box"]
        size = max(bw, bh)
        tex = render_pattern(int(obj["pattern"]), size, c, int(obj.get("phase", 0)))[:bh, :bw]
        img[y:y + bh, x:x + bw] = 0.5 + 0.35 * tex
    return np.clip(img, 0.0, 1.0)
