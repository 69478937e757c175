"""Checkpoints: concatenated MGMF parameter blobs plus a JSON index."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import RunConfig, from_dict
from .ingest.blob import pack_blob, read_blob_at

FORMAT_VERSION = 1


def save_checkpoint(out_dir: str | Path, config: RunConfig, state, step: int, name: str = "checkpoint") -> Path:
    """Write ``<name>.mgmf`` and ``<name>.json``; returns the index path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    index = {"format_version": FORMAT_VERSION, "step": step, "config": config.to_dict(), "params": {}}
    offset = 0
    with open(out / f"{name}.mgmf", "wb") as f:
        for pname, arr in state.items():
            buf = pack_blob(arr)
            index["params"][pname] = {"offset": offset, "shape": list(np.shape(arr))}
            f.write(buf)
            offset += len(buf)
    path = out / f"{name}.json"
    path.write_text(json.dumps(index, indent=1, sort_keys=True) + "\n")
    return path


def load_checkpoint(index_path: str | Path):
    """Returns (config, {name: float64 array}, step)."""
    index_path = Path(index_path)
    if index_path.is_dir():
        index_path = index_path / "checkpoint.json"
    index = json.loads(index_path.read_text())
    if index.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {index.get('format_version')}")
    config = from_dict(index["config"])
    state = {}
    with open(index_path.with_suffix(".mgmf"), "rb") as f:
        for pname, meta in index["params"].items():
            arr = read_blob_at(f, meta["offset"])
            state[pname] = arr.reshape(meta["shape"])
    return config, state, index["step"]
