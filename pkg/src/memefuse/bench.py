"""Interaction-cost and kernel-backend benchmarks."""
from __future__ import annotations

import time

import numpy as np

from . import kernels, nn
from . import tensor as T
from .config import ModelConfig
from .fusion import attention_entries, declare_gl_layer, declare_ll_layer, gl_stack, local_local_stack
from .tensor import Tensor

LENGTHS = (64, 128, 256, 512)


def loglog_slope(xs, ys) -> float:
    return float(np.polyfit(np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float)), 1)[0])


def _stores(cfg, seed: int):
    store = nn.ParamStore(seed)
    for i in range(cfg.layers):
        declare_gl_layer(store, i, cfg)
        declare_ll_layer(store, i, cfg)
    return store


def bench_interaction(cfg: ModelConfig, lengths=LENGTHS, image_len: int | None = None,
                      repeats: int = 3, seed: int = 0) -> dict:
    """Forward-only cost of the global-local vs local-local stacks.

    For each text length n the image sequence has ``image_len`` tokens, or n
    when ``image_len`` is None (both modalities grow together). Attention
    entries are counted during execution and compared to the closed forms;
    wall time is the best of ``repeats`` runs.
    """
    store = _stores(cfg, seed)
    rng = np.random.default_rng(seed)
    rows = []
    for n in lengths:
        k = n if image_len is None else image_len
        h_t = Tensor(rng.standard_normal((1, n, cfg.d)))
        h_i = Tensor(rng.standard_normal((1, k, cfg.d)))
        row = {"n_text": n, "n_image": k}
        for variant, fn in (("global_local", lambda: gl_stack(h_t, h_i, store, cfg)),
                            ("local_local", lambda: local_local_stack(h_t, h_i, store, cfg))):
            best_total, best_cross, counts = np.inf, np.inf, None
            for _ in range(repeats):
                with T.no_grad(), nn.count_attention() as c:
                    t0 = time.perf_counter()
                    fn()
                    elapsed = time.perf_counter() - t0
                best_total = min(best_total, elapsed)
                best_cross = min(best_cross, c.seconds.get("cross", 0.0))
                counts = c
            expected = attention_entries(n, k, cfg.layers, cfg.heads, variant)
            row[variant] = {
                "cross_entries": counts.counts.get("cross", 0),
                "self_entries": counts.counts.get("self", 0),
                "cap_calls": counts.calls.get("cross", 0),
                "expected_cross": expected["cross"],
                "expected_self": expected["self"],
                "cross_seconds": best_cross,
                "total_seconds": best_total,
            }
        rows.append(row)
    slopes = {}
    for variant in ("global_local", "local_local"):
        ns = [r["n_text"] for r in rows]
        slopes[variant] = {
            "cross_entries": loglog_slope(ns, [r[variant]["cross_entries"] for r in rows]),
            "cross_seconds": loglog_slope(ns, [r[variant]["cross_seconds"] for r in rows]),
            "total_seconds": loglog_slope(ns, [r[variant]["total_seconds"] for r in rows]),
        }
    return {"d": cfg.d, "heads": cfg.heads, "layers": cfg.layers, "image_len": image_len,
            "rows": rows, "slopes": slopes}


def format_interaction(result: dict) -> str:
    lines = [f"{'n_text':>7} {'n_img':>6} | {'GL cross':>10} {'GL ms':>8} | {'LL cross':>10} {'LL ms':>8}"]
    for r in result["rows"]:
        gl, ll = r["global_local"], r["local_local"]
        lines.append(f"{r['n_text']:>7} {r['n_image']:>6} | {gl['cross_entries']:>10} "
                     f"{1e3 * gl['cross_seconds']:>8.3f} | {ll['cross_entries']:>10} {1e3 * ll['cross_seconds']:>8.3f}")
    for v, s in result["slopes"].items():
        lines.append(f"slope {v:<13} entries {s['cross_entries']:.3f}  cross time {s['cross_seconds']:.3f}  "
                     f"stack time {s['total_seconds']:.3f}")
    return "\n".join(lines)


def _time(fn, repeats: int) -> float:
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(shapes=((8, 16), (64, 64), (512, 64), (4096, 128)), repeats: int = 20) -> list[dict]:
    """Time each fused kernel (forward + backward) under both backends."""
    backends = {"python": kernels.get_backend("python")}
    try:
        backends["cython"] = kernels.get_backend("cython")
    except ImportError:
        pass
    rng = np.random.default_rng(0)
    rows = []
    for shape in shapes:
        x = rng.standard_normal(shape)
        g = rng.standard_normal(shape)
        gain, bias = rng.standard_normal(shape[-1]), rng.standard_normal(shape[-1])
        for name, impl in backends.items():
            y = kernels.softmax(x, impl)
            _, xhat, rstd = kernels.layer_norm(x, gain, bias, 1e-5, impl)
            rows.append({
                "shape": list(shape), "backend": name,
                "softmax_us": 1e6 * _time(lambda: (kernels.softmax(x, impl), kernels.softmax_grad(y, g, impl)), repeats),
                "layer_norm_us": 1e6 * _time(lambda: (kernels.layer_norm(x, gain, bias, 1e-5, impl),
                                                      kernels.layer_norm_grad(g, xhat, rstd, gain, impl)), repeats),
                "gelu_us": 1e6 * _time(lambda: (kernels.gelu(x, impl), kernels.gelu_grad(x, g, impl)), repeats),
            })
    return rows


def format_kernels(rows: list[dict]) -> str:
    lines = [f"{'shape':>12} {'backend':>8} {'softmax us':>11} {'layernorm us':>13} {'gelu us':>9}"]
    for r in rows:
        lines.append(f"{'x'.join(map(str, r['shape'])):>12} {r['backend']:>8} {r['softmax_us']:>11.1f} "
                     f"{r['layer_norm_us']:>13.1f} {r['gelu_us']:>9.1f}")
    return "\n".join(lines)
