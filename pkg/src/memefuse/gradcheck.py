"""Central finite-difference checks of the analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import nn
from . import tensor as T
from .tensor import Tensor

STEP = 1e-4
THRESHOLD = 1e-3


def relative_error(a, f) -> np.ndarray:
    a, f = np.asarray(a, dtype=np.float64), np.asarray(f, dtype=np.float64)
    return np.abs(a - f) / np.maximum(np.maximum(np.abs(a), np.abs(f)), 1e-8)


def sample_indices(shape, k: int, rng: np.random.Generator) -> list[tuple]:
    size = int(np.prod(shape))
    flat = np.arange(size) if size <= k else rng.choice(size, size=k, replace=False)
    return [np.unravel_index(int(i), shape) for i in np.sort(flat)]


def numeric_grad(f: Callable[[], float], x: Tensor, indices, step: float = STEP) -> np.ndarray:
    out = np.empty(len(indices))
    for j, idx in enumerate(indices):
        orig = x.data[idx]
        x.data[idx] = orig + step
        fp = f()
        x.data[idx] = orig - step
        fm = f()
        x.data[idx] = orig
        out[j] = (fp - fm) / (2 * step)
    return out


def check_tensors(loss_fn: Callable[[], Tensor], tensors: dict[str, Tensor], samples: int = 32,
                  seed: int = 0, step: float = STEP) -> dict[str, float]:
    """Max relative error per named tensor between backward and central differences."""
    for t in tensors.values():
        t.grad = None
    loss = loss_fn()
    T.backward(loss)
    analytic = {k: (np.zeros_like(t.data) if t.grad is None else t.grad.copy()) for k, t in tensors.items()}

    def f() -> float:
        with T.no_grad():
            return float(loss_fn().data)

    rng = np.random.default_rng(seed)
    result = {}
    for name, t in tensors.items():
        idx = sample_indices(t.shape, samples, rng)
        num = numeric_grad(f, t, idx, step)
        ana = np.array([analytic[name][i] for i in idx])
        result[name] = float(relative_error(ana, num).max())
    return result


@dataclass
class GradCheckReport:
    threshold: float = THRESHOLD
    errors: dict = field(default_factory=dict)    # check name -> {tensor: max rel err}

    def add(self, group: str, errs: dict[str, float]) -> None:
        self.errors.setdefault(group, {}).update(errs)

    def by_module(self) -> dict[str, float]:
        return {g: max(e.values()) if e else 0.0 for g, e in self.errors.items()}

    def failures(self) -> list[tuple[str, str, float]]:
        return [(g, k, v) for g, e in self.errors.items() for k, v in e.items() if not v < self.threshold]

    @property
    def passed(self) -> bool:
        return not self.failures()

    def lines(self) -> list[str]:
        out = []
        for g, worst in self.by_module().items():
            status = "PASS" if worst < self.threshold else "FAIL"
            out.append(f"{status}  {g:<28} max rel err {worst:.3e}")
        for g, k, v in self.failures():
            out.append(f"  failed: {g}/{k}: {v:.3e}")
        return out


def module_of(param: str) -> str:
    head = param.split(".")[0]
    return {"text": "feature_ingest.text", "image": "feature_ingest.image", "gl": "global_local.cap",
            "ll": "local_local.cap", "fusion": "global_local.fusion_head",
            "head": "global_local.heads"}.get(head, head)


def _op_checks(rng: np.random.Generator, samples: int) -> dict[str, dict]:
    """Per-op checks of the tensor core on random double-precision inputs."""
    def leaf(*shape):
        return Tensor(rng.standard_normal(shape), requires_grad=True)

    out: dict[str, dict] = {}
    a, b = leaf(3, 4), leaf(4, 2)
    w = rng.standard_normal((3, 2))
    out["matmul"] = check_tensors(lambda: T.sum_(T.matmul(a, b) * w), {"a": a, "b": b}, samples)
    x = leaf(4, 5)
    w2 = rng.standard_normal((4, 5))
    out["softmax"] = check_tensors(lambda: T.sum_(T.softmax(x) * w2), {"x": x}, samples)
    x3, g3, b3 = leaf(3, 8), leaf(8), leaf(8)
    w3 = rng.standard_normal((3, 8))
    out["layer_norm"] = check_tensors(lambda: T.sum_(T.layer_norm(x3, g3, b3) * w3),
                                      {"x": x3, "gain": g3, "bias": b3}, samples)
    store = nn.ParamStore(int(rng.integers(1 << 30)))
    nn.declare_attention(store.scope("attn"), 8, 2)
    nn.declare_feed_forward(store.scope("ff"), 8, 16)
    q, kv = leaf(3, 8), leaf(4, 8)
    wq = rng.standard_normal((3, 8))
    out["multi_head_attention"] = check_tensors(
        lambda: T.sum_(nn.multi_head_attention(q, kv, store.scope("attn"), 2)[0] * wq),
        {"q": q, "kv": kv, **{n: store[n] for n in store if n.startswith("attn.")}}, samples)
    xf = leaf(3, 8)
    out["feed_forward"] = check_tensors(
        lambda: T.sum_(nn.feed_forward(xf, store.scope("ff")) * wq),
        {"x": xf, **{n: store[n] for n in store if n.startswith("ff.")}}, samples)
    return out


def run_grad_check(config, samples_per_tensor: int = 32, seed: int = 0, layers: int = 1) -> GradCheckReport:
    """Check the tensor ops and every parameter of the full model (both trunks).

    Dimensions are forced tiny (d <= 16, two samples) to keep the run short.
    """
    from .config import SynthConfig, tiny_model
    from .ingest.synth import synth_generate
    from .model import Model

    model_cfg = tiny_model(d=min(config.model.d, 16), heads=2, d_ff=min(config.model.d_ff, 16),
                           layers=layers)
    report = GradCheckReport()
    rng = np.random.default_rng(seed)
    for name, errs in _op_checks(rng, samples_per_tensor).items():
        report.add(f"tensor_core.{name}", errs)

    synth = config.data.synth or SynthConfig()
    synth = SynthConfig(**{**synth.__dict__, "n_train": 2, "n_test": 0, "text_len": 6,
                           "image_size": 32, "object_size": 8, "n_objects": 2})
    train, _ = synth_generate(synth, config.classes)
    for gl in (True, False):
        cfg = config.replace(model=model_cfg.__dict__, ablation={"gl": gl, "om": True, "up": True, "dg": True},
                             optim={"batch_size": 2})
        model = Model(cfg, seed=seed)
        batch = model.builder.build(train)
        tensors = {n: t for n, t in model.store.items() if gl or n.startswith("ll.")}
        errs = check_tensors(lambda: model.loss(batch)[0], tensors, samples_per_tensor, seed)
        for pname, e in errs.items():
            report.add(module_of(pname), {pname: e})
        if gl:
            report.add("full_model", {"max": max(errs.values())})
    # contrastive loss in both modes
    for mode in ("symmetric", "literal"):
        from .losses import dual_semantic_loss
        ht = Tensor(rng.standard_normal((4, 8)), requires_grad=True)
        hi = Tensor(rng.standard_normal((4, 8)), requires_grad=True)
        report.add(f"losses.dual_semantic_{mode}",
                   check_tensors(lambda: dual_semantic_loss(ht, hi, 0.5, mode), {"h_text": ht, "h_image": hi},
                                 samples_per_tensor))
    return report
