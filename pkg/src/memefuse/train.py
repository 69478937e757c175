"""Training loop, evaluation, and the ablation harness."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .config import TASK_NAMES, TASKS, RunConfig
from .errors import CompatibilityError, ConfigError, TrainingError
from .ingest.manifest import ManifestLimits, load_manifest, validate_sample
from .ingest.synth import synth_generate
from .metrics import classification_metrics
from .model import BatchBuilder, Model
from .optim import OptimConfig, Optimizer

log = logging.getLogger(__name__)

VARIANTS = {"full": None, "w/o OM": "om", "w/o UP": "up", "w/o GL": "gl", "w/o DG": "dg"}


@dataclass
class MetricsReport:
    metrics: dict = field(default_factory=dict)          # task -> {accuracy, precision, recall}
    train_metrics: dict = field(default_factory=dict)
    loss_curve: list = field(default_factory=list)       # [step, total, {component: value}]
    evals: list = field(default_factory=list)            # [step, metrics]
    steps: int = 0
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    model: Model
    report: MetricsReport
    checkpoint: Path | None = None


def load_data(config: RunConfig, out_dir: Path | None = None):
    """(train, test) samples from manifests or the synthetic generator."""
    d = config.data
    limits = ManifestLimits.from_config(config)
    if d.train:
        train = load_manifest(d.train, limits)
        test = load_manifest(d.test, limits) if d.test else []
        return train, test
    if d.synth is not None:
        train, test = synth_generate(d.synth, config.classes, out_dir)
        for s in train + test:
            validate_sample(s, limits)
        return train, test
    raise ConfigError("config.data needs train/test manifests or a synth section")


def evaluate_samples(model: Model, samples, batch_size: int = 64) -> tuple[dict, dict]:
    """Forward-only metrics; returns (metrics per task, predicted labels per task)."""
    preds = {t: [] for t in TASKS}
    with T.no_grad():
        for i in range(0, len(samples), batch_size):
            b = model.builder.build(samples[i:i + batch_size])
            out = model.forward(b)
            for t in TASKS:
                preds[t].append(out.predictions.predicted(t))
    preds = {t: np.concatenate(v) if v else np.zeros(0, int) for t, v in preds.items()}
    metrics = {}
    for t in TASKS:
        y = np.array([s.labels[t] for s in samples], dtype=np.int64)
        metrics[t] = classification_metrics(y, preds[t], model.config.classes[t])
    return metrics, preds


def _batches(n: int, batch_size: int, seed: int):
    rng = np.random.default_rng([seed, 0x5EED])
    bs = min(batch_size, n)
    while True:
        order = rng.permutation(n)
        for i in range(0, n - bs + 1, bs):
            yield order[i:i + bs]


def train(config: RunConfig, train_samples=None, test_samples=None, out_dir: str | Path | None = None,
          save: bool = True, cache: dict | None = None) -> TrainResult:
    """Optimise the total objective for ``config.optim.steps`` steps."""
    config.validate()
    out = Path(out_dir or config.out_dir)
    if train_samples is None:
        train_samples, test_samples = load_data(config, out / "data" if save else None)
    test_samples = test_samples or []
    if not train_samples and config.optim.steps > 0:
        raise ConfigError("no training samples")
    o = config.optim
    model = Model(config)
    if cache is not None:
        model.builder = BatchBuilder(config, cache)
    opt = Optimizer(model.store, OptimConfig(o.kind, o.lr, o.beta1, o.beta2, o.eps, o.weight_decay),
                    decay_exempt=model.head_names())
    report = MetricsReport()
    t0 = time.perf_counter()
    if test_samples:
        report.evals.append([0, evaluate_samples(model, test_samples)[0]])
    batches = _batches(len(train_samples), o.batch_size, o.seed)
    for step in range(1, o.steps + 1):
        idx = next(batches)
        batch = model.builder.build([train_samples[i] for i in idx])
        model.store.zero_grad()
        try:
            loss, comps, _ = model.loss(batch)
        except TrainingError as exc:
            path = save_checkpoint(out, config, model.store.state(), step - 1, "last_good") if save else None
            raise TrainingError(f"step {step}: {exc}; last good parameters at {path}") from None
        T.backward(loss)
        opt.step()
        report.loss_curve.append([step, float(loss.data),
                                  {k: float(v.data) for k, v in comps.items() if v is not None}])
        if o.eval_every and step % o.eval_every == 0 and test_samples and step != o.steps:
            report.evals.append([step, evaluate_samples(model, test_samples)[0]])
        if step % 50 == 0:
            log.info("step %d loss %.4f", step, float(loss.data))
    report.steps = o.steps
    if test_samples and o.steps > 0:
        report.evals.append([o.steps, evaluate_samples(model, test_samples)[0]])
    if report.evals:
        report.metrics = report.evals[-1][1]
    report.seconds = time.perf_counter() - t0
    ckpt = None
    if save:
        ckpt = save_checkpoint(out, config, model.store.state(), o.steps)
        write_report(out / "report", report.to_dict(), {"model": report.metrics} if report.metrics else {})
    return TrainResult(model, report, ckpt)


def model_from_checkpoint(path) -> Model:
    config, state, _ = load_checkpoint(path)
    model = Model(config)
    model.store.load_state(state)
    return model


def evaluate(checkpoint, manifest=None, samples=None, config: RunConfig | None = None) -> MetricsReport:
    """Metrics of a saved checkpoint on a manifest (or sample list)."""
    ck_config, state, step = load_checkpoint(checkpoint)
    if config is not None:
        mismatch = [k for k in ("classes", "model") if _plain(getattr(config, k)) != _plain(getattr(ck_config, k))]
        if mismatch:
            raise CompatibilityError(
                f"checkpoint and config disagree on {mismatch}: checkpoint "
                f"{json.dumps({k: _plain(getattr(ck_config, k)) for k in mismatch})} vs config "
                f"{json.dumps({k: _plain(getattr(config, k)) for k in mismatch})}")
    model = Model(ck_config)
    model.store.load_state(state)
    if samples is None:
        try:
            samples = load_manifest(manifest, ManifestLimits.from_config(ck_config))
        except ValueError as exc:
            raise CompatibilityError(f"manifest does not fit checkpoint config "
                                     f"(classes {ck_config.classes}, vocab {ck_config.model.vocab_size}): {exc}") from None
    metrics, _ = evaluate_samples(model, samples)
    return MetricsReport(metrics=metrics, steps=step)


def _plain(x):
    return asdict(x) if hasattr(x, "__dataclass_fields__") else x


# ------------------------------------------------------------------- ablation

def variant_config(config: RunConfig, drop: str | None) -> RunConfig:
    if drop is None:
        return config
    if drop not in ("om", "up", "gl", "dg"):
        raise ConfigError(f"unknown ablation {drop!r}")
    return config.replace(ablation={drop: False})


def run_ablation(config: RunConfig, drops=("om", "up", "gl", "dg"), seeds=None,
                 out_dir: str | Path | None = None, save: bool = True) -> dict:
    """Train the full model and each single-component ablation under identical seeds.

    With several seeds, the synthetic data seed is offset by the same amount
    so each seed sees a fresh dataset shared by all variants.
    Returns ``{"variants": {name: {task: mean metrics}}, "per_seed": ...}``.
    """
    seeds = list(seeds) if seeds is not None else [config.optim.seed]
    names = ["full"] + [f"w/o {d.upper()}" for d in drops]
    per_seed: dict[str, list] = {n: [] for n in names}
    for seed in seeds:
        cfg = config.replace(optim={"seed": seed})
        if cfg.data.synth is not None and len(seeds) > 1:
            cfg = cfg.replace(data={"synth": {"seed": config.data.synth.seed + seed}})
        train_s, test_s = load_data(cfg)
        cache: dict = {}
        for name in names:
            vcfg = variant_config(cfg, VARIANTS[name])
            res = train(vcfg, train_s, test_s, save=False, cache=cache)
            per_seed[name].append(res.report.metrics)
            log.info("seed %s %s %s", seed, name, {t: round(m["accuracy"], 4) for t, m in res.report.metrics.items()})
    means = {n: {t: {k: float(np.mean([r[t][k] for r in runs])) for k in ("accuracy", "precision", "recall")}
                 for t in TASKS} for n, runs in per_seed.items()}
    result = {"seeds": seeds, "variants": means, "per_seed": per_seed}
    if save:
        write_report(Path(out_dir or config.out_dir) / "ablation", result, means)
    return result


# -------------------------------------------------------------------- reports

def format_table(rows: dict) -> str:
    """Aligned Acc/Pre/Rec table, one block per task pair."""
    lines = []
    width = max([len("Method")] + [len(n) for n in rows])
    for pair in (("sa", "id"), ("od", "mr")):
        head = f"{'':<{width}}  " + "   ".join(f"{TASK_NAMES[t]:^23}" for t in pair)
        sub = f"{'Method':<{width}}  " + "   ".join(f"{'Acc':>7}{'Pre':>8}{'Rec':>8}" for _ in pair)
        lines += [head, sub, "-" * len(sub)]
        for name, metrics in rows.items():
            cells = []
            for t in pair:
                m = metrics.get(t)
                cells.append("   n/a    n/a    n/a" if m is None else
                             f"{100 * m['accuracy']:7.2f}{100 * m['precision']:8.2f}{100 * m['recall']:8.2f}")
            lines.append(f"{name:<{width}}  " + "   ".join(cells))
        lines.append("")
    return "\n".join(lines)


def write_report(stem: Path, data: dict, rows: dict) -> None:
    stem.parent.mkdir(parents=True, exist_ok=True)
    stem.with_suffix(".json").write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")
    if rows:
        stem.with_suffix(".txt").write_text(format_table(rows))
