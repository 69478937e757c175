"""Command-line interface: ``memefuse <command> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ModelConfig, RunConfig, load_config, save_config
from .errors import ContractError, DataError, TrainingError
from .ingest.blob import pack_blob

log = logging.getLogger("memefuse")

DROPS = ("om", "up", "gl", "dg")


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _config(args, required: bool = True) -> RunConfig | None:
    if args.config is None:
        if required:
            raise SystemExit(f"{args.command}: --config is required")
        return None
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(optim={"seed": args.seed})
        if cfg.data.synth is not None:
            cfg = cfg.replace(data={"synth": {"seed": args.seed}})
    if args.out is not None:
        cfg = cfg.replace(out_dir=args.out)
    return cfg.validate()


def _out(args, cfg: RunConfig | None) -> Path:
    if args.out is not None:
        return Path(args.out)
    return Path(cfg.out_dir) if cfg is not None else Path("runs")


def _dump_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")


# ----------------------------------------------------------------- commands

def cmd_train(args) -> int:
    from .train import format_table, train
    cfg = _config(args)
    if args.steps is not None:
        cfg = cfg.replace(optim={"steps": args.steps})
    out = _out(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "config.json")
    res = train(cfg, out_dir=out)
    if res.report.metrics:
        print(format_table({"model": res.report.metrics}))
    print(f"checkpoint: {res.checkpoint}")
    return 0


def _dump_attention(model, samples, out: Path, batch_size: int = 64) -> Path:
    from . import tensor as T
    index = {"entries": []}
    offset = 0
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "attention.mgmf", "wb") as f, T.no_grad():
        for i in range(0, len(samples), batch_size):
            chunk = samples[i:i + batch_size]
            fwd = model.forward(model.builder.build(chunk), record=True)
            for order, (kind, w) in enumerate(fwd.attention):
                buf = pack_blob(np.asarray(w))
                index["entries"].append({"batch": i // batch_size, "order": order, "kind": kind,
                                         "sample_ids": [s.id for s in chunk], "shape": list(w.shape),
                                         "offset": offset})
                f.write(buf)
                offset += len(buf)
    path = out / "attention.json"
    _dump_json(path, index)
    return path


def cmd_eval(args) -> int:
    from .checkpoint import load_checkpoint
    from .train import evaluate, format_table, load_data, model_from_checkpoint
    cfg = _config(args, required=False)
    samples = None
    if args.manifest is None:
        ck_cfg = cfg or load_checkpoint(args.checkpoint)[0]
        _, samples = load_data(ck_cfg)
        if not samples:
            raise SystemExit("eval: no test samples; pass --manifest")
    report = evaluate(args.checkpoint, manifest=args.manifest, samples=samples, config=cfg)
    print(format_table({"model": report.metrics}))
    if args.out is not None:
        _dump_json(Path(args.out) / "eval.json", report.to_dict())
    if args.dump_attention is not None:
        from .ingest.manifest import ManifestLimits, load_manifest
        model = model_from_checkpoint(args.checkpoint)
        if samples is None:
            samples = load_manifest(args.manifest, ManifestLimits.from_config(model.config))
        print(f"attention: {_dump_attention(model, samples, Path(args.dump_attention))}")
    return 0


def cmd_ablate(args) -> int:
    from .train import format_table, run_ablation
    cfg = _config(args)
    drops = tuple(dict.fromkeys(args.drop)) if args.drop else DROPS
    seeds = args.seeds if args.seeds is not None else [cfg.optim.seed]
    res = run_ablation(cfg, drops=drops, seeds=seeds, out_dir=_out(args, cfg))
    print(format_table(res["variants"]))
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_grad_check
    cfg = _config(args)
    report = run_grad_check(cfg, samples_per_tensor=args.samples, seed=cfg.optim.seed, layers=args.layers)
    for line in report.lines():
        print(line)
    if args.out is not None:
        _dump_json(Path(args.out) / "gradcheck.json",
                   {"passed": report.passed, "modules": report.by_module(),
                    "failures": [list(f) for f in report.failures()]})
    return 0 if report.passed else 1


def cmd_bench(args) -> int:
    from .bench import bench_interaction, format_interaction
    cfg = _config(args, required=False)
    model = cfg.model if cfg is not None else ModelConfig()
    res = bench_interaction(model, args.lengths, image_len=args.image_len, repeats=args.repeats,
                            seed=args.seed or 0)
    print(format_interaction(res))
    if args.out is not None:
        _dump_json(Path(args.out) / "bench.json", res)
    return 0


def cmd_bench_kernels(args) -> int:
    from .bench import bench_kernels, format_kernels
    rows = bench_kernels(repeats=args.repeats)
    print(format_kernels(rows))
    if args.out is not None:
        _dump_json(Path(args.out) / "bench_kernels.json", rows)
    return 0


def cmd_synth_gen(args) -> int:
    from .ingest.synth import synth_generate
    cfg = _config(args)
    if cfg.data.synth is None:
        raise SystemExit("synth-gen: config has no data.synth section")
    synth = cfg.data.synth
    if args.blobs:
        synth = cfg.replace(data={"synth": {"write_blobs": True}}).data.synth
    out = _out(args, cfg)
    train, test = synth_generate(synth, cfg.classes, out)
    print(f"wrote {len(train)} train / {len(test)} test samples to {out}")
    return 0


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="overrides the training and synthetic-data seeds")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="memefuse", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("train", parents=[common], help="train a model")
    s.add_argument("--steps", type=int, help="override optim.steps")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    s.add_argument("--checkpoint", required=True, help="checkpoint index (.json) or run directory")
    s.add_argument("--manifest", help="JSONL manifest; defaults to the config's test data")
    s.add_argument("--dump-attention", metavar="DIR", help="write raw attention weights as MGMF blobs")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("ablate", parents=[common], help="full model vs single-component ablations")
    s.add_argument("--drop", action="append", choices=DROPS, help="component to ablate (repeatable)")
    s.add_argument("--seeds", type=_int_list, help="comma-separated seeds")
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient check")
    s.add_argument("--samples", type=int, default=32, help="entries sampled per tensor")
    s.add_argument("--layers", type=int, default=1)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("bench", parents=[common], help="global-local vs local-local interaction cost")
    s.add_argument("--lengths", type=_int_list, default=[64, 128, 256, 512])
    s.add_argument("--image-len", type=int, help="fixed image sequence length (default: equal to text length)")
    s.add_argument("--repeats", type=int, default=3)
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("bench-kernels", parents=[common], help="compiled vs pure-Python kernels")
    s.add_argument("--repeats", type=int, default=20)
    s.set_defaults(func=cmd_bench_kernels)

    s = sub.add_parser("synth-gen", parents=[common], help="write a synthetic dataset")
    s.add_argument("--blobs", action="store_true", help="render images to MGMF blobs")
    s.set_defaults(func=cmd_synth_gen)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, TrainingError, FileNotFoundError) as exc:
        kind = type(exc).__name__ if isinstance(exc, (ContractError, DataError, TrainingError)) else "error"
        print(f"memefuse {args.command}: {kind}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
