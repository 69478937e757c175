"""Compare the compiled row kernels with the pure-numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeats N] [--json out.json]

Also times one forward+backward pass of the tiny model under each backend.
"""
import argparse
import json
import time

from memefuse import kernels
from memefuse import tensor as T
from memefuse.bench import bench_kernels, format_kernels


def model_step_seconds(backend: str, repeats: int) -> float:
    from memefuse.config import from_dict, tiny_model
    from memefuse.model import Model
    from memefuse.train import load_data

    cfg = from_dict({"classes": {"mr": 2, "sa": 4, "id": 4, "od": 2}, "model": tiny_model().__dict__,
                     "data": {"synth": {"n_train": 16, "n_test": 0}}})
    samples, _ = load_data(cfg)
    model = Model(cfg)
    batch = model.builder.build(samples)
    best = float("inf")
    with kernels.use_backend(backend):
        for _ in range(repeats):
            t0 = time.perf_counter()
            T.backward(model.loss(batch)[0])
            best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--json")
    args = p.parse_args()
    rows = bench_kernels(repeats=args.repeats)
    print(f"default backend: {kernels.BACKEND}")
    print(format_kernels(rows))
    steps = {}
    for name in ("python", "cython"):
        try:
            steps[name] = model_step_seconds(name, max(3, args.repeats // 4))
        except ImportError:
            continue
        print(f"tiny model forward+backward, batch 16, {name:>6}: {1e3 * steps[name]:.1f} ms")
    if args.json:
        with open(args.json, "w") as f:
            json.dump({"kernels": rows, "model_step_seconds": steps}, f, indent=1)


if __name__ == "__main__":
    main()
