"""Compare the numba and numpy kernel backends on the two hot paths.

Run from the repository root:

    python3 benchmarks/bench_kernels.py [--points 240] [--repeat 2000]

Times raw kernel calls (kabsch_transform, superpose_metrics) and one
realistic composite: labelling every spanning tree of a 5-chain complex the
way dataset generation does. JIT compilation happens before any timer starts.
"""

import argparse
import time

import numpy as np

from stepasm import kernels
from stepasm.datagen import gen_synthetic_multimer
from stepasm.graphs import enumerate_scores


def time_call(fn, repeat):
    best = float("inf")
    for _ in range(3):
        start = time.perf_counter()
        for _ in range(repeat):
            fn()
        best = min(best, (time.perf_counter() - start) / repeat)
    return best


def bench_backend(name, points, repeat):
    kernels.set_backend(name)
    kernels.warmup()
    rng = np.random.default_rng(0)
    gt = rng.normal(scale=15.0, size=(points, 3))
    rot, *_ = np.linalg.qr(rng.normal(size=(3, 3)))
    pred = gt @ rot + rng.normal(scale=0.5, size=gt.shape)

    rows = {}
    rows["kabsch_transform"] = time_call(
        lambda: kernels.kabsch_transform(gt, pred), repeat
    )
    rows["superpose_metrics"] = time_call(
        lambda: kernels.superpose_metrics(pred, gt, 4.0), repeat
    )
    multimer = gen_synthetic_multimer(5, np.random.default_rng(1))
    rows["label_125_trees"] = time_call(
        lambda: enumerate_scores(multimer), max(1, repeat // 400)
    )
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--points", type=int, default=240,
                        help="residues per structure in the raw-kernel rows")
    parser.add_argument("--repeat", type=int, default=2000)
    args = parser.parse_args()

    results = {}
    for name in kernels.available_backends():
        results[name] = bench_backend(name, args.points, args.repeat)

    names = sorted({k for rows in results.values() for k in rows})
    header = f"{'kernel':<22}" + "".join(f"{b:>14}" for b in results)
    if len(results) > 1:
        header += f"{'speedup':>10}"
    print(header)
    for key in names:
        line = f"{key:<22}"
        vals = [results[b][key] for b in results]
        for v in vals:
            line += f"{v * 1e6:>12.1f}us"
        if len(vals) > 1:
            line += f"{vals[1] / vals[0]:>9.2f}x"
        print(line)
    # leave the process on the default backend choice
    kernels.set_backend("auto")


if __name__ == "__main__":
    main()
