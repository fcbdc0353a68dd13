"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--points 5000] [--repeat 3]

Both backends receive identical inputs; the script also checks that their
outputs agree bit for bit.
"""

import argparse
import time

import numpy as np

from pointcore.geometry import estimate_normals
from pointcore.kernels import backends
from pointcore.registration import radius_neighbors
from pointcore.synthetic import generate_shape


def best_of(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=5000)
    ap.add_argument("--samples", type=int, default=512, help="greedy downsampling target")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    cloud = estimate_normals(generate_shape("blended-blob", args.points, 0.001, 0))
    indptr, indices = radius_neighbors(cloud.points, 0.08 * cloud.diameter)
    pts, nrm = cloud.points, cloud.normals
    init = np.array([0], dtype=np.intp)

    impls = backends()
    if "cython" not in impls:
        print("compiled kernels are not built; only the numpy backend is available")
    rows = {}
    for name, mod in impls.items():
        t_spfh, h = best_of(lambda m=mod: m.spfh(pts, nrm, indptr, indices), args.repeat)
        t_fpfh, f = best_of(lambda m=mod: m.fpfh(pts, h, indptr, indices), args.repeat)
        t_mean, g = best_of(lambda m=mod: m.greedy_select(pts, init, args.samples, False), args.repeat)
        t_min, _ = best_of(lambda m=mod: m.greedy_select(pts, init, args.samples, True), args.repeat)
        rows[name] = {"spfh": t_spfh, "fpfh": t_fpfh, "greedy (mean)": t_mean, "greedy (min)": t_min,
                      "outputs": (h, f, g)}

    print(f"{args.points} points, {len(indices)} neighbor pairs, {args.samples} samples; best of {args.repeat}")
    print(f"{'kernel':<16}" + "".join(f"{n:>12}" for n in rows) + ("   speedup" if len(rows) > 1 else ""))
    for k in ("spfh", "fpfh", "greedy (mean)", "greedy (min)"):
        line = f"{k:<16}" + "".join(f"{rows[n][k]:>11.4f}s" for n in rows)
        if len(rows) > 1:
            line += f"{rows['numpy'][k] / rows['cython'][k]:>9.1f}x"
        print(line)
    if len(rows) > 1:
        same = all(np.array_equal(a, b) for a, b in zip(rows["numpy"]["outputs"], rows["cython"]["outputs"]))
        print(f"outputs identical: {same}")


if __name__ == "__main__":
    main()
