"""Benchmark the numba kernels against the pure-numpy fallback.

Times each hot kernel at training-like shapes and a full objective
build+backward step under both backends. Run from the repo root:

    python benchmarks/bench_backends.py
"""

import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from sospec import kernels  # noqa: E402
from sospec.autodiff import Tape  # noqa: E402
from sospec.backend import HAVE_NUMBA  # noqa: E402
import sospec.model as model  # noqa: E402


def timeit(fn, repeats=200):
    fn()  # warmup (triggers JIT compilation on the numba path)
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats


def bench_kernels(batch=4096, n=6, n_freq=49):
    rng = np.random.default_rng(0)
    z = rng.normal(size=(batch, n))
    freq = rng.integers(-2, 3, size=(n_freq, n // 2)).astype(np.float64)
    radii, angles = kernels.block_polar_fwd(z)
    d_r = rng.normal(size=radii.shape)
    d_a = rng.normal(size=angles.shape)
    cos_f, sin_f = kernels.torus_fwd(angles, freq)
    d_c = rng.normal(size=cos_f.shape)
    d_s = rng.normal(size=sin_f.shape)
    p = rng.normal(size=20000)
    g = rng.normal(size=20000)
    m = np.zeros_like(p)
    v = np.zeros_like(p)
    return {
        "block_polar_fwd": lambda: kernels.block_polar_fwd(z),
        "block_polar_bwd": lambda: kernels.block_polar_bwd(z, radii, d_r, d_a),
        "torus_fwd": lambda: kernels.torus_fwd(angles, freq),
        "torus_bwd": lambda: kernels.torus_bwd(cos_f, sin_f, d_c, d_s, freq),
        "adam_step": lambda: kernels.adam_step(
            p, g, m, v, 2e-3, 0.9, 0.999, 1e-8, 0.1, 0.001
        ),
    }


def bench_train_step(batch=128, n=6, bandwidth=2):
    rng = np.random.default_rng(1)
    params = model.init_params(n, bandwidth, seed=3)
    x = rng.normal(size=(batch, n))
    y = rng.normal(size=(batch, 1))

    def step():
        tape = Tape()
        obj, _, _, _ = model.build_objective(tape, params, x, y, mu=0.1)
        tape.backward(obj)

    return step


def main():
    backends = ["numpy"] + (["numba"] if HAVE_NUMBA else [])
    if not HAVE_NUMBA:
        print("numba not importable; benchmarking the numpy fallback only")
    results = {}
    for backend in backends:
        kernels.set_backend(backend)
        rows = {}
        for name, fn in bench_kernels().items():
            rows[name] = timeit(fn)
        rows["objective_step"] = timeit(bench_train_step(), repeats=50)
        results[backend] = rows

    names = list(next(iter(results.values())))
    width = max(len(n) for n in names)
    header = f"{'kernel':<{width}}" + "".join(f"  {b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"  {'speedup':>9}"
    print(header)
    for name in names:
        row = f"{name:<{width}}"
        for b in backends:
            row += f"  {results[b][name] * 1e6:>10.1f}us"
        if len(backends) == 2:
            row += f"  {results['numpy'][name] / results['numba'][name]:>8.2f}x"
        print(row)


if __name__ == "__main__":
    main()
