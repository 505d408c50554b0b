"""Benchmark the compiled kernels against the numpy fallback.

Times the 3x3 convolution forward/weight-gradient pair on shapes spanning the
toy and preset configurations, then a full NLL training step per backend.

Run after building the extension:

    python setup.py build_ext --inplace
    python benchmarks/bench_kernels.py
"""

from __future__ import annotations

import os
import subprocess
import sys
import time

import numpy as np


def _time(fn, *args, repeats: int = 5) -> float:
    fn(*args)  # warm up
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_convs() -> None:
    import coarseflow.kernels as kernels
    from coarseflow.kernels import _reference as ref

    if not kernels.HAVE_COMPILED:
        print("compiled backend unavailable; run `python setup.py build_ext --inplace`")
        return

    cases = [
        ("toy step", 64, 8, 8, 24),
        ("toy wide", 64, 16, 8, 32),
        ("zinc-ish", 32, 8, 20, 64),
        ("zinc wide", 16, 16, 20, 128),
    ]
    rng = np.random.default_rng(0)
    print(f"{'case':12s} {'shape':>22s} {'numpy_fwd':>10s} {'cython_fwd':>11s} "
          f"{'numpy_gw':>10s} {'cython_gw':>10s} {'fwd_speedup':>12s}")
    for name, b, c, n, o in cases:
        x = rng.standard_normal((b, c, n, n)).astype(np.float32)
        w = rng.standard_normal((o, c, 3, 3)).astype(np.float32)
        gy = rng.standard_normal((b, o, n, n)).astype(np.float32)
        t_ref_f = _time(ref.conv3x3_forward, x, w)
        t_core_f = _time(kernels._core.conv3x3_forward, x, w)
        t_ref_g = _time(ref.conv3x3_grad_weight, x, gy)
        t_core_g = _time(kernels._core.conv3x3_grad_weight, x, gy)
        print(f"{name:12s} {f'{b}x{c}x{n}x{n} -> {o}':>22s} {t_ref_f*1e3:9.2f}ms {t_core_f*1e3:10.2f}ms "
              f"{t_ref_g*1e3:9.2f}ms {t_core_g*1e3:9.2f}ms {t_ref_f/t_core_f:11.2f}x")


def bench_train_step(backend: str) -> float:
    """One NLL+gradient step on the toy preset, in a subprocess so the backend
    choice applies at import."""
    code = """
import time
import numpy as np
from coarseflow.config import config_from_document
from coarseflow.model import build_model
from coarseflow.datagen import synthetic_dataset
from coarseflow.training import Adam, dequantize, encode_dataset, nll
from coarseflow.numerics import Rng, Tape
import coarseflow.kernels as kernels

cfg = config_from_document({"preset": "toy"})
model = build_model(cfg)
graphs = synthetic_dataset(64, seed=5)
x, a = encode_dataset(graphs, cfg.n, cfg.d_pad, cfg.table)
rng = Rng(0)
xd, ad = dequantize(x, a, 0.9, rng, dtype=np.float32)
optimizer = Adam(model.parameters(), lr=1e-3)
def step():
    with Tape() as tape:
        loss = nll(model, xd, ad, a)
    optimizer.step(tape.gradients(loss, model.parameters()))
step()
t0 = time.perf_counter(); step(); step(); dt = (time.perf_counter() - t0) / 2
print(f"{kernels.BACKEND} {dt:.4f}")
"""
    env = dict(os.environ, COARSEFLOW_KERNELS=backend)
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    if out.returncode != 0:
        print(out.stderr, file=sys.stderr)
        raise SystemExit(1)
    used, dt = out.stdout.split()[-2:]
    if used != backend:
        raise SystemExit(f"requested backend {backend} but got {used}")
    return float(dt)


def main() -> None:
    bench_convs()
    print()
    t_py = bench_train_step("python")
    t_cy = bench_train_step("compiled")
    print(f"full training step (toy preset, batch 64): numpy {t_py*1e3:.1f}ms, "
          f"compiled {t_cy*1e3:.1f}ms, speedup {t_py/t_cy:.2f}x")


if __name__ == "__main__":
    main()
