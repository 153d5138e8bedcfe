#!/usr/bin/env python3
"""Compare the JIT and pure-numpy kernel backends.

Run with the default backend (numba, if importable) to see both numbers;
FET_NUMBA=0 would hide the JIT path, so this script imports both
implementations directly regardless of the active selection.
"""

from __future__ import annotations

import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from fedtrees import _kernels  # noqa: E402


def _time(fn, *args, repeat=5, inner=1):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        for _ in range(inner):
            fn(*args)
        best = min(best, (time.perf_counter() - start) / inner)
    return best


def bench_solver(n_classes: int, h: int, batch: int):
    rng = np.random.default_rng(0)
    design = (rng.random((h, n_classes)) < 2.0 / h).astype(np.float64)
    design[rng.integers(0, h, n_classes), np.arange(n_classes)] = 1.0
    gram = design.T @ design
    rhs_rows = rng.normal(200.0, 80.0, (batch, n_classes))
    lams = np.full(batch, 5.0)
    args = (gram, rhs_rows, lams, 1e-6, 10_000)
    rows = []
    if _kernels.ACTIVE_BACKEND == "numba":
        _kernels.nnls_l1_cd_multi(*args)  # compile before timing
        rows.append(("numba", _time(_kernels.nnls_l1_cd_multi, *args, inner=10)))
    rows.append(("numpy", _time(_kernels._py_nnls_l1_cd_multi, *args)))
    return rows


def bench_bit_counts(n: int, h: int, take: int):
    rng = np.random.default_rng(1)
    bits = (rng.random((n, h)) < 0.2).astype(np.uint8)
    rows_idx = rng.choice(n, size=take, replace=False).astype(np.int64)
    out = []
    if _kernels.ACTIVE_BACKEND == "numba":
        _kernels.bit_column_counts(bits, rows_idx)
        out.append(("numba", _time(_kernels.bit_column_counts, bits, rows_idx, inner=50)))
    out.append(("numpy", _time(_kernels._py_bit_column_counts, bits, rows_idx, inner=50)))
    return out


def main() -> None:
    print(f"active backend: {_kernels.ACTIVE_BACKEND}")
    print()
    print("count decoder, batched coordinate descent (per call)")
    for n_classes, h, batch in [(2, 32, 16), (26, 64, 16), (8, 32, 64)]:
        rows = bench_solver(n_classes, h, batch)
        base = dict(rows).get("numpy")
        for name, t in rows:
            speedup = f"  ({base / t:5.1f}x vs numpy)" if name == "numba" else ""
            print(f"  L={n_classes:<3} h={h:<3} batch={batch:<3} {name:<6} {t * 1e6:9.1f} us{speedup}")
    print()
    print("permanent-bit column counts (per call)")
    for n, h, take in [(5_000, 32, 2_000), (50_000, 32, 20_000)]:
        rows = bench_bit_counts(n, h, take)
        base = dict(rows).get("numpy")
        for name, t in rows:
            speedup = f"  ({base / t:5.1f}x vs numpy)" if name == "numba" else ""
            print(f"  n={n:<6} h={h:<3} take={take:<6} {name:<6} {t * 1e6:9.1f} us{speedup}")


if __name__ == "__main__":
    main()
