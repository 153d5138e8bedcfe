"""Hot numeric kernels with optional JIT compilation.

Two kernels dominate training time: the non-negative L1-penalized
least-squares solver used to decode label counts from noisy bit sums
(called twice per candidate feature per tree node), and the per-bit
column counts over a subset of rows of the permanent-encoding matrix.

Both are compiled with numba when it is importable, unless the
environment variable ``FET_NUMBA`` is set to ``0``/``false``/``off``,
in which case pure numpy/Python fallbacks with identical semantics are
used.  ``ACTIVE_BACKEND`` reports which path is live; the ``_py_``
variants stay importable for tests and benchmarks.
"""

import os

import numpy as np

_env = os.environ.get("FET_NUMBA", "1").strip().lower()
NUMBA_REQUESTED = _env not in ("0", "false", "off", "no")


def _nnls_l1_cd_impl(gram, rhs, reg_lambda, tol, max_sweeps):
    # Cyclic coordinate descent for
    #   min_{c >= 0}  ||y - M c||^2 + reg_lambda * sum(c)
    # in normal-equation form: gram = M^T M, rhs = M^T y.
    n = rhs.shape[0]
    coef = np.zeros(n)
    for sweep in range(max_sweeps):
        delta = 0.0
        for j in range(n):
            diag = gram[j, j]
            if diag <= 0.0:
                continue
            rho = rhs[j] - np.dot(gram[j], coef) + diag * coef[j]
            new = (rho - reg_lambda / 2.0) / diag
            if new < 0.0:
                new = 0.0
            step = abs(new - coef[j])
            if step > delta:
                delta = step
            coef[j] = new
        if delta < tol:
            return coef, sweep + 1
    return coef, max_sweeps


def _nnls_l1_cd_multi_impl(gram, rhs_rows, reg_lambdas, tol, max_sweeps):
    # Batched variant: one system per row of rhs_rows against a shared
    # gram matrix. Saves call overhead in the per-node decode loop.
    k = rhs_rows.shape[0]
    n = rhs_rows.shape[1]
    out = np.zeros((k, n))
    for i in range(k):
        rhs = rhs_rows[i]
        reg_lambda = reg_lambdas[i]
        coef = out[i]
        for sweep in range(max_sweeps):
            delta = 0.0
            for j in range(n):
                diag = gram[j, j]
                if diag <= 0.0:
                    continue
                rho = rhs[j] - np.dot(gram[j], coef) + diag * coef[j]
                new = (rho - reg_lambda / 2.0) / diag
                if new < 0.0:
                    new = 0.0
                step = abs(new - coef[j])
                if step > delta:
                    delta = step
                coef[j] = new
            if delta < tol:
                break
    return out


def _bit_column_counts_impl(bits, rows):
    # Column sums of bits[rows], without materializing the row subset.
    h = bits.shape[1]
    out = np.zeros(h, dtype=np.int64)
    for i in range(rows.shape[0]):
        r = rows[i]
        for t in range(h):
            out[t] += bits[r, t]
    return out


def _py_bit_column_counts(bits, rows):
    if rows.shape[0] == 0:
        return np.zeros(bits.shape[1], dtype=np.int64)
    return bits[rows].sum(axis=0, dtype=np.int64)


_py_nnls_l1_cd = _nnls_l1_cd_impl
_py_nnls_l1_cd_multi = _nnls_l1_cd_multi_impl

ACTIVE_BACKEND = "numpy"
if NUMBA_REQUESTED:
    try:
        from numba import njit

        nnls_l1_cd = njit(cache=True)(_nnls_l1_cd_impl)
        nnls_l1_cd_multi = njit(cache=True)(_nnls_l1_cd_multi_impl)
        bit_column_counts = njit(cache=True)(_bit_column_counts_impl)
        ACTIVE_BACKEND = "numba"
    except ImportError:
        pass

if ACTIVE_BACKEND == "numpy":
    nnls_l1_cd = _py_nnls_l1_cd
    nnls_l1_cd_multi = _py_nnls_l1_cd_multi
    bit_column_counts = _py_bit_column_counts
