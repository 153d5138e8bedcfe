import numpy as np
import pytest
from scipy.optimize import minimize

from fedtrees import _kernels

TOL = 1e-8
SWEEPS = 10_000


def _problem(seed, h=32, n_classes=4):
    rng = np.random.default_rng(seed)
    design = (rng.random((h, n_classes)) < 0.1).astype(np.float64)
    design[rng.integers(0, h, n_classes), np.arange(n_classes)] = 1.0
    y = rng.normal(50.0, 20.0, h)
    return design.T @ design, design.T @ y, design, y


class TestSolver:
    @pytest.mark.parametrize("seed", range(5))
    def test_matches_general_purpose_optimizer(self, seed):
        gram, rhs, design, y = _problem(seed)
        lam = 3.0
        coef, _ = _kernels.nnls_l1_cd(gram, rhs, lam, TOL, SWEEPS)

        def objective(c):
            r = y - design @ c
            return r @ r + lam * c.sum()

        ref = minimize(
            objective,
            x0=np.ones(rhs.shape[0]),
            bounds=[(0, None)] * rhs.shape[0],
            method="L-BFGS-B",
            options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 10_000},
        )
        assert objective(coef) <= ref.fun + 1e-6 * (1 + abs(ref.fun))
        assert np.allclose(coef, ref.x, atol=1e-3)

    def test_nonnegative(self):
        gram, rhs, _, _ = _problem(9)
        coef, _ = _kernels.nnls_l1_cd(gram, -np.abs(rhs), 0.0, TOL, SWEEPS)
        assert coef.min() >= 0.0

    def test_multi_matches_single(self):
        gram, rhs, _, _ = _problem(2)
        rhs_rows = np.stack([rhs, rhs * 0.5, rhs * 2.0])
        lams = np.array([0.0, 1.0, 5.0])
        batch = _kernels.nnls_l1_cd_multi(gram, rhs_rows, lams, TOL, SWEEPS)
        for i in range(3):
            single, _ = _kernels.nnls_l1_cd(gram, rhs_rows[i], lams[i], TOL, SWEEPS)
            assert np.allclose(batch[i], single, atol=1e-12)

    def test_zero_diagonal_column_stays_zero(self):
        gram = np.array([[1.0, 0.0], [0.0, 0.0]])
        rhs = np.array([2.0, 5.0])
        coef, _ = _kernels.nnls_l1_cd(gram, rhs, 0.0, TOL, SWEEPS)
        assert coef[1] == 0.0


@pytest.mark.skipif(
    _kernels.ACTIVE_BACKEND != "numba", reason="numba backend not active"
)
class TestBackendEquivalence:
    def test_solver_backends_agree(self):
        for seed in range(4):
            gram, rhs, _, _ = _problem(seed, h=24, n_classes=6)
            jit_coef, _ = _kernels.nnls_l1_cd(gram, rhs, 2.0, TOL, SWEEPS)
            py_coef, _ = _kernels._py_nnls_l1_cd(gram, rhs, 2.0, TOL, SWEEPS)
            assert np.allclose(jit_coef, py_coef, atol=1e-9)

    def test_bit_counts_backends_exact(self):
        rng = np.random.default_rng(1)
        bits = (rng.random((300, 16)) < 0.3).astype(np.uint8)
        rows = rng.choice(300, size=120, replace=False).astype(np.int64)
        assert np.array_equal(
            _kernels.bit_column_counts(bits, rows),
            _kernels._py_bit_column_counts(bits, rows),
        )

    def test_bit_counts_empty_rows(self):
        bits = np.ones((4, 3), dtype=np.uint8)
        rows = np.empty(0, dtype=np.int64)
        assert _kernels.bit_column_counts(bits, rows).tolist() == [0, 0, 0]
        assert _kernels._py_bit_column_counts(bits, rows).tolist() == [0, 0, 0]


class TestBitCounts:
    def test_counts_selected_rows(self):
        bits = np.array([[1, 0], [1, 1], [0, 1]], dtype=np.uint8)
        rows = np.array([0, 2], dtype=np.int64)
        assert _kernels.bit_column_counts(bits, rows).tolist() == [1, 1]
