"""
Tests for SDDMM, SpMM and the fused SDDMM_SpMM kernel.
"""
import sys
import os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import numpy as np
import pytest

from src.errors import DimensionMismatch, NumericalBreakdown
from src.matrix_core import (
    PartitionPlan,
    WorkerTeam,
    doc_matrix_from_entries,
    partition_nonzeros,
)
from src.sparse_kernels import (
    KernelStats,
    fused_final,
    max_abs_change,
    reciprocal,
    sddmm,
    sddmm_spmm,
    spmm,
)
from src.synthetic import random_doc_matrix


def op_counts_per_pass(c, v_r):
    """Expected (SDDMM MACs, SpMM MACs) of one fused pass."""
    return c.nnz * v_r, c.nnz * v_r


def random_operands(rng, V=None, N=None, v_r=None):
    V = V or int(rng.integers(5, 120))
    N = N or int(rng.integers(1, 40))
    v_r = v_r or int(rng.integers(1, 10))
    c = random_doc_matrix(rng, V, N, float(rng.uniform(0.01, 0.2)))
    KT = rng.random((V, v_r)) + 0.05
    u = rng.random((v_r, N)) + 0.5
    A = rng.random((v_r, V))
    return c, KT, u, A


def test_sddmm_example():
    """Test a single entry: 1 / (1*3 + 2*4) = 1/11."""
    c = doc_matrix_from_entries(2, 1, [(0, 1, 1.0)])
    KT = np.array([[5.0, 6.0], [1.0, 2.0]])
    u = np.array([[3.0], [4.0]])
    v = sddmm(c, KT, u)
    assert v.values.tolist() == [1.0 / 11.0]
    assert v.to_dense().tolist() == [[0.0], [1.0 / 11.0]]
    print("✅ test_sddmm_example passed")


def test_sddmm_matches_dense():
    """Test SDDMM against the dense matmul-then-mask formulation."""
    rng = np.random.default_rng(21)
    for _ in range(30):
        c, KT, u, _ = random_operands(rng)
        dense_c = c.to_scipy().toarray()
        expected = np.where(dense_c > 0, dense_c / np.where(dense_c > 0, KT @ u, 1.0), 0.0)
        np.testing.assert_allclose(sddmm(c, KT, u).to_dense(), expected, rtol=1e-13, atol=0)
    print("✅ test_sddmm_matches_dense passed")


def test_spmm_matches_dense():
    """Test SpMM against a dense product."""
    rng = np.random.default_rng(22)
    for _ in range(30):
        c, KT, u, A = random_operands(rng)
        v = sddmm(c, KT, u)
        np.testing.assert_allclose(spmm(A, v), A @ v.to_dense(), rtol=1e-12, atol=1e-14)
    print("✅ test_spmm_matches_dense passed")


def test_fusion_identity():
    """Test that the fused kernel equals spmm(sddmm(...)) bit for bit."""
    rng = np.random.default_rng(23)
    for _ in range(100):
        c, KT, u, A = random_operands(rng)
        p = int(rng.integers(1, 5))
        plan = partition_nonzeros(c, p)
        fused = sddmm_spmm(c, KT, u, A, plan)
        unfused = spmm(A, sddmm(c, KT, u, plan), plan)
        assert fused.tobytes() == unfused.tobytes()
    print("✅ test_fusion_identity passed")


def test_fused_determinism_across_workers():
    """Test bitwise identical output for 1, 2, 3, 4 and 8 workers."""
    rng = np.random.default_rng(24)
    for _ in range(20):
        c, KT, u, A = random_operands(rng, N=int(rng.integers(1, 60)))
        base = sddmm_spmm(c, KT, u, A, partition_nonzeros(c, 1))
        for p in (2, 3, 4, 8):
            with WorkerTeam(p) as team:
                x = sddmm_spmm(c, KT, u, A, partition_nonzeros(c, p), team=team)
            assert x.tobytes() == base.tobytes()
    print("✅ test_fused_determinism_across_workers passed")


def test_op_counts_per_pass():
    """Test that one fused pass records exactly nnz * v_r MACs per phase."""
    rng = np.random.default_rng(25)
    for p in (1, 3):
        c, KT, u, A = random_operands(rng, v_r=7)
        stats = KernelStats()
        with WorkerTeam(p) as team:
            sddmm_spmm(c, KT, u, A, partition_nonzeros(c, p), stats, team)
        assert (stats.sddmm_mac_count, stats.spmm_mac_count) == op_counts_per_pass(c, 7)
        assert stats.sddmm_mac_count == c.nnz * 7

        stats = KernelStats()
        v = sddmm(c, KT, u, stats=stats)
        spmm(A, v, stats=stats)
        assert stats.sddmm_mac_count == stats.spmm_mac_count == c.nnz * 7
    print("✅ test_op_counts_per_pass passed")


def test_fused_final():
    """Test the final reduction against its dense definition."""
    rng = np.random.default_rng(26)
    c, KT, u, KM = random_operands(rng)
    result = fused_final(c, KT, u, KM, partition_nonzeros(c, 2))
    v = sddmm(c, KT, u).to_dense()
    np.testing.assert_allclose(result.distances, (u * (KM @ v)).sum(axis=0), rtol=1e-12)
    assert result.stats.sddmm_mac_count == c.nnz * u.shape[0]
    print("✅ test_fused_final passed")


def test_numerical_breakdown():
    """Test that a zero dot product raises instead of producing Inf."""
    c = doc_matrix_from_entries(3, 2, [(0, 0, 1), (1, 1, 1), (1, 2, 1)])
    KT = np.array([[1.0], [1.0], [0.0]])
    u = np.ones((1, 2))
    with pytest.raises(NumericalBreakdown) as info:
        sddmm(c, KT, u)
    assert info.value.entry == 2
    with pytest.raises(NumericalBreakdown):
        sddmm_spmm(c, KT, u, np.ones((1, 3)), partition_nonzeros(c, 2))
    print("✅ test_numerical_breakdown passed")


def test_shape_checks():
    """Test dimension mismatch detection."""
    c = doc_matrix_from_entries(3, 2, [(0, 0, 1), (1, 2, 1)])
    with pytest.raises(DimensionMismatch):
        sddmm(c, np.ones((4, 1)), np.ones((1, 2)))
    with pytest.raises(DimensionMismatch):
        sddmm(c, np.ones((3, 1)), np.ones((1, 3)))
    with pytest.raises(DimensionMismatch):
        sddmm_spmm(c, np.ones((3, 1)), np.ones((1, 2)), np.ones((2, 3)), partition_nonzeros(c, 1))
    print("✅ test_shape_checks passed")


def test_plan_must_cover_every_document():
    """Test that a plan missing documents is rejected instead of leaving columns unset."""
    c = doc_matrix_from_entries(3, 2, [(0, 0, 1), (1, 2, 1)])
    KT, u, A = np.ones((3, 1)), np.ones((1, 2)), np.ones((1, 3))
    short = PartitionPlan(1, ((0, 1),))
    gap = PartitionPlan(2, ((0, 1), (1, 1)))
    for plan in (short, gap, PartitionPlan(2, ((1, 2), (0, 1))), PartitionPlan(1, ((0, 3),))):
        with pytest.raises(DimensionMismatch):
            sddmm_spmm(c, KT, u, A, plan)
    with pytest.raises(DimensionMismatch):
        sddmm(c, KT, u, plan=short)
    with pytest.raises(DimensionMismatch):
        spmm(A, sddmm(c, KT, u), plan=short)
    with pytest.raises(DimensionMismatch):
        fused_final(c, KT, u, A, short)
    with pytest.raises(DimensionMismatch):
        reciprocal(u, short)

    x = sddmm_spmm(c, KT, u, A, PartitionPlan(2, ((0, 1), (1, 2))))
    np.testing.assert_array_equal(x, sddmm_spmm(c, KT, u, A, partition_nonzeros(c, 1)))
    print("✅ test_plan_must_cover_every_document passed")


def test_reciprocal_and_max_change_across_workers():
    """Test the loop's elementwise steps against numpy for several team sizes."""
    rng = np.random.default_rng(27)
    c, _, x, _ = random_operands(rng, N=37, v_r=5)
    x_new = x + rng.normal(scale=1e-3, size=x.shape)
    expected_u = 1.0 / x
    expected_delta = float(np.max(np.abs(x_new - x)))
    for p in (1, 2, 3, 8):
        plan = partition_nonzeros(c, p)
        with WorkerTeam(p) as team:
            assert reciprocal(x, plan, team).tobytes() == expected_u.tobytes()
            assert max_abs_change(x_new, x, plan, team) == expected_delta

    broken = x_new.copy()
    broken[2, 30] = np.nan
    assert np.isnan(max_abs_change(broken, x, partition_nonzeros(c, 3)))
    assert max_abs_change(x, x, partition_nonzeros(c, 2)) == 0.0
    with pytest.raises(DimensionMismatch):
        max_abs_change(x[:, :3], x, partition_nonzeros(c, 1))
    print("✅ test_reciprocal_and_max_change_across_workers passed")


if __name__ == "__main__":
    print("\n🧪 Running sparse kernel tests...\n")

    test_sddmm_example()
    test_sddmm_matches_dense()
    test_spmm_matches_dense()
    test_fusion_identity()
    test_fused_determinism_across_workers()
    test_op_counts_per_pass()
    test_fused_final()
    test_numerical_breakdown()
    test_shape_checks()
    test_plan_must_cover_every_document()
    test_reciprocal_and_max_change_across_workers()

    print("\n✅ All sparse kernel tests passed!\n")
