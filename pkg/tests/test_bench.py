"""
Tests for the scaling and comparison benchmarks.
"""
import sys
import os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import math
from unittest import mock

import numpy as np
import pytest

from src.bench import BenchReport, bench_query, compare_query, run_bench, theoretical_cost
from src.config import LoadedInputs, RunConfig
from src.csv_export import COMPARE_COLUMNS
from src.errors import ConfigError, DeterminismViolation
from src.ingest import IngestStats
from src.sinkhorn import SolverConfig, WmdResult
from src.sparse_kernels import KernelStats
from src.synthetic import (
    document_tokens,
    random_doc_matrix,
    random_embeddings,
    random_query,
)


def synthetic_inputs(rng, V, w, N, density, queries):
    emb = random_embeddings(rng, V, w)
    corpus = random_doc_matrix(rng, V, N, density)
    return LoadedInputs(emb, corpus, queries, set(), IngestStats())


def bench_config(threads, compare=False):
    return RunConfig(
        embeddings_path="emb.vec",
        corpus_path="corpus.txt",
        queries_path="queries.txt",
        output_path="out/wmd.csv",
        workers=1,
        bench_thread_list=threads,
        bench_compare=compare,
    )


def test_single_worker_speedup_is_one():
    """Test that speedup at 1 worker is exactly 1."""
    rng = np.random.default_rng(1)
    inputs = synthetic_inputs(rng, 50, 4, 10, 0.1, [document_tokens(rng, 50, 6)])
    report = run_bench(bench_config([1]), inputs)
    frame = report.to_frame()
    assert frame["speedup"].tolist() == [1.0]
    assert frame["threads"].tolist() == [1]
    assert list(frame.columns) == ["threads", "query_id", "seconds", "speedup",
                                   "iterations", "v_r", "nnz"]
    assert frame["iterations"].tolist() == [15]
    assert frame["nnz"].tolist() == [inputs.corpus.nnz]
    print("✅ test_single_worker_speedup_is_one passed")


def test_rows_follow_requested_counts():
    """Test rows for the requested counts only, baseline measured regardless."""
    rng = np.random.default_rng(2)
    queries = [document_tokens(rng, 80, 8), [], document_tokens(rng, 80, 3)]
    inputs = synthetic_inputs(rng, 80, 4, 20, 0.1, queries)
    report = run_bench(bench_config([3, 2]), inputs)
    rows = [(row.query_id, row.threads) for row in report.rows]
    # The empty query is skipped
    assert rows == [(0, 3), (0, 2), (2, 3), (2, 2)]
    assert all(row.seconds > 0 and row.speedup > 0 for row in report.rows)
    assert set(report.speedups(0)) == {2, 3}
    print("✅ test_rows_follow_requested_counts passed")


def test_determinism_violation():
    """Test that differing results across worker counts abort the benchmark."""
    rng = np.random.default_rng(3)
    inputs = synthetic_inputs(rng, 30, 4, 5, 0.2, [])
    query = random_query(rng, 30, 3)

    def unstable(r, c, emb, cfg, workers=1, team=None):
        return WmdResult(np.full(c.num_docs, float(team.num_workers)), KernelStats())

    with mock.patch("src.bench.sinkhorn_wmd", unstable):
        with pytest.raises(DeterminismViolation):
            bench_query(query, 0, inputs, SolverConfig(), [1, 2])
    print("✅ test_determinism_violation passed")


def test_empty_thread_list():
    """Test that a run with neither benchmark selected is rejected."""
    with pytest.raises(ConfigError):
        run_bench(bench_config([]), synthetic_inputs(np.random.default_rng(4), 10, 2, 2, 0.2, []))
    print("✅ test_empty_thread_list passed")


def test_comparison_report():
    """Test one comparison row per buildable query, with the scaling rows left empty."""
    rng = np.random.default_rng(6)
    queries = [document_tokens(rng, 60, 5), [], document_tokens(rng, 60, 9)]
    inputs = synthetic_inputs(rng, 60, 4, 15, 0.1, queries)
    report = run_bench(bench_config([], compare=True), inputs)
    assert report.rows == []

    frame = report.comparison_frame()
    assert list(frame.columns) == COMPARE_COLUMNS
    assert frame["query_id"].tolist() == [0, 2]
    assert frame["nnz"].tolist() == [inputs.corpus.nnz] * 2
    for row in report.comparisons:
        assert row.sparse_seconds > 0 and row.dense_seconds > 0
        assert row.blocked_seconds > 0 and row.direct_seconds > 0
        assert row.dense_over_sparse == row.dense_seconds / row.sparse_seconds
        assert row.direct_over_blocked == row.direct_seconds / row.blocked_seconds

    both = run_bench(bench_config([2], compare=True), inputs)
    assert [row.threads for row in both.rows] == [2, 2]
    assert len(both.comparisons) == 2
    print("✅ test_comparison_report passed")


def test_comparison_skips_large_dense():
    """Test that the dense timing is skipped above the cell limit."""
    rng = np.random.default_rng(7)
    inputs = synthetic_inputs(rng, 40, 3, 8, 0.2, [])
    query = random_query(rng, 40, 4)
    with mock.patch("src.bench.COMPARE_DENSE_MAX_CELLS", 40 * 8 - 1):
        row = compare_query(query, 0, inputs, SolverConfig())
    assert math.isnan(row.dense_seconds) and math.isnan(row.dense_over_sparse)
    assert row.v_r == 4 and row.sparse_seconds > 0
    print("✅ test_comparison_skips_large_dense passed")


def test_theoretical_cost():
    """Test the asymptotic cost terms."""
    assert theoretical_cost(v_r=2, V=10, w=3, nnz=5, iterations=4, workers=1) == 60 + 40
    assert theoretical_cost(v_r=2, V=10, w=3, nnz=5, iterations=4, workers=4) == 25.0
    print("✅ test_theoretical_cost passed")


def test_desk_scale_speedup():
    """Test speedup >= 2 at 4 workers on V=20000, w=64, N=2000, density 0.1%."""
    if (os.cpu_count() or 1) < 4:
        pytest.skip("needs at least 4 CPUs")

    rng = np.random.default_rng(5)
    inputs = synthetic_inputs(rng, 20_000, 64, 2_000, 0.001, [])
    query = random_query(rng, 20_000, 38)
    best = 0.0
    for _ in range(3):
        rows = bench_query(query, 0, inputs, SolverConfig(), [1, 4])
        best = max(best, BenchReport(rows).speedups(0)[4])
        if best >= 2.0:
            break
    assert best >= 2.0, best
    print(f"✅ test_desk_scale_speedup passed ({best:.2f}x)")


if __name__ == "__main__":
    print("\n🧪 Running bench tests...\n")

    test_single_worker_speedup_is_one()
    test_rows_follow_requested_counts()
    test_determinism_violation()
    test_empty_thread_list()
    test_comparison_report()
    test_comparison_skips_large_dense()
    test_theoretical_cost()
    if (os.cpu_count() or 1) >= 4:
        test_desk_scale_speedup()
    else:
        print("⚠️  test_desk_scale_speedup skipped (fewer than 4 CPUs)")

    print("\n✅ All bench tests passed!\n")
