"""
End-to-end tests for the batch CLI.
"""
import sys
import os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import contextlib
import io
import json
import shutil
import tempfile
from unittest import mock

import numpy as np
import pandas as pd
import pytest

from app import main
from src.config import RunConfig, default_workers
from src.csv_export import COMPARE_COLUMNS
from src.errors import ConfigError
from src.sinkhorn import WmdResult

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


def fixture(name):
    return os.path.join(FIXTURES, name)


def run_cli(args):
    """Run main() and return (exit status, captured stderr)."""
    err = io.StringIO()
    with contextlib.redirect_stderr(err):
        status = main(args)
    return status, err.getvalue()


def toy_args(tmp, *extra, queries=None):
    return [
        "--embeddings", fixture("toy.vec"),
        "--corpus", fixture("toy_corpus.txt"),
        "--queries", queries or fixture("toy_queries.txt"),
        "--output", os.path.join(tmp, "wmd.csv"),
        "--quiet",
        *extra,
    ]


def test_toy_with_dense_check():
    """Test the toy fixture end to end: wmd 0 for doc0, 5 for doc1."""
    with tempfile.TemporaryDirectory() as tmp:
        status, _ = run_cli(toy_args(tmp, "--check-dense", "--threads", "2"))
        assert status == 0
        df = pd.read_csv(os.path.join(tmp, "wmd.csv"))
        assert list(df.columns) == ["query_id", "doc_id", "wmd", "dense_wmd"]
        assert df["doc_id"].tolist() == [0, 1]
        assert abs(df["wmd"][0]) <= 1e-12
        assert abs(df["wmd"][1] - 5.0) <= 1e-12
        assert abs(df["dense_wmd"][1] - 5.0) <= 1e-12
    print("✅ test_toy_with_dense_check passed")


def test_dense_check_with_underflowing_vocabulary():
    """Test the dense check when an unused vocabulary word underflows in K."""
    with tempfile.TemporaryDirectory() as tmp:
        far = os.path.join(tmp, "far.vec")
        with open(far, "w", encoding="utf-8") as fout:
            fout.write("3 2\na 0 0\nb 3 4\nc 100 0\n")
        args = toy_args(tmp, "--check-dense")
        args[1] = far
        status, _ = run_cli(args)
        assert status == 0
        df = pd.read_csv(os.path.join(tmp, "wmd.csv"))
        assert df["dense_wmd"].notna().all()
        assert abs(df["dense_wmd"][1] - 5.0) <= 1e-12
    print("✅ test_dense_check_with_underflowing_vocabulary passed")


def test_non_finite_dense_result_fails():
    """Test that a NaN dense distance fails the query instead of passing the check."""
    nan_result = WmdResult(np.array([np.nan, np.nan]))
    with tempfile.TemporaryDirectory() as tmp:
        with mock.patch("app.dense_reference_wmd", return_value=nan_result):
            status, err = run_cli(toy_args(tmp, "--check-dense"))
        assert status == 1
        assert "1 of 1 queries failed" in err
        with open(os.path.join(tmp, "wmd.csv"), encoding="utf-8") as fin:
            lines = fin.read().splitlines()
        assert len(lines) == 3
        assert [line.split(",")[3] for line in lines[1:]] == ["", ""]
        assert float(lines[2].split(",")[2]) == pytest.approx(5.0, abs=1e-12)
    print("✅ test_non_finite_dense_result_fails passed")


def test_missing_embeddings_file():
    """Test exit status 2 and a message naming the missing path."""
    with tempfile.TemporaryDirectory() as tmp:
        missing = os.path.join(tmp, "nope.vec")
        args = toy_args(tmp)
        args[1] = missing
        status, err = run_cli(args)
        assert status == 2
        assert missing in err
        assert not os.path.exists(os.path.join(tmp, "wmd.csv"))
    print("✅ test_missing_embeddings_file passed")


def test_empty_query_is_isolated():
    """Test that an empty query line yields an error row while others still run."""
    with tempfile.TemporaryDirectory() as tmp:
        queries = os.path.join(tmp, "queries.txt")
        with open(queries, "w", encoding="utf-8") as fout:
            fout.write("a\n\nb\n")
        log_path = os.path.join(tmp, "run.json")
        status, err = run_cli(toy_args(tmp, "--log-json", log_path, queries=queries))
        assert status == 1
        assert "1 of 3 queries failed" in err

        with open(os.path.join(tmp, "wmd.csv"), encoding="utf-8") as fin:
            lines = fin.read().splitlines()
        assert lines[0] == "query_id,doc_id,wmd"
        assert lines[3] == "1,,"
        assert [line.split(",")[0] for line in lines[1:]] == ["0", "0", "1", "2", "2"]

        with open(log_path, encoding="utf-8") as fin:
            log = json.load(fin)
        assert [q["ok"] for q in log["queries"]] == [True, False, True]
        assert log["settings"]["lam"] == 10.0
    print("✅ test_empty_query_is_isolated passed")


def test_output_is_byte_identical_across_threads():
    """Test end-to-end determinism for sequential and concurrent query modes."""
    with tempfile.TemporaryDirectory() as tmp:
        fixture_dir = os.path.join(tmp, "data")
        os.makedirs(fixture_dir)
        shutil.copy(fixture("tiny.vec"), fixture_dir)
        corpus = os.path.join(fixture_dir, "corpus.txt")
        with open(corpus, "w", encoding="utf-8") as fout:
            fout.write("the cat\ncat sat sat\nthe the sat\nsat cat the\n")
        queries = os.path.join(fixture_dir, "queries.txt")
        with open(queries, "w", encoding="utf-8") as fout:
            fout.write("cat\nthe sat\nsat sat cat\n")

        outputs = []
        for extra in (["--threads", "1"], ["--threads", "3"],
                      ["--threads", "2", "--parallel-queries"]):
            out = os.path.join(tmp, f"out{len(outputs)}.csv")
            status, _ = run_cli([
                "--embeddings", os.path.join(fixture_dir, "tiny.vec"),
                "--corpus", corpus, "--queries", queries, "--output", out,
                "--lambda", "1", "--quiet", *extra,
            ])
            assert status == 0
            with open(out, "rb") as fin:
                outputs.append(fin.read())
        assert outputs[0] == outputs[1] == outputs[2]
    print("✅ test_output_is_byte_identical_across_threads passed")


def test_bench_report_written():
    """Test the --bench flag and its default report path."""
    with tempfile.TemporaryDirectory() as tmp:
        status, _ = run_cli(toy_args(tmp, "--bench", "1,2"))
        assert status == 0
        report = pd.read_csv(os.path.join(tmp, "wmd_bench.csv"))
        assert report["threads"].tolist() == [1, 2]
        assert report["speedup"].tolist()[0] == 1.0
        assert report["v_r"].tolist() == [1, 1]
    print("✅ test_bench_report_written passed")


def test_comparison_report_written():
    """Test the --bench-compare flag and its default report path."""
    with tempfile.TemporaryDirectory() as tmp:
        status, err = run_cli(toy_args(tmp, "--bench-compare"))
        assert status == 0
        assert not os.path.exists(os.path.join(tmp, "wmd_bench.csv"))
        report = pd.read_csv(os.path.join(tmp, "wmd_compare.csv"))
        assert list(report.columns) == COMPARE_COLUMNS
        assert report["query_id"].tolist() == [0]
        assert report["v_r"].tolist() == [1]
        for column in ("sparse_seconds", "dense_seconds", "blocked_seconds", "direct_seconds"):
            assert report[column][0] > 0
        assert "comparison report" in err
    print("✅ test_comparison_report_written passed")


def test_usage_errors():
    """Test configuration errors map to exit status 2."""
    with tempfile.TemporaryDirectory() as tmp:
        status, _ = run_cli(toy_args(tmp, "--lambda", "-1"))
        assert status == 2
        status, _ = run_cli(toy_args(tmp, "--threads", "0"))
        assert status == 2
    print("✅ test_usage_errors passed")


def test_workers_from_environment():
    """Test the WMD_THREADS default."""
    with mock.patch.dict(os.environ, {"WMD_THREADS": "3"}):
        assert default_workers() == 3
        cfg = RunConfig("e.vec", "c.txt", "q.txt", "o.csv")
        assert cfg.workers == 3
    with mock.patch.dict(os.environ, {"WMD_THREADS": "zero"}):
        with pytest.raises(ConfigError):
            default_workers()
    with mock.patch.dict(os.environ, {"WMD_THREADS": ""}):
        assert default_workers() == (os.cpu_count() or 1)
    print("✅ test_workers_from_environment passed")


if __name__ == "__main__":
    print("\n🧪 Running CLI tests...\n")

    test_toy_with_dense_check()
    test_dense_check_with_underflowing_vocabulary()
    test_non_finite_dense_result_fails()
    test_missing_embeddings_file()
    test_empty_query_is_isolated()
    test_output_is_byte_identical_across_threads()
    test_bench_report_written()
    test_comparison_report_written()
    test_usage_errors()
    test_workers_from_environment()

    print("\n✅ All CLI tests passed!\n")
