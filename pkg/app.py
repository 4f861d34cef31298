#!/usr/bin/env python3
"""
Sparse Sinkhorn WMD - Batch command-line application

Computes the Word Mover's Distance of every query against every corpus
document and writes the distances (and optional scaling report) as CSV.
"""
import argparse
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from tqdm import tqdm

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from src.bench import run_bench
from src.config import (
    DENSE_CHECK_MAX_CELLS,
    DENSE_CHECK_TOL,
    LoadedInputs,
    RunConfig,
    default_workers,
    load_inputs,
)
from src.csv_export import (
    QueryOutcome,
    create_run_log,
    write_bench_report,
    write_comparison_report,
    write_csv,
)
from src.errors import (
    ConfigError,
    InputError,
    SolverError,
    VerificationFailure,
    WmdError,
)
from src.ingest import build_query
from src.matrix_core import WorkerTeam
from src.sinkhorn import SolverConfig, SolverMode, dense_reference_wmd, sinkhorn_wmd

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_SOLVER = 1
EXIT_USAGE = 2


def _status(message: str):
    print(message, file=sys.stderr)


def _thread_list(value: str) -> List[int]:
    try:
        counts = [int(part) for part in value.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {value!r}")
    if not counts or any(c < 1 for c in counts):
        raise argparse.ArgumentTypeError("thread counts must be integers >= 1")
    return counts


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="One-to-many Word Mover's Distance with a sparse Sinkhorn-Knopp solver"
    )
    parser.add_argument("--embeddings", required=True, type=Path, help="fastText .vec file")
    parser.add_argument("--corpus", required=True, type=Path, help="one target document per line")
    parser.add_argument("--queries", required=True, type=Path, help="one query document per line")
    parser.add_argument("--stopwords", type=Path, help="one stopword per line")
    parser.add_argument("--lambda", dest="lam", type=float, default=10.0,
                        help="entropic regularization strength (default: 10)")
    parser.add_argument("--max-iter", type=int, default=15)
    parser.add_argument("--tol", type=float, default=1e-9)
    parser.add_argument("--until-converged", action="store_true",
                        help="stop once max |dx| <= tol (max-iter becomes a cap)")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: $WMD_THREADS or CPU count)")
    parser.add_argument("--check-dense", action="store_true",
                        help="verify against the dense reference on small instances")
    parser.add_argument("--bench", type=_thread_list, default=None, metavar="T1,T2,...",
                        help="also write a scaling report for these worker counts")
    parser.add_argument("--bench-output", type=Path, default=None,
                        help="scaling report path (default: <output>_bench.csv)")
    parser.add_argument("--bench-compare", action="store_true",
                        help="also time sparse vs dense and blocked vs direct precompute")
    parser.add_argument("--compare-output", type=Path, default=None,
                        help="comparison report path (default: <output>_compare.csv)")
    parser.add_argument("--parallel-queries", action="store_true",
                        help="solve queries concurrently, one worker each")
    parser.add_argument("--log-json", type=Path, default=None, help="write a JSON run log")
    parser.add_argument("--max-vocab", type=int, default=None,
                        help="read only the first N embedding vectors")
    parser.add_argument("--distance-method", choices=("blocked", "direct"), default="blocked")
    parser.add_argument("--block-vocab", type=int, default=64)
    parser.add_argument("--output", required=True, type=Path, help="distances CSV")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true")
    verbosity.add_argument("--quiet", action="store_true")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        embeddings_path=args.embeddings,
        corpus_path=args.corpus,
        queries_path=args.queries,
        output_path=args.output,
        stopwords_path=args.stopwords,
        lam=args.lam,
        max_iter=args.max_iter,
        tol=args.tol,
        mode=SolverMode.UNTIL_CONVERGED if args.until_converged else SolverMode.FIXED,
        workers=args.threads if args.threads is not None else default_workers(),
        check_dense=args.check_dense,
        bench_thread_list=args.bench or [],
        bench_output_path=args.bench_output,
        bench_compare=args.bench_compare,
        compare_output_path=args.compare_output,
        parallel_queries=args.parallel_queries,
        log_json_path=args.log_json,
        max_vocab=args.max_vocab,
        distance_method=args.distance_method,
        block_vocab=args.block_vocab,
    )


def solve_query(
    query_id: int,
    tokens: Sequence[str],
    inputs: LoadedInputs,
    solver: SolverConfig,
    check_dense: bool,
    team: WorkerTeam
) -> QueryOutcome:
    """
    Solve one query; any WmdError becomes an error outcome.

    With ``check_dense``, instances with v_r * N <= 1e6 are re-solved by the
    dense reference and the maximum deviation is recorded.
    """
    outcome = QueryOutcome(query_id)
    try:
        query = build_query(tokens, inputs.emb)
        outcome.v_r = int(query.idx.size)
        start = time.perf_counter()
        result = sinkhorn_wmd(query, inputs.corpus, inputs.emb, solver, team=team)
        outcome.seconds = time.perf_counter() - start
        outcome.iterations = result.stats.iterations
        outcome.distances = result.distances

        if check_dense:
            if outcome.v_r * inputs.corpus.num_docs <= DENSE_CHECK_MAX_CELLS:
                dense = dense_reference_wmd(query, inputs.corpus, inputs.emb, solver)
                outcome.dense_distances = dense.distances
                outcome.max_deviation = float(np.max(np.abs(result.distances - dense.distances)))
                if not outcome.max_deviation <= DENSE_CHECK_TOL:
                    raise VerificationFailure(
                        f"max |sparse - dense| = {outcome.max_deviation:.3e} > {DENSE_CHECK_TOL}"
                    )
            else:
                logger.info(f"query {query_id}: instance too large for the dense check")
    except WmdError as e:
        outcome.error = f"{type(e).__name__}: {e}"
        logger.error(f"query {query_id}: {outcome.error}")
    return outcome


def solve_all(cfg: RunConfig, inputs: LoadedInputs, solver: SolverConfig) -> List[QueryOutcome]:
    queries = list(enumerate(inputs.queries))
    progress = tqdm(total=len(queries), desc="Queries", unit="query",
                    disable=not sys.stderr.isatty())

    if cfg.parallel_queries and cfg.workers > 1:
        single = WorkerTeam(1)

        def task(item):
            return solve_query(item[0], item[1], inputs, solver, cfg.check_dense, single)

        with ThreadPoolExecutor(max_workers=cfg.workers, thread_name_prefix="wmd-query") as pool:
            outcomes = []
            for outcome in pool.map(task, queries):
                outcomes.append(outcome)
                progress.update(1)
    else:
        outcomes = []
        with WorkerTeam(cfg.workers) as team:
            for query_id, tokens in queries:
                outcomes.append(solve_query(query_id, tokens, inputs, solver, cfg.check_dense, team))
                progress.update(1)

    progress.close()
    return outcomes


def run_batch(cfg: RunConfig) -> int:
    """
    Load inputs, solve every query, write the CSV outputs.

    Returns:
        0 on success, 1 if any query failed (solver or verification),
        2 on usage or I/O errors
    """
    try:
        solver = cfg.solver_config()
        cfg.check_readable()
        inputs = load_inputs(cfg)
    except (InputError, ConfigError, OSError) as e:
        _status(f"❌ {e}")
        return EXIT_USAGE

    if not inputs.queries:
        _status(f"❌ No queries in {cfg.queries_path}")
        return EXIT_USAGE

    outcomes = solve_all(cfg, inputs, solver)
    status = EXIT_OK

    try:
        write_csv(outcomes, cfg.output_path, include_dense=cfg.check_dense)
    except (InputError, OSError) as e:
        _status(f"❌ Could not write {cfg.output_path}: {e}")
        return EXIT_USAGE

    failed = [o for o in outcomes if not o.ok]
    if failed:
        _status(f"⚠️  {len(failed)} of {len(outcomes)} queries failed")
        status = EXIT_SOLVER
    else:
        _status(f"✅ Wrote distances for {len(outcomes)} queries to {cfg.output_path}")

    report = None
    if cfg.bench_thread_list or cfg.bench_compare:
        try:
            report = run_bench(cfg, inputs)
        except SolverError as e:
            _status(f"❌ Benchmark failed: {e}")
            status = EXIT_SOLVER
    if report is not None:
        reports = []
        if cfg.bench_thread_list:
            reports.append(("scaling", write_bench_report, report.to_frame(), cfg.bench_output_path))
        if cfg.bench_compare:
            reports.append(("comparison", write_comparison_report, report.comparison_frame(),
                            cfg.compare_output_path))
        for name, writer, frame, path in reports:
            try:
                writer(frame, path)
            except OSError as e:
                _status(f"❌ Could not write {path}: {e}")
                return EXIT_USAGE
            _status(f"✅ Wrote {name} report to {path}")

    if cfg.log_json_path is not None:
        try:
            cfg.log_json_path.write_text(
                create_run_log(outcomes, cfg.to_dict(), inputs.corpus.nnz), encoding="utf-8"
            )
        except OSError as e:
            _status(f"❌ Could not write {cfg.log_json_path}: {e}")
            return EXIT_USAGE

    return status


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(format='%(asctime)s : %(levelname)s : %(message)s', level=level)

    try:
        cfg = config_from_args(args)
    except ConfigError as e:
        _status(f"❌ {e}")
        return EXIT_USAGE
    return run_batch(cfg)


if __name__ == "__main__":
    sys.exit(main())
