"""
Benchmarks over the queries of a run.

The scaling benchmark times the full per-query solve at several worker counts
and checks that every count produces the same bits. The comparison benchmark
times the sparse solver against the dense formulation and the blocked distance
precompute against the direct one, all on a single worker.
"""
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

import pandas as pd

from src.config import COMPARE_DENSE_MAX_CELLS, LoadedInputs, RunConfig, load_inputs
from src.csv_export import BENCH_COLUMNS, COMPARE_COLUMNS
from src.distance_kernels import direct_distance_precompute, fused_distance_precompute
from src.errors import ConfigError, DeterminismViolation, InputError
from src.ingest import QueryHistogram, build_query
from src.matrix_core import WorkerTeam
from src.sinkhorn import (
    SolverConfig,
    WmdResult,
    dense_reference_wmd,
    select_nonzero,
    sinkhorn_wmd,
)

logger = logging.getLogger(__name__)

T = TypeVar("T")


@dataclass
class BenchRow:
    threads: int
    query_id: int
    seconds: float
    speedup: float
    iterations: int
    v_r: int
    nnz: int


@dataclass
class ComparisonRow:
    query_id: int
    v_r: int
    nnz: int
    sparse_seconds: float
    dense_seconds: float
    dense_over_sparse: float
    blocked_seconds: float
    direct_seconds: float
    direct_over_blocked: float


@dataclass
class BenchReport:
    rows: List[BenchRow] = field(default_factory=list)
    comparisons: List[ComparisonRow] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([vars(row) for row in self.rows], columns=BENCH_COLUMNS)

    def comparison_frame(self) -> pd.DataFrame:
        return pd.DataFrame([vars(row) for row in self.comparisons], columns=COMPARE_COLUMNS)

    def speedups(self, query_id: int) -> Dict[int, float]:
        return {row.threads: row.speedup for row in self.rows if row.query_id == query_id}


def theoretical_cost(v_r: int, V: int, w: int, nnz: int, iterations: int, workers: int) -> float:
    """
    Asymptotic 1-to-N cost: V*v_r*w/p for the distance precompute plus
    t*nnz*v_r/p for the sparse iterations.
    """
    return (V * v_r * w + iterations * nnz * v_r) / workers


def _timed(fn: Callable[[], T], warm_up: bool = True) -> Tuple[T, float]:
    if warm_up:
        fn()
    start = time.perf_counter()
    result = fn()
    return result, time.perf_counter() - start


def _timed_solve(query: QueryHistogram, inputs: LoadedInputs, solver: SolverConfig,
                 team: WorkerTeam):
    return _timed(lambda: sinkhorn_wmd(query, inputs.corpus, inputs.emb, solver, team=team))


def bench_query(
    query: QueryHistogram,
    query_id: int,
    inputs: LoadedInputs,
    solver: SolverConfig,
    thread_list: Sequence[int]
) -> List[BenchRow]:
    """
    Benchmark one query at every worker count in ``thread_list``.

    Each count gets one untimed warm-up solve. A single-worker baseline is
    always measured, even when 1 is not in the list.

    Raises:
        DeterminismViolation: distances differ between worker counts
    """
    counts = sorted(set(thread_list) | {1})
    timings: Dict[int, float] = {}
    baseline: Optional[WmdResult] = None

    for threads in counts:
        with WorkerTeam(threads) as team:
            result, seconds = _timed_solve(query, inputs, solver, team)
        if baseline is None:
            baseline = result
        elif result.distances.tobytes() != baseline.distances.tobytes():
            raise DeterminismViolation(
                f"query {query_id}: {threads} workers disagree with 1 worker"
            )
        timings[threads] = seconds

    emb, corpus = inputs.emb, inputs.corpus
    rows = []
    for threads in thread_list:
        speedup = 1.0 if threads == 1 else timings[1] / timings[threads]
        rows.append(BenchRow(
            threads=threads,
            query_id=query_id,
            seconds=timings[threads],
            speedup=speedup,
            iterations=baseline.stats.iterations,
            v_r=int(query.idx.size),
            nnz=corpus.nnz,
        ))
        model = theoretical_cost(query.idx.size, emb.vocab_size, emb.dim, corpus.nnz,
                                 baseline.stats.iterations, threads)
        logger.info(
            f"bench query={query_id} threads={threads}: {timings[threads]:.4f}s, "
            f"speedup {speedup:.2f}x, model cost {model:.3e}"
        )
    return rows


def compare_query(
    query: QueryHistogram,
    query_id: int,
    inputs: LoadedInputs,
    solver: SolverConfig
) -> ComparisonRow:
    """
    Time the sparse solve against the dense formulation, and the blocked
    distance precompute against cdist followed by exp.

    The dense formulation materializes V x N matrices; it is skipped (NaN
    timing) above COMPARE_DENSE_MAX_CELLS cells and runs once, without a
    warm-up, otherwise.
    """
    emb, corpus = inputs.emb, inputs.corpus
    compact = select_nonzero(query)

    with WorkerTeam(1) as team:
        _, sparse_seconds = _timed(
            lambda: sinkhorn_wmd(query, corpus, emb, solver, team=team)
        )
        _, blocked_seconds = _timed(
            lambda: fused_distance_precompute(
                emb, compact, solver.lam, solver.block_vocab, solver.block_query, team
            )
        )
    _, direct_seconds = _timed(lambda: direct_distance_precompute(emb, compact, solver.lam))

    dense_seconds = math.nan
    if emb.vocab_size * corpus.num_docs <= COMPARE_DENSE_MAX_CELLS:
        _, dense_seconds = _timed(
            lambda: dense_reference_wmd(query, corpus, emb, solver), warm_up=False
        )
    else:
        logger.info(f"compare query={query_id}: V x N too large for the dense formulation")

    row = ComparisonRow(
        query_id=query_id,
        v_r=compact.v_r,
        nnz=corpus.nnz,
        sparse_seconds=sparse_seconds,
        dense_seconds=dense_seconds,
        dense_over_sparse=dense_seconds / sparse_seconds,
        blocked_seconds=blocked_seconds,
        direct_seconds=direct_seconds,
        direct_over_blocked=direct_seconds / blocked_seconds,
    )
    logger.info(
        f"compare query={query_id}: sparse {sparse_seconds:.4f}s, dense {dense_seconds:.4f}s "
        f"({row.dense_over_sparse:.1f}x), blocked precompute {blocked_seconds:.4f}s, "
        f"direct {direct_seconds:.4f}s ({row.direct_over_blocked:.2f}x)"
    )
    return row


def run_bench(cfg: RunConfig, inputs: Optional[LoadedInputs] = None) -> BenchReport:
    """
    Run the scaling benchmark, the comparison benchmark, or both, over every
    query of the run.

    Queries that cannot be built (no in-vocabulary words) are skipped.
    Timing covers precompute, iterations and the final pass, not file I/O.

    Args:
        cfg: Run configuration; bench_thread_list selects the scaling
            benchmark, bench_compare the comparison benchmark
        inputs: Already loaded inputs; loaded from cfg when omitted

    Raises:
        ConfigError: neither benchmark is selected
        DeterminismViolation: results differ across worker counts
    """
    if not cfg.bench_thread_list and not cfg.bench_compare:
        raise ConfigError("bench thread list is empty and comparisons are off")
    inputs = inputs or load_inputs(cfg)
    solver = cfg.solver_config()

    report = BenchReport()
    for query_id, tokens in enumerate(inputs.queries):
        try:
            query = build_query(tokens, inputs.emb)
        except InputError as e:
            logger.warning(f"bench: skipping query {query_id}: {e}")
            continue
        if cfg.bench_thread_list:
            report.rows.extend(
                bench_query(query, query_id, inputs, solver, cfg.bench_thread_list)
            )
            summary = ", ".join(
                f"{threads}: {speedup:.2f}x"
                for threads, speedup in sorted(report.speedups(query_id).items())
            )
            logger.info(f"bench query={query_id} speedups {summary}")
        if cfg.bench_compare:
            report.comparisons.append(compare_query(query, query_id, inputs, solver))
    return report
