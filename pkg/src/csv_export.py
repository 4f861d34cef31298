"""
CSV export of distances and bench reports, plus the JSON run log.
"""
import json
import logging
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np
import pandas as pd

from src.errors import InputError

logger = logging.getLogger(__name__)

# 17 significant digits round-trip every float64 exactly.
FLOAT_FORMAT = "%.17g"

RESULT_COLUMNS = ["query_id", "doc_id", "wmd"]
BENCH_COLUMNS = ["threads", "query_id", "seconds", "speedup", "iterations", "v_r", "nnz"]
COMPARE_COLUMNS = [
    "query_id", "v_r", "nnz",
    "sparse_seconds", "dense_seconds", "dense_over_sparse",
    "blocked_seconds", "direct_seconds", "direct_over_blocked",
]


@dataclass
class QueryOutcome:
    """Result (or failure) of one query of a batch run."""
    query_id: int
    distances: Optional[np.ndarray] = None
    dense_distances: Optional[np.ndarray] = None
    error: Optional[str] = None
    v_r: int = 0
    iterations: int = 0
    seconds: float = 0.0
    max_deviation: Optional[float] = None

    @property
    def ok(self) -> bool:
        return self.error is None


def validate_results_for_export(results: Sequence[QueryOutcome]) -> Tuple[bool, List[str]]:
    """
    Validate outcomes before export.

    Returns:
        Tuple of (is_valid, list of error messages)
    """
    errors = []
    if not results:
        errors.append("No query results to export")
        return False, errors

    ids = [r.query_id for r in results]
    if len(set(ids)) != len(ids):
        errors.append("Duplicate query ids")

    lengths = {len(r.distances) for r in results if r.distances is not None}
    if len(lengths) > 1:
        errors.append(f"Queries disagree on the number of documents: {sorted(lengths)}")

    return len(errors) == 0, errors


def results_frame(results: Sequence[QueryOutcome], include_dense: bool = False) -> pd.DataFrame:
    """
    One row per (query, document), ordered by (query_id, doc_id).

    A failed query contributes a single row with empty doc_id and wmd.
    """
    frames = []
    for outcome in sorted(results, key=lambda r: r.query_id):
        if outcome.distances is None:
            row = {"query_id": [outcome.query_id], "doc_id": [pd.NA], "wmd": [np.nan]}
            if include_dense:
                row["dense_wmd"] = [np.nan]
            frames.append(pd.DataFrame(row))
            continue
        n = len(outcome.distances)
        block = {
            "query_id": np.full(n, outcome.query_id, dtype=np.int64),
            "doc_id": np.arange(n, dtype=np.int64),
            "wmd": np.asarray(outcome.distances, dtype=np.float64),
        }
        if include_dense:
            dense = outcome.dense_distances
            block["dense_wmd"] = np.full(n, np.nan) if dense is None else np.asarray(dense)
        frames.append(pd.DataFrame(block))

    df = pd.concat(frames, ignore_index=True)
    df["query_id"] = df["query_id"].astype("int64")
    df["doc_id"] = df["doc_id"].astype("Int64")
    return df


def write_csv(
    results: Sequence[QueryOutcome],
    sink: Union[str, Path, TextIO],
    include_dense: bool = False
):
    """
    Write ``query_id,doc_id,wmd`` (plus ``dense_wmd`` when requested).

    Raises:
        InputError: results are empty or inconsistent; nothing is written
        OSError: the sink cannot be written
    """
    is_valid, errors = validate_results_for_export(results)
    if not is_valid:
        raise InputError("; ".join(errors))

    df = results_frame(results, include_dense)
    df.to_csv(sink, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"Wrote {len(df)} result rows")


def write_bench_report(frame: pd.DataFrame, sink: Union[str, Path, TextIO]):
    """Write the scaling report ``threads,query_id,seconds,speedup,iterations,v_r,nnz``."""
    frame[BENCH_COLUMNS].to_csv(sink, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def write_comparison_report(frame: pd.DataFrame, sink: Union[str, Path, TextIO]):
    """
    Write the formulation comparison report.

    Skipped dense timings are NaN and come out as empty fields.
    """
    frame[COMPARE_COLUMNS].to_csv(sink, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def create_run_log(results: Sequence[QueryOutcome], settings: Dict[str, Any],
                   nnz: Optional[int] = None) -> str:
    """
    Create a detailed run log in JSON format.

    Args:
        results: Query outcomes of the run
        settings: Settings used for processing
        nnz: Corpus nonzero count

    Returns:
        JSON string
    """
    log_data = {
        'timestamp': datetime.now().isoformat(),
        'settings': settings,
        'nnz': nnz,
        'queries': []
    }

    for outcome in results:
        log_data['queries'].append({
            'query_id': outcome.query_id,
            'ok': outcome.ok,
            'v_r': outcome.v_r,
            'iterations': outcome.iterations,
            'seconds': outcome.seconds,
            'max_dense_deviation': outcome.max_deviation,
            'error': outcome.error,
        })

    return json.dumps(log_data, indent=2)
