"""
SDDMM, SpMM and the fused SDDMM_SpMM kernel over the document-major corpus,
plus the per-column reciprocal and max-change steps of the scaling loop.

Each worker processes a whole document range from a PartitionPlan, so it owns
the matching output columns and writes them without synchronization. Entry
order within a document is fixed, which makes every kernel bitwise
deterministic for any worker count.
"""
import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, List, Optional

import numpy as np
from numba import njit

from src.errors import DimensionMismatch, NumericalBreakdown
from src.matrix_core import DocMatrix, PartitionPlan, WorkerTeam, partition_nonzeros

if TYPE_CHECKING:
    from src.sinkhorn import WmdResult

logger = logging.getLogger(__name__)


@dataclass
class KernelStats:
    """Operation counters merged from all workers at each join."""
    sddmm_mac_count: int = 0
    spmm_mac_count: int = 0
    iterations: int = 0
    precompute_flop_count: int = 0

    def merge(self, sddmm_macs: int, spmm_macs: int):
        self.sddmm_mac_count += int(sddmm_macs)
        self.spmm_mac_count += int(spmm_macs)


@dataclass(frozen=True, eq=False)
class SddmmOutput:
    """Sparse v: one value per nonzero of c, sharing c's sparsity pattern."""
    doc_ptr: np.ndarray
    word_idx: np.ndarray
    values: np.ndarray
    vocab_size: int

    @property
    def num_docs(self) -> int:
        return int(self.doc_ptr.shape[0] - 1)

    def to_dense(self) -> np.ndarray:
        """Scatter into a dense V x N array (tests and small instances only)."""
        dense = np.zeros((self.vocab_size, self.num_docs), dtype=np.float64)
        docs = np.repeat(np.arange(self.num_docs), np.diff(self.doc_ptr))
        dense[self.word_idx, docs] = self.values
        return dense


@njit(nogil=True, cache=True)
def _sddmm_range(doc_ptr, word_idx, weight, KT, u, d_begin, d_end, out):
    v_r = KT.shape[1]
    macs = 0
    for j in range(d_begin, d_end):
        for e in range(doc_ptr[j], doc_ptr[j + 1]):
            g = word_idx[e]
            dot = 0.0
            for i in range(v_r):
                dot += KT[g, i] * u[i, j]
            macs += v_r
            if not (dot > 0.0 and math.isfinite(dot)):
                return macs, e
            val = weight[e] / dot
            if not (val > 0.0 and math.isfinite(val)):
                return macs, e
            out[e] = val
    return macs, -1


@njit(nogil=True, cache=True)
def _spmm_range(doc_ptr, word_idx, values, A, d_begin, d_end, x):
    v_r = A.shape[0]
    macs = 0
    for j in range(d_begin, d_end):
        for i in range(v_r):
            x[i, j] = 0.0
        for e in range(doc_ptr[j], doc_ptr[j + 1]):
            g = word_idx[e]
            val = values[e]
            for i in range(v_r):
                x[i, j] += A[i, g] * val
            macs += v_r
    return macs


@njit(nogil=True, cache=True)
def _sddmm_spmm_range(doc_ptr, word_idx, weight, KT, u, A, d_begin, d_end, x):
    v_r = KT.shape[1]
    sddmm_macs = 0
    spmm_macs = 0
    for j in range(d_begin, d_end):
        for i in range(v_r):
            x[i, j] = 0.0
        for e in range(doc_ptr[j], doc_ptr[j + 1]):
            g = word_idx[e]
            dot = 0.0
            for i in range(v_r):
                dot += KT[g, i] * u[i, j]
            sddmm_macs += v_r
            if not (dot > 0.0 and math.isfinite(dot)):
                return sddmm_macs, spmm_macs, e
            val = weight[e] / dot
            if not (val > 0.0 and math.isfinite(val)):
                return sddmm_macs, spmm_macs, e
            for i in range(v_r):
                x[i, j] += A[i, g] * val
            spmm_macs += v_r
    return sddmm_macs, spmm_macs, -1


@njit(nogil=True, cache=True)
def _reciprocal_range(x, d_begin, d_end, u):
    for i in range(x.shape[0]):
        for j in range(d_begin, d_end):
            u[i, j] = 1.0 / x[i, j]


@njit(nogil=True, cache=True)
def _max_abs_change_range(x_new, x, d_begin, d_end):
    largest = 0.0
    for i in range(x.shape[0]):
        for j in range(d_begin, d_end):
            d = abs(x_new[i, j] - x[i, j])
            if d != d:
                return d
            if d > largest:
                largest = d
    return largest


def _check_shapes(c: DocMatrix, KT: Optional[np.ndarray], u: Optional[np.ndarray],
                  A: Optional[np.ndarray]):
    if KT is not None and KT.shape[0] != c.vocab_size:
        raise DimensionMismatch(f"KT has {KT.shape[0]} rows, corpus vocabulary is {c.vocab_size}")
    if u is not None:
        if u.shape[1] != c.num_docs:
            raise DimensionMismatch(f"u has {u.shape[1]} columns, corpus has {c.num_docs} documents")
        if KT is not None and u.shape[0] != KT.shape[1]:
            raise DimensionMismatch("u rows must match KT columns (v_r)")
    if A is not None:
        if A.shape[1] != c.vocab_size:
            raise DimensionMismatch(f"A has {A.shape[1]} columns, corpus vocabulary is {c.vocab_size}")
        if KT is not None and A.shape[0] != KT.shape[1]:
            raise DimensionMismatch("A rows must match KT columns (v_r)")


def _run_ranges(plan: PartitionPlan, team: Optional[WorkerTeam], task) -> List:
    if team is None:
        with WorkerTeam(plan.num_workers) as own:
            return own.map(task, plan.ranges)
    return team.map(task, plan.ranges)


def _raise_on_breakdown(bad_entries):
    for bad in bad_entries:
        if bad >= 0:
            raise NumericalBreakdown(int(bad))


def sddmm(
    c: DocMatrix,
    KT: np.ndarray,
    u: np.ndarray,
    plan: Optional[PartitionPlan] = None,
    team: Optional[WorkerTeam] = None,
    stats: Optional[KernelStats] = None
) -> SddmmOutput:
    """
    Sampled dense-dense product: v[e] = c[e] / dot(KT[word(e), :], u[:, doc(e)]).

    Only the nonzeros of c are evaluated.

    Raises:
        NumericalBreakdown: a dot product is zero or non-finite
    """
    KT = np.ascontiguousarray(KT, dtype=np.float64)
    u = np.ascontiguousarray(u, dtype=np.float64)
    _check_shapes(c, KT, u, None)
    plan = plan or partition_nonzeros(c, 1)
    plan.check_covers(c.num_docs)
    out = np.empty(c.nnz, dtype=np.float64)

    results = _run_ranges(
        plan, team,
        lambda rng: _sddmm_range(c.doc_ptr, c.word_idx, c.weight, KT, u, rng[0], rng[1], out),
    )
    _raise_on_breakdown(bad for _, bad in results)
    if stats is not None:
        stats.merge(sum(macs for macs, _ in results), 0)
    return SddmmOutput(c.doc_ptr, c.word_idx, out, c.vocab_size)


def spmm(
    A: np.ndarray,
    v: SddmmOutput,
    plan: Optional[PartitionPlan] = None,
    team: Optional[WorkerTeam] = None,
    stats: Optional[KernelStats] = None
) -> np.ndarray:
    """
    Dense x sparse product x = A @ v.

    Args:
        A: v_r x V dense matrix
        v: Sparse SDDMM output

    Returns:
        v_r x N dense matrix
    """
    A = np.ascontiguousarray(A, dtype=np.float64)
    if A.shape[1] != v.vocab_size:
        raise DimensionMismatch(f"A has {A.shape[1]} columns, expected {v.vocab_size}")
    if plan is None:
        plan = PartitionPlan(1, ((0, v.num_docs),))
    plan.check_covers(v.num_docs)
    x = np.empty((A.shape[0], v.num_docs), dtype=np.float64)

    results = _run_ranges(
        plan, team,
        lambda rng: _spmm_range(v.doc_ptr, v.word_idx, v.values, A, rng[0], rng[1], x),
    )
    if stats is not None:
        stats.merge(0, sum(results))
    return x


def sddmm_spmm(
    c: DocMatrix,
    KT: np.ndarray,
    u: np.ndarray,
    A: np.ndarray,
    plan: PartitionPlan,
    stats: Optional[KernelStats] = None,
    team: Optional[WorkerTeam] = None
) -> np.ndarray:
    """
    Fused kernel: x = A @ (c .* 1 / (KT @ u)) without materializing v.

    Each SDDMM value is scattered into the SpMM accumulation as soon as it
    is computed. The result is bitwise identical to ``spmm(A, sddmm(c, KT, u))``.

    Args:
        c: Corpus (V x N, document-major)
        KT: V x v_r
        u: v_r x N, strictly positive
        A: v_r x V
        plan: Per-worker document ranges
        stats: Counters to increment (optional)
        team: Worker team; a temporary one of plan.num_workers is used if omitted

    Returns:
        v_r x N dense matrix

    Raises:
        NumericalBreakdown: a dot product is zero or non-finite
    """
    KT = np.ascontiguousarray(KT, dtype=np.float64)
    u = np.ascontiguousarray(u, dtype=np.float64)
    A = np.ascontiguousarray(A, dtype=np.float64)
    _check_shapes(c, KT, u, A)
    plan.check_covers(c.num_docs)
    x = np.empty((KT.shape[1], c.num_docs), dtype=np.float64)

    results = _run_ranges(
        plan, team,
        lambda rng: _sddmm_spmm_range(
            c.doc_ptr, c.word_idx, c.weight, KT, u, A, rng[0], rng[1], x
        ),
    )
    _raise_on_breakdown(bad for _, _, bad in results)
    if stats is not None:
        stats.merge(sum(r[0] for r in results), sum(r[1] for r in results))
    return x


def fused_final(
    c: DocMatrix,
    KT: np.ndarray,
    u: np.ndarray,
    KM: np.ndarray,
    plan: PartitionPlan,
    stats: Optional[KernelStats] = None,
    team: Optional[WorkerTeam] = None
) -> "WmdResult":
    """
    Final distances: out[j] = sum_i u[i, j] * (KM @ v)[i, j].

    Runs the fused kernel with A = KM (= K .* M), then reduces each column.
    """
    from src.sinkhorn import WmdResult

    stats = stats if stats is not None else KernelStats()
    y = sddmm_spmm(c, KT, u, KM, plan, stats, team)
    distances = (np.asarray(u) * y).sum(axis=0)
    return WmdResult(distances, stats)



def reciprocal(
    x: np.ndarray,
    plan: PartitionPlan,
    team: Optional[WorkerTeam] = None
) -> np.ndarray:
    """u = 1 / x, each worker inverting the columns of its document range."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    plan.check_covers(x.shape[1])
    u = np.empty_like(x)
    _run_ranges(plan, team, lambda rng: _reciprocal_range(x, rng[0], rng[1], u))
    return u


def max_abs_change(
    x_new: np.ndarray,
    x: np.ndarray,
    plan: PartitionPlan,
    team: Optional[WorkerTeam] = None
) -> float:
    """
    max |x_new - x| over all entries, reduced per document range then joined.

    NaN anywhere gives NaN, so a convergence test ``delta <= tol`` fails.
    """
    x_new = np.ascontiguousarray(x_new, dtype=np.float64)
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x_new.shape != x.shape:
        raise DimensionMismatch(f"cannot compare {x_new.shape} with {x.shape}")
    plan.check_covers(x.shape[1])
    partial = _run_ranges(
        plan, team, lambda rng: _max_abs_change_range(x_new, x, rng[0], rng[1])
    )
    if any(math.isnan(d) for d in partial):
        return math.nan
    return float(max(partial, default=0.0))
