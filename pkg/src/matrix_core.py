"""
Dense and compressed-sparse matrix containers, plus the nnz-balanced work
partitioner and the worker team shared by all kernels.

Dense matrices are plain C-contiguous float64 numpy arrays. The corpus is kept
document-major: documents play the role of CSR rows, so every worker can own
whole documents (whole output columns of x) and never needs atomics.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
import scipy.sparse as sp

from src.errors import DimensionMismatch, EmptyDocument, IndexOutOfRange, InputError

logger = logging.getLogger(__name__)

NORMALIZATION_TOL = 1e-12

T = TypeVar("T")
R = TypeVar("R")


def as_dense(array, name: str = "matrix") -> np.ndarray:
    """
    Coerce an array-like to a validated DenseMatrix.

    Args:
        array: Any 2-D array-like
        name: Name used in error messages

    Returns:
        C-contiguous float64 array with only finite entries
    """
    out = np.ascontiguousarray(array, dtype=np.float64)
    if out.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {out.shape}")
    if not np.all(np.isfinite(out)):
        raise InputError(f"{name} contains NaN or Inf entries")
    return out


def _readonly(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class DocMatrix:
    """
    Document-major compressed sparse matrix of normalized word frequencies.

    Column j of the logical V x N matrix c is stored contiguously at
    ``word_idx[doc_ptr[j]:doc_ptr[j + 1]]`` / ``weight[...]``.
    """
    vocab_size: int
    num_docs: int
    doc_ptr: np.ndarray
    word_idx: np.ndarray
    weight: np.ndarray

    def __post_init__(self):
        doc_ptr = np.array(self.doc_ptr, dtype=np.int64)
        word_idx = np.array(self.word_idx, dtype=np.int64)
        weight = np.array(self.weight, dtype=np.float64)
        object.__setattr__(self, "doc_ptr", _readonly(doc_ptr))
        object.__setattr__(self, "word_idx", _readonly(word_idx))
        object.__setattr__(self, "weight", _readonly(weight))
        self._validate()

    def _validate(self):
        V, N = self.vocab_size, self.num_docs
        doc_ptr, word_idx, weight = self.doc_ptr, self.word_idx, self.weight

        if V < 0 or N < 0:
            raise DimensionMismatch(f"negative shape ({V}, {N})")
        if doc_ptr.shape != (N + 1,):
            raise DimensionMismatch(f"doc_ptr must have length {N + 1}, got {doc_ptr.shape[0]}")
        nnz = word_idx.shape[0]
        if weight.shape[0] != nnz:
            raise DimensionMismatch("word_idx and weight lengths differ")
        if doc_ptr[0] != 0 or doc_ptr[N] != nnz:
            raise InputError("doc_ptr must start at 0 and end at nnz")

        lengths = np.diff(doc_ptr)
        if np.any(lengths < 0):
            raise InputError("doc_ptr must be nondecreasing")
        empty = np.flatnonzero(lengths == 0)
        if empty.size:
            raise EmptyDocument(int(empty[0]))

        if nnz:
            bad = np.flatnonzero((word_idx < 0) | (word_idx >= V))
            if bad.size:
                raise IndexOutOfRange("word", int(word_idx[bad[0]]), V)
            # Strictly increasing within each document; document starts are exempt.
            step_ok = np.diff(word_idx) > 0
            step_ok[doc_ptr[1:-1] - 1] = True
            if not np.all(step_ok):
                raise InputError("word indices must be strictly increasing within each document")
            if not np.all(np.isfinite(weight)) or np.any(weight <= 0):
                raise InputError("all weights must be finite and > 0")
            sums = np.add.reduceat(weight, doc_ptr[:-1])
            off = np.flatnonzero(np.abs(sums - 1.0) > NORMALIZATION_TOL)
            if off.size:
                raise InputError(
                    f"document {int(off[0])} weights sum to {sums[off[0]]!r}, expected 1"
                )

    @property
    def nnz(self) -> int:
        return int(self.word_idx.shape[0])

    @property
    def doc_lengths(self) -> np.ndarray:
        return np.diff(self.doc_ptr)

    @property
    def max_doc_nnz(self) -> int:
        return int(self.doc_lengths.max()) if self.num_docs else 0

    def document(self, j: int) -> Tuple[np.ndarray, np.ndarray]:
        """Return (word indices, weights) of document j."""
        if not 0 <= j < self.num_docs:
            raise IndexOutOfRange("doc", j, self.num_docs)
        lo, hi = self.doc_ptr[j], self.doc_ptr[j + 1]
        return self.word_idx[lo:hi], self.weight[lo:hi]

    def to_scipy(self) -> sp.csc_matrix:
        """The logical V x N matrix c as a scipy CSC matrix (shares no buffers)."""
        return sp.csc_matrix(
            (self.weight.copy(), self.word_idx.copy(), self.doc_ptr.copy()),
            shape=(self.vocab_size, self.num_docs),
        )

    def __repr__(self):
        return (f"DocMatrix(vocab_size={self.vocab_size}, num_docs={self.num_docs}, "
                f"nnz={self.nnz})")


def doc_matrix_from_entries(
    vocab_size: int,
    num_docs: int,
    entries: Iterable[Tuple[int, int, float]]
) -> DocMatrix:
    """
    Build a DocMatrix from (doc, word, count) triplets.

    Duplicate (doc, word) pairs are summed, entries are sorted by word index
    within each document and every document is normalized to sum 1.

    Args:
        vocab_size: Vocabulary size V
        num_docs: Number of documents N
        entries: Iterable of (doc, word, count) with count > 0

    Returns:
        Validated DocMatrix

    Raises:
        IndexOutOfRange: doc or word index out of range
        EmptyDocument: some document received no entries
    """
    triplets = list(entries)
    docs = np.array([t[0] for t in triplets], dtype=np.int64)
    words = np.array([t[1] for t in triplets], dtype=np.int64)
    counts = np.array([t[2] for t in triplets], dtype=np.float64)

    for kind, idx, bound in (("doc", docs, num_docs), ("word", words, vocab_size)):
        bad = np.flatnonzero((idx < 0) | (idx >= bound))
        if bad.size:
            raise IndexOutOfRange(kind, int(idx[bad[0]]), bound)
    if np.any(~np.isfinite(counts)) or np.any(counts <= 0):
        raise InputError("entry counts must be finite and > 0")

    keys = docs * vocab_size + words
    unique_keys, inverse = np.unique(keys, return_inverse=True)
    totals = np.bincount(inverse, weights=counts, minlength=unique_keys.shape[0])

    key_docs = unique_keys // vocab_size if vocab_size else unique_keys
    key_words = unique_keys - key_docs * vocab_size

    lengths = np.bincount(key_docs, minlength=num_docs)
    empty = np.flatnonzero(lengths == 0)
    if empty.size:
        raise EmptyDocument(int(empty[0]))

    doc_ptr = np.zeros(num_docs + 1, dtype=np.int64)
    np.cumsum(lengths, out=doc_ptr[1:])

    if totals.size:
        doc_sums = np.add.reduceat(totals, doc_ptr[:-1])
        weights = totals / np.repeat(doc_sums, lengths)
    else:
        weights = totals

    return DocMatrix(vocab_size, num_docs, doc_ptr, key_words, weights)


@dataclass(frozen=True)
class PartitionPlan:
    """Per-worker half-open document ranges covering [0, N)."""
    num_workers: int
    ranges: Tuple[Tuple[int, int], ...]

    def worker_nnz(self, doc_ptr: np.ndarray) -> List[int]:
        """Number of nonzeros assigned to each worker."""
        return [int(doc_ptr[hi] - doc_ptr[lo]) for lo, hi in self.ranges]

    def check_covers(self, num_docs: int):
        """Raise DimensionMismatch unless the ranges tile [0, num_docs) in order."""
        expected = 0
        for lo, hi in self.ranges:
            if lo != expected or hi < lo:
                break
            expected = hi
        else:
            if expected == num_docs and len(self.ranges) == self.num_workers:
                return
        raise DimensionMismatch(
            f"partition {self.ranges} does not cover documents [0, {num_docs})"
        )


def partition_nonzeros(matrix: DocMatrix, num_workers: int) -> PartitionPlan:
    """
    Split the corpus into per-worker document ranges with balanced nnz.

    Worker k starts at the first document whose offset reaches the flat
    nonzero index ceil(k * nnz / p), found by binary search over doc_ptr.
    A document straddling that index stays with the earlier worker.

    Args:
        matrix: Corpus matrix
        num_workers: Number of workers p (>= 1)

    Returns:
        PartitionPlan with p ranges (trailing ranges may be empty)
    """
    return partition_doc_ptr(matrix.doc_ptr, num_workers)


def partition_doc_ptr(doc_ptr: np.ndarray, num_workers: int) -> PartitionPlan:
    """partition_nonzeros on a raw doc_ptr array."""
    if num_workers < 1:
        raise InputError(f"num_workers must be >= 1, got {num_workers}")
    doc_ptr = np.asarray(doc_ptr, dtype=np.int64)
    num_docs = doc_ptr.shape[0] - 1
    nnz = int(doc_ptr[-1])

    ks = np.arange(1, num_workers, dtype=np.int64)
    targets = -(-ks * nnz // num_workers)
    inner = np.searchsorted(doc_ptr, targets, side="left")
    bounds = np.concatenate(([0], np.minimum(inner, num_docs), [num_docs]))
    bounds = np.maximum.accumulate(bounds)

    ranges = tuple((int(bounds[k]), int(bounds[k + 1])) for k in range(num_workers))
    return PartitionPlan(num_workers, ranges)


def split_even(length: int, num_workers: int, granule: int = 1) -> List[Tuple[int, int]]:
    """
    Split [0, length) into num_workers contiguous ranges aligned to granule.

    Used for dense work (vocabulary blocks) where every unit costs the same.
    """
    if num_workers < 1:
        raise InputError(f"num_workers must be >= 1, got {num_workers}")
    granule = max(1, granule)
    blocks = -(-length // granule)
    per_worker = -(-blocks // num_workers) if blocks else 0
    ranges = []
    for k in range(num_workers):
        lo = min(length, k * per_worker * granule)
        hi = min(length, (k + 1) * per_worker * granule)
        ranges.append((lo, hi))
    return ranges


class WorkerTeam:
    """
    Fork-join team of worker threads.

    ``map`` hands one item to each task and joins before returning, so
    results come back in item order. Kernels run by the team are numba
    ``nogil`` functions and execute truly in parallel.
    """

    def __init__(self, num_workers: int):
        if num_workers < 1:
            raise InputError(f"num_workers must be >= 1, got {num_workers}")
        self.num_workers = num_workers
        self._executor: Optional[ThreadPoolExecutor] = None
        if num_workers > 1:
            self._executor = ThreadPoolExecutor(
                max_workers=num_workers, thread_name_prefix="wmd-worker"
            )

    def map(self, fn: Callable[[T], R], items: Sequence[T]) -> List[R]:
        if self._executor is None or len(items) <= 1:
            return [fn(item) for item in items]
        return list(self._executor.map(fn, items))

    def close(self):
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def __enter__(self) -> "WorkerTeam":
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()
