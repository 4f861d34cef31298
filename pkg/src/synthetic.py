"""
Seeded random instances for tests, benchmarks and the fixture script.
"""
from typing import List, NamedTuple, Optional

import numpy as np

from src.ingest import EmbeddingMatrix, QueryHistogram
from src.matrix_core import DocMatrix, doc_matrix_from_entries


class Instance(NamedTuple):
    emb: EmbeddingMatrix
    corpus: DocMatrix
    query: QueryHistogram


def token_name(row: int) -> str:
    return f"w{row}"


def random_embeddings(rng: np.random.Generator, vocab_size: int, dim: int,
                      scale: float = 1.0) -> EmbeddingMatrix:
    """Uniform [0, scale) vectors named w0, w1, ..."""
    data = rng.random((vocab_size, dim)) * scale
    data.flags.writeable = False
    return EmbeddingMatrix(data, {token_name(g): g for g in range(vocab_size)})


def random_doc_matrix(rng: np.random.Generator, vocab_size: int, num_docs: int,
                      density: float, max_count: int = 5) -> DocMatrix:
    """
    Random corpus with roughly density * V distinct words per document.

    Every document gets at least one word.
    """
    expected = max(1.0, density * vocab_size)
    entries = []
    for doc in range(num_docs):
        length = int(np.clip(rng.poisson(expected), 1, vocab_size))
        words = rng.choice(vocab_size, size=length, replace=False)
        counts = rng.integers(1, max_count + 1, size=length)
        entries.extend(zip([doc] * length, words.tolist(), counts.tolist()))
    return doc_matrix_from_entries(vocab_size, num_docs, entries)


def random_query(rng: np.random.Generator, vocab_size: int, v_r: int,
                 max_count: int = 5) -> QueryHistogram:
    v_r = min(v_r, vocab_size)
    idx = np.sort(rng.choice(vocab_size, size=v_r, replace=False))
    counts = rng.integers(1, max_count + 1, size=v_r).astype(np.float64)
    return QueryHistogram(vocab_size, idx, counts / counts.sum())


def random_instance(rng: np.random.Generator, vocab_size: int, dim: int, num_docs: int,
                    density: float, v_r: Optional[int] = None) -> Instance:
    if v_r is None:
        v_r = int(rng.integers(1, max(2, vocab_size // 4) + 1))
    return Instance(
        random_embeddings(rng, vocab_size, dim),
        random_doc_matrix(rng, vocab_size, num_docs, density),
        random_query(rng, vocab_size, v_r),
    )


def random_doc_ptr(rng: np.random.Generator, num_docs: int, max_doc_nnz: int) -> np.ndarray:
    """Offsets of num_docs documents with 1..max_doc_nnz entries each."""
    lengths = rng.integers(1, max_doc_nnz + 1, size=num_docs)
    doc_ptr = np.zeros(num_docs + 1, dtype=np.int64)
    np.cumsum(lengths, out=doc_ptr[1:])
    return doc_ptr


def document_tokens(rng: np.random.Generator, vocab_size: int, length: int) -> List[str]:
    """A token sequence (with repeats) over the synthetic vocabulary."""
    return [token_name(g) for g in rng.integers(0, vocab_size, size=length)]
