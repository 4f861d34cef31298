"""
Word embeddings loading, tokenization and bag-of-words construction.
"""
import io
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Set, TextIO, Union

import numpy as np

from src.errors import DimensionMismatch, DuplicateToken, EmptyDocument, FormatError, InputError
from src.matrix_core import DocMatrix, NORMALIZATION_TOL, as_dense, doc_matrix_from_entries

logger = logging.getLogger(__name__)

LABEL_PREFIX = "__label__"

_SPLIT_RE = re.compile(r"[\W_]+")


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    """Dense V x w word vectors plus the token -> row map."""
    data: np.ndarray
    token_to_row: Dict[str, int]

    def __post_init__(self):
        object.__setattr__(self, "data", as_dense(self.data, "embeddings"))

    @property
    def vocab_size(self) -> int:
        return int(self.data.shape[0])

    @property
    def dim(self) -> int:
        return int(self.data.shape[1])

    def row(self, token: str) -> np.ndarray:
        return self.data[self.token_to_row[token]]

    def __repr__(self):
        return f"EmbeddingMatrix(vocab_size={self.vocab_size}, dim={self.dim})"


@dataclass(frozen=True, eq=False)
class QueryHistogram:
    """Sparse normalized word-frequency vector r of one query document."""
    vocab_size: int
    idx: np.ndarray
    val: np.ndarray

    def __post_init__(self):
        idx = np.array(self.idx, dtype=np.int64)
        val = np.array(self.val, dtype=np.float64)
        if idx.shape != val.shape or idx.ndim != 1:
            raise DimensionMismatch("query idx and val must be 1-D arrays of equal length")
        if idx.size == 0:
            raise EmptyDocument()
        if np.any(np.diff(idx) <= 0) or idx[0] < 0 or idx[-1] >= self.vocab_size:
            raise InputError("query indices must be strictly increasing and < vocab_size")
        if np.any(val <= 0) or abs(val.sum() - 1.0) > NORMALIZATION_TOL:
            raise InputError("query values must be > 0 and sum to 1")
        idx.flags.writeable = False
        val.flags.writeable = False
        object.__setattr__(self, "idx", idx)
        object.__setattr__(self, "val", val)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.vocab_size, dtype=np.float64)
        dense[self.idx] = self.val
        return dense


@dataclass
class IngestStats:
    """Token accounting collected while building histograms."""
    documents: int = 0
    tokens: int = 0
    oov_tokens: int = 0
    oov_types: Set[str] = field(default_factory=set)


def load_embeddings(source: TextIO, limit: Optional[int] = None) -> EmbeddingMatrix:
    """
    Parse word vectors in fastText text (.vec) format.

    Args:
        source: Text stream starting with a "<count> <dim>" header line
        limit: Optional cap on the number of vectors read

    Returns:
        EmbeddingMatrix with rows in file order

    Raises:
        FormatError: malformed header, wrong field count or non-finite value
        DuplicateToken: a token appears twice
    """
    header = source.readline()
    try:
        count, dim = (int(part) for part in header.split())
    except ValueError:
        raise FormatError(f"malformed header {header.strip()!r}", 1) from None
    if count < 0 or dim < 1:
        raise FormatError(f"invalid header counts {count} {dim}", 1)
    if limit is not None:
        count = min(count, limit)

    data = np.empty((count, dim), dtype=np.float64)
    token_to_row: Dict[str, int] = {}

    for row in range(count):
        line_no = row + 2
        line = source.readline()
        if not line:
            raise FormatError(f"expected {count} vectors, file ended after {row}", line_no)
        parts = line.rstrip("\r\n").rstrip(" ").split(" ")
        if len(parts) != dim + 1:
            raise FormatError(f"expected {dim + 1} fields, got {len(parts)}", line_no)
        token = parts[0]
        if token in token_to_row:
            raise DuplicateToken(token)
        try:
            vector = np.array(parts[1:], dtype=np.float64)
        except ValueError:
            raise FormatError("unparseable float", line_no) from None
        if not np.all(np.isfinite(vector)):
            raise FormatError("non-finite value", line_no)
        data[row] = vector
        token_to_row[token] = row

    data.flags.writeable = False
    logger.info(f"Loaded {count} embeddings of dimension {dim}")
    return EmbeddingMatrix(data, token_to_row)


def load_embeddings_file(path: Union[str, Path], limit: Optional[int] = None) -> EmbeddingMatrix:
    """Open a .vec file (UTF-8, LF or CRLF) and parse it."""
    with io.open(path, "r", encoding="utf-8", newline="") as fin:
        return load_embeddings(fin, limit=limit)


def tokenize(text: str, stopwords: Optional[Set[str]] = None) -> List[str]:
    """
    Lowercase, split on non-alphanumeric characters and drop stopwords.

    Args:
        text: Raw document text
        stopwords: Tokens to drop (already lowercase)

    Returns:
        Tokens in original order and multiplicity
    """
    stopwords = stopwords or set()
    return [tok for tok in _SPLIT_RE.split(text.lower()) if tok and tok not in stopwords]


def strip_labels(line: str) -> str:
    """Remove leading ``__label__<k>`` tokens (fastText classification format)."""
    parts = line.split()
    start = 0
    while start < len(parts) and parts[start].startswith(LABEL_PREFIX):
        start += 1
    return " ".join(parts[start:])


def read_documents(source: TextIO, stopwords: Optional[Set[str]] = None) -> List[List[str]]:
    """
    Read one document per line, stripping label prefixes and tokenizing.

    Lines end at LF only (a CR before it is dropped by tokenization), so
    other Unicode line breaks stay inside their document. Blank lines are kept
    as empty documents so line numbers stay aligned with document ids.
    """
    lines = source.read().split("\n")
    if lines[-1] == "":
        lines.pop()
    return [tokenize(strip_labels(line), stopwords) for line in lines]


def read_stopwords(source: TextIO) -> Set[str]:
    """One stopword per line; blank lines ignored."""
    return {line.strip().lower() for line in source if line.strip()}


def _count_in_vocab(
    tokens: Sequence[str],
    emb: EmbeddingMatrix,
    stats: Optional[IngestStats]
) -> Counter:
    counts: Counter = Counter()
    for tok in tokens:
        row = emb.token_to_row.get(tok)
        if row is None:
            if stats is not None:
                stats.oov_tokens += 1
                stats.oov_types.add(tok)
            continue
        counts[row] += 1
    if stats is not None:
        stats.documents += 1
        stats.tokens += len(tokens)
    return counts


def build_corpus(
    docs: Iterable[Sequence[str]],
    emb: EmbeddingMatrix,
    stats: Optional[IngestStats] = None
) -> DocMatrix:
    """
    Build the normalized document-major corpus matrix c.

    Out-of-vocabulary tokens are dropped silently (counted in ``stats``).

    Raises:
        EmptyDocument: a document has no in-vocabulary token
    """
    entries = []
    num_docs = 0
    for doc_id, tokens in enumerate(docs):
        counts = _count_in_vocab(tokens, emb, stats)
        entries.extend((doc_id, word, n) for word, n in counts.items())
        num_docs += 1

    corpus = doc_matrix_from_entries(emb.vocab_size, num_docs, entries)
    if stats is not None:
        logger.info(
            f"Corpus: {num_docs} documents, nnz={corpus.nnz}, "
            f"{stats.oov_tokens} OOV tokens ({len(stats.oov_types)} distinct)"
        )
    return corpus


def build_query(
    doc: Sequence[str],
    emb: EmbeddingMatrix,
    stats: Optional[IngestStats] = None
) -> QueryHistogram:
    """
    Build the normalized sparse histogram r of a single query document.

    Raises:
        EmptyDocument: no in-vocabulary token
    """
    counts = _count_in_vocab(doc, emb, stats)
    if not counts:
        raise EmptyDocument()
    idx = np.array(sorted(counts), dtype=np.int64)
    totals = np.array([counts[i] for i in idx], dtype=np.float64)
    return QueryHistogram(emb.vocab_size, idx, totals / totals.sum())
