"""
Run configuration for the batch CLI and benchmark harness.
"""
import io
import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Set

from src.errors import ConfigError
from src.ingest import (
    EmbeddingMatrix,
    IngestStats,
    build_corpus,
    load_embeddings_file,
    read_documents,
    read_stopwords,
)
from src.matrix_core import DocMatrix
from src.sinkhorn import SolverConfig, SolverMode

logger = logging.getLogger(__name__)

THREADS_ENV_VAR = "WMD_THREADS"
DENSE_CHECK_MAX_CELLS = 10 ** 6
DENSE_CHECK_TOL = 1e-8
# V x N cells above which the bench skips timing the dense formulation
COMPARE_DENSE_MAX_CELLS = 5 * 10 ** 7


def default_workers() -> int:
    """
    Worker count from the WMD_THREADS environment variable, falling back
    to the number of available CPUs.
    """
    value = os.environ.get(THREADS_ENV_VAR, "")
    if value.strip():
        try:
            workers = int(value)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV_VAR} must be an integer, got {value!r}") from None
        if workers < 1:
            raise ConfigError(f"{THREADS_ENV_VAR} must be >= 1, got {workers}")
        return workers
    return os.cpu_count() or 1


@dataclass
class RunConfig:
    """Everything the batch run needs, as parsed from the command line."""
    embeddings_path: Path
    corpus_path: Path
    queries_path: Path
    output_path: Path
    stopwords_path: Optional[Path] = None
    lam: float = 10.0
    max_iter: int = 15
    tol: float = 1e-9
    mode: SolverMode = SolverMode.FIXED
    workers: int = field(default_factory=default_workers)
    check_dense: bool = False
    bench_thread_list: List[int] = field(default_factory=list)
    bench_output_path: Optional[Path] = None
    bench_compare: bool = False
    compare_output_path: Optional[Path] = None
    parallel_queries: bool = False
    log_json_path: Optional[Path] = None
    max_vocab: Optional[int] = None
    distance_method: str = "blocked"
    block_vocab: int = 64

    def __post_init__(self):
        for name in ("embeddings_path", "corpus_path", "queries_path", "output_path",
                     "stopwords_path", "bench_output_path", "compare_output_path",
                     "log_json_path"):
            value = getattr(self, name)
            if value is not None:
                setattr(self, name, Path(value))
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if any(t < 1 for t in self.bench_thread_list):
            raise ConfigError("bench thread counts must be >= 1")
        if self.max_vocab is not None and self.max_vocab < 1:
            raise ConfigError("max_vocab must be >= 1")
        if self.bench_thread_list and self.bench_output_path is None:
            out = self.output_path
            self.bench_output_path = out.with_name(f"{out.stem}_bench.csv")
        if self.bench_compare and self.compare_output_path is None:
            out = self.output_path
            self.compare_output_path = out.with_name(f"{out.stem}_compare.csv")

    def input_paths(self) -> List[Path]:
        paths = [self.embeddings_path, self.corpus_path, self.queries_path]
        if self.stopwords_path is not None:
            paths.append(self.stopwords_path)
        return paths

    def check_readable(self):
        """
        Raises:
            FileNotFoundError: an input path is missing or unreadable
        """
        for path in self.input_paths():
            if not path.is_file() or not os.access(path, os.R_OK):
                raise FileNotFoundError(f"Cannot read input file: {path}")

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            lam=self.lam,
            max_iter=self.max_iter,
            tol=self.tol,
            mode=self.mode,
            distance_method=self.distance_method,
            block_vocab=self.block_vocab,
        )

    def to_dict(self) -> Dict[str, Any]:
        settings = asdict(self)
        for key, value in settings.items():
            if isinstance(value, Path):
                settings[key] = str(value)
            elif isinstance(value, SolverMode):
                settings[key] = value.value
        return settings


@dataclass
class LoadedInputs:
    """Parsed inputs shared (read-only) by every query."""
    emb: EmbeddingMatrix
    corpus: DocMatrix
    queries: List[List[str]]
    stopwords: Set[str]
    stats: IngestStats


def _read_text(path: Path):
    return io.open(path, "r", encoding="utf-8")


def load_inputs(cfg: RunConfig) -> LoadedInputs:
    """
    Load embeddings, stopwords, corpus and queries.

    Raises:
        InputError: malformed files or a corpus document without in-vocabulary words
        OSError: unreadable files
    """
    emb = load_embeddings_file(cfg.embeddings_path, limit=cfg.max_vocab)

    stopwords: Set[str] = set()
    if cfg.stopwords_path is not None:
        with _read_text(cfg.stopwords_path) as fin:
            stopwords = read_stopwords(fin)

    with _read_text(cfg.corpus_path) as fin:
        docs = read_documents(fin, stopwords)
    with _read_text(cfg.queries_path) as fin:
        queries = read_documents(fin, stopwords)

    stats = IngestStats()
    corpus = build_corpus(docs, emb, stats)
    logger.info(f"Loaded {len(queries)} queries against {corpus!r}")
    return LoadedInputs(emb, corpus, queries, stopwords, stats)
