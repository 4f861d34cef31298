"""
One-to-many Sinkhorn-Knopp Word Mover's Distance.

The transport plan for document j has the form diag(u[:, j]) K diag(v[:, j]);
the loop below only tracks x = 1 / u and recomputes the sparse v on the fly.
"""
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Optional, Tuple, Union

import numpy as np

from src.distance_kernels import (
    DEFAULT_BLOCK_VOCAB,
    PrecomputedMats,
    direct_distance_precompute,
    euclidean_rows,
    fused_distance_precompute,
)
from src.errors import ConfigError, DimensionMismatch, EmptyDocument, InputError
from src.ingest import EmbeddingMatrix, QueryHistogram
from src.matrix_core import (
    NORMALIZATION_TOL,
    DocMatrix,
    PartitionPlan,
    WorkerTeam,
    partition_nonzeros,
)
from src.sparse_kernels import (
    KernelStats,
    fused_final,
    max_abs_change,
    reciprocal,
    sddmm_spmm,
)

logger = logging.getLogger(__name__)


class SolverMode(str, Enum):
    FIXED = "fixed-iterations"
    UNTIL_CONVERGED = "until-converged"


DISTANCE_METHODS = ("blocked", "direct")


@dataclass(frozen=True)
class SolverConfig:
    """
    Solver settings.

    Args:
        lam: Entropic regularization strength (> 0); K = exp(-lam * M)
        max_iter: Iteration count (fixed mode) or cap (until-converged mode)
        tol: Convergence threshold on max |x_new - x_old|
        mode: SolverMode
        distance_method: "blocked" (fused, cache-blocked) or "direct" (cdist then exp)
        block_vocab: Vocabulary block size of the blocked precompute
        block_query: Query block size of the blocked precompute (None: unblocked)
    """
    lam: float = 10.0
    max_iter: int = 15
    tol: float = 1e-9
    mode: SolverMode = SolverMode.FIXED
    distance_method: str = "blocked"
    block_vocab: int = DEFAULT_BLOCK_VOCAB
    block_query: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "mode", SolverMode(self.mode))
        if not (self.lam > 0 and np.isfinite(self.lam)):
            raise ConfigError(f"lambda must be positive and finite, got {self.lam}")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter must be >= 1, got {self.max_iter}")
        if not self.tol >= 0:
            raise ConfigError(f"tol must be >= 0, got {self.tol}")
        if self.distance_method not in DISTANCE_METHODS:
            raise ConfigError(f"distance_method must be one of {DISTANCE_METHODS}")
        if self.block_vocab < 1 or (self.block_query is not None and self.block_query < 1):
            raise ConfigError("block sizes must be >= 1")


@dataclass(frozen=True, eq=False)
class CompactQuery:
    """Nonzero part of r: vocabulary indices sel and their weights."""
    sel: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        sel = np.array(self.sel, dtype=np.int64)
        r = np.array(self.r, dtype=np.float64)
        if sel.ndim != 1 or sel.shape != r.shape:
            raise DimensionMismatch("sel and r must be 1-D arrays of equal length")
        if sel.size == 0:
            raise EmptyDocument()
        if np.any(np.diff(sel) <= 0) or sel[0] < 0:
            raise InputError("sel must be strictly increasing and nonnegative")
        if np.any(r <= 0):
            raise InputError("query weights must be > 0")
        object.__setattr__(self, "sel", sel)
        object.__setattr__(self, "r", r)

    @property
    def v_r(self) -> int:
        return int(self.sel.shape[0])


@dataclass
class IterationState:
    x: np.ndarray
    u: np.ndarray
    iterations_run: int = 0


@dataclass
class WmdResult:
    """Per-document distances plus the kernel counters of the run."""
    distances: np.ndarray
    stats: KernelStats = field(default_factory=KernelStats)


def select_nonzero(r: Union[QueryHistogram, np.ndarray]) -> CompactQuery:
    """
    Keep only the words present in the query.

    Args:
        r: QueryHistogram, or a dense length-V frequency vector

    Returns:
        CompactQuery with sel = indices of the nonzeros and r = their values

    Raises:
        EmptyDocument: r has no nonzero entry
    """
    if isinstance(r, QueryHistogram):
        return CompactQuery(r.idx, r.val)

    dense = np.asarray(r, dtype=np.float64).ravel()
    if np.any(dense < 0) or not np.all(np.isfinite(dense)):
        raise InputError("query frequencies must be finite and >= 0")
    sel = np.flatnonzero(dense > 0)
    if sel.size == 0:
        raise EmptyDocument()
    values = dense[sel]
    if abs(values.sum() - 1.0) > NORMALIZATION_TOL:
        raise InputError(f"query frequencies sum to {values.sum()!r}, expected 1")
    return CompactQuery(sel, values)


def init_state(v_r: int, num_docs: int) -> IterationState:
    """x = ones(v_r, N) / v_r, the uniform starting plan."""
    if v_r < 1 or num_docs < 1:
        raise DimensionMismatch(f"cannot initialize a {v_r} x {num_docs} state")
    x = np.full((v_r, num_docs), 1.0 / v_r, dtype=np.float64)
    return IterationState(x=x, u=1.0 / x, iterations_run=0)


def precompute(
    emb: EmbeddingMatrix,
    query: CompactQuery,
    cfg: SolverConfig,
    team: Optional[WorkerTeam] = None
) -> PrecomputedMats:
    """Dispatch to the blocked or direct distance precompute."""
    if cfg.distance_method == "direct":
        return direct_distance_precompute(emb, query, cfg.lam)
    return fused_distance_precompute(
        emb, query, cfg.lam, cfg.block_vocab, cfg.block_query, team=team
    )


def sinkhorn_iterate(
    state: IterationState,
    mats: PrecomputedMats,
    c: DocMatrix,
    cfg: SolverConfig,
    plan: PartitionPlan,
    stats: Optional[KernelStats] = None,
    team: Optional[WorkerTeam] = None
) -> IterationState:
    """
    Run the scaling loop: u = 1 / x; x = K_over_r @ (c .* 1 / (KT @ u)).

    Fixed mode runs exactly cfg.max_iter updates. Until-converged mode stops
    as soon as max |x_new - x_old| <= cfg.tol, capped by cfg.max_iter.

    Returns:
        New IterationState; iterations_run counts the updates of this call
        on top of those already in ``state``
    """
    if state.x.shape != (mats.v_r, c.num_docs):
        raise DimensionMismatch(
            f"state is {state.x.shape}, expected {(mats.v_r, c.num_docs)}"
        )
    x, u = state.x, state.u
    done = 0
    converged = cfg.mode is not SolverMode.UNTIL_CONVERGED
    for _ in range(cfg.max_iter):
        u = reciprocal(x, plan, team)
        x_new = sddmm_spmm(c, mats.KT, u, mats.K_over_r, plan, stats, team)
        done += 1
        if cfg.mode is SolverMode.UNTIL_CONVERGED:
            delta = max_abs_change(x_new, x, plan, team)
            logger.debug(f"iteration {state.iterations_run + done}: max |dx| = {delta:.3e}")
            x = x_new
            if delta <= cfg.tol:
                converged = True
                break
        else:
            x = x_new

    if not converged:
        logger.info(f"Not converged to tol={cfg.tol} after {done} iterations")
    if stats is not None:
        stats.iterations += done
    return IterationState(x=x, u=u, iterations_run=state.iterations_run + done)


def finalize_wmd(
    state: IterationState,
    mats: PrecomputedMats,
    c: DocMatrix,
    plan: PartitionPlan,
    stats: Optional[KernelStats] = None,
    team: Optional[WorkerTeam] = None
) -> WmdResult:
    """u = 1 / x, then distances = sum(u .* ((K .* M) @ v)) per document."""
    u = reciprocal(state.x, plan, team)
    KM = mats.K * mats.M
    return fused_final(c, mats.KT, u, KM, plan, stats, team)


def _check_vocab(r: Union[QueryHistogram, np.ndarray], c: DocMatrix, emb: EmbeddingMatrix):
    r_vocab = r.vocab_size if isinstance(r, QueryHistogram) else np.asarray(r).size
    if not r_vocab == c.vocab_size == emb.vocab_size:
        raise DimensionMismatch(
            f"vocabulary sizes disagree: r={r_vocab}, c={c.vocab_size}, emb={emb.vocab_size}"
        )


def sinkhorn_wmd(
    r: Union[QueryHistogram, np.ndarray],
    c: DocMatrix,
    emb: EmbeddingMatrix,
    cfg: SolverConfig,
    workers: int = 1,
    team: Optional[WorkerTeam] = None
) -> WmdResult:
    """
    WMD of one query against every document of the corpus.

    Pipeline: select_nonzero -> precompute -> partition_nonzeros ->
    init_state -> sinkhorn_iterate -> finalize_wmd.

    Args:
        r: Query histogram
        c: Corpus matrix
        emb: Word embeddings
        cfg: Solver configuration
        workers: Number of workers (ignored when ``team`` is given)
        team: Existing worker team to reuse

    Returns:
        WmdResult with one distance per document
    """
    _check_vocab(r, c, emb)
    start = time.perf_counter()
    own_team = team is None
    team = team or WorkerTeam(workers)
    try:
        query = select_nonzero(r)
        mats = precompute(emb, query, cfg, team)
        plan = partition_nonzeros(c, team.num_workers)
        stats = KernelStats(precompute_flop_count=mats.flop_count)
        state = init_state(query.v_r, c.num_docs)
        state = sinkhorn_iterate(state, mats, c, cfg, plan, stats, team)
        result = finalize_wmd(state, mats, c, plan, stats, team)
    finally:
        if own_team:
            team.close()

    logger.info(
        f"WMD: v_r={query.v_r}, N={c.num_docs}, nnz={c.nnz}, "
        f"iterations={stats.iterations}, workers={team.num_workers}, "
        f"{time.perf_counter() - start:.4f}s"
    )
    return result


def one_to_one_wmd(
    a: QueryHistogram,
    b: QueryHistogram,
    emb: EmbeddingMatrix,
    cfg: SolverConfig
) -> float:
    """Distance from document a (as query) to document b (as the only target)."""
    target = DocMatrix(b.vocab_size, 1, [0, b.idx.size], b.idx, b.val)
    return float(sinkhorn_wmd(a, target, emb, cfg, workers=1).distances[0])


def _dense_setup(
    r: Union[QueryHistogram, np.ndarray],
    c: DocMatrix,
    emb: EmbeddingMatrix,
    cfg: SolverConfig
) -> Tuple[CompactQuery, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    _check_vocab(r, c, emb)
    query = select_nonzero(r)
    M = euclidean_rows(emb, query.sel)
    K = np.exp(-cfg.lam * M)
    K_over_r = (1.0 / query.r)[:, None] * K
    c_dense = c.to_scipy().toarray()
    return query, M, K, K_over_r, c_dense


def _dense_scaling(c_dense: np.ndarray, KT: np.ndarray, u: np.ndarray) -> np.ndarray:
    """v = c .* 1 / (KT @ u), evaluated on the nonzeros of c only."""
    KTu = KT @ u
    return np.divide(c_dense, KTu, out=np.zeros_like(c_dense), where=c_dense > 0)


def _dense_iterations(
    query: CompactQuery,
    K: np.ndarray,
    K_over_r: np.ndarray,
    c_dense: np.ndarray,
    cfg: SolverConfig
) -> Iterator[np.ndarray]:
    KT = K.T
    x = np.ones((query.v_r, c_dense.shape[1])) / query.v_r
    for _ in range(cfg.max_iter):
        u = 1.0 / x
        v = _dense_scaling(c_dense, KT, u)
        x_new = K_over_r @ v
        yield x_new
        delta = np.max(np.abs(x_new - x))
        x = x_new
        if cfg.mode is SolverMode.UNTIL_CONVERGED and delta <= cfg.tol:
            return


def dense_sinkhorn_trace(
    r: Union[QueryHistogram, np.ndarray],
    c: DocMatrix,
    emb: EmbeddingMatrix,
    cfg: SolverConfig
) -> Iterator[np.ndarray]:
    """
    Yield x after every iteration of the dense formulation.

    Stops after cfg.max_iter iterations, or earlier on convergence in
    until-converged mode.
    """
    query, _, K, K_over_r, c_dense = _dense_setup(r, c, emb, cfg)
    yield from _dense_iterations(query, K, K_over_r, c_dense, cfg)


def dense_reference_wmd(
    r: Union[QueryHistogram, np.ndarray],
    c: DocMatrix,
    emb: EmbeddingMatrix,
    cfg: SolverConfig
) -> WmdResult:
    """
    Literal dense evaluation of the algorithm; the correctness oracle.

    Materializes V x N intermediates, so it is meant for small instances.
    """
    query, M, K, K_over_r, c_dense = _dense_setup(r, c, emb, cfg)
    x = np.ones((query.v_r, c.num_docs)) / query.v_r
    iterations = 0
    for x_t in _dense_iterations(query, K, K_over_r, c_dense, cfg):
        x = x_t
        iterations += 1

    u = 1.0 / x
    v = _dense_scaling(c_dense, K.T, u)
    distances = (u * ((K * M) @ v)).sum(axis=0)
    return WmdResult(distances, KernelStats(iterations=iterations))
