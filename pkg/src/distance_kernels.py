"""
Euclidean distances between the query words and the whole vocabulary, and the
fused precompute of M, K = exp(-lambda * M), K_over_r and KT.
"""
import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

import numpy as np
from numba import njit
from scipy.spatial.distance import cdist

from src.errors import ConfigError, DimensionMismatch, EmptyDocument, LambdaTooLarge
from src.ingest import EmbeddingMatrix
from src.matrix_core import WorkerTeam, split_even

if TYPE_CHECKING:
    from src.sinkhorn import CompactQuery

logger = logging.getLogger(__name__)

DEFAULT_BLOCK_VOCAB = 64
UNDERFLOW_FLOOR = 1e-300

# Every inner-loop update is a subtract, a multiply and an add.
FLOPS_PER_UPDATE = 3


@dataclass(frozen=True, eq=False)
class PrecomputedMats:
    """Per-query matrices, computed once and reused by every iteration."""
    M: np.ndarray
    K: np.ndarray
    K_over_r: np.ndarray
    KT: np.ndarray
    lam: float
    update_count: int = 0

    @property
    def flop_count(self) -> int:
        return FLOPS_PER_UPDATE * self.update_count

    @property
    def v_r(self) -> int:
        return int(self.M.shape[0])


def euclidean_rows(emb: EmbeddingMatrix, sel: np.ndarray) -> np.ndarray:
    """
    Distances from the selected embedding rows to every vocabulary row.

    Args:
        emb: Word embeddings
        sel: Strictly increasing vocabulary indices of the query words

    Returns:
        v_r x V matrix, out[i, g] = ||emb[sel[i]] - emb[g]||
    """
    sel = np.asarray(sel, dtype=np.int64)
    return np.ascontiguousarray(cdist(emb.data[sel], emb.data, metric="euclidean"))


@njit(nogil=True, cache=True)
def _blocked_precompute_range(
    emb, sel, r, lam, j_begin, j_end, block_j, block_i,
    M, K, K_over_r, KT
):
    v_r = sel.shape[0]
    w = emb.shape[1]
    updates = 0
    for jb in range(j_begin, j_end, block_j):
        je = min(jb + block_j, j_end)
        for ib in range(0, v_r, block_i):
            ie = min(ib + block_i, v_r)
            for i in range(ib, ie):
                q = sel[i]
                r_i = r[i]
                for j in range(jb, je):
                    s = 0.0
                    for k in range(w):
                        d = emb[q, k] - emb[j, k]
                        s += d * d
                    updates += w
                    dist = math.sqrt(s)
                    kv = math.exp(-lam * dist)
                    M[i, j] = dist
                    K[i, j] = kv
                    K_over_r[i, j] = kv / r_i
                    KT[j, i] = kv
    return updates


def _check_inputs(emb: EmbeddingMatrix, query: "CompactQuery", lam: float):
    if not lam > 0 or not math.isfinite(lam):
        raise ConfigError(f"lambda must be a positive finite number, got {lam}")
    if query.sel.shape[0] == 0:
        raise EmptyDocument()
    if query.sel[-1] >= emb.vocab_size:
        raise DimensionMismatch(
            f"query index {int(query.sel[-1])} outside embedding vocabulary of {emb.vocab_size}"
        )


def _check_underflow(K: np.ndarray, lam: float):
    # K[i, sel[i]] == exp(0) == 1 for finite embeddings, so a full row can
    # only underflow when sel does not index the row's own word.
    row_max = K.max(axis=1)
    dead = np.flatnonzero(row_max < UNDERFLOW_FLOOR)
    if dead.size:
        raise LambdaTooLarge(lam, int(dead[0]))


def fused_distance_precompute(
    emb: EmbeddingMatrix,
    query: "CompactQuery",
    lam: float,
    block_vocab: int = DEFAULT_BLOCK_VOCAB,
    block_query: Optional[int] = None,
    team: Optional[WorkerTeam] = None
) -> PrecomputedMats:
    """
    Cache-blocked computation of M, K, K_over_r and KT in one pass.

    The vocabulary (j) and query (i) loops are blocked, the embedding (k)
    loop is not. Vocabulary blocks are split evenly across the worker team;
    each worker writes disjoint columns of M, K, K_over_r and rows of KT.

    Args:
        emb: Word embeddings (V x w)
        query: Compacted query (sel, r)
        lam: Regularization strength, > 0
        block_vocab: Vocabulary block size
        block_query: Query block size (None: all query words in one block)
        team: Worker team; runs inline when omitted

    Returns:
        PrecomputedMats with update_count = v_r * V * w
    """
    _check_inputs(emb, query, lam)
    sel = np.ascontiguousarray(query.sel, dtype=np.int64)
    r = np.ascontiguousarray(query.r, dtype=np.float64)
    v_r, V = sel.shape[0], emb.vocab_size
    block_j = max(1, int(block_vocab))
    block_i = max(1, int(block_query)) if block_query else max(1, v_r)

    M = np.empty((v_r, V), dtype=np.float64)
    K = np.empty((v_r, V), dtype=np.float64)
    K_over_r = np.empty((v_r, V), dtype=np.float64)
    KT = np.empty((V, v_r), dtype=np.float64)

    own_team = team is None
    team = team or WorkerTeam(1)
    try:
        ranges = split_even(V, team.num_workers, granule=block_j)
        counts = team.map(
            lambda rng: _blocked_precompute_range(
                emb.data, sel, r, float(lam), rng[0], rng[1], block_j, block_i,
                M, K, K_over_r, KT
            ),
            ranges,
        )
    finally:
        if own_team:
            team.close()

    _check_underflow(K, lam)
    updates = int(sum(counts))
    logger.debug(f"Blocked precompute: v_r={v_r}, V={V}, updates={updates}")
    return PrecomputedMats(M, K, K_over_r, KT, float(lam), updates)


def direct_distance_precompute(
    emb: EmbeddingMatrix,
    query: "CompactQuery",
    lam: float
) -> PrecomputedMats:
    """
    Dot-product style precompute: euclidean_rows followed by elementwise
    exp and row scaling. Same contract as fused_distance_precompute.
    """
    _check_inputs(emb, query, lam)
    r = np.asarray(query.r, dtype=np.float64)
    M = euclidean_rows(emb, query.sel)
    K = np.exp(-lam * M)
    _check_underflow(K, lam)
    K_over_r = K / r[:, None]
    KT = np.ascontiguousarray(K.T)
    updates = M.shape[0] * M.shape[1] * emb.dim
    return PrecomputedMats(M, K, K_over_r, KT, float(lam), updates)
