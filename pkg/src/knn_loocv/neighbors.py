"""Self-excluding nearest-neighbor orderings with reproducible tie-breaking.

Every row is sorted by (squared Euclidean distance, tie key). The tie key of
candidate ``j`` for row ``i`` is a 64-bit hash of ``(seed, i, j)``, so within
any block of equal distances the order is a uniformly random permutation that
depends only on the seed and the row, never on backend, chunking or threads.
"""

from __future__ import annotations

import json
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy.spatial import cKDTree

from .dataset import Dataset
from .errors import ValidationError

TREE_THRESHOLD = 2048
FULL_RANGE_LIMIT = 4096
# elements of the (rows x candidates) distance block handled per chunk
_CHUNK_ELEMENTS = 1 << 22

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_QUERY_SALT = np.uint64(0xD1B54A32D192ED03)


def _splitmix64(z):
    z = z + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("KNN_LOOCV_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class TieRule:
    """How equal distances are ordered.

    ``seeded-uniform`` permutes each tied block uniformly at random as a pure
    function of the seed and the row; ``index-order`` puts lower indices first.
    """

    seed: int = 0
    mode: str = "seeded-uniform"

    def __post_init__(self):
        if self.mode not in ("seeded-uniform", "index-order"):
            raise ValidationError(f"unknown tie mode {self.mode!r}")
        if int(self.seed) != self.seed:
            raise ValidationError(f"tie seed must be an integer, got {self.seed!r}")

    def keys(self, rows, cols, query=False):
        """Tie keys for candidate columns ``cols`` (c, m) of rows ``rows`` (c,)."""
        cols = np.asarray(cols)
        if self.mode == "index-order":
            return cols.astype(np.uint64)
        rows = np.asarray(rows).astype(np.uint64)
        with np.errstate(over="ignore"):
            h = _splitmix64(np.uint64(int(self.seed) & 0xFFFFFFFFFFFFFFFF))
            if query:
                h = _splitmix64(h ^ _QUERY_SALT)
            h = _splitmix64(h ^ rows)
            return _splitmix64(h[:, None] ^ cols.astype(np.uint64))


@dataclass(frozen=True, eq=False)
class NeighborTable:
    """Per-point neighbor orderings, nearest first, self excluded.

    ``order[i, :k]`` is N_k(i) (0-based indices) and ``distances[i]`` the
    matching Euclidean distances.
    """

    order: np.ndarray
    distances: np.ndarray
    k_max: int
    tie: TieRule

    @property
    def n(self) -> int:
        return self.order.shape[0]

    def neighbors(self, i: int, k: int) -> np.ndarray:
        _check_k(k, self.k_max)
        return self.order[i, :k]

    def row_json(self, i: int) -> str:
        """Debug dump of one row."""
        return json.dumps({
            "i": int(i),
            "k_max": int(self.k_max),
            "tie_seed": int(self.tie.seed),
            "tie_mode": self.tie.mode,
            "order": self.order[i].tolist(),
            "distances": self.distances[i].tolist(),
        })


def _check_k(k, k_max, name="k"):
    if int(k) != k or not 1 <= k <= k_max:
        raise ValidationError(f"{name} must be an integer in [1, {k_max}], got {k}")


def _sqdist_block(a, b):
    """Squared distances between rows of ``a`` (c, d) and ``b`` (m, d)."""
    acc = np.zeros((a.shape[0], b.shape[0]))
    for j in range(a.shape[1]):
        diff = a[:, j, None] - b[None, :, j]
        acc += diff * diff
    return acc


def _sqdist_gathered(a, x, idx):
    """Squared distances between ``a[r]`` and ``x[idx[r, c]]``; same arithmetic as the block form."""
    acc = np.zeros(idx.shape)
    for j in range(a.shape[1]):
        diff = a[:, j, None] - x[idx, j]
        acc += diff * diff
    return acc


def _select(sq, cand, rows, k, tie, query=False):
    """Take the ``k`` best candidates per row under (distance, tie key) order.

    ``sq`` and ``cand`` are (c, m); excluded candidates carry ``inf``.
    """
    c, m = sq.shape
    if k < m:
        bound = np.partition(sq, k - 1, axis=1)[:, k - 1]
        width = int((sq <= bound[:, None]).sum(axis=1).max())
        if width < m:
            part = np.argpartition(sq, width - 1, axis=1)[:, :width]
            sq = np.take_along_axis(sq, part, axis=1)
            cand = np.take_along_axis(cand, part, axis=1)
    keys = tie.keys(rows, cand, query=query)
    if tie.mode == "index-order":
        perm = np.lexsort((keys, sq), axis=1)
    else:
        perm = np.lexsort((cand, keys, sq), axis=1)
    perm = perm[:, :k]
    return np.take_along_axis(cand, perm, axis=1), np.take_along_axis(sq, perm, axis=1)


def _rows_brute(x, rows, k, tie):
    sq = _sqdist_block(x[rows], x)
    sq[np.arange(len(rows)), rows] = np.inf
    cand = np.broadcast_to(np.arange(x.shape[0]), sq.shape)
    return _select(sq, cand, rows, k, tie)


def _rows_tree(x, tree, rows, k, tie):
    n = x.shape[0]
    fetch = min(n, k + 2)
    _, idx = tree.query(x[rows], k=fetch)
    idx = np.asarray(idx).reshape(len(rows), fetch)
    sq = _sqdist_gathered(x[rows], x, idx)
    sq[idx == rows[:, None]] = np.inf
    order, sq_sel = _select(sq, idx, rows, k, tie)
    if fetch == n:
        return order, sq_sel
    # unfetched points are at least as far as the farthest fetched one; a row
    # whose boundary distance reaches that far may have ties left behind
    finite = np.where(np.isinf(sq), -np.inf, sq)
    farthest = finite.max(axis=1)
    boundary = sq_sel[:, -1]
    unsafe = ~(farthest > boundary * (1.0 + 1e-9))
    if np.any(unsafe):
        redo = rows[unsafe]
        order[unsafe], sq_sel[unsafe] = _rows_brute(x, redo, k, tie)
    return order, sq_sel


def resolve_k_max(n: int, k_max: int | None) -> int:
    if k_max is None:
        if n <= FULL_RANGE_LIMIT:
            return n - 1
        k_max = min(n - 1, math.ceil(n ** (2.0 / 3.0)))
        warnings.warn(
            f"n={n} exceeds {FULL_RANGE_LIMIT}; full-range k would need O(n^2) memory, "
            f"using k_max={k_max}. Pass k_max explicitly to silence this.",
            stacklevel=3)
        return k_max
    _check_k(k_max, n - 1, "k_max")
    return int(k_max)


def _choose_backend(n, k_max, backend):
    if backend == "auto":
        # a tree saves nothing when most points are neighbors anyway
        return "tree" if n >= TREE_THRESHOLD and 2 * k_max < n else "brute"
    if backend not in ("brute", "tree"):
        raise ValidationError(f"unknown backend {backend!r}")
    return backend


def _chunk_rows(n, width):
    return max(1, min(n, _CHUNK_ELEMENTS // max(width, 1)))


def iter_chunks(data: Dataset, k_max: int, tie: TieRule = TieRule(), backend="auto",
                threads: int | None = None, chunk_rows: int | None = None
                ) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Yield ``(rows, order, squared_distances)`` blocks in ascending row order.

    Chunk boundaries depend only on ``n``, ``k_max`` and the backend, so the
    output is identical for any thread count. At most ``2 * threads`` blocks
    are in flight, keeping memory proportional to the chunk size.
    """
    x = data.points
    n = x.shape[0]
    _check_k(k_max, n - 1, "k_max")
    backend = _choose_backend(n, k_max, backend)
    threads = default_threads() if threads is None else int(threads)
    if threads < 1:
        raise ValidationError(f"threads must be >= 1, got {threads}")
    if backend == "tree":
        tree = cKDTree(x)
        step = chunk_rows or _chunk_rows(n, 16 * (k_max + 2))
        work = lambda rows: _rows_tree(x, tree, rows, k_max, tie)
    else:
        step = chunk_rows or _chunk_rows(n, n)
        work = lambda rows: _rows_brute(x, rows, k_max, tie)
    blocks = [np.arange(s, min(s + step, n)) for s in range(0, n, step)]

    if threads == 1:
        for rows in blocks:
            order, sq = work(rows)
            yield rows, order, sq
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        pending = []
        nxt = 0
        while nxt < len(blocks) and len(pending) < 2 * threads:
            pending.append((blocks[nxt], pool.submit(work, blocks[nxt])))
            nxt += 1
        while pending:
            rows, fut = pending.pop(0)
            order, sq = fut.result()
            if nxt < len(blocks):
                pending.append((blocks[nxt], pool.submit(work, blocks[nxt])))
                nxt += 1
            yield rows, order, sq


def build_table(data: Dataset, k_max: int | None = None, tie: TieRule = TieRule(),
                backend: str = "auto", threads: int | None = None) -> NeighborTable:
    """Materialize the first ``k_max`` neighbors of every point.

    ``backend`` is ``"brute"``, ``"tree"`` or ``"auto"`` (tree from
    ``n >= 2048``); both return identical tables.
    """
    n = data.n
    k_max = resolve_k_max(n, k_max)
    itype = np.int32 if n < 2**31 else np.int64
    order = np.empty((n, k_max), dtype=itype)
    dist = np.empty((n, k_max))
    for rows, o, sq in iter_chunks(data, k_max, tie, backend, threads):
        order[rows] = o
        dist[rows] = np.sqrt(sq)
    order.setflags(write=False)
    dist.setflags(write=False)
    return NeighborTable(order, dist, k_max, tie)


def query_table(data: Dataset, queries, k: int, tie: TieRule = TieRule()):
    """Nearest training points for each query row; no self-exclusion.

    Returns ``(order, distances)`` of shape (m, k).
    """
    q = np.asarray(queries, dtype=np.float64)
    if q.ndim == 1:
        q = q[None, :] if data.d > 1 or q.shape[0] == 1 else q[:, None]
    if q.ndim != 2 or q.shape[1] != data.d:
        raise ValidationError(f"queries must have d={data.d} columns, got shape {np.shape(queries)}")
    if not np.all(np.isfinite(q)):
        raise ValidationError("queries contain non-finite values")
    _check_k(k, data.n)
    n = data.n
    step = _chunk_rows(q.shape[0], n)
    orders, dists = [], []
    for s in range(0, q.shape[0], step):
        rows = np.arange(s, min(s + step, q.shape[0]))
        sq = _sqdist_block(q[rows], data.points)
        cand = np.broadcast_to(np.arange(n), sq.shape)
        o, d2 = _select(sq, cand, rows, k, tie, query=True)
        orders.append(o)
        dists.append(np.sqrt(d2))
    if not orders:
        return np.empty((0, k), dtype=np.intp), np.empty((0, k))
    return np.concatenate(orders), np.concatenate(dists)


def query_neighbors(data: Dataset, x, k: int, tie: TieRule = TieRule()) -> list[int]:
    """Indices of the ``k`` training points nearest to a single query ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.shape != (data.d,):
        raise ValidationError(f"query has dimension {x.shape[0] if x.ndim == 1 else x.shape}, data has d={data.d}")
    order, _ = query_table(data, x[None, :], k, tie)
    return [int(j) for j in order[0]]


def in_degree(table: NeighborTable, k: int) -> np.ndarray:
    """How many points list each point among their ``k`` nearest neighbors."""
    _check_k(k, table.k_max)
    return np.bincount(table.order[:, :k].ravel(), minlength=table.n)
