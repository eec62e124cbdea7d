"""Linear-algebra kernels with an explicit rank policy.

Two routes reduce a tall row stream to a small square object before the
spectral step:

* ``qr``: streamed Householder QR (TSQR).  The triangular factor has the same
  singular values as the stacked rows, so an SVD of it is a dense SVD of the
  whole system without ever holding the system in memory.
* ``gram``: accumulate ``A^T A`` from per-block partial products and
  eigendecompose.  Cheaper, but squares the condition number; the rank
  threshold is therefore applied on the eigenvalue scale.

Row streams are iterables of ``(cols, block)`` pairs: ``block`` is a dense
``(r, len(cols))`` array holding the nonzero columns ``cols`` of ``r``
consecutive rows.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator

import numpy as np
import scipy.linalg
import scipy.sparse

RowBlock = tuple[np.ndarray, np.ndarray]


class AmbiguousRankError(np.linalg.LinAlgError):
    """Singular-value gap at the chosen cut is below ``min_gap_ratio``."""

    def __init__(self, rank, gap_rank, sv_gap, min_gap_ratio):
        self.rank = rank
        self.gap_rank = gap_rank
        self.sv_gap = sv_gap
        self.min_gap_ratio = min_gap_ratio
        super().__init__(
            f"ambiguous rank: threshold gives {rank}, largest gap gives {gap_rank} "
            f"(sv_gap={sv_gap:.3g} < {min_gap_ratio:.3g})"
        )


class ResourceLimitError(MemoryError):
    pass


@dataclass(frozen=True)
class RankPolicy:
    """Rank decision rule.

    The cut is ``sigma_max * max(m, n) * rel_eps``; a dimension is accepted
    only when the ratio of the last kept to the first discarded singular
    value is at least ``min_gap_ratio``.
    """

    rel_eps: float = 2.0**-46
    min_gap_ratio: float = 1e3
    gram_mode_row_cutoff: int = 100_000

    def __post_init__(self):
        if not self.rel_eps > 0:
            raise ValueError("rel_eps must be positive")
        if not self.min_gap_ratio >= 1:
            raise ValueError("min_gap_ratio must be >= 1")

    def threshold(self, scale, m, n):
        return scale * max(m, n) * self.rel_eps


@dataclass
class RankResult:
    rank: int
    nullspace: np.ndarray  # (n_cols, nullity), orthonormal columns
    sv_gap: float
    singular_values: np.ndarray  # descending
    threshold: float
    gap_rank: int
    method: str
    min_gap_ratio: float = 1e3

    @property
    def nullity(self):
        return self.nullspace.shape[1]

    @property
    def ambiguous(self):
        return self.sv_gap < self.min_gap_ratio


def _gap(s, rank):
    """Ratio of last kept to first discarded singular value."""
    if rank == len(s):
        return np.inf
    if rank == 0:
        return 0.0 if s[0] > 0 else np.inf
    if s[rank] == 0:
        return np.inf
    return float(s[rank - 1] / s[rank])


def _largest_gap_rank(s):
    if len(s) < 2 or s[0] == 0:
        return len(s) if len(s) and s[0] > 0 else 0
    floor = s[0] * np.finfo(float).tiny
    logs = np.log(np.maximum(s, floor))
    drops = logs[:-1] - logs[1:]
    k = int(np.argmax(drops)) + 1
    return k


def _decide(s, threshold, policy, strict):
    rank = int(np.count_nonzero(s > threshold))
    gap = _gap(s, rank)
    gap_rank = _largest_gap_rank(s) if gap < policy.min_gap_ratio else rank
    if strict and gap < policy.min_gap_ratio:
        raise AmbiguousRankError(rank, gap_rank, gap, policy.min_gap_ratio)
    return rank, gap, gap_rank


# ---------------------------------------------------------------- row streams


def blocks_from_matrix(A, chunk_rows=4096) -> Iterator[RowBlock]:
    """Chunk a dense or sparse matrix into row blocks over all columns."""
    m, n = A.shape
    cols = np.arange(n)
    if scipy.sparse.issparse(A):
        A = A.tocsr()
        for start in range(0, m, chunk_rows):
            yield cols, A[start:start + chunk_rows].toarray()
    else:
        A = np.asarray(A)
        for start in range(0, m, chunk_rows):
            yield cols, A[start:start + chunk_rows]


def triplets_to_csr(rows, cols, vals, shape):
    return scipy.sparse.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()


def _densify(blocks: Iterable[RowBlock], n_cols, target_rows):
    """Pack consecutive row blocks into dense chunks of about ``target_rows``."""
    buf = []
    count = 0
    for cols, block in blocks:
        buf.append((cols, block))
        count += block.shape[0]
        if count >= target_rows:
            yield _pack(buf, n_cols, count)
            buf, count = [], 0
    if buf:
        yield _pack(buf, n_cols, count)


def _pack(buf, n_cols, count):
    out = np.zeros((count, n_cols))
    r = 0
    for cols, block in buf:
        out[r:r + block.shape[0], cols] = block
        r += block.shape[0]
    return out


# ---------------------------------------------------------------- factors


@dataclass
class Factor:
    """Reduced form of a row stream: ``R`` (kind ``qr``) or ``A^T A`` (``gram``)."""

    kind: str
    data: np.ndarray
    n_rows: int
    n_cols: int

    def extend(self, blocks: Iterable[RowBlock], **kw) -> "Factor":
        """Factor of the stream with extra rows appended; ``self`` is untouched."""
        if self.kind == "gram":
            extra = gram_factor(blocks, self.n_cols, **kw)
            return Factor("gram", self.data + extra.data, self.n_rows + extra.n_rows, self.n_cols)
        extra = qr_factor(blocks, self.n_cols, initial=self.data, **kw)
        return Factor("qr", extra.data, self.n_rows + extra.n_rows, self.n_cols)


def _check_memory(n_cols, copies, cap_bytes):
    need = n_cols * n_cols * 8 * copies
    if cap_bytes is not None and need > cap_bytes:
        raise ResourceLimitError(
            f"need ~{need / 2**30:.2f} GiB for {n_cols} columns, cap is {cap_bytes / 2**30:.2f} GiB"
        )


def qr_factor(blocks, n_cols, *, initial=None, chunk_rows=None, mem_cap_bytes=None) -> Factor:
    """Streamed QR: returns the triangular factor of the stacked rows."""
    _check_memory(n_cols, 4, mem_cap_bytes)
    if chunk_rows is None:
        chunk_rows = max(2 * n_cols, 2048)
    R = None if initial is None else np.array(initial, dtype=float)
    m = 0
    for dense in _densify(blocks, n_cols, chunk_rows):
        m += dense.shape[0]
        stacked = dense if R is None else np.vstack([R, dense])
        R = scipy.linalg.qr(stacked, mode="r", overwrite_a=True, check_finite=False)[0]
        R = R[: min(R.shape[0], n_cols)]
    if R is None:
        R = np.zeros((0, n_cols))
    return Factor("qr", R, m, n_cols)


def gram_factor(blocks, n_cols, *, threads=1, batch=64, mem_cap_bytes=None) -> Factor:
    """Accumulate ``A^T A``.

    Blocks are grouped into batches of ``batch``; each batch's partial sum is
    formed independently (possibly on a worker thread) and the partials are
    merged in batch order, so the result does not depend on ``threads``.
    """
    _check_memory(n_cols, 2, mem_cap_bytes)
    G = np.zeros((n_cols, n_cols))
    m = 0

    def partial(group):
        return [(cols, block.T @ block) for cols, block in group]

    def merge(parts):
        for cols, contrib in parts:
            runs = _runs(cols)
            for a0, a1, (la0, la1) in runs:
                for b0, b1, (lb0, lb1) in runs:
                    G[a0:a1, b0:b1] += contrib[la0:la1, lb0:lb1]

    def batches():
        group = []
        for item in blocks:
            group.append(item)
            if len(group) == batch:
                yield group
                group = []
        if group:
            yield group

    if threads <= 1:
        for group in batches():
            m += sum(b.shape[0] for _, b in group)
            merge(partial(group))
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            pending = []
            for group in batches():
                m += sum(b.shape[0] for _, b in group)
                pending.append(pool.submit(partial, group))
                if len(pending) >= 2 * threads:
                    merge(pending.pop(0).result())
            for fut in pending:
                merge(fut.result())
    return Factor("gram", G, m, n_cols)


def _runs(cols):
    """Split an increasing index array into contiguous runs."""
    cols = np.asarray(cols)
    breaks = np.flatnonzero(np.diff(cols) != 1) + 1
    starts = np.concatenate([[0], breaks]).astype(int)
    stops = np.concatenate([breaks, [len(cols)]]).astype(int)
    return [(int(cols[a]), int(cols[b - 1]) + 1, (a, b)) for a, b in zip(starts, stops)]


# ---------------------------------------------------------------- rank decisions


def rank_from_factor(factor: Factor, policy: RankPolicy | None = None, *, strict=True) -> RankResult:
    policy = policy or RankPolicy()
    n = factor.n_cols
    m = factor.n_rows
    if factor.kind == "qr":
        R = factor.data
        if R.shape[0] < n:
            R = np.vstack([R, np.zeros((n - R.shape[0], n))])
        _, s, Vt = np.linalg.svd(R)
        threshold = policy.threshold(s[0] if len(s) else 0.0, m, n)
        rank, gap, gap_rank = _decide(s, threshold, policy, strict)
        null = Vt[rank:].T.copy()
        return RankResult(rank, null, gap, s, threshold, gap_rank, "qr", policy.min_gap_ratio)

    G = factor.data
    lam = scipy.linalg.eigvalsh(G, check_finite=False)[::-1]
    lam_max = max(lam[0], 0.0) if len(lam) else 0.0
    # threshold on the eigenvalue scale, reported on the singular-value scale
    threshold = np.sqrt(policy.threshold(lam_max, m, n))
    s = np.sqrt(np.clip(lam, 0.0, None))
    rank, gap, gap_rank = _decide(s, threshold, policy, strict)
    nullity = n - rank
    if nullity:
        _, vecs = scipy.linalg.eigh(G, subset_by_index=[0, nullity - 1], check_finite=False)
        null = _orthonormalize(vecs[:, ::-1])
    else:
        null = np.zeros((n, 0))
    return RankResult(rank, null, gap, s, threshold, gap_rank, "gram", policy.min_gap_ratio)


def _orthonormalize(V):
    Q, _ = np.linalg.qr(V)
    # fix signs so the output is a deterministic function of V
    signs = np.sign(np.sum(Q * V, axis=0))
    signs[signs == 0] = 1.0
    return Q * signs


def rank_and_nullspace(
    A,
    policy: RankPolicy | None = None,
    *,
    method="auto",
    n_cols=None,
    n_rows=None,
    strict=True,
    threads=1,
    mem_cap_bytes=None,
):
    """Rank, orthonormal nullspace basis and singular-value gap of ``A``.

    ``A`` is a dense array, a scipy sparse matrix, a ``(rows, cols, vals,
    shape)`` triplet tuple, or a zero-argument callable returning a row-block
    stream (``n_cols`` and ``n_rows`` are then required).  ``method`` is
    ``"qr"``, ``"gram"`` or ``"auto"`` (gram above the policy's row cutoff).

    Returns ``(rank, nullspace, sv_gap)``; with ``strict`` an
    :class:`AmbiguousRankError` is raised when the gap is too small.
    """
    res = rank_result(
        A, policy, method=method, n_cols=n_cols, n_rows=n_rows, strict=strict,
        threads=threads, mem_cap_bytes=mem_cap_bytes,
    )
    return res.rank, res.nullspace, res.sv_gap


def rank_result(A, policy=None, *, method="auto", n_cols=None, n_rows=None, strict=True,
                threads=1, mem_cap_bytes=None) -> RankResult:
    policy = policy or RankPolicy()
    make_blocks, m, n = _as_stream(A, n_cols, n_rows)
    if method == "auto":
        method = "gram" if m > policy.gram_mode_row_cutoff else "qr"
    if method == "qr":
        factor = qr_factor(make_blocks(), n, mem_cap_bytes=mem_cap_bytes)
    elif method == "gram":
        factor = gram_factor(make_blocks(), n, threads=threads, mem_cap_bytes=mem_cap_bytes)
    else:
        raise ValueError(f"unknown method {method!r}")
    if factor.n_rows != m:
        factor.n_rows = m
    return rank_from_factor(factor, policy, strict=strict)


def _as_stream(A, n_cols, n_rows) -> tuple[Callable[[], Iterable[RowBlock]], int, int]:
    if callable(A):
        if n_cols is None or n_rows is None:
            raise ValueError("n_cols and n_rows are required for a block stream")
        return A, n_rows, n_cols
    if isinstance(A, tuple) and len(A) == 4:
        rows, cols, vals, shape = A
        A = triplets_to_csr(rows, cols, vals, shape)
    if not scipy.sparse.issparse(A):
        A = np.asarray(A, dtype=float)
        if A.ndim != 2:
            raise ValueError("expected a 2-d matrix")
        if not np.all(np.isfinite(A)):
            raise ValueError("matrix has non-finite entries")
    m, n = A.shape
    return (lambda: blocks_from_matrix(A)), m, n


# ---------------------------------------------------------------- eigensolvers


def sym_eig(M, tol=1e-10):
    """Eigenvalues in descending order and orthonormal eigenvectors of symmetric ``M``."""
    M = np.asarray(M, dtype=float)
    scale = max(np.abs(M).max(), 1.0) if M.size else 1.0
    if np.abs(M - M.T).max(initial=0.0) > tol * scale:
        raise ValueError("matrix is not symmetric")
    w, Q = np.linalg.eigh((M + M.T) / 2)
    return w[::-1], Q[:, ::-1]


def complex_eig(M):
    """Eigenvalues and unit eigenvectors of a general complex matrix."""
    M = np.asarray(M, dtype=complex)
    w, V = np.linalg.eig(M)
    V = V / np.linalg.norm(V, axis=0)
    return w, V


def matrix_rank(M, policy: RankPolicy | None = None, *, strict=True):
    """Rank of a small dense (real or complex) matrix under ``policy``."""
    policy = policy or RankPolicy()
    M = np.asarray(M)
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0:
        return 0, np.inf
    threshold = policy.threshold(s[0], *M.shape)
    rank, gap, _ = _decide(s, threshold, policy, strict)
    return rank, gap
