"""The second-Bianchi linear system in the unknowns (K, Phi) and its nullspace.

For a compact simple algebra with orthonormal basis ``e_1..e_n`` the unknowns
are a skew operator ``K_z`` per basis vector and a vector ``Phi(e_i, e_j)``
per basis pair ``i < j``.  Each basis triple ``i < j < k`` contributes the
upper-triangle entries of the skew operator

    sigma_{XYZ} ([ad_[X,Y], K_Z] + ad_[K_X Y - K_Y X, Z] + Phi(X, Y) ^ Z)

plus one row for ``sigma_{XYZ} <Phi(X, Y), Z>``.  The restricted system also
demands ``<K_z, ad_w> = 0`` for all ``z, w``.

The matrix is produced as a stream of dense per-triple blocks (see
:mod:`weylhom.numerics`), which feeds both the QR and the Gram route without
materializing the whole system.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from math import comb
from typing import Iterator

import numpy as np

from . import numerics
from .algebra import LieAlgebra, ad, bracket, orthonormality_residual, wedge
from .numerics import Factor, RankPolicy

DEFAULT_MAX_DIM = 21
PRUNE = 1e-13


class SystemTooLargeError(ValueError):
    pass


@dataclass(frozen=True)
class UnknownLayout:
    """Column layout: ``K`` upper triangles by ``z``, then ``Phi`` vectors by pair."""

    n: int

    @property
    def n_pairs(self) -> int:
        return self.n * (self.n - 1) // 2

    @property
    def k_size(self) -> int:
        return self.n * self.n_pairs

    @property
    def phi_offset(self) -> int:
        return self.k_size

    @property
    def total_cols(self) -> int:
        return self.n * self.n * (self.n - 1)

    def pair(self, p, q) -> int:
        """Index of ``(p, q)``, ``p < q``, in row-major upper-triangle order."""
        n = self.n
        return p * n - p * (p + 1) // 2 + (q - p - 1)

    def k_col(self, z, p, q) -> int:
        return z * self.n_pairs + self.pair(p, q)

    def phi_col(self, i, j, m) -> int:
        return self.phi_offset + self.pair(i, j) * self.n + m

    def pack(self, K, Phi) -> np.ndarray:
        """Column vector from ``K[z]`` (skew ``n x n``) and ``Phi[i, j]`` (vectors)."""
        n = self.n
        iu = np.triu_indices(n, 1)
        v = np.empty(self.total_cols)
        v[: self.k_size] = np.asarray(K)[:, iu[0], iu[1]].ravel()
        v[self.k_size:] = np.asarray(Phi)[iu[0], iu[1], :].ravel()
        return v

    def unpack(self, v):
        """Inverse of :meth:`pack`: returns full skew ``K`` and antisymmetric ``Phi``."""
        n = self.n
        v = np.asarray(v)
        if v.shape[0] != self.total_cols:
            raise ValueError(f"expected {self.total_cols} entries, got {v.shape[0]}")
        iu = np.triu_indices(n, 1)
        K = np.zeros((n, n, n))
        K[:, iu[0], iu[1]] = v[: self.k_size].reshape(n, -1)
        K -= K.transpose(0, 2, 1)
        Phi = np.zeros((n, n, n))
        Phi[iu[0], iu[1], :] = v[self.k_size:].reshape(-1, n)
        Phi -= Phi.transpose(1, 0, 2)
        return K, Phi

    def to_dict(self):
        return {"n": self.n, "k_cols": self.k_size, "phi_cols": self.total_cols - self.k_size,
                "total_cols": self.total_cols}


class _Tables:
    """Per-algebra coefficient tables used by the block builder."""

    def __init__(self, g: LieAlgebra):
        n = g.dim_n
        lay = UnknownLayout(n)
        P = lay.n_pairs
        iu = np.triu_indices(n, 1)
        c = g.structure_tensor
        adm = g.ad_matrices
        # skew basis S_pair = E_pq - E_qp
        S = np.zeros((P, n, n))
        S[np.arange(P), iu[0], iu[1]] = 1.0
        S[np.arange(P), iu[1], iu[0]] = -1.0
        comm = np.einsum("lab,cbd->lcad", adm, S) - np.einsum("cab,lbd->lcad", S, adm)
        # cmap[l][row_pair, col_pair]: upper entries of [ad_l, S_col]
        self.cmap = np.ascontiguousarray(comm[:, :, iu[0], iu[1]].transpose(0, 2, 1))
        ad_upper = adm[:, iu[0], iu[1]]  # (r, P)
        # adu[c][m]: upper entries of ad_[e_m, e_c]
        self.adu = np.einsum("mcr,rp->cmp", c, ad_upper)
        self.adu_t = np.ascontiguousarray(self.adu.transpose(0, 2, 1))  # (c, P, m)
        # sel[b][m, pair]: K_{m b} = sel[b][m] . upper(K)
        sel = np.zeros((n, n, P))
        for b in range(n):
            for m in range(n):
                if m < b:
                    sel[b, m, lay.pair(m, b)] = 1.0
                elif m > b:
                    sel[b, m, lay.pair(b, m)] = -1.0
        self.sel = sel
        # wedge[c][pair(p, q), m]: upper entries of e_m ^ e_c
        wt = np.zeros((n, P, n))
        for p, q in zip(*iu):
            r = lay.pair(p, q)
            for cc in range(n):
                if p == cc:
                    wt[cc, r, q] += 1.0
                if q == cc:
                    wt[cc, r, p] -= 1.0
        self.wedge = wt
        self.ad_upper = ad_upper


def triple_block(g: LieAlgebra, tables: _Tables, i, j, k, *, include_cyclic=True):
    """Dense rows and global columns contributed by the basis triple ``i < j < k``."""
    n = g.dim_n
    lay = UnknownLayout(n)
    P = lay.n_pairs
    c = g.structure_tensor
    block = np.zeros((P + 1 if include_cyclic else P, 3 * P + 3 * n))
    koff = {i: 0, j: P, k: 2 * P}
    phi = {(i, j): (1.0, 3 * P), (j, k): (1.0, 3 * P + 2 * n), (k, i): (-1.0, 3 * P + n)}
    for a, b, cc in ((i, j, k), (j, k, i), (k, i, j)):
        block[:P, koff[cc]:koff[cc] + P] += np.tensordot(c[a, b], tables.cmap, axes=1)
        t = tables.adu_t[cc]
        block[:P, koff[a]:koff[a] + P] += t @ tables.sel[b]
        block[:P, koff[b]:koff[b] + P] -= t @ tables.sel[a]
        sign, off = phi[(a, b)]
        block[:P, off:off + n] += sign * tables.wedge[cc]
    if include_cyclic:
        block[P, 3 * P + k] += 1.0
        block[P, 3 * P + 2 * n + i] += 1.0
        block[P, 3 * P + n + j] -= 1.0
    block[np.abs(block) < PRUNE] = 0.0
    cols = np.concatenate([
        np.arange(i * P, (i + 1) * P),
        np.arange(j * P, (j + 1) * P),
        np.arange(k * P, (k + 1) * P),
        lay.phi_col(i, j, 0) + np.arange(n),
        lay.phi_col(i, k, 0) + np.arange(n),
        lay.phi_col(j, k, 0) + np.arange(n),
    ])
    return cols, block


@dataclass(eq=False)
class BianchiSystem:
    """Row stream of the Bianchi system for one algebra.

    Logical rows are numbered triple-major: triple ``t`` (lexicographic
    ``i < j < k``) owns rows ``t * (P + 1) + r`` with ``r < P`` the upper
    entry ``pair(p, q) = r`` and ``r = P`` the cyclic Phi row.  Restricted
    rows follow, ``z * n + w`` for ``<K_z, ad_w> = 0``.
    """

    algebra: LieAlgebra
    restricted: bool = False
    include_cyclic: bool = True
    layout: UnknownLayout = field(init=False)

    def __post_init__(self):
        self.layout = UnknownLayout(self.algebra.dim_n)

    @cached_property
    def tables(self) -> _Tables:
        return _Tables(self.algebra)

    @property
    def rows_per_triple(self) -> int:
        return self.layout.n_pairs + (1 if self.include_cyclic else 0)

    @property
    def n_triples(self) -> int:
        return comb(self.algebra.dim_n, 3)

    @property
    def n_rows(self) -> int:
        n = self.algebra.dim_n
        return self.n_triples * self.rows_per_triple + (n * n if self.restricted else 0)

    @property
    def n_cols(self) -> int:
        return self.layout.total_cols

    @property
    def shape(self):
        return self.n_rows, self.n_cols

    def triples(self):
        return combinations(range(self.algebra.dim_n), 3)

    def triple_blocks(self) -> Iterator[numerics.RowBlock]:
        for i, j, k in self.triples():
            yield triple_block(self.algebra, self.tables, i, j, k, include_cyclic=self.include_cyclic)

    def restriction_blocks(self) -> Iterator[numerics.RowBlock]:
        n = self.algebra.dim_n
        P = self.layout.n_pairs
        rows = 2.0 * self.tables.ad_upper  # <K, ad_w> = 2 sum_{p<q} K_pq (ad_w)_pq
        for z in range(n):
            yield np.arange(z * P, (z + 1) * P), rows

    def blocks(self) -> Iterator[numerics.RowBlock]:
        yield from self.triple_blocks()
        if self.restricted:
            yield from self.restriction_blocks()

    def row_provenance(self, row: int) -> tuple:
        """``("biad", (i, j, k), (p, q))``, ``("cyclePhi", (i, j, k))`` or ``("Kperpad", (z, w))``."""
        n = self.algebra.dim_n
        base = self.n_triples * self.rows_per_triple
        if row < 0 or row >= self.n_rows:
            raise IndexError(row)
        if row >= base:
            z, w = divmod(row - base, n)
            return ("Kperpad", (z, w))
        t, r = divmod(row, self.rows_per_triple)
        triple = _unrank_triple(t, n)
        if r == self.layout.n_pairs:
            return ("cyclePhi", triple)
        iu = np.triu_indices(n, 1)
        return ("biad", triple, (int(iu[0][r]), int(iu[1][r])))

    @cached_property
    def _triplets(self):
        rows, cols, vals = [], [], []
        r0 = 0
        for cidx, block in self.blocks():
            rr, cc = np.nonzero(block)
            rows.append(rr + r0)
            cols.append(cidx[cc])
            vals.append(block[rr, cc])
            r0 += block.shape[0]
        rows = np.concatenate(rows).astype(np.int64)
        cols = np.concatenate(cols).astype(np.int64)
        vals = np.concatenate(vals)
        order = np.lexsort((cols, rows))
        return rows[order], cols[order], vals[order]

    def triplets(self):
        """``(rows, cols, vals)`` sorted row-major; empty logical rows have no entries."""
        return self._triplets

    def to_sparse(self):
        return numerics.triplets_to_csr(*self.triplets(), self.shape)

    def matvec(self, V) -> np.ndarray:
        """``A @ V`` for a vector or a column stack, computed blockwise."""
        V = np.asarray(V)
        out = np.zeros((self.n_rows,) + V.shape[1:])
        r0 = 0
        for cols, block in self.blocks():
            out[r0:r0 + block.shape[0]] = block @ V[cols]
            r0 += block.shape[0]
        return out

    def write_triplets(self, path):
        """Text export: ``#``-prefixed JSON header, then ``row col value`` lines."""
        header = {"algebra": self.algebra.name, "restricted": self.restricted,
                  "include_cyclic": self.include_cyclic, "rows": self.n_rows,
                  "layout": self.layout.to_dict()}
        rows, cols, vals = self.triplets()
        with open(path, "w") as fh:
            fh.write("# " + json.dumps(header) + "\n")
            for r, c, v in zip(rows.tolist(), cols.tolist(), vals.tolist()):
                fh.write(f"{r} {c} {v!r}\n")


def read_triplets(path):
    """Read a triplet file back as ``(header, rows, cols, vals)``."""
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("# "):
            raise ValueError("missing header line")
        header = json.loads(first[2:])
        data = np.loadtxt(fh, ndmin=2)
    if data.size == 0:
        return header, np.zeros(0, int), np.zeros(0, int), np.zeros(0)
    return header, data[:, 0].astype(np.int64), data[:, 1].astype(np.int64), data[:, 2]


def _unrank_triple(t, n):
    for i in range(n):
        cnt = comb(n - i - 1, 2)
        if t < cnt:
            for j in range(i + 1, n):
                cj = n - j - 1
                if t < cj:
                    return (i, j, j + 1 + t)
                t -= cj
        t -= cnt
    raise IndexError("triple index out of range")


def assemble_system(g: LieAlgebra, restricted=False, *, include_cyclic=True,
                    max_dim=DEFAULT_MAX_DIM) -> BianchiSystem:
    """Bianchi system for ``g``; ``restricted`` appends the ``K ⊥ ad(g)`` rows."""
    if g.dim_n > max_dim:
        raise SystemTooLargeError(f"dim {g.dim_n} exceeds cap {max_dim}")
    if orthonormality_residual(g) > 1e-8:
        raise ValueError("algebra basis is not orthonormal for -Killing")
    return BianchiSystem(g, restricted, include_cyclic)


# ---------------------------------------------------------------- reference evaluation


def biad_operator(g: LieAlgebra, K, Phi, X, Y, Z) -> np.ndarray:
    """Full operator value of the cyclic Bianchi expression at ``(X, Y, Z)``.

    ``K[z]`` and ``Phi[i, j]`` are given on the basis and extended linearly.
    Built from the algebra primitives only; used as an oracle for the blocks.
    """
    K = np.asarray(K)
    Phi = np.asarray(Phi)

    def K_of(V):
        return np.tensordot(V, K, axes=1)

    def Phi_of(U, V):
        return np.einsum("i,j,ijm->m", U, V, Phi)

    total = np.zeros((g.dim_n, g.dim_n))
    for A, B, C in ((X, Y, Z), (Y, Z, X), (Z, X, Y)):
        adAB = ad(g, bracket(g, A, B))
        KC = K_of(C)
        total += adAB @ KC - KC @ adAB
        total += ad(g, bracket(g, K_of(A) @ B - K_of(B) @ A, C))
        total += wedge(Phi_of(A, B), C)
    return total


def cyclic_phi(Phi, X, Y, Z) -> float:
    Phi = np.asarray(Phi)
    f = lambda U, V, W: np.einsum("i,j,ijm,m->", U, V, Phi, W)  # noqa: E731
    return f(X, Y, Z) + f(Y, Z, X) + f(Z, X, Y)


def known_solution(g: LieAlgebra, A) -> np.ndarray:
    """Column vector for ``K_Z = ad_{A Z}``, ``Phi = 0``."""
    n = g.dim_n
    A = np.asarray(A)
    K = np.einsum("mz,mab->zab", A, g.ad_matrices)
    return UnknownLayout(n).pack(K, np.zeros((n, n, n)))


# ---------------------------------------------------------------- nullspace


@dataclass
class NullspaceReport:
    algebra: str
    restricted: bool
    dimension: int
    basis: np.ndarray
    sv_gap: float
    ambiguous: bool
    method: str
    sigma_max: float
    threshold: float
    phi_norms: np.ndarray
    k_ad_residuals: np.ndarray
    max_residual: float  # max ||A v|| / sigma_max over basis vectors
    wall_time_s: float
    candidate_ranks: tuple = ()

    @property
    def max_phi_norm(self) -> float:
        return float(self.phi_norms.max(initial=0.0))

    @property
    def max_K_ad_residual(self) -> float:
        return float(self.k_ad_residuals.max(initial=0.0))

    def to_dict(self):
        return {
            "algebra": self.algebra,
            "restricted": self.restricted,
            "dimension": int(self.dimension),
            "sv_gap": None if not np.isfinite(self.sv_gap) else float(self.sv_gap),
            "ambiguous": bool(self.ambiguous),
            "method": self.method,
            "max_phi_norm": self.max_phi_norm,
            "max_K_ad_residual": self.max_K_ad_residual,
            "max_residual": float(self.max_residual),
            "wall_time_s": float(self.wall_time_s),
        }

    def to_json(self):
        return json.dumps(self.to_dict())


def classify_solution(g: LieAlgebra, layout: UnknownLayout, v):
    """``(phi_norm, K_ad_residual)`` for one column, or arrays for a column stack."""
    V = np.asarray(v)
    single = V.ndim == 1
    if single:
        V = V[:, None]
    if V.shape[0] != layout.total_cols or layout.n != g.dim_n:
        raise ValueError("layout does not match the vector or the algebra")
    n = g.dim_n
    phi = np.linalg.norm(V[layout.phi_offset:], axis=0)
    onb = g.ad_onb.reshape(n, -1)
    iu = np.triu_indices(n, 1)
    res = np.zeros(V.shape[1])
    for col in range(V.shape[1]):
        K = np.zeros((n, n, n))
        K[:, iu[0], iu[1]] = V[: layout.k_size, col].reshape(n, -1)
        K -= K.transpose(0, 2, 1)
        flat = K.reshape(n, -1)
        perp = flat - (flat @ onb.T) @ onb
        res[col] = np.linalg.norm(perp)
    if single:
        return float(phi[0]), float(res[0])
    return phi, res


def system_factor(sys: BianchiSystem, method: str, *, threads=1, mem_cap_bytes=None) -> Factor:
    if method == "qr":
        f = numerics.qr_factor(sys.blocks(), sys.n_cols, mem_cap_bytes=mem_cap_bytes)
    elif method == "gram":
        f = numerics.gram_factor(sys.blocks(), sys.n_cols, threads=threads, mem_cap_bytes=mem_cap_bytes)
    else:
        raise ValueError(f"unknown method {method!r}")
    f.n_rows = sys.n_rows
    return f


def _choose(method, sys, policy):
    if method == "auto":
        return "gram" if sys.n_rows > policy.gram_mode_row_cutoff else "qr"
    return method


def report_from_factor(sys: BianchiSystem, factor: Factor, policy: RankPolicy, started: float,
                       *, check_residual=True) -> NullspaceReport:
    res = numerics.rank_from_factor(factor, policy, strict=False)
    basis = res.nullspace
    phi, kres = classify_solution(sys.algebra, sys.layout, basis) if basis.shape[1] else (np.zeros(0), np.zeros(0))
    sigma_max = float(res.singular_values[0]) if res.singular_values.size else 0.0
    max_residual = 0.0
    if check_residual and basis.shape[1] and sigma_max > 0:
        AV = sys.matvec(basis)
        max_residual = float(np.linalg.norm(AV, axis=0).max() / sigma_max)
    return NullspaceReport(
        algebra=sys.algebra.name, restricted=sys.restricted, dimension=res.nullity, basis=basis,
        sv_gap=res.sv_gap, ambiguous=res.ambiguous, method=res.method, sigma_max=sigma_max,
        threshold=res.threshold, phi_norms=phi, k_ad_residuals=kres, max_residual=max_residual,
        wall_time_s=time.perf_counter() - started,
        candidate_ranks=(res.rank, res.gap_rank) if res.ambiguous else (res.rank,),
    )


def nullspace(sys: BianchiSystem, policy: RankPolicy | None = None, *, method="auto", threads=1,
              mem_cap_bytes=None, check_residual=True) -> NullspaceReport:
    """Rank-revealing nullspace of the assembled system with per-vector classification."""
    policy = policy or RankPolicy()
    started = time.perf_counter()
    factor = system_factor(sys, _choose(method, sys, policy), threads=threads, mem_cap_bytes=mem_cap_bytes)
    return report_from_factor(sys, factor, policy, started, check_residual=check_residual)


@dataclass
class PropositionReport:
    algebra: str
    n: int
    status: str  # pass | fail | ambiguous | outside_hypothesis
    unrestricted: NullspaceReport
    restricted: NullspaceReport
    tol: float

    @property
    def dims(self):
        return self.unrestricted.dimension, self.restricted.dimension

    def to_dict(self):
        return {"algebra": self.algebra, "n": self.n, "status": self.status,
                "expected_unrestricted": self.n * self.n, "tol": self.tol,
                "unrestricted": self.unrestricted.to_dict(), "restricted": self.restricted.to_dict()}


def verify_proposition(g: LieAlgebra, policy: RankPolicy | None = None, *, method="auto", tol=1e-8,
                       threads=1, mem_cap_bytes=None, max_dim=DEFAULT_MAX_DIM) -> PropositionReport:
    """Unrestricted nullspace must be ``Hom(g, ad g)`` (dim n^2, Phi = 0), restricted must be trivial.

    The restricted factor is obtained by extending the unrestricted one with
    the ``K ⊥ ad(g)`` rows.
    """
    policy = policy or RankPolicy()
    sys_u = assemble_system(g, False, max_dim=max_dim)
    sys_r = assemble_system(g, True, max_dim=max_dim)
    chosen = _choose(method, sys_r, policy)
    t0 = time.perf_counter()
    fac_u = system_factor(sys_u, chosen, threads=threads, mem_cap_bytes=mem_cap_bytes)
    rep_u = report_from_factor(sys_u, fac_u, policy, t0)
    t1 = time.perf_counter()
    fac_r = fac_u.extend(sys_r.restriction_blocks())
    fac_r.n_rows = sys_r.n_rows
    rep_r = report_from_factor(sys_r, fac_r, policy, t1)
    n = g.dim_n
    if g.below_hypothesis:
        status = "outside_hypothesis"
    elif rep_u.ambiguous or rep_r.ambiguous:
        status = "ambiguous"
    else:
        ok = (rep_u.dimension == n * n and rep_r.dimension == 0
              and rep_u.max_phi_norm <= tol and rep_u.max_K_ad_residual <= tol
              and rep_u.max_residual <= tol)
        status = "pass" if ok else "fail"
    return PropositionReport(g.name, n, status, rep_u, rep_r, tol)
