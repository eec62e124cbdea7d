"""Root decomposition over the complexification and minimal adjoint ranks."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .algebra import LieAlgebra, ad, bracket
from .numerics import AmbiguousRankError, RankPolicy, complex_eig, matrix_rank

CLUSTER_TOL = 1e-7
CARTAN_SEED = 20240613

# (rank, m) per family, as listed for the classical and g2 rows
TABLE1 = {
    "su": lambda l: (l - 1, 2 * (l - 1)),
    "so": lambda l: (l // 2, 2 * (l - 3)),
    "sp": lambda l: (l, 2 * l),
    "g2": lambda l: (2, 6),
}
# exceptional rows that are documented but not built
TABLE1_EXCEPTIONAL = {"e6": (6, 22), "e7": (7, 34), "e8": (8, 58), "f4": (4, 16)}


class RootDecompositionError(RuntimeError):
    pass


def expected_rank(g: LieAlgebra) -> int:
    return TABLE1[g.family](g.rank_param)[0]


def table1_entry(g: LieAlgebra):
    """Reference ``(rank, m)``; ``None`` outside the ranges the table covers."""
    l = g.rank_param
    if g.family == "so" and l < 7:
        return None
    if g.family == "su" and l < 2 or g.family == "sp" and l < 2:
        return None
    return TABLE1[g.family](l)


@dataclass
class RootDatum:
    cartan_basis: np.ndarray  # (r, n) real
    roots: np.ndarray  # (N, r) complex, alpha(H_i)
    root_vectors: np.ndarray  # (N, n) complex, unit norm
    positivity: dict

    @property
    def rank(self) -> int:
        return self.cartan_basis.shape[0]

    def real_coordinates(self) -> np.ndarray:
        """Roots take imaginary values on the compact form; ``-i alpha`` is real."""
        return (-1j * self.roots).real

    def to_json(self) -> str:
        doc = {
            "cartan_basis": self.cartan_basis.tolist(),
            "roots": [[r.real.tolist(), r.imag.tolist()] for r in self.roots],
            "root_vectors": [np.column_stack([v.real, v.imag]).ravel().tolist() for v in self.root_vectors],
            "positivity": self.positivity,
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "RootDatum":
        doc = json.loads(text)
        roots = np.array([np.array(re) + 1j * np.array(im) for re, im in doc["roots"]])
        vecs = np.array([np.array(v).reshape(-1, 2) @ np.array([1, 1j]) for v in doc["root_vectors"]])
        return cls(np.array(doc["cartan_basis"]), roots, vecs, doc["positivity"])


# ---------------------------------------------------------------- Cartan subalgebras


def _standard_torus(g: LieAlgebra):
    """Diagonal torus of the matrix realization, as coordinate vectors."""
    if g.matrices is None:
        return None
    l = g.rank_param
    d = g.matrices.shape[-1]
    mats = []
    if g.family == "su":
        for j in range(l - 1):
            m = np.zeros((d, d), complex)
            m[j, j], m[j + 1, j + 1] = 1j, -1j
            mats.append(m)
    elif g.family == "so":
        for k in range(l // 2):
            m = np.zeros((d, d))
            m[2 * k, 2 * k + 1], m[2 * k + 1, 2 * k] = 1, -1
            mats.append(m)
    elif g.family == "sp":
        for j in range(l):
            m = np.zeros((d, d), complex)
            m[j, j], m[j + l, j + l] = 1j, -1j
            mats.append(m)
    else:
        return None
    return np.array([g.coordinates(m) for m in mats])


def _torus_from_regular_element(g: LieAlgebra, seed: int, policy: RankPolicy):
    """Greedy commutant extension from a random element."""
    rng = np.random.default_rng(seed)
    n = g.dim_n
    X = rng.standard_normal(n)
    chosen = [X / np.linalg.norm(X)]
    while True:
        # common centralizer of the chosen elements
        stack = np.vstack([ad(g, v) for v in chosen])
        rank, _ = matrix_rank(stack, policy)
        _, _, Vt = np.linalg.svd(stack)
        cent = Vt[rank:]
        span = np.array(chosen)
        resid = cent - (cent @ span.T) @ np.linalg.pinv(span.T)
        if cent.shape[0] <= len(chosen):
            return span
        norms = np.linalg.norm(resid, axis=1)
        v = resid[int(np.argmax(norms))]
        chosen.append(v / np.linalg.norm(v))


def random_cartan(g: LieAlgebra, seed: int, policy: RankPolicy | None = None) -> np.ndarray:
    """Cartan subalgebra through a random regular element (a conjugate of the standard one)."""
    return _gram_schmidt(_torus_from_regular_element(g, seed, policy or RankPolicy()))


def _gram_schmidt(vectors):
    out = []
    for v in vectors:
        w = np.array(v, dtype=float)
        for _ in range(2):
            for u in out:
                w -= (u @ w) * u
        out.append(w / np.linalg.norm(w))
    return np.array(out)


def cartan_subalgebra(g: LieAlgebra, *, seed=CARTAN_SEED, policy: RankPolicy | None = None) -> np.ndarray:
    """Orthonormal basis (rows) of a maximal abelian subalgebra of ``g``."""
    policy = policy or RankPolicy()
    H = _standard_torus(g)
    if H is None:
        H = _torus_from_regular_element(g, seed, policy)
    H = _gram_schmidt(H)
    want = expected_rank(g) if g.family in TABLE1 and (g.rank_param or g.family == "g2") else None
    if want is not None and H.shape[0] != want:
        raise RootDecompositionError(f"{g.name}: torus has dimension {H.shape[0]}, expected {want}")
    worst = max((np.abs(bracket(g, a, b)).max() for a in H for b in H), default=0.0)
    if worst > 1e-10:
        raise RootDecompositionError(f"{g.name}: Cartan elements do not commute ({worst:.2e})")
    # maximality: the common centralizer must be the torus itself
    stack = np.vstack([ad(g, h) for h in H])
    rank, _ = matrix_rank(stack, policy)
    if g.dim_n - rank != H.shape[0]:
        raise RootDecompositionError(f"{g.name}: abelian subalgebra is not maximal")
    return H


# ---------------------------------------------------------------- roots


def root_decomposition(g: LieAlgebra, cartan=None, *, seed=CARTAN_SEED, attempts=8) -> RootDatum:
    """Simultaneous eigendecomposition of ``ad_H`` over the complexification."""
    H = cartan_subalgebra(g) if cartan is None else np.asarray(cartan, dtype=float)
    r = H.shape[0]
    n = g.dim_n
    adH = np.array([ad(g, h) for h in H])
    scale = max(np.abs(adH).max(), 1.0)
    rng = np.random.default_rng(seed)
    for _ in range(attempts):
        coef = rng.integers(1, 100, size=r).astype(float)
        w, V = complex_eig(np.tensordot(coef, adH, axes=1))
        nonzero = np.abs(w) > CLUSTER_TOL * scale * coef.sum()
        if np.count_nonzero(~nonzero) != r:
            continue
        wn = w[nonzero]
        gaps = np.abs(wn[:, None] - wn[None, :])
        np.fill_diagonal(gaps, np.inf)
        if gaps.min() <= CLUSTER_TOL * scale:
            continue
        vecs = V[:, nonzero].T
        roots = np.array([[np.vdot(v, a @ v) for a in adH] for v in vecs])
        resid = max(np.abs(a @ v - lam * v).max() for v, lam_row in zip(vecs, roots)
                    for a, lam in zip(adH, lam_row))
        if resid > 1e-8:
            raise RootDecompositionError(f"eigenvector residual {resid:.2e}")
        order = sorted(range(len(roots)), key=lambda i: _lex_key(roots[i]))
        roots, vecs = roots[order], vecs[order]
        return RootDatum(H, roots, vecs, {"order": "lexicographic on -i*alpha(H_i)",
                                          "coefficients": coef.tolist(), "tol": CLUSTER_TOL})
    raise RootDecompositionError(f"{g.name}: no generic Cartan element after {attempts} attempts")


def _lex_key(root):
    return tuple(np.round((-1j * root).real / CLUSTER_TOL).astype(np.int64).tolist())


def highest_root_index(rd: RootDatum) -> int:
    keys = [_lex_key(r) for r in rd.roots]
    best = max(keys)
    if keys.count(best) != 1:
        raise RootDecompositionError("tie under the positivity functional")
    return keys.index(best)


def highest_root_vector(rd: RootDatum) -> np.ndarray:
    return rd.root_vectors[highest_root_index(rd)]


def ad_rank(g: LieAlgebra, V, policy: RankPolicy | None = None) -> int:
    """Rank of ``ad_V`` for a real or complex coordinate vector."""
    A = np.tensordot(np.asarray(V), g.ad_matrices, axes=1)
    return matrix_rank(A, policy or RankPolicy())[0]


def min_adjoint_rank(g: LieAlgebra, policy: RankPolicy | None = None, *, cartan=None) -> int:
    """``rank(ad_{X_theta})`` for the highest root vector; raises on an ambiguous gap."""
    rd = root_decomposition(g, cartan)
    return ad_rank(g, highest_root_vector(rd), policy)


def su_minimal_element(g: LieAlgebra) -> np.ndarray:
    """Coordinates of ``i * diag(1 - l, 1, ..., 1)`` in ``su(l)``."""
    if g.family != "su":
        raise ValueError("only defined for su(l)")
    l = g.rank_param
    d = np.ones(l, dtype=complex)
    d[0] = 1 - l
    return g.coordinates(np.diag(1j * d))


def table1_row(g: LieAlgebra, policy: RankPolicy | None = None) -> dict:
    """Computed and reference ``(rank, m)`` for ``g``."""
    computed_rank = cartan_subalgebra(g).shape[0]
    try:
        m = min_adjoint_rank(g, policy)
        ambiguous = False
    except AmbiguousRankError as err:
        m, ambiguous = err.rank, True
    ref = table1_entry(g)
    return {
        "algebra": g.name,
        "rank": computed_rank,
        "m": m,
        "reference_rank": None if ref is None else ref[0],
        "reference_m": None if ref is None else ref[1],
        "ambiguous": ambiguous,
        "match": None if ref is None else (not ambiguous and (computed_rank, m) == tuple(ref)),
    }
