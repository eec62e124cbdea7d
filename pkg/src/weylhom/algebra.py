"""Compact simple Lie algebras as structure tensors.

Every algebra is built from an explicit matrix realization, its structure
constants are read off from matrix commutators, and the basis is then
Gram-Schmidt orthonormalized against the negative Killing form.  In the
resulting basis ``c[i, j, k]`` is totally antisymmetric and
``sum_i ad_i @ ad_i == -I``.

Operators on the algebra (``ad_X``, connection operators, wedges) are plain
``(n, n)`` arrays acting on coordinate vectors: ``(A @ Z)`` is ``A`` applied
to ``Z``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations

import numpy as np

from .numerics import RankPolicy, matrix_rank

FAMILIES = ("su", "so", "sp", "g2")
DEFAULT_DIM_CAP = 64


class UnsupportedAlgebraError(ValueError):
    pass


@dataclass(frozen=True)
class Tolerances:
    jacobi: float = 1e-12
    orthonormality: float = 1e-10
    casimir: float = 1e-9
    identity: float = 1e-10
    closure: float = 1e-10

    def override(self, **kw) -> "Tolerances":
        unknown = set(kw) - set(self.__dataclass_fields__)
        if unknown:
            raise KeyError(f"unknown tolerance(s): {sorted(unknown)}")
        return Tolerances(**{**self.__dict__, **{k: float(v) for k, v in kw.items()}})


@dataclass(frozen=True, eq=False)
class LieAlgebra:
    """Orthonormalized structure tensor of a compact simple Lie algebra.

    ``structure_tensor[i, j, k]`` is the ``e_k`` coefficient of ``[e_i, e_j]``.
    ``killing_scale_log`` records the raw-to-orthonormal transform ``T``
    (``e_a = sum_b T[b, a] raw_b``) and the raw Killing Gram matrix.
    ``matrices`` holds the orthonormal basis as matrices when the algebra was
    built from a realization (``None`` for imported tensors).
    """

    family: str
    rank_param: int | None
    structure_tensor: np.ndarray
    killing_scale_log: dict = field(default_factory=dict, repr=False)
    matrices: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        c = np.array(self.structure_tensor, dtype=float)
        if c.ndim != 3 or len(set(c.shape)) != 1:
            raise ValueError("structure tensor must have shape (n, n, n)")
        c.setflags(write=False)
        object.__setattr__(self, "structure_tensor", c)
        if self.matrices is not None:
            m = np.array(self.matrices)
            m.setflags(write=False)
            object.__setattr__(self, "matrices", m)

    @property
    def dim_n(self) -> int:
        return self.structure_tensor.shape[0]

    @property
    def name(self) -> str:
        return self.family if self.family == "g2" else f"{self.family}{self.rank_param}"

    @property
    def below_hypothesis(self) -> bool:
        """True for n <= 4, where the Bianchi classification makes no claim."""
        return self.dim_n <= 4

    @cached_property
    def ad_matrices(self) -> np.ndarray:
        """``ad[i]`` is the matrix of ``ad_{e_i}``: ``ad[i][k, m] = c[i, m, k]``."""
        a = np.ascontiguousarray(self.structure_tensor.transpose(0, 2, 1))
        a.setflags(write=False)
        return a

    @cached_property
    def ad_onb(self) -> np.ndarray:
        """Orthonormal basis of ``ad(g)`` under ``Tr(A1 A2^T)``."""
        a = self.ad_matrices.reshape(self.dim_n, -1)
        Q, _ = np.linalg.qr(a.T)
        return Q.T.reshape(self.dim_n, self.dim_n, self.dim_n)

    def coordinates(self, M) -> np.ndarray:
        """Coordinates of a matrix from the realization in the orthonormal basis."""
        if self.matrices is None:
            raise ValueError("algebra has no matrix realization")
        B = _flatten(self.matrices)
        x, *_ = np.linalg.lstsq(B.T, _flatten(np.asarray(M)[None])[0], rcond=None)
        return x

    def __repr__(self):
        return f"LieAlgebra({self.name}, n={self.dim_n})"


# ---------------------------------------------------------------- raw bases


def _E(d, i, j, dtype=float):
    m = np.zeros((d, d), dtype=dtype)
    m[i, j] = 1
    return m


def _su_basis(l):
    out = []
    for j in range(l - 1):
        out.append(1j * (_E(l, j, j, complex) - _E(l, j + 1, j + 1, complex)))
    for j, k in combinations(range(l), 2):
        out.append(_E(l, j, k, complex) - _E(l, k, j, complex))
    for j, k in combinations(range(l), 2):
        out.append(1j * (_E(l, j, k, complex) + _E(l, k, j, complex)))
    return np.array(out)


def _so_basis(l):
    return np.array([_E(l, j, k) - _E(l, k, j) for j, k in combinations(range(l), 2)])


def _sp_basis(l):
    """Compact sp(l): quaternionic anti-Hermitian matrices as [[A, B], [-conj B, conj A]]."""

    def embed(A, B):
        return np.block([[A, B], [-B.conj(), A.conj()]])

    Z = np.zeros((l, l), dtype=complex)
    out = [embed(A, Z) for A in [1j * _E(l, j, j, complex) for j in range(l)]]
    out += [embed(_E(l, j, k, complex) - _E(l, k, j, complex), Z) for j, k in combinations(range(l), 2)]
    out += [embed(1j * (_E(l, j, k, complex) + _E(l, k, j, complex)), Z) for j, k in combinations(range(l), 2)]
    sym = [_E(l, j, j, complex) for j in range(l)]
    sym += [_E(l, j, k, complex) + _E(l, k, j, complex) for j, k in combinations(range(l), 2)]
    out += [embed(Z, S) for S in sym]
    out += [embed(Z, 1j * S) for S in sym]
    return np.array(out)


# imaginary octonion units e1..e7: e_i e_{i+1} = e_{i+3} (indices mod 7)
OCTONION_TRIPLES = [(1, 2, 4), (2, 3, 5), (3, 4, 6), (4, 5, 7), (5, 6, 1), (6, 7, 2), (7, 1, 3)]


def octonion_table() -> np.ndarray:
    """``mult[a, b, c]``: coefficient of ``e_c`` in ``e_a e_b``; index 0 is the unit."""
    m = np.zeros((8, 8, 8))
    for a in range(8):
        m[0, a, a] = m[a, 0, a] = 1
    for a in range(1, 8):
        m[a, a, 0] = -1
    for i, j, k in OCTONION_TRIPLES:
        for a, b, c in ((i, j, k), (j, k, i), (k, i, j)):
            m[a, b, c] = 1
            m[b, a, c] = -1
    return m


def derivation_constraints() -> np.ndarray:
    """Rows of ``D(xy) = D(x) y + x D(y)`` over imaginary units; 392 x 49.

    Unknown ``D[r, s]`` (column ``7 r + s``) is the ``e_{r+1}`` coefficient of
    ``D e_{s+1}``; ``D`` annihilates the unit.
    """
    mult = octonion_table()
    rows = []
    for a in range(1, 8):
        for b in range(1, 8):
            block = np.zeros((8, 7, 7))  # component c, unknown (r, s)
            # D(e_a e_b) = sum_t mult[a, b, t] D e_t  (t >= 1)
            for t in range(1, 8):
                if mult[a, b, t]:
                    block[1:, :, t - 1] += mult[a, b, t] * np.eye(7)
            # - D(e_a) e_b = - sum_r D[r, a] e_r e_b
            for r in range(1, 8):
                block[:, r - 1, a - 1] -= mult[r, b, :]
            # - e_a D(e_b)
            for r in range(1, 8):
                block[:, r - 1, b - 1] -= mult[a, r, :]
            rows.append(block.reshape(8, 49))
    return np.concatenate(rows)


def _g2_basis():
    import sympy

    A = sympy.Matrix(derivation_constraints().astype(int))
    null = A.nullspace()
    return np.array([np.array(v, dtype=float).reshape(7, 7) for v in null])


def raw_basis(family: str, l: int | None) -> np.ndarray:
    if family == "su":
        return _su_basis(l)
    if family == "so":
        return _so_basis(l)
    if family == "sp":
        return _sp_basis(l)
    if family == "g2":
        return _g2_basis()
    raise UnsupportedAlgebraError(f"unknown family {family!r}")


def expected_dim(family: str, l: int | None) -> int:
    return {"su": lambda: l * l - 1, "so": lambda: l * (l - 1) // 2,
            "sp": lambda: l * (2 * l + 1), "g2": lambda: 14}[family]()


def check_request(family, l, dim_cap=DEFAULT_DIM_CAP):
    if family not in FAMILIES:
        raise UnsupportedAlgebraError(f"unknown family {family!r}")
    if family != "g2":
        if l is None or int(l) != l:
            raise UnsupportedAlgebraError(f"{family} needs an integer rank parameter")
        if family == "su" and l < 2:
            raise UnsupportedAlgebraError("su(l) needs l >= 2")
        if family == "so":
            if l == 4:
                raise UnsupportedAlgebraError("so(4) is not simple")
            if l < 3:
                raise UnsupportedAlgebraError("so(l) needs l = 3 or l >= 5")
        if family == "sp" and l < 1:
            raise UnsupportedAlgebraError("sp(l) needs l >= 1")
    n = expected_dim(family, l)
    if n > dim_cap:
        raise UnsupportedAlgebraError(f"dim {n} exceeds cap {dim_cap}")


# ---------------------------------------------------------------- construction


def _flatten(mats):
    mats = np.asarray(mats)
    flat = mats.reshape(len(mats), -1)
    if np.iscomplexobj(flat):
        flat = np.concatenate([flat.real, flat.imag], axis=1)
    return flat


def structure_from_matrices(mats, tol=1e-10):
    """Structure constants of the span of ``mats`` under the commutator."""
    B = _flatten(mats)
    pinv = np.linalg.pinv(B.T)
    n = len(mats)
    c = np.zeros((n, n, n))
    worst = 0.0
    for i in range(n):
        comm = mats[i] @ mats - mats @ mats[i]
        flat = _flatten(comm)
        coef = flat @ pinv.T
        worst = max(worst, np.abs(coef @ B - flat).max())
        c[i] = coef
    if worst > tol:
        raise ValueError(f"span is not closed under the bracket (residual {worst:.2e})")
    return c


def killing_matrix(c) -> np.ndarray:
    """``B[i, j] = Tr(ad_i ad_j)`` for structure tensor ``c``."""
    ad = np.asarray(c).transpose(0, 2, 1)
    return np.einsum("ikm,jmk->ij", ad, ad)


def orthonormalize(c, order=None):
    """Gram-Schmidt against ``-Killing`` in raw-basis order.

    Returns ``(c_new, T)`` with ``e_a = sum_b T[b, a] raw_b``.  Two passes of
    modified Gram-Schmidt keep the result orthonormal to rounding.
    """
    G = -killing_matrix(c)
    n = G.shape[0]
    order = range(n) if order is None else order
    T = np.zeros((n, n))
    for a, idx in enumerate(order):
        v = np.zeros(n)
        v[idx] = 1.0
        for _ in range(2):
            for b in range(a):
                v -= (T[:, b] @ G @ v) * T[:, b]
        norm2 = v @ G @ v
        if norm2 <= 0:
            raise ValueError("Killing form is not negative definite on this basis")
        T[:, a] = v / np.sqrt(norm2)
    return transform_structure(c, T), T


def transform_structure(c, T):
    """Structure tensor in the basis ``e'_a = sum_b T[b, a] e_b``."""
    Tinv = np.linalg.inv(T)
    return np.einsum("ia,jb,ijm,km->abk", T, T, c, Tinv, optimize=True)


def build_algebra(family: str, l: int | None = None, *, dim_cap: int = DEFAULT_DIM_CAP) -> LieAlgebra:
    """Construct ``family(l)`` with an orthonormal basis for ``-Killing``.

    ``family`` is one of ``su``, ``so``, ``sp``, ``g2`` (``l`` ignored for g2).
    """
    check_request(family, l, dim_cap)
    if family == "g2":
        l = None
    mats = raw_basis(family, l)
    if len(mats) != expected_dim(family, l):
        raise RuntimeError(f"{family}: raw basis has {len(mats)} elements, expected {expected_dim(family, l)}")
    c_raw = structure_from_matrices(mats)
    c, T = orthonormalize(c_raw)
    ortho_mats = np.einsum("ba,bij->aij", T, mats)
    log = {"transform": T, "raw_killing": killing_matrix(c_raw)}
    return LieAlgebra(family, l, c, log, ortho_mats)


def parse_name(name: str) -> tuple[str, int | None]:
    """``"su3"`` -> ``("su", 3)``; ``"g2"`` -> ``("g2", None)``."""
    name = name.strip().lower().replace("(", "").replace(")", "")
    if name == "g2":
        return "g2", None
    for fam in ("su", "so", "sp"):
        if name.startswith(fam) and name[len(fam):].isdigit():
            return fam, int(name[len(fam):])
    raise UnsupportedAlgebraError(f"cannot parse algebra name {name!r}")


def algebra_from_name(name: str, **kw) -> LieAlgebra:
    return build_algebra(*parse_name(name), **kw)


def change_basis(g: LieAlgebra, Q) -> LieAlgebra:
    """Same algebra in the basis ``e'_a = sum_b Q[b, a] e_b`` (``Q`` orthogonal)."""
    Q = np.asarray(Q, dtype=float)
    if np.abs(Q.T @ Q - np.eye(g.dim_n)).max() > 1e-12:
        raise ValueError("change of basis must be orthogonal")
    c = transform_structure(g.structure_tensor, Q)
    mats = None if g.matrices is None else np.einsum("ba,bij->aij", Q, g.matrices)
    log = dict(g.killing_scale_log)
    if "transform" in log:
        log["transform"] = log["transform"] @ Q
    return LieAlgebra(g.family, g.rank_param, c, log, mats)


def random_orthogonal(n, seed) -> np.ndarray:
    from scipy.stats import ortho_group

    return ortho_group.rvs(n, random_state=np.random.default_rng(seed))


# ---------------------------------------------------------------- primitives


def _vec(g, X, name="X"):
    X = np.asarray(X)
    if X.shape != (g.dim_n,):
        raise ValueError(f"{name} must have length {g.dim_n}, got shape {X.shape}")
    return X


def bracket(g: LieAlgebra, X, Y) -> np.ndarray:
    X, Y = _vec(g, X), _vec(g, Y, "Y")
    return np.einsum("i,j,ijk->k", X, Y, g.structure_tensor)


def ad(g: LieAlgebra, X) -> np.ndarray:
    """Matrix of ``Z -> [X, Z]``."""
    X = _vec(g, X)
    return np.tensordot(X, g.ad_matrices, axes=1)


def killing(g: LieAlgebra, X, Y) -> float:
    """``Tr(ad_X ad_Y)``; equals ``-delta_ij`` on basis vectors."""
    return np.trace(ad(g, X) @ ad(g, Y))


def inner(A1, A2):
    """``<A1, A2> = Tr(A1 A2^T)`` on operators (conjugated for complex input)."""
    return np.sum(A1 * np.conj(A2))


def wedge(X, Y) -> np.ndarray:
    """``(X ^ Y) Z = <X, Z> Y - <Y, Z> X``."""
    X, Y = np.asarray(X), np.asarray(Y)
    return np.outer(Y, X) - np.outer(X, Y)


def casimir_residual(g: LieAlgebra) -> float:
    """Frobenius norm of ``sum_i ad_i^2 + I``."""
    a = g.ad_matrices
    return float(np.linalg.norm(np.einsum("ikm,imj->kj", a, a) + np.eye(g.dim_n)))


def coboundary(g: LieAlgebra, A) -> np.ndarray:
    """``-1/2 sum_i [A e_i, e_i]``."""
    A = np.asarray(A)
    if A.shape != (g.dim_n, g.dim_n):
        raise ValueError(f"operator must be {g.dim_n}x{g.dim_n}")
    return -0.5 * np.einsum("ai,aik->k", A, g.structure_tensor)


def project_ad(g: LieAlgebra, A):
    """Split ``A`` into its orthogonal projection onto ``ad(g)`` and the remainder."""
    A = np.asarray(A)
    if A.shape != (g.dim_n, g.dim_n):
        raise ValueError(f"operator must be {g.dim_n}x{g.dim_n}")
    onb = g.ad_onb
    coef = np.tensordot(onb, A, axes=([1, 2], [0, 1]))
    P = np.tensordot(coef, onb, axes=1)
    return P, A - P


# ---------------------------------------------------------------- checks


def jacobi_residual(g: LieAlgebra) -> float:
    c = g.structure_tensor
    cc = np.einsum("ijl,lkm->ijkm", c, c)
    total = cc + cc.transpose(1, 2, 0, 3) + cc.transpose(2, 0, 1, 3)
    return float(np.abs(total).max())


def antisymmetry_residual(g: LieAlgebra) -> float:
    c = g.structure_tensor
    return float(np.abs(c + c.transpose(1, 0, 2)).max())


def total_antisymmetry_residual(g: LieAlgebra) -> float:
    c = g.structure_tensor
    return float(max(np.abs(c + c.transpose(1, 0, 2)).max(), np.abs(c + c.transpose(0, 2, 1)).max()))


def orthonormality_residual(g: LieAlgebra) -> float:
    return float(np.abs(-killing_matrix(g.structure_tensor) - np.eye(g.dim_n)).max())


def ad_span_rank(g: LieAlgebra) -> int:
    a = g.ad_matrices.reshape(g.dim_n, -1)
    return matrix_rank(a @ a.T, RankPolicy())[0]


def identity_suite(g: LieAlgebra, tol: Tolerances | None = None, *, samples=100, seed=0) -> list[dict]:
    """Run the algebra invariants; one dict per check with ``name, value, tol, passed``."""
    tol = tol or Tolerances()
    rng = np.random.default_rng(seed)
    n = g.dim_n
    checks = []

    def record(name, value, bound):
        checks.append({"name": name, "value": float(value), "tol": float(bound),
                       "passed": bool(np.isfinite(value) and value <= bound)})

    record("antisymmetry", total_antisymmetry_residual(g), tol.jacobi)
    record("jacobi", jacobi_residual(g), tol.jacobi)
    record("orthonormality", orthonormality_residual(g), tol.orthonormality)
    record("casimir", casimir_residual(g), tol.casimir)
    worst_ad = worst_wedge = worst_pair = 0.0
    for _ in range(samples):
        X, Y = rng.standard_normal(n), rng.standard_normal(n)
        X /= np.linalg.norm(X)
        Y /= np.linalg.norm(Y)
        worst_ad = max(worst_ad, np.abs(coboundary(g, ad(g, X)) - 0.5 * X).max())
        worst_wedge = max(worst_wedge, np.abs(coboundary(g, wedge(X, Y)) - bracket(g, X, Y)).max())
        A = rng.standard_normal((n, n)) / n
        worst_pair = max(worst_pair, abs(coboundary(g, A) @ Y - 0.5 * inner(A, ad(g, Y))))
    record("coboundary_ad", worst_ad, tol.identity)
    record("coboundary_wedge", worst_wedge, tol.identity)
    record("coboundary_pairing", worst_pair, tol.identity)
    record("ad_injective", 0.0 if ad_span_rank(g) == n else np.inf, 0.0)
    return checks


# ---------------------------------------------------------------- JSON


def _tolerance_report(g):
    return {
        "jacobi": jacobi_residual(g),
        "orthonormality": orthonormality_residual(g),
        "casimir": casimir_residual(g),
        "antisymmetry": total_antisymmetry_residual(g),
    }


def to_json(g: LieAlgebra) -> str:
    """Lossless JSON document (floats are written as shortest round-trip reprs)."""
    doc = {
        "family": g.family,
        "l": g.rank_param,
        "n": g.dim_n,
        "c": g.structure_tensor.ravel(order="C").tolist(),
        "tolerance_report": _tolerance_report(g),
    }
    return json.dumps(doc)


def from_json(text: str) -> LieAlgebra:
    doc = json.loads(text)
    n = int(doc["n"])
    c = np.array(doc["c"], dtype=float)
    if c.size != n**3:
        raise ValueError(f"expected {n**3} structure constants, got {c.size}")
    return LieAlgebra(doc["family"], doc.get("l"), c.reshape(n, n, n))
