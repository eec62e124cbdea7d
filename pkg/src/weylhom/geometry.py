"""Curvature of the metrics

    ds^2 = (f(x_1, w) dw)^2 + sum_i (dx_i + sum_j D_ij x_j dw)^2

with ``f = a e^{lam x} + b e^{-lam x}`` (eps = +1) or
``f = a cos(lam x) + b sin(lam x)`` (eps = -1) and constant skew ``D``.
These are curvature homogeneous, modeled on ``M^2(kappa) x R^{n-2}`` with
``kappa = -eps lam^2``, but not locally symmetric when ``D_1i != 0``.

Coordinates are ``(w, x_1, ..., x_{n-1})``; ``w`` has index 0.  Sign
conventions: ``R(X, Y) = [nabla_X, nabla_Y] - nabla_[X,Y]``,
``R_hijk = <R(e_h, e_i) e_j, e_k>`` (so ``R_0110`` is the sectional curvature
of the ``(w, x_1)`` plane) and ``Ric_jk = sum_h R_hjkh``.  Tensor components
are reported in the orthonormal frame from Gram-Schmidt on
``d_1, ..., d_{n-1}, d_w`` (in that order), relabelled so frame index ``a``
comes from coordinate index ``a``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

AB_FAMILIES = ("const", "sine")


class DomainError(ValueError):
    pass


def _ab(family, w):
    """``(a, a', a'', b, b', b'')`` at ``w``."""
    if family == "const":
        return 1.0, 0.0, 0.0, 1.0, 0.0, 0.0
    if family == "sine":
        return 1.0, 0.0, 0.0, 2.0 + np.sin(w), np.cos(w), -np.sin(w)
    raise ValueError(f"unknown a/b family {family!r}")


def default_D(n):
    D = np.zeros((n - 1, n - 1))
    D[0, 1], D[1, 0] = 1.0, -1.0
    return D


@dataclass(frozen=True, eq=False)
class MetricParams:
    n: int = 5
    lam: float = 1.0
    eps: int = 1
    D: np.ndarray = None
    ab_family: str = "const"
    scale: float = 1.0  # metric is multiplied by scale**2
    f_floor: float = 0.1

    def __post_init__(self):
        if self.n < 4:
            raise ValueError("n must be at least 4")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.eps not in (1, -1):
            raise ValueError("eps must be +1 or -1")
        if self.ab_family not in AB_FAMILIES:
            raise ValueError(f"ab_family must be one of {AB_FAMILIES}")
        D = default_D(self.n) if self.D is None else np.array(self.D, dtype=float)
        if D.shape != (self.n - 1, self.n - 1):
            raise ValueError(f"D must be {(self.n - 1, self.n - 1)}")
        if np.abs(D + D.T).max() > 0:
            raise ValueError("D must be skew-symmetric")
        D.setflags(write=False)
        object.__setattr__(self, "D", D)

    @property
    def kappa(self) -> float:
        """Curvature of the model ``M^2(kappa)`` (before the constant rescaling)."""
        return -self.eps * self.lam**2

    def to_dict(self):
        return {"n": self.n, "lambda": self.lam, "epsilon": self.eps, "D": self.D.tolist(),
                "ab_family": self.ab_family, "scale": self.scale}


def f_derivatives(p: MetricParams, x1, w):
    """``f`` and its partials ``(f, f_x, f_w, f_xx, f_xw, f_ww)``."""
    a, da, dda, b, db, ddb = _ab(p.ab_family, w)
    lam = p.lam
    if p.eps == 1:
        u, v = np.exp(lam * x1), np.exp(-lam * x1)
        f = a * u + b * v
        fx = lam * (a * u - b * v)
        fxx = lam**2 * f
        fw = da * u + db * v
        fxw = lam * (da * u - db * v)
        fww = dda * u + ddb * v
    else:
        u, v = np.cos(lam * x1), np.sin(lam * x1)
        f = a * u + b * v
        fx = lam * (-a * v + b * u)
        fxx = -(lam**2) * f
        fw = da * u + db * v
        fxw = lam * (-da * v + db * u)
        fww = dda * u + ddb * v
    return f, fx, fw, fxx, fxw, fww


def _point(p, point):
    point = np.asarray(point, dtype=float)
    if point.shape != (p.n,):
        raise ValueError(f"point must have {p.n} coordinates")
    f = f_derivatives(p, point[1], point[0])[0]
    if abs(f) < p.f_floor:
        raise DomainError(f"|f| = {abs(f):.3g} below floor {p.f_floor} at {point.tolist()}")
    return point


def metric_at(p: MetricParams, point) -> np.ndarray:
    point = _point(p, point)
    return _metric(p, point)


def _metric(p, point):
    n = p.n
    x = point[1:]
    Dx = p.D @ x
    f = f_derivatives(p, point[1], point[0])[0]
    g = np.eye(n)
    g[0, 0] = f * f + Dx @ Dx
    g[0, 1:] = g[1:, 0] = Dx
    return p.scale**2 * g


def metric_derivatives(p: MetricParams, point):
    """Closed-form ``dg[m, a, b] = d_m g_ab`` and ``ddg[m, l, a, b]``."""
    n = p.n
    point = np.asarray(point, dtype=float)
    x = point[1:]
    D = p.D
    Dx = D @ x
    f, fx, fw, fxx, fxw, fww = f_derivatives(p, point[1], point[0])
    dg = np.zeros((n, n, n))
    dg[0, 0, 0] = 2 * f * fw
    dg[1, 0, 0] += 2 * f * fx
    dg[1:, 0, 0] += 2 * D.T @ Dx
    dg[1:, 0, 1:] = D.T
    dg[1:, 1:, 0] = D.T
    ddg = np.zeros((n, n, n, n))
    ddg[0, 0, 0, 0] = 2 * (fw * fw + f * fww)
    ddg[0, 1, 0, 0] = ddg[1, 0, 0, 0] = 2 * (fw * fx + f * fxw)
    ddg[1, 1, 0, 0] = 2 * (fx * fx + f * fxx)
    ddg[1:, 1:, 0, 0] += 2 * D.T @ D
    s2 = p.scale**2
    return s2 * dg, s2 * ddg


def finite_difference_derivatives(p: MetricParams, point, h=1e-4):
    """Central differences of the metric with one Richardson step."""
    n = p.n
    point = np.asarray(point, dtype=float)
    E = np.eye(n)

    def first(h):
        return np.array([(_metric(p, point + h * E[m]) - _metric(p, point - h * E[m])) / (2 * h)
                         for m in range(n)])

    def second(h):
        out = np.zeros((n, n, n, n))
        g0 = _metric(p, point)
        for m in range(n):
            for l in range(m, n):
                if m == l:
                    val = (_metric(p, point + h * E[m]) - 2 * g0 + _metric(p, point - h * E[m])) / h**2
                else:
                    val = (_metric(p, point + h * (E[m] + E[l])) - _metric(p, point + h * (E[m] - E[l]))
                           - _metric(p, point - h * (E[m] - E[l])) + _metric(p, point - h * (E[m] + E[l]))) / (4 * h * h)
                out[m, l] = out[l, m] = val
        return out

    dg = (4 * first(h / 2) - first(h)) / 3
    ddg = (4 * second(h / 2) - second(h)) / 3
    return dg, ddg


def orthonormal_frame(g) -> np.ndarray:
    """Columns are frame vectors in coordinates; Gram-Schmidt order 1..n-1 then 0."""
    n = g.shape[0]
    order = list(range(1, n)) + [0]
    E = np.zeros((n, n))
    done = []
    for a in order:
        v = np.zeros(n)
        v[a] = 1.0
        for _ in range(2):
            for b in done:
                v -= (E[:, b] @ g @ v) * E[:, b]
        E[:, a] = v / np.sqrt(v @ g @ v)
        done.append(a)
    return E


@dataclass
class CurvatureData:
    point: np.ndarray
    metric: np.ndarray
    christoffel: np.ndarray  # Gamma[k, i, j], coordinates
    frame: np.ndarray
    riemann: np.ndarray  # frame components R_hijk
    ricci: np.ndarray
    scal: float
    rho: np.ndarray
    weyl: np.ndarray
    riemann_coord: np.ndarray = field(repr=False, default=None)


def christoffel(g, dg):
    ginv = np.linalg.inv(g)
    lower = 0.5 * (dg.transpose(1, 0, 2) + dg.transpose(1, 2, 0) - dg)  # [l, i, j]
    return np.einsum("kl,lij->kij", ginv, lower)


def curvature_from_derivatives(g, dg, ddg, point=None) -> CurvatureData:
    n = g.shape[0]
    ginv = np.linalg.inv(g)
    lower = 0.5 * (dg.transpose(1, 0, 2) + dg.transpose(1, 2, 0) - dg)
    Gam = np.einsum("kl,lij->kij", ginv, lower)
    # d_m Gamma^k_ij
    dginv = -np.einsum("ka,mab,bl->mkl", ginv, dg, ginv)
    dlower = 0.5 * (ddg.transpose(0, 2, 1, 3) + ddg.transpose(0, 2, 3, 1) - ddg)  # [m, l, i, j]
    dGam = np.einsum("mkl,lij->mkij", dginv, lower) + np.einsum("kl,mlij->mkij", ginv, dlower)
    # R^l_{ijk}: R(d_i, d_j) d_k = R^l_ijk d_l
    Rup = (np.einsum("iljk->lijk", dGam) - np.einsum("jlik->lijk", dGam)
           + np.einsum("lim,mjk->lijk", Gam, Gam) - np.einsum("ljm,mik->lijk", Gam, Gam))
    Rcoord = np.einsum("lm,mijk->ijkl", g, Rup)
    E = orthonormal_frame(g)
    R = np.einsum("ia,jb,kc,ld,ijkl->abcd", E, E, E, E, Rcoord, optimize=True)
    ric = np.einsum("hjkh->jk", R)
    scal = float(np.trace(ric))
    rho = ric / (n - 2) - scal / (2 * (n - 1) * (n - 2)) * np.eye(n)
    W = R + kulkarni_nomizu(rho)
    return CurvatureData(None if point is None else np.asarray(point), g, Gam, E, R, ric, scal, rho, W, Rcoord)


def kulkarni_nomizu(rho) -> np.ndarray:
    """Components of ``(rho X) ^ Y + X ^ (rho Y)`` in an orthonormal frame.

    Under the ``R_hijk`` convention above, ``R + kulkarni_nomizu(rho)`` is the
    totally trace-free part of ``R``.
    """
    n = rho.shape[0]
    I = np.eye(n)
    return (np.einsum("hj,ik->hijk", rho, I) - np.einsum("ij,hk->hijk", I, rho)
            + np.einsum("hj,ik->hijk", I, rho) - np.einsum("ij,hk->hijk", rho, I))


def curvature_at(p: MetricParams, point) -> CurvatureData:
    """Analytic curvature pipeline at ``point``."""
    point = _point(p, point)
    g = _metric(p, point)
    dg, ddg = metric_derivatives(p, point)
    return curvature_from_derivatives(g, dg, ddg, point)


def curvature_fd(p: MetricParams, point, h=1e-4) -> CurvatureData:
    """Same pipeline fed with finite-difference metric derivatives."""
    point = _point(p, point)
    dg, ddg = finite_difference_derivatives(p, point, h)
    return curvature_from_derivatives(_metric(p, point), dg, ddg, point)


# ---------------------------------------------------------------- bivector operators


def bivector_operator(T) -> np.ndarray:
    """Matrix on ``Lambda^2`` with entries ``T[h, i, k, j]`` for pairs ``(h<i), (j<k)``."""
    n = T.shape[0]
    pairs = list(combinations(range(n), 2))
    h, i = np.array(pairs).T
    return T[h[:, None], i[:, None], i[None, :], h[None, :]]


def curvature_spectrum(p: MetricParams, point) -> np.ndarray:
    """Eigenvalues of the curvature operator, sorted by decreasing magnitude."""
    R = curvature_at(p, point).riemann
    w = np.linalg.eigvalsh(bivector_operator(R))
    return w[np.argsort(-np.abs(w), kind="stable")]


def normalized_weyl_spectrum(W) -> np.ndarray:
    op = bivector_operator(W)
    norm = np.linalg.norm(op)
    if norm < 1e-12:
        raise DomainError("Weyl tensor vanishes")
    return np.sort(np.linalg.svd(op / norm, compute_uv=False))[::-1]


def weyl_homogeneity_certificate(p: MetricParams, points) -> float:
    """Largest pairwise deviation of the normalized Weyl singular values."""
    points = list(points)
    if len(points) < 1:
        raise ValueError("need at least one point")
    spectra = np.array([normalized_weyl_spectrum(curvature_at(p, x).weyl) for x in points])
    return float(np.abs(spectra[:, None, :] - spectra[None, :, :]).max())


# ---------------------------------------------------------------- nabla R


def _frame_field(p, point):
    return orthonormal_frame(_metric(p, point))


def _richardson_derivative(F, h):
    d1 = (F(h) - F(-h)) / (2 * h)
    d2 = (F(h / 2) - F(-h / 2)) / h
    return (4 * d2 - d1) / 3


def connection_coefficients(p: MetricParams, point, h=1e-4) -> np.ndarray:
    """``omega[a, b, c] = <nabla_{e_a} e_b, e_c>`` in the orthonormal frame."""
    point = np.asarray(point, dtype=float)
    g = _metric(p, point)
    dg, _ = metric_derivatives(p, point)
    Gam = christoffel(g, dg)
    E = orthonormal_frame(g)
    n = p.n
    dE = np.array([_richardson_derivative(lambda t, m=m: _frame_field(p, point + t * np.eye(n)[m]), h)
                   for m in range(n)])  # [m, k, b]
    # nabla_{e_a} e_b = e_a^m (d_m e_b^k + Gamma^k_mj e_b^j) d_k
    cov = np.einsum("ma,mkb->akb", E, dE) + np.einsum("ma,kmj,jb->akb", E, Gam, E)
    return np.einsum("akb,kl,lc->abc", cov, g, E)


def nabla_R(p: MetricParams, point, direction: int, h=1e-3) -> np.ndarray:
    """Frame components of ``nabla_{e_direction} R``.

    Directional derivative of frame components along ``e_direction`` by
    central differences (one Richardson step), plus connection terms.
    """
    point = _point(p, point)
    R = curvature_at(p, point).riemann
    e = _frame_field(p, point)[:, direction]
    dR = _richardson_derivative(lambda t: curvature_at(p, point + t * e).riemann, h)
    om = connection_coefficients(p, point)[direction]  # om[b, m]
    return dR - (np.einsum("am,mbcd->abcd", om, R) + np.einsum("bm,amcd->abcd", om, R)
                 + np.einsum("cm,abmd->abcd", om, R) + np.einsum("dm,abcm->abcd", om, R))


def nabla_R_coordinates(p: MetricParams, point) -> np.ndarray:
    """Coordinate components ``(nabla_{d_w} R)(d_a, d_b, d_c, d_d)``."""
    point = _point(p, point)
    E = _frame_field(p, point)
    Einv = np.linalg.inv(E)  # coordinate vector d_a = sum_b Einv[b, a] e_b
    frame = np.einsum("k,kabcd->abcd", Einv[:, 0], np.array([nabla_R(p, point, k) for k in range(p.n)]))
    return np.einsum("ai,bj,ck,dl,abcd->ijkl", Einv, Einv, Einv, Einv, frame, optimize=True)


def nabla_R_obstruction(p: MetricParams, point, i: int):
    """``(lhs, rhs)``: the coordinate component ``nabla_w R_{w 1 w i}`` and ``kappa f^2 D_1i``.

    In the orthonormal frame the same component equals ``kappa D_1i / f`` at
    points where ``D x = 0``; each ``d_w`` slot contributes a factor ``f``.
    """
    if not 2 <= i <= p.n - 1:
        raise ValueError(f"i must be in 2..{p.n - 1}")
    point = _point(p, point)
    lhs = float(nabla_R_coordinates(p, point)[0, 1, 0, i])
    f = f_derivatives(p, point[1], point[0])[0]
    rhs = p.kappa * f * f * p.D[0, i - 1]
    return lhs, float(rhs)


def sample_points(p: MetricParams, count, seed=0, box=1.0):
    """Uniform points in ``[-box, box]^n`` meeting the ``|f|`` floor; returns (kept, excluded)."""
    rng = np.random.default_rng(seed)
    kept, excluded = [], []
    tries = 0
    while len(kept) < count and tries < 100 * count:
        x = rng.uniform(-box, box, p.n)
        tries += 1
        f = f_derivatives(p, x[1], x[0])[0]
        (kept if abs(f) >= p.f_floor else excluded).append(x)
    return np.array(kept), np.array(excluded).reshape(-1, p.n)


def curvature_invariants(cd: CurvatureData) -> dict:
    """Largest violations of the algebraic curvature identities and Weyl tracelessness."""
    R, W = cd.riemann, cd.weyl
    return {
        "skew_12": float(np.abs(R + R.transpose(1, 0, 2, 3)).max()),
        "skew_34": float(np.abs(R + R.transpose(0, 1, 3, 2)).max()),
        "pair_symmetry": float(np.abs(R - R.transpose(2, 3, 0, 1)).max()),
        "first_bianchi": float(np.abs(R + R.transpose(1, 2, 0, 3) + R.transpose(2, 0, 1, 3)).max()),
        "weyl_trace": float(np.abs(np.einsum("hjkh->jk", W)).max()),
    }


def geometry_report(p: MetricParams, count=20, seed=0, obstruction_index=2) -> dict:
    """Spectrum, Weyl certificate and obstruction over seeded random points."""
    points, excluded = sample_points(p, count, seed)
    if len(points) < 2:
        raise DomainError("fewer than two points satisfy the domain floor")
    model = np.zeros(p.n * (p.n - 1) // 2)
    model[0] = p.kappa * p.scale**-2
    spectra = np.array([curvature_spectrum(p, x) for x in points])
    samples = []
    for x in points:
        lhs, rhs = nabla_R_obstruction(p, x, obstruction_index)
        samples.append({"point": x.tolist(), "i": obstruction_index, "lhs": lhs, "rhs": rhs})
    try:
        cert = weyl_homogeneity_certificate(p, points)
    except DomainError:
        cert = None
    return {
        "params": p.to_dict(),
        "points": points.tolist(),
        "excluded_points": len(excluded),
        "kappa": p.kappa,
        "spectrum": spectra[0].tolist(),
        "spectrum_deviation": float(np.abs(spectra - model).max()),
        "weyl_certificate": cert,
        "obstruction_samples": samples,
    }
