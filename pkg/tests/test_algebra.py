import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from weylhom.algebra import (
    LieAlgebra,
    Tolerances,
    UnsupportedAlgebraError,
    ad,
    ad_span_rank,
    algebra_from_name,
    bracket,
    build_algebra,
    casimir_residual,
    change_basis,
    coboundary,
    derivation_constraints,
    from_json,
    identity_suite,
    inner,
    jacobi_residual,
    killing,
    orthonormality_residual,
    parse_name,
    project_ad,
    random_orthogonal,
    raw_basis,
    to_json,
    total_antisymmetry_residual,
    wedge,
)
from weylhom.numerics import matrix_rank

ALL = ["su2", "su3", "su4", "so3", "so5", "so6", "so7", "sp1", "sp2", "sp3", "g2"]
DIMS = {"su2": 3, "su3": 8, "su4": 15, "so3": 3, "so5": 10, "so6": 15, "so7": 21,
        "sp1": 3, "sp2": 10, "sp3": 21, "g2": 14}


@pytest.mark.parametrize("name", ALL)
def test_dimension_and_invariants(name, get_algebra):
    g = get_algebra(name)
    assert g.dim_n == DIMS[name]
    assert total_antisymmetry_residual(g) <= 1e-12
    assert jacobi_residual(g) <= 1e-12
    assert orthonormality_residual(g) <= 1e-10
    assert casimir_residual(g) <= 1e-9
    assert ad_span_rank(g) == g.dim_n


@pytest.mark.parametrize("family,l", [("so", 4), ("so", 2), ("su", 1), ("sp", 0), ("e", 6), ("su", 9)])
def test_rejected_requests(family, l):
    with pytest.raises(UnsupportedAlgebraError):
        build_algebra(family, l)


def test_dim_cap_is_configurable():
    assert build_algebra("su", 9, dim_cap=80).dim_n == 80


def test_parse_name():
    assert parse_name("su(3)") == ("su", 3)
    assert parse_name("G2") == ("g2", None)
    with pytest.raises(UnsupportedAlgebraError):
        parse_name("e8")


def test_below_hypothesis_flag(get_algebra):
    assert get_algebra("su2").below_hypothesis
    assert not get_algebra("su3").below_hypothesis


def test_construction_is_deterministic():
    a, b = build_algebra("sp", 2), build_algebra("sp", 2)
    assert np.array_equal(a.structure_tensor, b.structure_tensor)


def test_structure_tensor_is_read_only(get_algebra):
    with pytest.raises(ValueError):
        get_algebra("su3").structure_tensor[0, 0, 0] = 1.0


def test_g2_constraint_system_has_nullity_14():
    A = derivation_constraints()
    assert A.shape == (392, 49)
    assert 49 - matrix_rank(A)[0] == 14


def test_bracket_self_is_zero(get_algebra):
    g = get_algebra("g2")
    e = np.eye(g.dim_n)
    assert np.all(bracket(g, e[0], e[0]) == 0)


@pytest.mark.parametrize("name", ["su2", "sp2", "so5"])
def test_bracket_matches_matrix_commutator(name, get_algebra):
    g = get_algebra(name)
    M = g.matrices
    B = M.reshape(len(M), -1)
    for i, j in [(0, 1), (1, 2), (0, 2)]:
        comm = (M[i] @ M[j] - M[j] @ M[i]).ravel()
        coef, *_ = np.linalg.lstsq(B.T, comm, rcond=None)
        e = np.eye(g.dim_n)
        assert np.abs(bracket(g, e[i], e[j]) - coef.real).max() < 1e-12


def test_jacobi_on_random_triples(get_algebra):
    g = get_algebra("g2")
    rng = np.random.default_rng(0)
    for _ in range(100):
        X, Y, Z = rng.standard_normal((3, g.dim_n)) / np.sqrt(g.dim_n)
        r = bracket(g, X, bracket(g, Y, Z)) + bracket(g, Y, bracket(g, Z, X)) + bracket(g, Z, bracket(g, X, Y))
        assert np.abs(r).max() < 1e-12


def test_dimension_mismatch(get_algebra):
    g = get_algebra("su3")
    with pytest.raises(ValueError):
        bracket(g, np.zeros(3), np.zeros(8))
    with pytest.raises(ValueError):
        coboundary(g, np.zeros((3, 3)))


def test_ad_properties(get_algebra):
    g = get_algebra("su3")
    assert np.all(ad(g, np.zeros(8)) == 0)
    rng = np.random.default_rng(1)
    X, Y, Z = rng.standard_normal((3, 8))
    A = ad(g, X)
    assert abs((A @ Y) @ Z + Y @ (A @ Z)) < 1e-12
    assert np.allclose(A @ Y, bracket(g, X, Y), atol=1e-14)
    # generic centralizer is a Cartan subalgebra of dimension 2
    assert matrix_rank(A)[0] == 6


def test_killing_orthonormal(get_algebra):
    g = get_algebra("sp2")
    e = np.eye(g.dim_n)
    assert abs(killing(g, e[3], e[3]) + 1) < 1e-12
    assert abs(killing(g, e[3], e[4])) < 1e-12


def test_raw_killing_su2_brute_force(get_algebra):
    raw = raw_basis("su", 2)
    H = raw[0]
    assert np.allclose(H, np.diag([1j, -1j]))
    B = raw.reshape(3, -1)
    adH = np.array([np.linalg.lstsq(B.T, (H @ m - m @ H).ravel(), rcond=None)[0] for m in raw]).T.real
    brute = np.trace(adH @ adH)
    assert abs(brute + 8) < 1e-12
    assert abs(get_algebra("su2").killing_scale_log["raw_killing"][0, 0] - brute) < 1e-12


def test_coboundary_identities(get_algebra):
    g = get_algebra("su3")
    rng = np.random.default_rng(2)
    for _ in range(20):
        X, Y = rng.standard_normal((2, 8))
        assert np.abs(coboundary(g, ad(g, X)) - 0.5 * X).max() < 1e-12
        assert np.abs(coboundary(g, wedge(X, Y)) - bracket(g, X, Y)).max() < 1e-12
        S = rng.standard_normal((8, 8))
        S = S + S.T  # symmetric operators are orthogonal to ad(g)
        assert np.abs(coboundary(g, S)).max() < 1e-12


def test_wedge_convention():
    rng = np.random.default_rng(3)
    X, Y, Z = rng.standard_normal((3, 6))
    assert np.allclose(wedge(X, Y) @ Z, (X @ Z) * Y - (Y @ Z) * X)


def test_project_ad(get_algebra):
    g = get_algebra("sp2")
    rng = np.random.default_rng(4)
    X, Y = rng.standard_normal((2, g.dim_n))
    P, Q = project_ad(g, ad(g, X))
    assert np.abs(P - ad(g, X)).max() < 1e-12 and np.abs(Q).max() < 1e-12
    A = rng.standard_normal((g.dim_n, g.dim_n))
    P, Q = project_ad(g, A)
    assert abs(inner(P, Q)) < 1e-10
    P, Q = project_ad(g, wedge(X, Y))
    assert np.abs(coboundary(g, Q)).max() < 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["su3", "g2", "so5"]))
def test_coboundary_pairing(seed, name):
    g = algebra_from_name(name) if name != "g2" else _g2()
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((g.dim_n, g.dim_n))
    Y = rng.standard_normal(g.dim_n)
    assert abs(coboundary(g, A) @ Y - 0.5 * inner(A, ad(g, Y))) < 1e-10 * (1 + np.abs(A).max() * np.abs(Y).max())


_G2 = []


def _g2():
    if not _G2:
        _G2.append(algebra_from_name("g2"))
    return _G2[0]


@pytest.mark.parametrize("name", ["su3", "g2"])
def test_identity_suite_passes(name, get_algebra):
    checks = identity_suite(get_algebra(name))
    assert all(c["passed"] for c in checks), checks


def test_identity_suite_detects_corruption(get_algebra):
    g = get_algebra("su3")
    c = g.structure_tensor.copy()
    c[0, 3, 4] += 1e-3
    c[3, 0, 4] -= 1e-3
    bad = LieAlgebra("su", 3, c)
    failed = [r["name"] for r in identity_suite(bad) if not r["passed"]]
    assert "jacobi" in failed


def test_json_round_trip_lossless(get_algebra):
    g = get_algebra("g2")
    h = from_json(to_json(g))
    assert np.array_equal(g.structure_tensor, h.structure_tensor)
    assert h.name == "g2"


def test_change_basis_preserves_invariants(get_algebra):
    g = get_algebra("su3")
    h = change_basis(g, random_orthogonal(8, 7))
    assert jacobi_residual(h) < 1e-12 and orthonormality_residual(h) < 1e-10
    with pytest.raises(ValueError):
        change_basis(g, 2 * np.eye(8))


def test_tolerance_override():
    t = Tolerances().override(jacobi=1e-6)
    assert t.jacobi == 1e-6 and t.casimir == 1e-9
    with pytest.raises(KeyError):
        Tolerances().override(bogus=1)
