import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fermionic_nls.errors import InvalidArgumentError, SingularSystemError
from fermionic_nls.grid_core import (
    TriDiagOperator,
    apply,
    build_grid,
    build_schrodinger,
    gram,
    grid_with_spacing,
    inner_product,
    laplacian,
    lowest_eigenpairs,
    solve_shifted,
    sturm_count,
)
from fermionic_nls.solitons import w_base, w_star


def test_build_grid_spacing_and_origin():
    g = build_grid(40, 1601)
    assert g.h == pytest.approx(0.05, abs=1e-15)
    assert 0.0 in g.x
    assert g.x[0] == -40 and g.x[-1] == 40


def test_build_grid_three_points():
    np.testing.assert_array_equal(build_grid(1, 3).x, [-1.0, 0.0, 1.0])


def test_build_grid_large():
    assert build_grid(450, 18001).h == pytest.approx(0.05, abs=1e-14)


@pytest.mark.parametrize("L, n", [(1, 4), (0, 5), (-2, 7), (1, 2.5)])
def test_build_grid_rejects(L, n):
    with pytest.raises(InvalidArgumentError):
        build_grid(L, n)


def test_grid_is_read_only():
    g = build_grid(1, 7)
    with pytest.raises(ValueError):
        g.x[0] = 3.0


def test_inner_product_soliton_norms():
    g = grid_with_spacing(40, 0.05)
    assert inner_product(w_base(g.x), w_base(g.x), g) == pytest.approx(4, abs=1e-6)
    assert inner_product(w_star(g.x), w_star(g.x), g) == pytest.approx(1, abs=1e-6)


def test_inner_product_constant():
    g = build_grid(1, 3)
    assert inner_product(np.ones(3), np.ones(3), g) == pytest.approx(2.0)


def test_inner_product_length_mismatch():
    with pytest.raises(InvalidArgumentError):
        inner_product(np.ones(3), np.ones(4), build_grid(1, 3))


def test_gram_is_symmetric():
    g = grid_with_spacing(5, 0.1)
    U = np.random.default_rng(0).normal(size=(2, g.n_points))
    S = gram(U, U, g)
    assert S[0, 1] == S[1, 0]


def test_laplacian_of_linear_and_quadratic():
    g = grid_with_spacing(10, 0.05)
    assert np.max(np.abs(apply(laplacian(g), g.x)[1:-1])) < 1e-9
    assert np.max(np.abs(apply(laplacian(g), g.x ** 2)[1:-1] + 2)) < 1e-8


def _star_defect(h):
    g = grid_with_spacing(80, h)
    ws = w_star(g.x)
    return np.max(np.abs(apply(build_schrodinger(1 / 16 - ws ** 2, g), ws))), g.h


def test_soliton_residual_is_second_order():
    r1, h1 = _star_defect(0.1)
    r2, h2 = _star_defect(0.05)
    assert r1 <= 0.01 * h1 ** 2 and r2 <= 0.01 * h2 ** 2
    assert r1 / r2 == pytest.approx(4, rel=0.1)


def test_operator_is_symmetric():
    g = grid_with_spacing(5, 0.1)
    op = build_schrodinger(np.random.default_rng(1).normal(size=g.n_points), g)
    assert op.symmetric
    D = op.dense()
    np.testing.assert_array_equal(D, D.T)


def test_nonsymmetric_flag():
    op = TriDiagOperator(np.ones(3), np.ones(2), sub_diagonal=np.array([1.0, 2.0]))
    assert not op.symmetric


def test_solve_shifted_zero_rhs():
    g = grid_with_spacing(5, 0.1)
    y = solve_shifted(laplacian(g), 1.0, np.zeros(g.n_points))
    assert np.all(y == 0)


def test_solve_shifted_round_trip():
    g = grid_with_spacing(10, 0.05)
    op = build_schrodinger(np.full(g.n_points, 0.3), g)
    u = np.random.default_rng(2).normal(size=g.n_points)
    y = solve_shifted(op, 0.7, apply(op, u) + 0.7 * u)
    assert np.max(np.abs(y - u)) < 1e-10


def test_solve_shifted_reproduces_star_profile():
    g = grid_with_spacing(80, 0.05)
    ws = w_star(g.x)
    second = (1 / 16 - ws ** 2) * ws
    y = solve_shifted(build_schrodinger(np.ones(g.n_points), g), 0.0, ws - second)
    assert np.max(np.abs(y - ws)) <= 0.05 * g.h ** 2


def test_solve_shifted_singular():
    op = TriDiagOperator(np.zeros(3), np.zeros(2))
    with pytest.raises(SingularSystemError):
        solve_shifted(op, 0.0, np.ones(3))


def test_particle_in_box():
    g = grid_with_spacing(40, 0.05)
    e = lowest_eigenpairs(laplacian(g), 1, g)[0].eigenvalue
    assert e == pytest.approx((np.pi / 80) ** 2, rel=0.01)


def test_eigen_anchor_single_well():
    g = grid_with_spacing(60, 0.05)
    ws = w_star(g.x)
    pair = lowest_eigenpairs(build_schrodinger(-ws ** 2, g), 1, g)[0]
    assert pair.eigenvalue == pytest.approx(-1 / 16, abs=1e-3)
    assert np.max(np.abs(pair.eigenvector - ws / np.sqrt(inner_product(ws, ws, g)))) < 1e-3
    assert inner_product(pair.eigenvector, pair.eigenvector, g) == pytest.approx(1, abs=1e-10)


def test_eigen_anchor_odd_mode():
    g = grid_with_spacing(60, 0.05)
    ws = w_star(g.x)
    pairs = lowest_eigenpairs(build_schrodinger(-3 * ws ** 2, g), 2, g)
    v = pairs[1].eigenvector
    assert pairs[1].eigenvalue == pytest.approx(-1 / 16, abs=1e-3)
    assert np.max(np.abs(v + v[::-1])) < 1e-8
    wp = -0.25 * np.tanh(g.x / 4) * ws
    c = inner_product(v, wp, g) / np.sqrt(inner_product(wp, wp, g))
    assert abs(c) > 0.999


def test_eigen_residuals_within_tolerance():
    g = grid_with_spacing(30, 0.05)
    op = build_schrodinger(-3 * w_star(g.x) ** 2, g)
    for pair in lowest_eigenpairs(op, 3, g):
        r = apply(op, pair.eigenvector) - pair.eigenvalue * pair.eigenvector
        assert np.max(np.abs(r)) <= 1e-9


def test_sturm_count_brackets_eigenvalues():
    g = grid_with_spacing(30, 0.05)
    op = build_schrodinger(-3 * w_star(g.x) ** 2, g)
    eigs = [p.eigenvalue for p in lowest_eigenpairs(op, 3, g)]
    assert [sturm_count(op, e + 1e-9) for e in eigs] == [1, 2, 3]
    assert sturm_count(op, eigs[0] - 1e-9) == 0


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=7, max_size=7),
       st.lists(st.floats(-5, 5), min_size=7, max_size=7))
def test_operator_symmetry_property(u, v):
    g = build_grid(1, 7)
    op = build_schrodinger(np.linspace(-1, 1, 7), g)
    u, v = np.array(u), np.array(v)
    lhs, rhs = np.dot(u, apply(op, v)), np.dot(apply(op, u), v)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.5, 50), st.integers(1, 200))
def test_grid_contains_origin_property(L, half):
    g = build_grid(L, 2 * half + 1)
    assert g.x[half] == 0.0
    assert g.weights.sum() == pytest.approx(2 * L, rel=1e-12)
