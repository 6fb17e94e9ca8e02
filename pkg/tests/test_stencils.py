import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ifcompact.exprjet import Jet2, Neg, jet_eval, low, ncoef, parse_expr
from ifcompact.geometry import OFFSETS, GridSpec, base_points_for, classify_points
from ifcompact.problem import ProblemSpec, builtin
from ifcompact.reduction import DataLayout, taylor_basis
from ifcompact.solver import discretize, interface_rows
from ifcompact.stencils import (
    CENTER, StencilDerivationError, irregular_gradient_rows, normalize_solution,
    polynomial_conditions, regular_degree_split, regular_gradient_rows,
    regular_gradient_weights, regular_gradient_weights_x, regular_rows,
    regular_solution_weights, swap_data_columns,
)

from oracles import OFF_K, OFF_L, sample_regular_points


def _const_derivs(A, K=3):
    ad = np.zeros(ncoef(K))
    ad[0] = A
    return ad


def _pattern(corner, edge, center):
    return np.array([{0: center, 1: edge, 2: corner}[abs(k) + abs(l)] for k, l in OFFSETS])


@pytest.mark.parametrize("A", [1.0, 0.01, 37.5])
def test_constant_coefficient_pattern(A):
    w = normalize_solution(regular_solution_weights(_const_derivs(A), 0.1))
    np.testing.assert_allclose(w, _pattern(1, 4, -20) / 20, rtol=1e-12)


@pytest.mark.parametrize("A", [1.0, 2.5])
def test_gradient_constants(A):
    w = regular_gradient_weights_x(_const_derivs(A), 0.05)
    idx = {off: n for n, off in enumerate(OFFSETS)}
    assert w[idx[(1, -1)]] == pytest.approx(24 * A ** 3, rel=1e-12)
    assert w[idx[(1, 0)]] == pytest.approx(96 * A ** 3, rel=1e-12)
    assert w[idx[(1, 1)]] == pytest.approx(24 * A ** 3, rel=1e-12)
    assert abs(w.sum()) <= 1e-12 * np.abs(w).max()


def test_gradient_y_is_transposed_x_for_symmetric_coefficient():
    a = parse_expr("2 + x*y + cos(x + y)")
    ad = jet_eval(a, (0.2, 0.2), 3).partials()
    wx = regular_gradient_weights(ad, 0.1, 0)
    wy = regular_gradient_weights(ad, 0.1, 1)
    transpose = [OFFSETS.index((l, k)) for k, l in OFFSETS]
    np.testing.assert_allclose(wy, wx[transpose], rtol=1e-12)


def _weights_as_h_polynomial(wfun, ad, M):
    hs = np.linspace(0.05, 0.3, M + 2)
    W = np.array([wfun(ad, h) for h in hs])
    return np.linalg.solve(np.vander(hs, M + 2, increasing=True), W).reshape(-1)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_explicit_weights_satisfy_order_conditions(n):
    """The explicit weights, read as polynomials in h, solve the generic
    polynomial order-condition system (solution rows and both gradient rows)."""
    p = builtin(n)
    for x, y, s in sample_regular_points(p, 20, 0.3, seed=10 + n):
        a = p.a_jet(s, (x, y), 4)
        ad = a.partials()
        for M, wfun, axis in ((4, regular_solution_weights, None),
                              (3, lambda d, h: regular_gradient_weights(d, h, 0), 0),
                              (3, lambda d, h: regular_gradient_weights(d, h, 1), 1)):
            Gu = regular_degree_split(taylor_basis(a.truncate(M), M))
            target = None
            if axis is not None:
                target = np.zeros((M + 2, len(low(M + 1))))
                target[1, low(M + 1).position(1 - axis, axis)] = 1.0
            A, b = polynomial_conditions(Gu, M, target)
            c = _weights_as_h_polynomial(wfun, ad, M)
            scale = np.abs(A).max() * np.abs(c).max()
            assert np.abs(A @ c - b).max() < 1e-9 * max(scale, 1.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 10.0), st.lists(st.floats(-1, 1), min_size=9, max_size=9),
       st.floats(0.005, 0.1))
def test_regular_rows_annihilate_constants(a0, rest, h):
    a = Jet2(np.array([a0] + rest), 3)
    w = regular_solution_weights(a.partials(), h)
    assert abs(w.sum()) <= 1e-9 * np.abs(w).max()


def _circle_problem(ap, am):
    P = parse_expr
    return ProblemSpec("c", (-2.0, 2.0, -2.0, 2.0), P("x^2 + y^2 - 1"), P(ap), P(am),
                       u_plus=P("x + 2*y"), u_minus=P("x + 2*y"))


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 2 * np.pi), st.floats(-0.7, 0.7), st.floats(-0.7, 0.7),
       st.floats(0.01, 0.1), st.sampled_from([1e-3, 1e-2, 1.0, 1e3, 1e4]))
def test_interface_rows_annihilate_constants(theta, v0, w0, h, ratio):
    p = _circle_problem(f"{ratio}*(2 + sin(x))", "2 + cos(y)")
    bx, by = np.array([np.cos(theta)]), np.array([np.sin(theta)])
    X, Y = bx + (v0 + OFF_K) * h, by + (w0 + OFF_L) * h
    mask = (X ** 2 + Y ** 2 - 1 >= 0)[None]
    rows = interface_rows(p, (bx, by), [v0], [w0], mask, mask[:, CENTER], h)
    w = rows.weights[0]
    assert abs(w.sum()) <= 1e-9 * np.abs(w).max()
    assert w[CENTER] < 0 and np.abs(w).max() == pytest.approx(1.0)


def test_derived_rows_annihilate_constants_on_grid():
    disc = discretize(builtin(1), GridSpec(-3, 3, -3, 3, 64))
    W = disc.weights
    assert np.all(np.abs(W.sum(axis=1)) <= 1e-9 * np.abs(W).max(axis=1))


def test_regular_gradient_exact_for_linear():
    A = 3.0
    aj = Jet2.constant(A, 4)
    ad = aj.partials()
    h = 0.1
    x0, y0, alpha, beta = 0.4, -0.3, 1.7, -0.6
    U = alpha * (x0 + OFF_K * h) + beta * (y0 + OFF_L * h)
    b3 = taylor_basis(aj.truncate(3), 3)
    for axis, want in ((0, alpha), (1, beta)):
        g = regular_gradient_rows(ad, b3, h, axis)
        assert (g.weights @ U - g.rhs @ np.zeros(ncoef(2))) / h == pytest.approx(want, abs=1e-12)
    sol = regular_rows(ad, taylor_basis(aj, 4), h)
    assert abs(sol.weights @ U) < 1e-13


@pytest.mark.parametrize("center_plus", [True, False])
def test_interface_gradient_exact_for_linear(center_plus):
    p = _circle_problem("2 + sin(x)*y", "2 + sin(x)*y")
    h = 0.05
    bx, by = np.array([0.6]), np.array([0.8])
    v0, w0 = (0.3, 0.2) if center_plus else (-0.3, -0.2)
    X, Y = bx + (v0 + OFF_K) * h, by + (w0 + OFF_L) * h
    mask = (X ** 2 + Y ** 2 - 1 >= 0)[None]
    assert mask[0, CENTER] == center_plus
    rows = interface_rows(p, (bx, by), [v0], [w0], mask, mask[:, CENTER], h)
    U = X + 2 * Y
    assert abs(rows.weights[0] @ U - rows.rhs[0]) < 1e-12
    for axis, want in ((0, 1.0), (1, 2.0)):
        got = (rows.grad_weights[axis, 0] @ U - rows.grad_rhs[axis, 0]) / h
        assert got == pytest.approx(want, abs=1e-10)


def test_swap_data_columns_is_involution():
    M = 2
    lay = DataLayout(M)
    rhs = np.random.default_rng(0).normal(size=(5, lay.size - lay.sizes[0]))
    once = swap_data_columns(rhs, M)
    np.testing.assert_array_equal(swap_data_columns(once, M), rhs)
    nf = lay.sizes[1]
    np.testing.assert_array_equal(once[:, :nf], rhs[:, nf:2 * nf])
    g1 = slice(2 * nf, 2 * nf + lay.sizes[3])
    np.testing.assert_array_equal(once[:, g1], -rhs[:, g1])
    np.testing.assert_array_equal(once[:, g1.stop:], rhs[:, g1.stop:])


def test_inconsistent_gradient_system_raises():
    M = 2
    lay = DataLayout(M)
    E = np.zeros((1, 9, lay.size))
    E[0, :, 0] = 1.0                      # only u^(0,0) is seen
    target = np.zeros((1, lay.size))
    target[0, 1] = 1.0                    # but u^(0,1) is requested
    with pytest.raises(StencilDerivationError):
        irregular_gradient_rows(E, target, M, 0.1)


def test_minus_side_rows_match_mirrored_problem():
    """Rows at minus-side nodes equal the rows of the explicitly mirrored
    problem, whose plus side is the original minus side."""
    p = builtin(6)
    q = ProblemSpec("mirror", p.rect, Neg(p.psi), p.a_minus, p.a_plus,
                    f_plus=p.f_minus, f_minus=p.f_plus, g1=Neg(p.g1), g2=p.g2, g=p.g)
    grid = GridSpec(*p.rect, 32)
    cls = classify_points(grid, p.psi)
    ii, jj, bx, by, v0, w0 = base_points_for(cls, p.psi)
    minus = ~cls.center_plus(ii, jj)
    assert minus.sum() > 10
    sel = np.nonzero(minus)[0]
    base = (bx[sel], by[sel])
    mask = cls.plus_mask(ii[sel], jj[sel])
    rp = interface_rows(p, base, v0[sel], w0[sel], mask, np.zeros(len(sel), bool), grid.h)
    rq = interface_rows(q, base, v0[sel], w0[sel], ~mask, np.ones(len(sel), bool), grid.h)
    np.testing.assert_allclose(rp.grad_weights, rq.grad_weights, atol=1e-10)
    scale = np.abs(rp.grad_rhs).max()
    np.testing.assert_allclose(rp.grad_rhs, rq.grad_rhs, atol=1e-10 * scale)
    np.testing.assert_allclose(rp.weights, rq.weights, atol=1e-10)
    np.testing.assert_allclose(rp.rhs, rq.rhs, atol=1e-10 * np.abs(rp.rhs).max())
