import numpy as np
import pytest
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from ifcompact.exprjet import parse_expr
from ifcompact.geometry import OFFSETS, GridSpec
from ifcompact.problem import ProblemSpec, builtin
from ifcompact.solver import (
    LinearSystem, SolverError, assemble, boundary_values, discretize, estimate_condition,
    full_field, interior_index, recover_gradient, solve, solve_problem,
)


def _spec(ap, am, up, um, psi="x^2 + y^2 - 1"):
    P = parse_expr
    return ProblemSpec("t", (-2.0, 2.0, -2.0, 2.0), P(psi), P(ap), P(am),
                       u_plus=P(up), u_minus=P(um))


def test_interior_ordering():
    g = GridSpec(0, 1, 0, 1, 4)
    ii, jj = interior_index(g)
    assert list(zip(ii[:4], jj[:4])) == [(1, 1), (2, 1), (3, 1), (1, 2)]


@pytest.mark.parametrize("ratio", [1e-3, 1.0, 1e4])
def test_constant_solution_is_reproduced(ratio):
    p = _spec(f"{ratio}*(2 + sin(x*y))", "1 + x^2", "5", "5")
    fields, _, info = solve_problem(p, GridSpec(-2, 2, -2, 2, 16))
    np.testing.assert_allclose(fields.u, 5.0, atol=1e-11)
    assert np.abs(fields.ux).max() < 1e-9 and np.abs(fields.uy).max() < 1e-9
    assert info["residual"] < 1e-12


def test_linear_solution_is_reproduced():
    p = _spec("3", "3", "x - 2*y", "x - 2*y", psi="x^4 + 2*y^4 - 1")
    fields, _, _ = solve_problem(p, GridSpec(-2, 2, -2, 2, 16), condition=False)
    X, Y = np.meshgrid(fields.grid.xs(), fields.grid.ys(), indexing="ij")
    np.testing.assert_allclose(fields.u, X - 2 * Y, atol=1e-11)
    np.testing.assert_allclose(fields.ux, 1.0, atol=1e-9)
    np.testing.assert_allclose(fields.uy, -2.0, atol=1e-9)


def test_direct_and_iterative_agree():
    p = builtin(1)
    grid = GridSpec(*p.rect, 32)
    direct, _, _ = solve_problem(p, grid, "direct", condition=False)
    itr, _, info = solve_problem(p, grid, "iterative", condition=False)
    assert info["iterations"] > 0
    assert np.abs(direct.u - itr.u).max() < 1e-8


def test_banded_solve_matches_sparse_solver():
    p = builtin(2)
    grid = GridSpec(*p.rect, 16)
    disc = discretize(p, grid)
    system = assemble(disc, boundary_values(p, grid))
    res = solve(system)
    ref = spsolve(system.matrix.tocsc(), system.rhs)
    np.testing.assert_allclose(res.u, ref, rtol=0, atol=1e-10 * np.abs(ref).max())
    assert res.residual < 1e-13


def _diag_system(values):
    grid = GridSpec(0, 1, 0, 1, 4)
    A = sp.csr_matrix(sp.diags(values))
    return LinearSystem(grid, A, np.ones(len(values)), interior_index(grid))


def test_condition_estimates():
    assert estimate_condition(_diag_system(np.ones(9))) == pytest.approx(1.0, rel=1e-10)
    vals = np.array([1, 10, 100, 3, 5, 7, 2, 4, 6], dtype=float)
    assert estimate_condition(_diag_system(vals)) == pytest.approx(100.0, rel=1e-6)


def test_singular_and_unknown_method():
    vals = np.ones(9)
    vals[3] = 0.0
    with pytest.raises(SolverError):
        solve(_diag_system(vals))
    with pytest.raises(SolverError):
        solve(_diag_system(vals), "iterative")
    with pytest.raises(ValueError):
        solve(_diag_system(np.ones(9)), "cholesky")


def test_boundary_folding():
    p = _spec("1", "1", "x + y", "x + y")
    grid = GridSpec(-2, 2, -2, 2, 8)
    disc = discretize(p, grid)
    gvals = boundary_values(p, grid)
    system = assemble(disc, gvals)
    # corner node (1, 1): five of its nine stencil points are boundary nodes
    k = 0
    assert system.matrix[k].nnz == 4
    lost = sum(disc.weights[k, o] * gvals[1 + a, 1 + b]
               for o, (a, b) in enumerate(OFFSETS)
               if 0 in (1 + a, 1 + b))
    assert system.rhs[k] == pytest.approx(disc.rhs[k] - lost)


def test_gradient_recovery_is_local():
    p = builtin(1)
    grid = GridSpec(*p.rect, 16)
    disc = discretize(p, grid)
    gvals = boundary_values(p, grid)
    u = np.random.default_rng(1).normal(size=grid.n_interior)
    base = recover_gradient(disc, full_field(grid, u, gvals))
    bumped = u.copy()
    ii, jj = interior_index(grid)
    k = np.nonzero((ii == 7) & (jj == 9))[0][0]
    bumped[k] += 1.0
    moved = recover_gradient(disc, full_field(grid, bumped, gvals))
    changed = np.argwhere((np.abs(moved.ux - base.ux) > 0) | (np.abs(moved.uy - base.uy) > 0)) + 1
    assert len(changed) > 0
    assert np.all(np.abs(changed - [7, 9]).max(axis=1) <= 1)


def test_minimum_principle_smoke():
    P = parse_expr
    p = ProblemSpec("mp", (-2.0, 2.0, -2.0, 2.0), P("x^2 + 2*y^2 - 1"), P("10 + x"), P("0.1"),
                    f_plus=P("1"), f_minus=P("1"), g1=P("0"), g2=P("0"), g=P("0"))
    fields, _, _ = solve_problem(p, GridSpec(*p.rect, 32), condition=False)
    assert fields.u.min() > -1e-10
    assert fields.interior_u().max() > 0
