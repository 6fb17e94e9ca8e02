"""Discretization, assembly, linear solves and gradient recovery."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import lapack
from scipy.sparse.linalg import LinearOperator, bicgstab

from .exprjet import jet_eval, ncoef
from .geometry import (OFFSETS, Classification, GridSpec, LocalParam, base_points_for,
                       classify_points, curve_tables, local_param)
from .problem import ProblemSpec
from .reduction import TaylorBasis, TransmissionMap, taylor_basis, transmission
from .stencils import (StencilDerivationError, StencilRows, gradient_target, interface_matrix,
                       irregular_gradient_rows, irregular_rows, regular_gradient_rows,
                       regular_rows, swap_data_columns)

log = logging.getLogger(__name__)

M_REGULAR = 4
M_REGULAR_GRADIENT = 3
M_IRREGULAR = 2


class SolverError(RuntimeError):
    pass


@dataclass
class Discretization:
    """Rows for every interior node, with data already contracted.

    Arrays are indexed by the interior node order of ``grid`` (x fastest):
    ``n = (j - 1) (N1 - 1) + (i - 1)``.
    """
    grid: GridSpec
    cls: Classification
    weights: np.ndarray           # (N, 9) solution rows
    rhs: np.ndarray               # (N,) data part of the solution rows
    grad_weights: np.ndarray      # (2, N, 9)
    grad_rhs: np.ndarray          # (2, N)
    debug: dict = field(default_factory=dict)


def interior_index(grid: GridSpec):
    """Node coordinates (i, j) of the interior unknowns in solver order."""
    j, i = np.meshgrid(np.arange(1, grid.N2), np.arange(1, grid.N1), indexing="ij")
    return i.ravel(), j.ravel()


def _side_split(sides):
    return [(s, np.nonzero(sides == s)[0]) for s in (1, -1) if np.any(sides == s)]


def discretize(problem: ProblemSpec, grid: GridSpec, debug: bool = False) -> Discretization:
    cls = classify_points(grid, problem.psi)
    ii, jj = interior_index(grid)
    N = len(ii)
    h = grid.h
    W = np.zeros((N, 9))
    R = np.zeros(N)
    GW = np.zeros((2, N, 9))
    GR = np.zeros((2, N))
    irr = cls.irregular[ii - 1, jj - 1]
    side = cls.side[ii - 1, jj - 1]
    dbg: dict = {}

    # regular nodes: explicit formulas, vectorized per side
    for s, idx in _side_split(np.where(irr, 0, side)):
        xs, ys = grid.node(ii[idx], jj[idx])
        aj = problem.a_jet(s, (xs, ys), M_REGULAR)
        ad = aj.partials()
        fd = problem.f_jet(s, (xs, ys), M_REGULAR - 1).partials()
        rows = regular_rows(ad, taylor_basis(aj, M_REGULAR), h)
        W[idx] = rows.weights
        R[idx] = np.einsum("nf,nf->n", rows.rhs, fd)
        basis3 = taylor_basis(aj.truncate(M_REGULAR_GRADIENT), M_REGULAR_GRADIENT)
        for axis in (0, 1):
            g = regular_gradient_rows(ad, basis3, h, axis)
            GW[axis, idx] = g.weights
            GR[axis, idx] = np.einsum("nf,nf->n", g.rhs, fd[:, : ncoef(M_REGULAR_GRADIENT - 1)])

    idx = np.nonzero(irr)[0]
    if len(idx):
        _irregular(problem, grid, cls, ii[idx], jj[idx], idx, W, R, GW, GR, dbg if debug else None)
    return Discretization(grid, cls, W, R, GW, GR, dbg)


@dataclass
class _Frame:
    """Local expansions at the base points, in the plus frame or the mirrored one."""
    bp: TaylorBasis
    bm: TaylorBasis
    tm: TransmissionMap

    def take(self, sel) -> "_Frame":
        return _Frame(TaylorBasis(self.bp.M, self.bp.G[sel], self.bp.H[sel]),
                      TaylorBasis(self.bm.M, self.bm.G[sel], self.bm.H[sel]),
                      TransmissionMap(self.tm.M, self.tm.T[sel]))


def _frames(problem, center, M: int, mirrored: bool):
    ap = problem.a_jet(1, center, M)
    am = problem.a_jet(-1, center, M)
    bp = taylor_basis(ap, M)
    bm = taylor_basis(am, M)
    param = local_param(jet_eval(problem.psi, center, M + 1), M + 1)
    plus = _Frame(bp, bm, transmission(bp, bm, ap, am, param, curve_tables(param, M), M))
    if not mirrored:
        return plus, None
    flipped = LocalParam(param.branch, param.r, -param.orientation, param.degree)
    minus = _Frame(bm, bp, transmission(bm, bp, am, ap, flipped, curve_tables(flipped, M), M))
    return plus, minus


def _attach_nodes(exc: StencilDerivationError, ii, jj) -> StencilDerivationError:
    bad = [(int(ii[k]), int(jj[k])) for k in np.atleast_1d(exc.nodes)]
    return StencilDerivationError(f"{exc} at nodes {bad}", bad)


@dataclass
class InterfaceRows:
    """Rows at a batch of irregular nodes, with RHS values already contracted
    against the local data."""
    weights: np.ndarray             # (n, 9)
    rhs: np.ndarray                 # (n,)
    grad_weights: np.ndarray        # (2, n, 9)
    grad_rhs: np.ndarray            # (2, n)
    solution_rows: StencilRows


def interface_rows(problem: ProblemSpec, base, v0, w0, plus_mask, center_plus, h: float,
                   nodes=None) -> InterfaceRows:
    """Derive solution and gradient rows for nodes at (base + (v0, w0) h).

    ``plus_mask`` (n, 9) marks stencil points in the plus region and
    ``center_plus`` (n,) the side of each node.  ``nodes`` (a pair of index
    arrays) only labels derivation errors.
    """
    M = M_IRREGULAR
    v0, w0 = np.asarray(v0, dtype=float), np.asarray(w0, dtype=float)
    plus_mask = np.asarray(plus_mask, dtype=bool)
    center_plus = np.asarray(center_plus, dtype=bool)
    n = len(v0)
    ii, jj = nodes if nodes is not None else (np.arange(n), np.zeros(n, dtype=int))
    plus, minus = _frames(problem, base, M, bool(np.any(~center_plus)))
    data = np.concatenate([
        problem.f_jet(1, base, M - 1).partials(),
        problem.f_jet(-1, base, M - 1).partials(),
        problem.g1_jet(base, M + 1).partials(),
        problem.g2_jet(base, M).partials(),
    ], axis=-1)

    def matrix(frame, mask, sel):
        f = frame.take(sel)
        return interface_matrix(f.bp, f.bm, f.tm, mask[sel], v0[sel], w0[sel], h)

    try:
        rows = irregular_rows(matrix(plus, plus_mask, np.arange(n)), M, h)
    except StencilDerivationError as exc:
        raise _attach_nodes(exc, ii, jj) from None
    out = InterfaceRows(rows.weights, np.einsum("nz,nz->n", rows.rhs, data),
                        np.zeros((2, n, 9)), np.zeros((2, n)), rows)

    # gradient rows are derived in the frame of the node's own side
    for is_plus, frame, mask in ((True, plus, plus_mask), (False, minus, ~plus_mask)):
        sel = np.nonzero(center_plus == is_plus)[0]
        if len(sel) == 0:
            continue
        Es = matrix(frame, mask, sel)
        for axis in (0, 1):
            target = gradient_target(frame.take(sel).bp, v0[sel], w0[sel], h, axis)
            try:
                g = irregular_gradient_rows(Es, target, M, h)
            except StencilDerivationError as exc:
                raise _attach_nodes(exc, ii[sel], jj[sel]) from None
            rhs = g.rhs if is_plus else swap_data_columns(g.rhs, M)
            out.grad_weights[axis, sel] = g.weights
            out.grad_rhs[axis, sel] = np.einsum("nz,nz->n", rhs, data[sel])
    return out


def _irregular(problem, grid, cls, ii, jj, idx, W, R, GW, GR, dbg):
    base_points_for(cls, problem.psi)
    b = np.array([cls.base[(int(i), int(j))] for i, j in zip(ii, jj)])
    bx, by, v0, w0 = b.T
    rows = interface_rows(problem, (bx, by), v0, w0, cls.plus_mask(ii, jj),
                          cls.center_plus(ii, jj), grid.h, nodes=(ii, jj))
    W[idx] = rows.weights
    R[idx] = rows.rhs
    GW[:, idx] = rows.grad_weights
    GR[:, idx] = rows.grad_rhs
    if dbg is not None:
        sr = rows.solution_rows
        dbg["irregular"] = {
            "i": ii, "j": jj, "base_x": bx, "base_y": by, "v0": v0, "w0": w0,
            "weights": sr.weights, "rhs_coefficients": sr.rhs,
            "singular_values": sr.singular_values,
        }


# --------------------------------------------------------------------------
# assembly

@dataclass
class LinearSystem:
    grid: GridSpec
    matrix: sp.csr_matrix
    rhs: np.ndarray
    nodes: tuple[np.ndarray, np.ndarray]


def boundary_values(problem: ProblemSpec, grid: GridSpec) -> np.ndarray:
    """Full-grid array holding g on the boundary (interior entries zero)."""
    X, Y = np.meshgrid(grid.xs(), grid.ys(), indexing="ij")
    out = np.zeros(X.shape)
    edge = np.zeros(X.shape, dtype=bool)
    edge[0, :] = edge[-1, :] = edge[:, 0] = edge[:, -1] = True
    out[edge] = problem.boundary_value(X[edge], Y[edge])
    return out


def assemble(disc: Discretization, gvals: np.ndarray) -> LinearSystem:
    grid = disc.grid
    ii, jj = interior_index(grid)
    N = len(ii)
    n1 = grid.N1 - 1
    rows, cols, vals = [], [], []
    rhs = disc.rhs.copy()
    for o, (k, l) in enumerate(OFFSETS):
        ni, nj = ii + k, jj + l
        inside = (ni >= 1) & (ni <= grid.N1 - 1) & (nj >= 1) & (nj <= grid.N2 - 1)
        w = disc.weights[:, o]
        r = np.nonzero(inside)[0]
        rows.append(r)
        cols.append((nj[r] - 1) * n1 + (ni[r] - 1))
        vals.append(w[r])
        out = ~inside
        rhs[out] -= w[out] * gvals[ni[out], nj[out]]
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(N, N))
    if not np.all(np.isfinite(rhs)):
        raise SolverError("non-finite right-hand side")
    return LinearSystem(grid, A, rhs, (ii, jj))


# --------------------------------------------------------------------------
# solves

@dataclass
class SolveResult:
    u: np.ndarray
    residual: float               # ||A u - b|| / ||b||
    method: str
    iterations: int | None = None
    factors: tuple | None = None


def _band(system: LinearSystem):
    kl = ku = system.grid.N1
    A = system.matrix.tocoo()
    n = A.shape[0]
    ab = np.zeros((2 * kl + ku + 1, n))
    ab[kl + ku + A.row - A.col, A.col] = A.data
    return ab, kl, ku


def banded_lu(system: LinearSystem):
    ab, kl, ku = _band(system)
    lu, piv, info = lapack.dgbtrf(ab, kl, ku)
    if info != 0:
        raise SolverError(f"singular banded factorization (info={info})")
    return lu, piv, kl, ku


def banded_solve(factors, b: np.ndarray, trans: int = 0) -> np.ndarray:
    lu, piv, kl, ku = factors
    x, info = lapack.dgbtrs(lu, kl, ku, b, piv, trans=trans)
    if info != 0:
        raise SolverError(f"banded solve failed (info={info})")
    return x


def solve(system: LinearSystem, method: str = "direct") -> SolveResult:
    A, b = system.matrix, system.rhs
    bnorm = max(np.linalg.norm(b), 1e-300)
    if method == "direct":
        factors = banded_lu(system)
        u = banded_solve(factors, b)
        return SolveResult(u, float(np.linalg.norm(A @ u - b) / bnorm), "direct", None, factors)
    if method == "iterative":
        d = A.diagonal()
        if np.any(d == 0):
            raise SolverError("zero diagonal entry")
        pre = LinearOperator(A.shape, matvec=lambda v: v / d)
        count = [0]

        def cb(_):
            count[0] += 1

        n = A.shape[0]
        u, info = bicgstab(A, b, rtol=1e-12, atol=0.0, maxiter=20 * n, M=pre, callback=cb)
        res = float(np.linalg.norm(A @ u - b) / bnorm)
        if info != 0:
            raise SolverError(f"BiCGStab did not converge (relative residual {res:.3e})")
        return SolveResult(u, res, "iterative", count[0])
    raise ValueError(f"unknown method {method!r}")


def estimate_condition(system: LinearSystem, factors=None, iterations: int = 50,
                       seed: int = 0) -> float | None:
    """2-norm condition estimate: power iteration on A^T A for the largest
    singular value and inverse iteration through the LU factors for the
    smallest.  Returns None if no factorization is available."""
    if factors is None:
        try:
            factors = banded_lu(system)
        except SolverError:
            log.warning("condition estimate skipped: no factorization")
            return None
    A = system.matrix
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(A.shape[0])
    v /= np.linalg.norm(v)
    smax = 0.0
    for _ in range(iterations):
        w = A.T @ (A @ v)
        smax = np.linalg.norm(w)
        v = w / smax
    v = rng.standard_normal(A.shape[0])
    v /= np.linalg.norm(v)
    inv = 0.0
    for _ in range(iterations):
        w = banded_solve(factors, banded_solve(factors, v, trans=1))
        inv = np.linalg.norm(w)
        v = w / inv
    return float(np.sqrt(smax * inv))


# --------------------------------------------------------------------------
# gradient recovery

@dataclass
class FieldGrid:
    grid: GridSpec
    u: np.ndarray        # full grid (boundary filled with g)
    ux: np.ndarray       # interior, indexed [i-1, j-1]
    uy: np.ndarray

    def interior_u(self) -> np.ndarray:
        return self.u[1:-1, 1:-1]


def full_field(grid: GridSpec, u: np.ndarray, gvals: np.ndarray) -> np.ndarray:
    U = gvals.copy()
    ii, jj = interior_index(grid)
    U[ii, jj] = u
    return U


def recover_gradient(disc: Discretization, U: np.ndarray) -> FieldGrid:
    grid = disc.grid
    ii, jj = interior_index(grid)
    nb = np.stack([U[ii + k, jj + l] for k, l in OFFSETS], axis=-1)
    grads = []
    for axis in (0, 1):
        g = (np.einsum("no,no->n", disc.grad_weights[axis], nb) - disc.grad_rhs[axis]) / grid.h
        G = np.zeros((grid.N1 - 1, grid.N2 - 1))
        G[ii - 1, jj - 1] = g
        grads.append(G)
    return FieldGrid(grid, U, grads[0], grads[1])


def solve_problem(problem: ProblemSpec, grid: GridSpec, method: str = "direct",
                  condition: bool = True, debug: bool = False):
    """Full pipeline on one grid; returns (fields, discretization, info)."""
    disc = discretize(problem, grid, debug=debug)
    gvals = boundary_values(problem, grid)
    system = assemble(disc, gvals)
    res = solve(system, method)
    kappa = None
    if condition:
        kappa = estimate_condition(system, res.factors)
    U = full_field(grid, res.u, gvals)
    fields = recover_gradient(disc, U)
    info = {"residual": res.residual, "kappa": kappa, "N": system.matrix.shape[0],
            "nnz": system.matrix.nnz, "iterations": res.iterations,
            "n_irregular": int(disc.cls.irregular.sum())}
    return fields, disc, info
