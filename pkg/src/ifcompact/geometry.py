"""Grid, level-set classification, base points and local curve expansions."""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np

from .exprjet import Expr, Jet2, eval_expr, full, jet_eval, mul1, ncoef
from .exprjet.jet import compose1, deriv1

OFFSETS = tuple((k, l) for k in (-1, 0, 1) for l in (-1, 0, 1))
"""The nine stencil offsets; weight vectors are always stored in this order."""

X_IS_T = "x_is_t"
Y_IS_T = "y_is_t"


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    l1: float
    l2: float
    l3: float
    l4: float
    N1: int

    def __post_init__(self):
        if not (self.l2 > self.l1 and self.l4 > self.l3):
            raise ValueError("empty rectangle")
        ratio = (self.l4 - self.l3) / (self.l2 - self.l1)
        if abs(ratio - round(ratio)) > 1e-12 * ratio or round(ratio) < 1:
            raise ValueError("l4 - l3 must be an integer multiple of l2 - l1")

    @property
    def N0(self) -> int:
        return int(round((self.l4 - self.l3) / (self.l2 - self.l1)))

    @property
    def N2(self) -> int:
        return self.N0 * self.N1

    @property
    def h(self) -> float:
        return (self.l2 - self.l1) / self.N1

    def xs(self) -> np.ndarray:
        return self.l1 + self.h * np.arange(self.N1 + 1)

    def ys(self) -> np.ndarray:
        return self.l3 + self.h * np.arange(self.N2 + 1)

    def node(self, i, j):
        return self.l1 + self.h * np.asarray(i), self.l3 + self.h * np.asarray(j)

    @property
    def n_interior(self) -> int:
        return (self.N1 - 1) * (self.N2 - 1)

    def refine(self) -> "GridSpec":
        return GridSpec(self.l1, self.l2, self.l3, self.l4, 2 * self.N1)


@dataclass
class PointClass:
    i: int
    j: int
    regular: bool
    side: int                     # +1 / -1 for regular nodes, 0 for irregular
    d_plus: frozenset = frozenset()
    d_minus: frozenset = frozenset()
    base: tuple | None = None     # (x*, y*)
    v0: float | None = None
    w0: float | None = None


@dataclass
class Classification:
    """Per-node classification of a grid against a level set.

    ``plus`` covers the full grid including the boundary.  ``irregular`` and
    ``side`` cover interior nodes, indexed [i-1, j-1].
    """
    grid: GridSpec
    psi_values: np.ndarray
    plus: np.ndarray
    irregular: np.ndarray
    side: np.ndarray
    base: dict = field(default_factory=dict)

    def point(self, i: int, j: int) -> PointClass:
        if not (1 <= i <= self.grid.N1 - 1 and 1 <= j <= self.grid.N2 - 1):
            raise IndexError(f"({i},{j}) is not an interior node")
        if not self.irregular[i - 1, j - 1]:
            return PointClass(i, j, True, int(self.side[i - 1, j - 1]))
        dp = frozenset(o for o in OFFSETS if self.plus[i + o[0], j + o[1]])
        dm = frozenset(OFFSETS) - dp
        pc = PointClass(i, j, False, 0, dp, dm)
        if (i, j) in self.base:
            xs, ys, v0, w0 = self.base[(i, j)]
            pc.base, pc.v0, pc.w0 = (xs, ys), v0, w0
        return pc

    def irregular_nodes(self) -> tuple[np.ndarray, np.ndarray]:
        ii, jj = np.nonzero(self.irregular)
        return ii + 1, jj + 1

    def plus_mask(self, i, j) -> np.ndarray:
        """(n, 9) membership of the nine offsets in the plus side."""
        i = np.asarray(i)
        j = np.asarray(j)
        return np.stack([self.plus[i + k, j + l] for k, l in OFFSETS], axis=-1)

    def center_plus(self, i, j) -> np.ndarray:
        return self.plus[np.asarray(i), np.asarray(j)]


def classify_points(grid: GridSpec, psi: Expr, boundary_samples: int = 8) -> Classification:
    """Sign-classify every node; zero goes to the plus side."""
    X, Y = np.meshgrid(grid.xs(), grid.ys(), indexing="ij")
    vals = eval_expr(psi, X, Y)
    tol = 1e-14 * np.max(np.abs(vals))
    _check_boundary(grid, psi, tol, boundary_samples)
    plus = vals >= -tol
    n1, n2 = grid.N1, grid.N2
    count = np.zeros((n1 - 1, n2 - 1), dtype=int)
    for k, l in OFFSETS:
        count += plus[1 + k: n1 + k, 1 + l: n2 + l]
    irregular = (count > 0) & (count < 9)
    side = np.where(count == 9, 1, np.where(count == 0, -1, 0))
    return Classification(grid, vals, plus, irregular, side)


def _check_boundary(grid: GridSpec, psi: Expr, tol: float, per_cell: int):
    n = per_cell * max(grid.N1, grid.N2) + 1
    sx = np.linspace(grid.l1, grid.l2, n)
    sy = np.linspace(grid.l3, grid.l4, per_cell * grid.N2 + 1)
    pts_x = np.concatenate([sx, sx, np.full_like(sy, grid.l1), np.full_like(sy, grid.l2)])
    pts_y = np.concatenate([np.full_like(sx, grid.l3), np.full_like(sx, grid.l4), sy, sy])
    v = eval_expr(psi, pts_x, pts_y)
    if np.any(np.abs(v) <= tol) or (np.any(v > 0) and np.any(v < 0)):
        raise GeometryError("the interface meets the boundary of the rectangle")


def find_base_points(psi: Expr, nodes_x, nodes_y, h: float, scale: float = 1.0):
    """Project nodes onto the zero set of psi (vectorized Newton).

    Returns (x*, y*, v0, w0) with node = base + (v0, w0) h.  Nodes whose
    projection fails or leaves the open 2h-square fall back to bisection along
    a grid segment from the node to a neighbour of opposite sign.
    """
    x0 = np.atleast_1d(np.asarray(nodes_x, dtype=float))
    y0 = np.atleast_1d(np.asarray(nodes_y, dtype=float))
    x, y = x0.copy(), y0.copy()
    step_tol = 1e-13 * max(scale, h)
    for _ in range(30):
        j = jet_eval(psi, (x, y), 1)
        p, px, py = j.coeffs[..., 0], j.coeffs[..., 1], j.coeffs[..., 2]
        g2 = px * px + py * py
        g2 = np.where(g2 > 0, g2, np.inf)
        dx, dy = p * px / g2, p * py / g2
        x, y = x - dx, y - dy
        if np.all(np.hypot(dx, dy) <= step_tol):
            break
    j = jet_eval(psi, (x, y), 1)
    p = j.coeffs[..., 0]
    gnorm = np.hypot(j.coeffs[..., 1], j.coeffs[..., 2])
    v0 = (x0 - x) / h
    w0 = (y0 - y) / h
    bad = ~np.isfinite(x) | (np.abs(v0) >= 1) | (np.abs(w0) >= 1) | ~(np.abs(p) <= 1e-12 * gnorm * h)
    for idx in np.nonzero(bad)[0]:
        x[idx], y[idx] = _bisect_base(psi, x0[idx], y0[idx], h)
        v0[idx] = (x0[idx] - x[idx]) / h
        w0[idx] = (y0[idx] - y[idx]) / h
    return x, y, v0, w0


def _bisect_base(psi: Expr, xn: float, yn: float, h: float):
    pn = eval_expr(psi, xn, yn)
    if pn == 0:
        return xn, yn
    order = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)]
    for k, l in order:
        pk = eval_expr(psi, xn + k * h, yn + l * h)
        if np.sign(pk) == np.sign(pn):
            continue
        lo, hi = 0.0, 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            pm = eval_expr(psi, xn + mid * k * h, yn + mid * l * h)
            if np.sign(pm) == np.sign(pn):
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-16:
                break
        s = 0.5 * (lo + hi)
        if s < 1.0:
            return xn + s * k * h, yn + s * l * h
    raise GeometryError(f"no interface crossing near node ({xn}, {yn})")


def base_points_for(cls: Classification, psi: Expr):
    """Fill ``cls.base`` for every irregular node; returns the arrays."""
    grid = cls.grid
    ii, jj = cls.irregular_nodes()
    xn, yn = grid.node(ii, jj)
    scale = max(grid.l2 - grid.l1, grid.l4 - grid.l3)
    xs, ys, v0, w0 = find_base_points(psi, xn, yn, grid.h, scale)
    for n in range(len(ii)):
        cls.base[(int(ii[n]), int(jj[n]))] = (float(xs[n]), float(ys[n]), float(v0[n]), float(w0[n]))
    return ii, jj, xs, ys, v0, w0


# --------------------------------------------------------------------------
# local curve parametrization

def monomial_series(xs: np.ndarray, ys: np.ndarray, K: int, T: int) -> np.ndarray:
    """Series in t of x(t)^p y(t)^q for (p, q) in Lambda_K, truncated at t^T.

    ``xs`` and ``ys`` are series with zero constant term.  Output shape is
    batch + (ncoef(K), T + 1).
    """
    xs = _pad(xs, T)
    ys = _pad(ys, T)
    xpow = [np.zeros_like(xs)]
    xpow[0][..., 0] = 1.0
    ypow = [xpow[0]]
    for _ in range(K):
        xpow.append(mul1(xpow[-1], xs, T))
        ypow.append(mul1(ypow[-1], ys, T))
    rows = [mul1(xpow[p], ypow[q], T) for p, q in full(K).pairs]
    return np.stack(rows, axis=-2)


def _pad(s: np.ndarray, T: int) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.shape[-1] >= T + 1:
        return s[..., : T + 1]
    pad = np.zeros(s.shape[:-1] + (T + 1 - s.shape[-1],))
    return np.concatenate([s, pad], axis=-1)


@dataclass
class LocalParam:
    """Curve through the base point: x = x* + X(t), y = y* + Y(t).

    ``branch`` says which coordinate equals t (Y_IS_T: y = y* + t and
    x = x* + r(t)).  ``r`` holds the Taylor coefficients of r(t).
    ``orientation`` (+1 or -1) is the sign that makes (Y'(0), -X'(0)) point
    along grad psi; ``xs``/``ys`` apply it (t -> orientation * t).
    """
    branch: np.ndarray        # bool per point: True for Y_IS_T
    r: np.ndarray             # batch + (K+1,)
    orientation: np.ndarray   # batch
    degree: int

    @property
    def rDeriv(self) -> np.ndarray:
        return self.r * np.array([factorial(k) for k in range(self.degree + 1)])

    def _oriented(self):
        K = self.degree
        sign = self.orientation[..., None] ** np.arange(K + 1)
        r = self.r * sign
        t = np.zeros_like(r)
        t[..., 1] = self.orientation if K >= 1 else 0.0
        return r, t

    @property
    def xs(self) -> np.ndarray:
        r, t = self._oriented()
        return np.where(self.branch[..., None], r, t)

    @property
    def ys(self) -> np.ndarray:
        r, t = self._oriented()
        return np.where(self.branch[..., None], t, r)


def local_param(psi_jet: Jet2, K: int) -> LocalParam:
    """Implicit-function expansion of the zero set of psi at the jet center."""
    c = psi_jet.coeffs
    if psi_jet.degree < K:
        raise ValueError("psi jet degree must be at least K")
    px, py = c[..., 1], c[..., 2]
    gnorm = np.hypot(px, py)
    scale = np.max(np.abs(c[..., : ncoef(K)]), axis=-1)
    if np.any(gnorm <= 1e-12 * scale):
        raise GeometryError("vanishing level-set gradient on the interface")
    y_is_t = np.abs(px) >= np.abs(py)
    # in swapped coordinates the free variable is "b" and the solved one "a"
    lead = np.where(y_is_t, px, py)
    t = np.zeros(c.shape[:-1] + (K + 1,))
    if K >= 1:
        t[..., 1] = 1.0
    r = np.zeros_like(t)
    for k in range(1, K + 1):
        xs = np.where(y_is_t[..., None], r, t)
        ys = np.where(y_is_t[..., None], t, r)
        comp = np.einsum("...i,...it->...t", c[..., : ncoef(k)], monomial_series(xs, ys, k, k))
        r[..., k] = -comp[..., k] / lead
    orientation = np.where(y_is_t, np.sign(px), -np.sign(py))
    return LocalParam(y_is_t, r, orientation, K)


def param_residual(psi_jet: Jet2, param: LocalParam) -> np.ndarray:
    """Series of psi along the curve, scaled by the gradient norm."""
    K = param.degree
    c = psi_jet.coeffs[..., : ncoef(K)]
    comp = np.einsum("...i,...it->...t", c, monomial_series(param.xs, param.ys, K, K))
    return comp / np.hypot(c[..., 1], c[..., 2])[..., None]


def curve_tables(param: LocalParam, M: int):
    """Series tables along the oriented curve.

    Returns ``(rtab, rtilde)``: rtab[..., (m,n), p] is the t^p coefficient of
    X^m Y^n for (m,n) in Lambda_{M+1}, p = 0..M+1; rtilde[..., (m,n), p] is the
    t^p coefficient of X^m Y^n sqrt(X'^2 + Y'^2) for (m,n) in Lambda_M,
    p = 0..M.
    """
    if param.degree < M + 1:
        raise ValueError("parametrization degree must be at least M + 1")
    xs, ys = param.xs, param.ys
    rtab = monomial_series(xs, ys, M + 1, M + 1)
    speed2 = mul1(deriv1(xs)[..., : M + 1], deriv1(xs)[..., : M + 1], M) + \
        mul1(deriv1(ys)[..., : M + 1], deriv1(ys)[..., : M + 1], M)
    speed = compose1("sqrt", speed2)
    rtilde = mul1(monomial_series(xs, ys, M, M), speed[..., None, :], M)
    return rtab, rtilde
