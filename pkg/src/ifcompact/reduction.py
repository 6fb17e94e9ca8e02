"""PDE-driven derivative reduction, Taylor basis polynomials and the
interface transmission map.

Notation used throughout: for a solution of -div(a grad u) = f near a point,
every derivative u^(m,n) with (m,n) in Lambda_{M+1} is a linear combination of
the "free" derivatives u^(m,n), m <= 1 (the low set), and of f^(m,n) over
Lambda_{M-1}.  A linear form is stored as a vector over the concatenation
[low-set u derivatives | f derivatives].

All arrays may carry leading batch axes (one entry per point).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .exprjet import Jet2, eval_expr, flat_index, full, jet_eval, low, ncoef
from .exprjet.jet import deriv1, deriv2, mul1


class DegenerateCoefficientError(ValueError):
    pass


class InterfaceDegeneracyError(ValueError):
    def __init__(self, p: int):
        super().__init__(f"singular transmission pivot at order {p}")
        self.order = p


@dataclass
class ReductionTable:
    """forms[..., k, :] expresses the k-th derivative of Lambda_{M+1}."""
    M: int
    forms: np.ndarray

    @property
    def n_low(self) -> int:
        return len(low(self.M + 1))

    @property
    def n_f(self) -> int:
        return ncoef(self.M - 1)

    def form(self, m: int, n: int) -> np.ndarray:
        return self.forms[..., flat_index(m, n), :]

    def u_part(self, m: int, n: int) -> np.ndarray:
        return self.form(m, n)[..., : self.n_low]

    def f_part(self, m: int, n: int) -> np.ndarray:
        return self.form(m, n)[..., self.n_low:]


def derive_reduction(a_jet: Jet2, M: int) -> ReductionTable:
    """Express all derivatives of u up to order M+1 through the low set.

    Differentiating a u_xx + a u_yy + a_x u_x + a_y u_y = -f by d^i_x d^j_y
    and solving for u^(i+2,j), in increasing x-order and, within one x-order,
    increasing y-order.  Every derivative on the right is already known.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    if a_jet.degree < M:
        raise ValueError("coefficient jet degree must be at least M")
    ad = a_jet.partials(M)
    a0 = ad[..., 0]
    if np.any(a0 == 0):
        raise DegenerateCoefficientError("coefficient vanishes at the expansion point")
    lowset = low(M + 1)
    n1 = len(lowset)
    nf = ncoef(M - 1)
    batch = ad.shape[:-1]
    forms = np.zeros(batch + (ncoef(M + 1), n1 + nf))
    for pos, (m, n) in enumerate(lowset):
        forms[..., flat_index(m, n), pos] = 1.0

    def A(m, n):
        return ad[..., flat_index(m, n), None]

    def U(m, n):
        return forms[..., flat_index(m, n), :]

    for mp in range(2, M + 2):
        for npr in range(0, M + 2 - mp):
            i, j = mp - 2, npr
            acc = np.zeros(batch + (n1 + nf,))
            acc[..., n1 + flat_index(i, j)] = -1.0
            for al in range(i + 1):
                for be in range(j + 1):
                    w = comb(i, al) * comb(j, be)
                    if al or be:
                        acc -= w * A(al, be) * U(i + 2 - al, j - be)
                    acc -= w * A(al, be) * U(i - al, j + 2 - be)
                    acc -= w * A(al + 1, be) * U(i + 1 - al, j - be)
                    acc -= w * A(al, be + 1) * U(i - al, j + 1 - be)
            forms[..., flat_index(mp, npr), :] = acc / a0[..., None]
    return ReductionTable(M, forms)


@dataclass
class TaylorBasis:
    """Monomial coefficients of the basis polynomials.

    ``G[..., k, q]`` is the coefficient of monomial q (over Lambda_{M+1}) in the
    polynomial multiplying the k-th low-set derivative; ``H`` likewise for f
    derivatives over Lambda_{M-1}.  Near the expansion point
    u(x* + x, y* + y) = sum_k u_k G_k(x, y) + sum_k f_k H_k(x, y) + O(h^(M+2)).
    """
    M: int
    G: np.ndarray
    H: np.ndarray

    def eval_G(self, x, y) -> np.ndarray:
        return np.einsum("...kq,...q->...k", self.G, monomials(x, y, self.M + 1))

    def eval_H(self, x, y) -> np.ndarray:
        return np.einsum("...kq,...q->...k", self.H, monomials(x, y, self.M + 1))

    def gradient(self, axis: int):
        """Monomial coefficients (over Lambda_M) of d/dx or d/dy of G and H."""
        return deriv2(self.G, self.M + 1, axis), deriv2(self.H, self.M + 1, axis)


def monomials(x, y, K: int) -> np.ndarray:
    """x^p y^q over Lambda_K, stacked on a new last axis."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x, y = np.broadcast_arrays(x, y)
    xp = [np.ones_like(x)]
    yp = [np.ones_like(y)]
    for _ in range(K):
        xp.append(xp[-1] * x)
        yp.append(yp[-1] * y)
    return np.stack([xp[p] * yp[q] for p, q in full(K).pairs], axis=-1)


def basis_polynomials(red: ReductionTable) -> TaylorBasis:
    M = red.M
    fact = full(M + 1).factorials()
    scaled = red.forms / fact[:, None]
    n1 = red.n_low
    G = np.swapaxes(scaled[..., :n1], -1, -2)
    H = np.swapaxes(scaled[..., n1:], -1, -2)
    return TaylorBasis(M, np.ascontiguousarray(G), np.ascontiguousarray(H))


def taylor_basis(a_jet: Jet2, M: int) -> TaylorBasis:
    return basis_polynomials(derive_reduction(a_jet, M))


def taylor_residual(basis: TaylorBasis, u_expr, f_expr, base, h: float) -> float:
    """Max over the 3x3 stencil of |u - (sum G u_k + sum H f_k)|."""
    M = basis.M
    uj = jet_eval(u_expr, base, M + 1).partials(M + 1)
    fj = jet_eval(f_expr, base, M - 1).partials(M - 1)
    u_low = uj[..., low(M + 1).flat_indices()]
    worst = 0.0
    for k in (-1, 0, 1):
        for l in (-1, 0, 1):
            approx = basis.eval_G(k * h, l * h) @ u_low + basis.eval_H(k * h, l * h) @ fj
            exact = eval_expr(u_expr, base[0] + k * h, base[1] + l * h)
            worst = max(worst, float(np.max(np.abs(exact - approx))))
    return worst


# --------------------------------------------------------------------------
# transmission

@dataclass
class DataLayout:
    """Column layout of the affine data vector used by interface rows.

    [u_plus over low(M+1) | f_plus over Lambda_{M-1} | f_minus over Lambda_{M-1}
     | g1 over Lambda_{M+1} | g2 over Lambda_M]
    """
    M: int

    @property
    def sizes(self):
        M = self.M
        return (len(low(M + 1)), ncoef(M - 1), ncoef(M - 1), ncoef(M + 1), ncoef(M))

    @property
    def slices(self):
        out, start = [], 0
        for s in self.sizes:
            out.append(slice(start, start + s))
            start += s
        return tuple(out)

    @property
    def size(self) -> int:
        return sum(self.sizes)

    def pack(self, u_plus, f_plus, f_minus, g1, g2) -> np.ndarray:
        return np.concatenate([u_plus, f_plus, f_minus, g1, g2], axis=-1)


@dataclass
class TransmissionMap:
    """u_minus(low set) = T @ [u_plus | f_plus | f_minus | g1 | g2]."""
    M: int
    T: np.ndarray

    def _block(self, k):
        return self.T[..., DataLayout(self.M).slices[k]]

    @property
    def T_u(self):
        return self._block(0)

    @property
    def T_fplus(self):
        return self._block(1)

    @property
    def T_fminus(self):
        return self._block(2)

    @property
    def T_g1(self):
        return self._block(3)

    @property
    def T_g2(self):
        return self._block(4)

    def apply(self, u_plus, f_plus, f_minus, g1, g2) -> np.ndarray:
        z = DataLayout(self.M).pack(u_plus, f_plus, f_minus, g1, g2)
        return np.einsum("...kz,...z->...k", self.T, z)


def _series(coef: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Compose monomial coefficients (..., k, q) with a monomial table (..., q, t)."""
    return np.einsum("...kq,...qt->...kt", coef, table)


def transmission(basis_plus: TaylorBasis, basis_minus: TaylorBasis, a_plus: Jet2,
                 a_minus: Jet2, param, tables, M: int) -> TransmissionMap:
    """Solve the jump conditions order by order along the curve.

    ``param`` must be oriented so that the curve normal (Y', -X') points into
    the plus side; ``tables`` is the output of geometry.curve_tables.
    """
    rtab, rtilde = tables
    lay = DataLayout(M)
    n1, nf = lay.sizes[0], lay.sizes[1]
    s_u, s_fp, s_fm, s_g1, s_g2 = lay.slices
    lowpairs = low(M + 1).pairs
    lowpos = low(M + 1).position_map
    nM = ncoef(M)

    gP = _series(basis_plus.G, rtab)
    hP = _series(basis_plus.H, rtab)
    gM = _series(basis_minus.G, rtab)
    hM = _series(basis_minus.H, rtab)

    rt_low = rtab[..., :nM, : M + 1]
    xs_d = deriv1(param.xs)[..., : M + 1]
    ys_d = deriv1(param.ys)[..., : M + 1]

    def flux_series(basis: TaylorBasis, a_jet: Jet2):
        (Gx, Hx), (Gy, Hy) = basis.gradient(0), basis.gradient(1)
        a_ser = np.einsum("...q,...qt->...t", a_jet.coeffs[..., :nM], rt_low)[..., None, :]
        out = []
        for Px, Py in ((Gx, Gy), (Hx, Hy)):
            normal = mul1(_series(Px, rt_low), ys_d[..., None, :], M) - \
                mul1(_series(Py, rt_low), xs_d[..., None, :], M)
            out.append(mul1(a_ser, normal, M))
        return out

    gtP, htP = flux_series(basis_plus, a_plus)
    gtM, htM = flux_series(basis_minus, a_minus)

    batch = gP.shape[:-2]
    fact1 = full(M + 1).factorials()
    fact0 = full(M).factorials()
    jump = np.zeros(batch + (M + 2, lay.size))
    jump[..., s_u] = np.swapaxes(gP, -1, -2)
    jump[..., s_fp] = np.swapaxes(hP, -1, -2)
    jump[..., s_fm] = -np.swapaxes(hM, -1, -2)
    jump[..., s_g1] = -np.swapaxes(rtab / fact1[:, None], -1, -2)
    flux = np.zeros(batch + (M + 1, lay.size))
    flux[..., s_u] = np.swapaxes(gtP, -1, -2)
    flux[..., s_fp] = np.swapaxes(htP, -1, -2)
    flux[..., s_fm] = -np.swapaxes(htM, -1, -2)
    flux[..., s_g2] = -np.swapaxes(rtilde / fact0[:, None], -1, -2)

    T = np.zeros(batch + (n1, lay.size))
    T[..., lowpos[(0, 0)], :] = jump[..., 0, :] / gM[..., lowpos[(0, 0)], 0, None]
    for p in range(1, M + 2):
        r1 = jump[..., p, :].copy()
        r2 = flux[..., p - 1, :].copy()
        for (m, n) in lowpairs:
            if m + n < p:
                k = lowpos[(m, n)]
                r1 -= gM[..., k, p, None] * T[..., k, :]
                r2 -= gtM[..., k, p - 1, None] * T[..., k, :]
        k0, k1 = lowpos[(0, p)], lowpos[(1, p - 1)]
        w00, w01 = gM[..., k0, p], gM[..., k1, p]
        w10, w11 = gtM[..., k0, p - 1], gtM[..., k1, p - 1]
        det = w00 * w11 - w01 * w10
        big = np.maximum.reduce([np.abs(w00), np.abs(w01), np.abs(w10), np.abs(w11)])
        if np.any(~(np.abs(det) > 1e-12 * big * big)):
            raise InterfaceDegeneracyError(p)
        T[..., k0, :] = (w11[..., None] * r1 - w01[..., None] * r2) / det[..., None]
        T[..., k1, :] = (w00[..., None] * r2 - w10[..., None] * r1) / det[..., None]
    return TransmissionMap(M, T)
