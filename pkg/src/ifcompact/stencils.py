"""Nine-point stencil rows.

Weights are stored over geometry.OFFSETS, i.e. (k, l) for k in (-1, 0, 1) and
l in (-1, 0, 1) with k varying slowest; index 4 is the center.  Every routine
works on a batch of points at once.

Row equations have the form

    sum_kl w_kl u(x_i + k h, y_j + l h) = rhs . data

where ``data`` is a vector of derivative values of f (regular rows) or the
packed interface data [f_plus | f_minus | g1 | g2] (interface rows).  For
gradient rows the recovered derivative is (sum w u - rhs . data) / h.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exprjet import full, low, ncoef
from .geometry import OFFSETS
from .reduction import DataLayout, TaylorBasis, TransmissionMap, monomials

CENTER = OFFSETS.index((0, 0))
_K = np.array([k for k, _ in OFFSETS], dtype=float)
_L = np.array([l for _, l in OFFSETS], dtype=float)


class StencilDerivationError(RuntimeError):
    def __init__(self, message: str, nodes=None):
        super().__init__(message)
        self.nodes = nodes


@dataclass
class StencilRows:
    """A batch of rows: weights (n, 9) and RHS coefficients (n, ndata)."""
    weights: np.ndarray
    rhs: np.ndarray
    kind: str                       # "solution" or "gradient"
    layout: str                     # "f" (regular) or "interface"
    singular_values: np.ndarray | None = None


# --------------------------------------------------------------------------
# explicit regular formulas

def _derivs(ad):
    """Unpack derivative values a^(m,n), m + n <= 3, from a Lambda_K array."""
    g = {mn: ad[..., i] for i, mn in enumerate(full(3).pairs)}
    return (g[(0, 0)], g[(1, 0)], g[(0, 1)], g[(2, 0)], g[(1, 1)], g[(0, 2)],
            g[(3, 0)], g[(2, 1)], g[(1, 2)], g[(0, 3)])


def regular_solution_weights(ad: np.ndarray, h: float) -> np.ndarray:
    """Unnormalized fourth-order weights from a-derivatives at the node.

    ``ad`` holds derivative values over Lambda_3 (or larger) on its last axis.
    """
    A, p, q, a20, a11, a02, a30, a21, a12, a03 = _derivs(ad)
    A2, A3, A4 = A * A, A ** 3, A ** 4
    h2, h3, h4 = h * h, h ** 3, h ** 4
    c = {}
    c[(-1, -1)] = (
        (((2 * a12 + a21 + a03 + 2 * a30) * p - q * (a21 + a03)) * A2
         + ((-2 * a02 - 8 * a20 - 3 * a11) * p ** 2
            - 2 * (a02 + 1.5 * a20 + 1.5 * a11) * q * p
            + 2 * q ** 2 * (a02 + 1.5 * a20)) * A
         - q ** 4 - 2 * q ** 2 * p ** 2 + 4 * q * p ** 3 + 7 * p ** 4) * h4
        - A * ((a12 - a21 - a03 + a30) * A2
               + ((a02 - 6 * a20 + 3 * a11) * p + 5 * (a20 - 0.6 * a11) * q) * A
               + (q - p) * (q ** 2 + 3 * q * p - 6 * p ** 2)) * h3
        + (-2 * q ** 2 + 2 * p ** 2) * A2 * h2 - 4 * p * h * A3 + 4 * A4)
    c[(-1, 0)] = (
        (((-a12 + a21 + a03 - a30) * q - p * (a21 + a03)) * A2
         + ((-2 * a02 - 3 * a20 + a11) * q ** 2
            + 3 * p * (a02 + 7 / 3 * a20 + a11 / 3) * q + p ** 2 * a11) * A
         + q * (q ** 3 - q ** 2 * p + 3 * q * p ** 2 - 7 * p ** 3)) * h4
        - 2 * A * ((a21 + a03) * A2
                   + (-5 * q * a20 - 2 * p * (a02 - a20 + 1.5 * a11)) * A
                   - q ** 3 - q ** 2 * p + 7 * q * p ** 2 - p ** 3) * h3
        - 8 * p * (q - p) * h2 * A2 + 8 * (q - 2 * p) * h * A3 + 16 * A4)
    c[(-1, 1)] = -A * (
        ((a12 - a21 - a03 + a30) * A2
         + ((a02 - 6 * a20 - a11) * p + 5 * q * (a20 + 0.2 * a11)) * A
         + q ** 3 - 7 * q * p ** 2 + 6 * p ** 3) * h3
        + (4 * A2 * a11 - 2 * A * p ** 2) * h2 - 4 * (q - p) * h * A2 - 4 * A3)
    c[(0, -1)] = (
        ((q - 2 * p) * (a12 + a30) * A2
         + ((2 * a02 + 8 * a20 + 2 * a11) * p ** 2 - q * (a02 + 4 * a20 - 2 * a11) * p
            - q ** 2 * a11) * A
         + p * (q ** 3 - q ** 2 * p + 3 * q * p ** 2 - 7 * p ** 3)) * h4
        - 2 * A * ((a21 + a03) * A2 + (-3 * p * a11 - 2 * q * (a02 + 1.5 * a20)) * A
                   - 2 * q * p * (q - 3 * p)) * h3
        + 4 * A2 * ((a02 - a20) * A - 1.5 * q ** 2 + 1.5 * p ** 2) * h2
        - 8 * p * h * A3 + 16 * A4)
    c[(0, 0)] = 2 * A * (
        ((a12 + a21 + a03 + a30) * A2
         + ((-a02 - 4 * a20 - 5 * a11) * p - 2 * q * (a02 + 1.5 * a20 + 0.5 * a11)) * A
         - 2 * q ** 2 * p + 5 * q * p ** 2 + 5 * p ** 3) * h3
        - 4 * A * ((a02 - a20 - a11) * A - q ** 2 - 1.5 * q * p + 3 * p ** 2) * h2
        - 20 * (q - p) * h * A2 - 40 * A3)
    c[(0, 1)] = 4 * (((a02 - a20) * A + 0.5 * (q - p) * (q - 3 * p)) * h2
                     + 4 * (q - 0.5 * p) * A * h + 4 * A2) * A2
    c[(1, -1)] = -4 * A2 * (-A2 + h2 * A * a11 + 0.5 * h2 * q * (q - 2 * p))
    c[(1, 0)] = 8 * A3 * (h * q + 2 * A)
    c[(1, 1)] = 4 * A3 * (h * q + A)
    return np.stack([c[o] for o in OFFSETS], axis=-1)


def regular_gradient_weights_x(ad: np.ndarray, h: float) -> np.ndarray:
    """Unnormalized weights for h * du/dx at the node (fourth order)."""
    A, p, q, a20, a11, a02, a30, a21, a12, a03 = _derivs(ad)
    A2, A3 = A * A, A ** 3
    h2, h3 = h * h, h ** 3
    c = {}
    c[(-1, -1)] = (
        ((-11 * (a12 + a21 + a03 + a30)) * A2
         + ((22 * a02 + 35 * a20 + 11 * a11) * q + 11 * (a02 + 46 / 11 * a20 + a11) * p) * A
         - 11 * q ** 3 + q ** 2 * p - 47 * q * p ** 2 - 59 * p ** 3) * h3
        + 22 * ((a02 - 12 / 11 * a20 + 23 / 11 * a11) * A + q ** 2 / 22
                - 71 / 22 * q * p + 24 / 11 * p ** 2) * A * h2
        + 2 * h * (q - 11 * p) * A2 + 20 * A3)
    c[(-1, 0)] = (
        ((11 * a03 + 11 * a21) * A2 + ((-22 * a02 - 35 * a20) * q - 11 * p * a11) * A
         + 11 * q ** 3 - 12 * q ** 2 * p + 59 * q * p ** 2) * h3
        - 44 * A * ((a02 - a20 + 12 / 11 * a11) * A + q ** 2 / 22 - 24 / 11 * q * p
                    + 0.5 * p ** 2) * h2
        - 88 * h * A2 * p + 80 * A3)
    c[(-1, 1)] = 22 * A * (((a02 - 12 / 11 * a20 + a11 / 11) * A
                            + (q - p) * (q - 48 * p) / 22) * h2
                           + h * (q - p) * A + 10 / 11 * A2)
    c[(0, -1)] = (
        ((11 * a30 + 11 * a12) * A2 + ((-11 * a02 - 46 * a20) * p - 11 * q * a11) * A
         + 11 * q ** 2 * p - 12 * q * p ** 2 + 59 * p ** 3) * h3
        - 48 * A * (A * a11 + 0.5 * q * (q - 4 * p)) * h2
        - 44 * A2 * (q + 12 / 11 * p) * h + 88 * A3)
    c[(0, 0)] = 4 * A * (((a20 + 12 * a11) * A + 6 * q ** 2 - 18 * q * p - 18.5 * p ** 2) * h2
                         - 12 * A * (q - 4.75 * p) * h - 110 * A2)
    c[(0, 1)] = 44 * A2 * (2 * A + h * (q - 12 / 11 * p))
    c[(1, -1)] = 24 * A3 + 0 * h
    c[(1, 0)] = 96 * A3 + 0 * h
    c[(1, 1)] = 24 * A2 * (h * q + A)
    return np.stack([np.broadcast_to(c[o], A.shape) for o in OFFSETS], axis=-1)


def swap_axes_derivs(ad: np.ndarray, K: int) -> np.ndarray:
    """Derivative values of a(y, x) from those of a(x, y)."""
    pairs = full(K).pairs
    pos = full(K).position_map
    return ad[..., [pos[(n, m)] for m, n in pairs]]


_TRANSPOSE = [OFFSETS.index((l, k)) for k, l in OFFSETS]


def regular_gradient_weights(ad: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Weights for h * du/dx (axis 0) or h * du/dy (axis 1), scaled so the
    first-derivative condition holds with unit factor.

    The explicit x-formula yields 24 a^3 h u_x; dividing by 24 a^3 normalizes
    it.  The y-formula applies the x-formula to the mirrored coefficient
    a(y, x) and transposes the stencil.
    """
    A = ad[..., 0]
    if axis == 0:
        w = regular_gradient_weights_x(ad, h)
    else:
        w = regular_gradient_weights_x(swap_axes_derivs(ad, 3), h)[..., _TRANSPOSE]
    return w / (24 * A ** 3)[..., None]


def normalize_solution(w: np.ndarray, rhs: np.ndarray | None = None):
    """Scale to max |w| = 1 with a non-positive center weight."""
    s = np.max(np.abs(w), axis=-1)
    s = np.where(w[..., CENTER] > 0, -s, s)
    w = w / s[..., None]
    if rhs is None:
        return w
    return w, rhs / s[..., None]


def regular_rows(ad: np.ndarray, basis: TaylorBasis, h: float) -> StencilRows:
    """Fourth-order rows at regular nodes; RHS over f derivatives on Lambda_3.

    ``basis`` must be the M=4 basis of the node's own coefficient.
    """
    w = regular_solution_weights(ad, h)
    Hv = _eval_offsets(basis.H, _K * h, _L * h, basis.M + 1)   # (n, 9, nf)
    rhs = np.einsum("...o,...of->...f", w, Hv)
    w, rhs = normalize_solution(w, rhs)
    return StencilRows(w, rhs, "solution", "f")


def regular_gradient_rows(ad: np.ndarray, basis: TaylorBasis, h: float, axis: int) -> StencilRows:
    """Fourth-order gradient rows; ``basis`` is the M=3 basis at the node."""
    w = regular_gradient_weights(ad, h, axis)
    Hv = _eval_offsets(basis.H, _K * h, _L * h, basis.M + 1)
    rhs = np.einsum("...o,...of->...f", w, Hv)
    return StencilRows(w, rhs, "gradient", "f")


def _eval_offsets(P: np.ndarray, X: np.ndarray, Y: np.ndarray, K: int) -> np.ndarray:
    """Evaluate polynomials P (..., k, q) at per-offset points X, Y (..., 9)."""
    return np.einsum("...kq,...oq->...ok", P, monomials(X, Y, K))


# --------------------------------------------------------------------------
# generic (interface) rows

def interface_matrix(bp: TaylorBasis, bm: TaylorBasis, tm: TransmissionMap,
                     plus_mask: np.ndarray, v0, w0, h: float) -> np.ndarray:
    """E[..., o, z]: u at offset o as a linear form over the packed data vector.

    Plus-side offsets use the plus basis directly; minus-side offsets use the
    minus basis with the minus derivatives routed through the transmission map.
    """
    M = bp.M
    lay = DataLayout(M)
    s_u, s_fp, s_fm, _, _ = lay.slices
    v0 = np.asarray(v0, dtype=float)[..., None]
    w0 = np.asarray(w0, dtype=float)[..., None]
    X = (v0 + _K) * h
    Y = (w0 + _L) * h
    mono = monomials(X, Y, M + 1)
    Gp = np.einsum("...kq,...oq->...ok", bp.G, mono)
    Hp = np.einsum("...kq,...oq->...ok", bp.H, mono)
    Gm = np.einsum("...kq,...oq->...ok", bm.G, mono)
    Hm = np.einsum("...kq,...oq->...ok", bm.H, mono)
    Eplus = np.zeros(Gp.shape[:-1] + (lay.size,))
    Eplus[..., s_u] = Gp
    Eplus[..., s_fp] = Hp
    Eminus = np.einsum("...ok,...kz->...oz", Gm, tm.T)
    Eminus[..., s_fm] += Hm
    return np.where(np.asarray(plus_mask)[..., None], Eplus, Eminus)


def _row_scaling(M: int, h: float) -> np.ndarray:
    return np.array([h ** -(m + n) for m, n in low(M + 1).pairs])


def generic_order_conditions(E: np.ndarray, M: int, h: float, target: np.ndarray | None = None):
    """Scaled, row-equilibrated condition matrix A (..., n_low, 9) and target.

    Row (m, n) of A is the coefficient of u_plus^(m,n) contributed by each
    offset, multiplied by h^-(m+n) and then by the inverse row norm.
    """
    lay = DataLayout(M)
    A = np.swapaxes(E[..., lay.slices[0]], -1, -2) * _row_scaling(M, h)[:, None]
    t = None
    if target is not None:
        t = target[..., lay.slices[0]] * _row_scaling(M, h)
    norms = np.linalg.norm(A, axis=-1)
    ref = np.max(norms, axis=-1, keepdims=True)
    keep = norms > 1e-14 * ref
    scale = np.where(keep, 1.0 / np.where(keep, norms, 1.0), 0.0)
    A = A * scale[..., None]
    if t is not None:
        # a vanishing row keeps its target (on the reference scale) so that
        # an inconsistent request stays visible
        t = t * np.where(keep, scale, 1.0 / ref)
    return A, t


def nullspace_weights(A: np.ndarray, rank_tol: float = 1e-10):
    """Deterministic nullspace element: projection of the center indicator.

    Returns (weights, singular values, nullity).
    """
    U, s, Vh = np.linalg.svd(A, full_matrices=True)
    n = A.shape[-1]
    s_full = np.zeros(A.shape[:-2] + (n,))
    s_full[..., : s.shape[-1]] = s
    rank = np.sum(s_full > rank_tol * s_full[..., :1], axis=-1)
    in_null = np.arange(n) >= rank[..., None]
    coef = Vh[..., :, CENTER] * in_null
    c = np.einsum("...r,...rj->...j", coef, Vh)
    norm = np.linalg.norm(c, axis=-1)
    fallback = Vh[..., -1, :]
    big = np.take_along_axis(fallback, np.argmax(np.abs(fallback), axis=-1)[..., None], -1)
    fallback = fallback * np.sign(big)
    c = np.where((norm < 1e-8)[..., None], fallback, c)
    nullity = n - rank
    return c, s_full, nullity


def irregular_rows(E: np.ndarray, M: int, h: float) -> StencilRows:
    """Solution rows: weights in the nullspace of the order conditions."""
    A, _ = generic_order_conditions(E, M, h)
    c, s, nullity = nullspace_weights(A)
    if np.any(nullity < 1):
        raise StencilDerivationError("empty nullspace", np.nonzero(nullity < 1)[0])
    lay = DataLayout(M)
    data = slice(lay.slices[1].start, lay.size)
    rhs = np.einsum("...o,...oz->...z", c, E[..., data])
    c, rhs = normalize_solution(c, rhs)
    return StencilRows(c, rhs, "solution", "interface", s)


def gradient_target(bp: TaylorBasis, v0, w0, h: float, axis: int) -> np.ndarray:
    """h times the derivative at the node of the plus-side expansion, as a
    linear form over the packed data vector."""
    M = bp.M
    lay = DataLayout(M)
    Gd, Hd = bp.gradient(axis)
    mono = monomials(np.asarray(v0) * h, np.asarray(w0) * h, M)
    t = np.zeros(Gd.shape[:-2] + (lay.size,))
    t[..., lay.slices[0]] = h * np.einsum("...kq,...q->...k", Gd, mono)
    t[..., lay.slices[1]] = h * np.einsum("...kq,...q->...k", Hd, mono)
    return t


def irregular_gradient_rows(E: np.ndarray, target: np.ndarray, M: int, h: float,
                            consistency_tol: float = 1e-9) -> StencilRows:
    """Minimum-norm weights c with c^T E_u = target_u (scaled system)."""
    A, t = generic_order_conditions(E, M, h, target)
    U, s, Vh = np.linalg.svd(A, full_matrices=False)
    tol = 1e-12 * s[..., :1]
    sinv = np.where(s > tol, 1.0 / np.where(s > tol, s, 1.0), 0.0)
    coef = np.einsum("...ki,...k->...i", U, t) * sinv
    c = np.einsum("...i,...ij->...j", coef, Vh)
    resid = np.linalg.norm(np.einsum("...kj,...j->...k", A, c) - t, axis=-1)
    bad = resid > consistency_tol * np.linalg.norm(t, axis=-1)
    if np.any(bad):
        raise StencilDerivationError("inconsistent gradient conditions", np.nonzero(bad)[0])
    lay = DataLayout(M)
    data = slice(lay.slices[1].start, lay.size)
    rhs = np.einsum("...o,...oz->...z", c, E[..., data]) - target[..., data]
    return StencilRows(c, rhs, "gradient", "interface", s)


def swap_data_columns(rhs: np.ndarray, M: int) -> np.ndarray:
    """Re-express interface RHS coefficients of the mirrored problem in terms
    of the original data: f_plus and f_minus trade places and g1 flips sign.

    g2 keeps its sign: exchanging the sides also reverses the normal, so
    (a- grad u- - a+ grad u+) . (-n) is the original flux jump."""
    lay = DataLayout(M)
    _, s_fp, s_fm, s_g1, s_g2 = lay.slices
    off = s_fp.start
    out = np.empty_like(rhs)
    sp = slice(s_fp.start - off, s_fp.stop - off)
    sm = slice(s_fm.start - off, s_fm.stop - off)
    out[..., sp] = rhs[..., sm]
    out[..., sm] = rhs[..., sp]
    out[..., s_g1.start - off: s_g1.stop - off] = -rhs[..., s_g1.start - off: s_g1.stop - off]
    out[..., s_g2.start - off: s_g2.stop - off] = rhs[..., s_g2.start - off: s_g2.stop - off]
    return out


# --------------------------------------------------------------------------
# polynomial-in-h order conditions (maximal order analysis)

def _degree_split(P: np.ndarray, X: np.ndarray, Y: np.ndarray, K: int) -> np.ndarray:
    """Split P(h X, h Y) by powers of h: out[d, o, k] = homogeneous degree d part."""
    pairs = full(K).pairs
    out = np.zeros((K + 1, X.shape[-1], P.shape[-2]))
    for q, (a, b) in enumerate(pairs):
        out[a + b] += np.outer(X ** a * Y ** b, P[..., :, q])
    return out


def polynomial_conditions(Gu: np.ndarray, M: int, target: np.ndarray | None = None):
    """Linear system for weights that are polynomials in h.

    ``Gu[d]`` (shape (M+2, 9, n_low)) is the h^d part of the effective
    coefficient of u^(m,n) at each offset.  Unknowns are c_{o,i}, the h^i
    coefficient of the weight at offset o, i = 0..M+1 (stored i-major).
    Equations: the coefficient of h^s in sum_o C_o(h) Gu_o(h) vanishes (or
    matches ``target``: a (M+2, n_low) array of h-power coefficients) for
    s = 0..M+1.
    """
    D = Gu.shape[0]
    n_low = Gu.shape[-1]
    nunk = 9 * (M + 2)
    rows, rhs = [], []
    for s in range(M + 2):
        for k in range(n_low):
            row = np.zeros(nunk)
            for i in range(s + 1):
                d = s - i
                if d < D:
                    row[9 * i: 9 * i + 9] += Gu[d, :, k]
            rows.append(row)
            rhs.append(0.0 if target is None else target[s, k])
    return np.array(rows), np.array(rhs)


def regular_degree_split(basis: TaylorBasis) -> np.ndarray:
    """h-power split of G at the nine regular offsets (v0 = w0 = 0)."""
    return _degree_split(basis.G, _K, _L, basis.M + 1)


def interface_degree_split(bp: TaylorBasis, bm: TaylorBasis, tm: TransmissionMap,
                           plus_mask: np.ndarray, v0: float, w0: float) -> np.ndarray:
    """h-power split of the effective u_plus coefficients at an interface point."""
    M = bp.M
    X, Y = v0 + _K, w0 + _L
    gp = _degree_split(bp.G, X, Y, M + 1)
    gm = _degree_split(bm.G, X, Y, M + 1)
    gm = np.einsum("dok,kj->doj", gm, tm.T_u)
    return np.where(np.asarray(plus_mask)[None, :, None], gp, gm)


def nullity_report(Amat: np.ndarray, b: np.ndarray | None = None, zero_tol: float = 1e-10):
    """Singular-value analysis of a polynomial order-condition system.

    Singular values (relative to the largest) below ``zero_tol`` form the
    "zero" group.  Returns the spectrum, the rank, the gap between the two
    groups, the singular values of the h^0 block of the nullspace basis (their
    count above ``zero_tol`` is the dimension of achievable h^0 weights) and,
    for an inhomogeneous system, the relative least-squares residual.
    """
    _, s_all, Vh = np.linalg.svd(Amat, full_matrices=True)
    n = Amat.shape[1]
    s = np.zeros(n)
    s[: len(s_all)] = s_all
    s = s / s[0]
    rank = int(np.sum(s > zero_tol))
    gap = s[rank - 1] / max(s[rank], 1e-300) if rank < n else np.inf
    null = Vh[rank:]
    c0_sv = np.linalg.svd(null[:, :9], compute_uv=False) if len(null) else np.zeros(0)
    out = {
        "singular_values": s,
        "rank": rank,
        "gap": float(gap),
        "h0_singular_values": c0_sv,
        "h0_dimension": int(np.sum(c0_sv > zero_tol)),
    }
    if b is not None:
        x, *_ = np.linalg.lstsq(Amat, b, rcond=None)
        out["residual"] = float(np.linalg.norm(Amat @ x - b) / max(np.linalg.norm(b), 1e-300))
    return out
