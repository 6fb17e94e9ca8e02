"""Truncated Taylor arithmetic in one and two variables.

A bivariate jet of degree K stores c[m][n] = d^(m+n)phi/dx^m dy^n / (m! n!)
in graded-lex order along the last axis.  Leading axes are batch axes, so a
single Jet2 can carry the expansions at many points at once.

Univariate series (in the curve parameter t) are plain arrays whose last
axis holds the coefficients of t^0 .. t^K.
"""

from __future__ import annotations

from functools import lru_cache
from math import comb, factorial

import numpy as np

from .expr import Add, Call, Div, DomainError, Expr, Mul, Neg, Num, Pow, Var
from .indexsets import flat_index, full, ncoef

MAX_DEGREE = 8


# --------------------------------------------------------------------------
# raw coefficient kernels

@lru_cache(maxsize=None)
def _product_table(K: int):
    pairs = full(K).pairs
    ia, ib, out = [], [], []
    for i, (m1, n1) in enumerate(pairs):
        for j, (m2, n2) in enumerate(pairs):
            if m1 + n1 + m2 + n2 <= K:
                ia.append(i)
                ib.append(j)
                out.append(flat_index(m1 + m2, n1 + n2))
    scatter = np.zeros((len(out), ncoef(K)))
    scatter[np.arange(len(out)), out] = 1.0
    return np.array(ia), np.array(ib), scatter


def mul2(a: np.ndarray, b: np.ndarray, K: int) -> np.ndarray:
    """Truncated product of bivariate coefficient arrays."""
    ia, ib, scatter = _product_table(K)
    return (a[..., ia] * b[..., ib]) @ scatter


def mul1(a: np.ndarray, b: np.ndarray, K: int | None = None) -> np.ndarray:
    """Truncated product of univariate series."""
    if K is None:
        K = a.shape[-1] - 1
    a, b = np.broadcast_arrays(a, b)
    out = np.zeros(a.shape[:-1] + (K + 1,))
    for k in range(K + 1):
        out[..., k] = np.sum(a[..., : k + 1] * b[..., k::-1], axis=-1)
    return out


def elementary_taylor(func: str, x0: np.ndarray, K: int) -> np.ndarray:
    """Coefficients f^(k)(x0)/k!, k = 0..K, stacked on the last axis."""
    x0 = np.asarray(x0, dtype=float)
    k = np.arange(K + 1)
    inv_fact = np.array([1.0 / factorial(i) for i in k])
    if func == "exp":
        return np.exp(x0)[..., None] * inv_fact
    if func in ("sin", "cos"):
        s, c = np.sin(x0), np.cos(x0)
        cycle = [s, c, -s, -c] if func == "sin" else [c, -s, -c, s]
        return np.stack([cycle[i % 4] for i in k], axis=-1) * inv_fact
    if func == "sqrt":
        if np.any(x0 < 0) or (K > 0 and np.any(x0 == 0)):
            raise DomainError("sqrt outside its smooth domain")
        coef = np.array([_binom_half(i) for i in k])
        return coef * x0[..., None] ** (0.5 - k)
    if func == "log":
        if np.any(x0 <= 0):
            raise DomainError("log of a non-positive number")
        out = np.empty(x0.shape + (K + 1,))
        out[..., 0] = np.log(x0)
        for i in range(1, K + 1):
            out[..., i] = (-1.0) ** (i - 1) / (i * x0 ** i)
        return out
    if func == "recip":
        if np.any(x0 == 0):
            raise DomainError("division by zero")
        return (-1.0) ** k * x0[..., None] ** (-(k + 1.0))
    raise ValueError(f"no Taylor rule for {func!r}")


def _binom_half(k: int) -> float:
    out = 1.0
    for i in range(k):
        out *= (0.5 - i) / (i + 1)
    return out


def compose2(func: str, g: np.ndarray, K: int) -> np.ndarray:
    """func(g) for a bivariate coefficient array g (Horner in g - g0)."""
    if func == "tan":
        return div2(compose2("sin", g, K), compose2("cos", g, K), K)
    t = elementary_taylor(func, g[..., 0], K)
    delta = g.copy()
    delta[..., 0] = 0.0
    out = np.zeros_like(g)
    out[..., 0] = t[..., K]
    for k in range(K - 1, -1, -1):
        out = mul2(out, delta, K)
        out[..., 0] += t[..., k]
    return out


def compose1(func: str, g: np.ndarray) -> np.ndarray:
    """func(g) for a univariate series g."""
    K = g.shape[-1] - 1
    if func == "tan":
        return div1(compose1("sin", g), compose1("cos", g))
    t = elementary_taylor(func, g[..., 0], K)
    delta = g.copy()
    delta[..., 0] = 0.0
    out = np.zeros_like(g)
    out[..., 0] = t[..., K]
    for k in range(K - 1, -1, -1):
        out = mul1(out, delta, K)
        out[..., 0] += t[..., k]
    return out


def div2(a: np.ndarray, b: np.ndarray, K: int) -> np.ndarray:
    if np.any(b[..., 0] == 0):
        raise DomainError("division by a jet with zero constant term")
    return mul2(a, compose2("recip", b, K), K)


def div1(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if np.any(b[..., 0] == 0):
        raise DomainError("division by a series with zero constant term")
    return mul1(a, compose1("recip", b))


def pow2(a: np.ndarray, p: int, K: int) -> np.ndarray:
    out = np.zeros_like(a)
    out[..., 0] = 1.0
    base = a
    while p:
        if p & 1:
            out = mul2(out, base, K)
        p >>= 1
        if p:
            base = mul2(base, base, K)
    return out


@lru_cache(maxsize=None)
def _dx_table(K: int):
    """Index maps for d/dx and d/dy from degree K to degree K - 1."""
    pairs = full(K - 1).pairs
    src_x = np.array([flat_index(m + 1, n) for m, n in pairs])
    fac_x = np.array([m + 1.0 for m, n in pairs])
    src_y = np.array([flat_index(m, n + 1) for m, n in pairs])
    fac_y = np.array([n + 1.0 for m, n in pairs])
    return src_x, fac_x, src_y, fac_y


def deriv2(c: np.ndarray, K: int, axis: int) -> np.ndarray:
    """Coefficients of d/dx (axis 0) or d/dy (axis 1), degree K - 1."""
    src_x, fac_x, src_y, fac_y = _dx_table(K)
    if axis == 0:
        return c[..., src_x] * fac_x
    return c[..., src_y] * fac_y


def truncate2(c: np.ndarray, K: int) -> np.ndarray:
    return c[..., : ncoef(K)]


def deriv1(c: np.ndarray) -> np.ndarray:
    K = c.shape[-1] - 1
    return c[..., 1:] * np.arange(1, K + 1)


# --------------------------------------------------------------------------
# Jet2 value type

class Jet2:
    """Bivariate truncated Taylor expansion (possibly batched over points)."""

    __slots__ = ("coeffs", "degree", "center")

    def __init__(self, coeffs, degree: int, center=None):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[-1] != ncoef(degree):
            raise ValueError(f"degree {degree} jet needs {ncoef(degree)} coefficients")
        self.coeffs = coeffs
        self.degree = degree
        self.center = center

    @property
    def batch_shape(self):
        return self.coeffs.shape[:-1]

    @classmethod
    def constant(cls, value, degree: int, center=None) -> "Jet2":
        value = np.asarray(value, dtype=float)
        c = np.zeros(value.shape + (ncoef(degree),))
        c[..., 0] = value
        return cls(c, degree, center)

    @classmethod
    def variable(cls, name: str, center, degree: int) -> "Jet2":
        x0, y0 = (np.asarray(v, dtype=float) for v in center)
        x0, y0 = np.broadcast_arrays(x0, y0)
        c = np.zeros(x0.shape + (ncoef(degree),))
        if name == "x":
            c[..., 0] = x0
            if degree >= 1:
                c[..., 1] = 1.0
        else:
            c[..., 0] = y0
            if degree >= 1:
                c[..., 2] = 1.0
        return cls(c, degree, center)

    def _other(self, b) -> np.ndarray:
        if isinstance(b, Jet2):
            if b.degree != self.degree:
                raise ValueError("jets of different degree")
            return b.coeffs
        c = np.zeros(np.shape(b) + (ncoef(self.degree),))
        c[..., 0] = b
        return c

    def __add__(self, b):
        return Jet2(self.coeffs + self._other(b), self.degree, self.center)

    __radd__ = __add__

    def __neg__(self):
        return Jet2(-self.coeffs, self.degree, self.center)

    def __sub__(self, b):
        return Jet2(self.coeffs - self._other(b), self.degree, self.center)

    def __rsub__(self, b):
        return Jet2(self._other(b) - self.coeffs, self.degree, self.center)

    def __mul__(self, b):
        if isinstance(b, Jet2):
            return jet_product(self, b)
        return Jet2(self.coeffs * np.asarray(b, dtype=float)[..., None], self.degree, self.center)

    __rmul__ = __mul__

    def __truediv__(self, b):
        if isinstance(b, Jet2):
            return jet_divide(self, b)
        b = np.asarray(b, dtype=float)
        if np.any(b == 0):
            raise DomainError("division by zero")
        return Jet2(self.coeffs / b[..., None], self.degree, self.center)

    def __pow__(self, p: int):
        return Jet2(pow2(self.coeffs, int(p), self.degree), self.degree, self.center)

    def coefficient(self, m: int, n: int):
        if m < 0 or n < 0 or m + n > self.degree:
            raise IndexError(f"({m},{n}) outside a degree {self.degree} jet")
        return self.coeffs[..., flat_index(m, n)]

    def partials(self, K: int | None = None) -> np.ndarray:
        """All derivative values m! n! c[m][n] over Lambda_K."""
        K = self.degree if K is None else K
        return self.coeffs[..., : ncoef(K)] * full(K).factorials()

    def diff(self, axis: int) -> "Jet2":
        if self.degree == 0:
            raise ValueError("cannot differentiate a degree 0 jet")
        return Jet2(deriv2(self.coeffs, self.degree, axis), self.degree - 1, self.center)

    def truncate(self, K: int) -> "Jet2":
        return Jet2(truncate2(self.coeffs, K), K, self.center)

    def __repr__(self):
        return f"Jet2(degree={self.degree}, batch={self.batch_shape})"


def jet_product(a: Jet2, b: Jet2) -> Jet2:
    if a.degree != b.degree:
        raise ValueError("jets of different degree")
    return Jet2(mul2(a.coeffs, b.coeffs, a.degree), a.degree, a.center)


def jet_divide(a: Jet2, b: Jet2) -> Jet2:
    if a.degree != b.degree:
        raise ValueError("jets of different degree")
    return Jet2(div2(a.coeffs, b.coeffs, a.degree), a.degree, a.center)


def jet_compose_univariate(func: str, g: Jet2) -> Jet2:
    """func in {sin, cos, tan, exp, log, sqrt, recip} applied to g."""
    return Jet2(compose2(func, g.coeffs, g.degree), g.degree, g.center)


def partial(j: Jet2, m: int, n: int):
    """Derivative value d^(m+n)/dx^m dy^n at the center."""
    return j.coefficient(m, n) * factorial(m) * factorial(n)


def jet_eval(e: Expr, center, K: int) -> Jet2:
    """Taylor expansion of ``e`` to total degree K at ``center``.

    ``center`` is an (x, y) pair of scalars or equally shaped arrays.
    """
    if not 0 <= K <= MAX_DEGREE:
        raise ValueError(f"degree must lie in [0, {MAX_DEGREE}]")
    x0, y0 = np.broadcast_arrays(np.asarray(center[0], float), np.asarray(center[1], float))
    cache: dict = {}
    coeffs = _jet(e, x0, y0, K, cache)
    if coeffs.shape[:-1] != x0.shape:
        coeffs = np.broadcast_to(coeffs, x0.shape + (ncoef(K),)).copy()
    return Jet2(coeffs, K, (x0, y0))


def _jet(e: Expr, x0, y0, K: int, cache: dict) -> np.ndarray:
    key = id(e)
    hit = cache.get(key)
    if hit is not None and hit[0] is e:
        return hit[1]
    out = _jet_uncached(e, x0, y0, K, cache)
    cache[key] = (e, out)
    return out


def _jet_uncached(e: Expr, x0, y0, K: int, cache: dict) -> np.ndarray:
    if isinstance(e, Num):
        c = np.zeros(ncoef(K))
        c[0] = e.value
        return c
    if isinstance(e, Var):
        c = np.zeros(x0.shape + (ncoef(K),))
        c[..., 0] = x0 if e.name == "x" else y0
        if K >= 1:
            c[..., 1 if e.name == "x" else 2] = 1.0
        return c
    if isinstance(e, Neg):
        return -_jet(e.arg, x0, y0, K, cache)
    if isinstance(e, Add):
        return _jet(e.left, x0, y0, K, cache) + _jet(e.right, x0, y0, K, cache)
    if isinstance(e, Mul):
        a = _jet(e.left, x0, y0, K, cache)
        b = _jet(e.right, x0, y0, K, cache)
        if a.ndim == 1 or b.ndim == 1:
            # a constant factor needs no convolution when it is a pure number
            if isinstance(e.left, Num):
                return e.left.value * b
            if isinstance(e.right, Num):
                return a * e.right.value
        return mul2(a, b, K)
    if isinstance(e, Div):
        a = _jet(e.left, x0, y0, K, cache)
        if isinstance(e.right, Num):
            if e.right.value == 0:
                raise DomainError("division by zero")
            return a / e.right.value
        return div2(a, _jet(e.right, x0, y0, K, cache), K)
    if isinstance(e, Pow):
        return pow2(_jet(e.base, x0, y0, K, cache), e.exponent, K)
    if isinstance(e, Call):
        return compose2(e.func, _jet(e.arg, x0, y0, K, cache), K)
    raise TypeError(f"not an expression node: {e!r}")
