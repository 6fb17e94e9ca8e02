"""Problem descriptions: fields as expressions, derived data, builtin cases.

A problem either prescribes f+, f-, g1, g2 and the boundary value g directly,
or gives exact solutions u+ and u- from which every missing field is derived
through jet arithmetic:

    f = -(a u_x)_x - (a u_y)_y,    g1 = u+ - u-,
    g2 = (a+ grad u+ - a- grad u-) . grad psi / |grad psi|

(the last one is a smooth extension off the interface of the flux jump).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exprjet import Expr, Jet2, eval_expr, jet_eval, parse_expr, to_text
from .exprjet.jet import compose2


@dataclass
class ProblemSpec:
    name: str
    rect: tuple[float, float, float, float]
    psi: Expr
    a_plus: Expr
    a_minus: Expr
    f_plus: Expr | None = None
    f_minus: Expr | None = None
    g1: Expr | None = None
    g2: Expr | None = None
    g: Expr | None = None
    u_plus: Expr | None = None
    u_minus: Expr | None = None
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.u_plus is None or self.u_minus is None:
            missing = [k for k in ("f_plus", "f_minus", "g1", "g2", "g") if getattr(self, k) is None]
            if missing:
                raise ValueError(f"{self.name}: without an exact solution, {missing} must be given")

    @property
    def has_exact(self) -> bool:
        return self.u_plus is not None and self.u_minus is not None

    def coefficient(self, side: int) -> Expr:
        return self.a_plus if side > 0 else self.a_minus

    def solution(self, side: int) -> Expr:
        return self.u_plus if side > 0 else self.u_minus

    # -- jets of the data ----------------------------------------------------

    def a_jet(self, side: int, center, K: int) -> Jet2:
        return jet_eval(self.coefficient(side), center, K)

    def f_jet(self, side: int, center, K: int) -> Jet2:
        given = self.f_plus if side > 0 else self.f_minus
        if given is not None:
            return jet_eval(given, center, K)
        return forcing_jet(self.coefficient(side), self.solution(side), center, K)

    def g1_jet(self, center, K: int) -> Jet2:
        if self.g1 is not None:
            return jet_eval(self.g1, center, K)
        return jet_eval(self.u_plus, center, K) - jet_eval(self.u_minus, center, K)

    def g2_jet(self, center, K: int) -> Jet2:
        if self.g2 is not None:
            return jet_eval(self.g2, center, K)
        return flux_jump_jet(self, center, K)

    # -- pointwise values ----------------------------------------------------

    def boundary_value(self, x, y) -> np.ndarray:
        if self.g is not None:
            return eval_expr(self.g, x, y)
        return self.exact(x, y)

    def exact(self, x, y) -> np.ndarray:
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        plus = eval_expr(self.psi, x, y) >= 0
        out = np.empty(x.shape)
        if np.any(plus):
            out[plus] = eval_expr(self.u_plus, x[plus], y[plus])
        if np.any(~plus):
            out[~plus] = eval_expr(self.u_minus, x[~plus], y[~plus])
        return out

    def exact_gradient_on(self, side: np.ndarray, x, y):
        """Exact (u_x, u_y) using the solution of the given side per point."""
        ux = np.empty(np.shape(x))
        uy = np.empty(np.shape(x))
        for s in (1, -1):
            m = side == s
            if np.any(m):
                j = jet_eval(self.solution(s), (x[m], y[m]), 1)
                ux[m], uy[m] = j.coeffs[..., 1], j.coeffs[..., 2]
        return ux, uy

    def coefficient_on(self, side: np.ndarray, x, y) -> np.ndarray:
        out = np.empty(np.shape(x))
        for s in (1, -1):
            m = side == s
            if np.any(m):
                out[m] = eval_expr(self.coefficient(s), x[m], y[m])
        return out

    def to_text(self) -> str:
        """Serialize in the key/value problem-file format."""
        lines = [f"name = {self.name}",
                 "rect = " + ", ".join(repr(float(v)) for v in self.rect)]
        for key in ("psi", "a_plus", "a_minus", "f_plus", "f_minus", "g1", "g2", "g",
                    "u_plus", "u_minus"):
            e = getattr(self, key)
            if e is not None:
                lines.append(f"{key} = {to_text(e)}")
        return "\n".join(lines) + "\n"


def forcing_jet(a: Expr, u: Expr, center, K: int) -> Jet2:
    """Jet of -div(a grad u) to degree K."""
    uj = jet_eval(u, center, K + 2)
    aj = jet_eval(a, center, K + 1)
    return -((aj * uj.diff(0)).diff(0) + (aj * uj.diff(1)).diff(1))


def flux_jump_jet(p: ProblemSpec, center, K: int) -> Jet2:
    up = jet_eval(p.u_plus, center, K + 1)
    um = jet_eval(p.u_minus, center, K + 1)
    ap = jet_eval(p.a_plus, center, K)
    am = jet_eval(p.a_minus, center, K)
    ps = jet_eval(p.psi, center, K + 1)
    px, py = ps.diff(0), ps.diff(1)
    inv_norm = Jet2(compose2("sqrt", (px * px + py * py).coeffs, K), K, center)
    flux = (ap * up.diff(0) - am * um.diff(0)) * px + (ap * up.diff(1) - am * um.diff(1)) * py
    return flux / inv_norm


def self_check(p: ProblemSpec, n: int = 40, seed: int = 0) -> dict:
    """Compare prescribed f, g1, g2 with those implied by the exact solution.

    Volume points are sampled per region; interface points are found by
    projecting random points onto the zero set.  Returns the largest relative
    discrepancies.
    """
    from .geometry import find_base_points
    if not p.has_exact:
        return {}
    rng = np.random.default_rng(seed)
    l1, l2, l3, l4 = p.rect
    x = rng.uniform(l1, l2, 4 * n)
    y = rng.uniform(l3, l4, 4 * n)
    side = np.where(eval_expr(p.psi, x, y) >= 0, 1, -1)
    out = {}
    for s, key in ((1, "f_plus"), (-1, "f_minus")):
        given = getattr(p, key)
        m = side == s
        if given is None or not np.any(m):
            continue
        ref = forcing_jet(p.coefficient(s), p.solution(s), (x[m], y[m]), 0).coeffs[..., 0]
        val = eval_expr(given, x[m], y[m])
        out[key] = float(np.max(np.abs(val - ref)) / max(np.max(np.abs(ref)), 1.0))
    xs, ys, _, _ = find_base_points(p.psi, x[:n], y[:n], 10.0 * (l2 - l1), l2 - l1)
    on = np.abs(eval_expr(p.psi, xs, ys)) < 1e-10
    xs, ys = xs[on], ys[on]
    if len(xs):
        jump = eval_expr(p.u_plus, xs, ys) - eval_expr(p.u_minus, xs, ys)
        if p.g1 is not None:
            g1 = eval_expr(p.g1, xs, ys)
            out["g1"] = float(np.max(np.abs(g1 - jump)) / max(np.max(np.abs(jump)), 1.0))
        if p.g2 is not None:
            ref = flux_jump_jet(p, (xs, ys), 0).coeffs[..., 0]
            g2 = eval_expr(p.g2, xs, ys)
            out["g2"] = float(np.max(np.abs(g2 - ref)) / max(np.max(np.abs(ref)), 1.0))
    return out


# --------------------------------------------------------------------------
# builtin examples

def _spec(name, rect, psi, ap, am, **kw) -> ProblemSpec:
    parsed = {k: (parse_expr(v) if isinstance(v, str) else v) for k, v in kw.items()}
    return ProblemSpec(name, rect, parse_expr(psi), parse_expr(ap), parse_expr(am), **parsed)


def builtin_examples() -> list[ProblemSpec]:
    """The ten benchmark problems; the first five have exact solutions."""
    pi = math.pi
    sq3 = (-3.0, 3.0, -3.0, 3.0)
    sqpi = (-pi, pi, -pi, pi)
    ex = []
    ex.append(_spec(
        "builtin:1", sq3, "x^4+2*y^4-2",
        "(2+cos(x)*cos(y))/10", "10*(2+cos(x)*cos(y))",
        u_plus="10*sin(3.5*x)*(x^4+2*y^4-2)",
        u_minus="sin(3.5*x)*(x^4+2*y^4-2)/10+100",
        g1="-100", g2="0"))
    ex.append(_spec(
        "builtin:2", sqpi, "x^2+y^2-2",
        "(2+sin(x)*sin(y))/100", "10*(2+sin(x)*sin(y))",
        u_plus="100*sin(-2*x)*(x^2+y^2-2)",
        u_minus="sin(-2*x)*(x^2+y^2-2)/10-100",
        g1="100", g2="0"))
    ex.append(_spec(
        "builtin:3", sqpi, "y^2-2*x^2+x^4-1",
        "10*(10+sin(x+y))", "(10+sin(x+y))/1000",
        u_plus="sin(2*y)*(y^2-2*x^2+x^4-1)/10",
        u_minus="1000*sin(2*y)*(y^2-2*x^2+x^4-1)+100",
        g1="-100", g2="0"))
    ex.append(_spec(
        "builtin:4", (-2.5, 2.5, -2.5, 2.5), "2*x^4+y^2-1/2",
        "10*exp(x-y)", "exp(x-y)/1000",
        u_plus="cos(4*x)*(2*x^4+y^2-1/2)/10",
        u_minus="1000*cos(4*x)*(2*x^4+y^2-1/2)+100",
        g1="-100", g2="0"))
    r5 = 2 * pi / 3
    ex.append(_spec(
        "builtin:5", (-r5, r5, -r5, r5), "y^2+2*x^2/(x^2+1)-1",
        "100*(2+cos(x)*sin(y))", "(2+cos(x)*sin(y))/10",
        u_plus="cos(4*x)*(y^2*(x^2+1)+x^2-1)/100",
        u_minus="10*cos(4*x)*(y^2*(x^2+1)+x^2-1)+100",
        g1="-100", g2="0"))
    ex.append(_spec(
        "builtin:6", sqpi, "x^4+2*y^4-2",
        "100*(2+sin(x)*cos(y))", "(2+sin(x)*cos(y))/10",
        f_plus="sin(2*x)*sin(2*y)", f_minus="cos(2*x)*cos(2*y)",
        g1="exp(x-y)-10", g2="cos(x+y)", g="0"))
    ex.append(_spec(
        "builtin:7", sqpi, "y^2-2*x^2+x^4-1",
        "10/(2+cos(x+y))", "(2+sin(x+y))/100",
        f_plus="sin(2*x)*sin(y)", f_minus="exp(x+y)*sin(x)",
        g1="cos(x-y)-1", g2="sin(x-y)", g="0"))
    ex.append(_spec(
        "builtin:8", (-2.0, 2.0, -2.0, 2.0), "2*x^4+y^2-1/2",
        "100*(2+sin(x)*cos(y))", "(2+cos(x-y))/10",
        f_plus="sin(pi*x)*sin(pi*y)", f_minus="cos(pi*x)*cos(pi*y)",
        g1="sin(x)*cos(y)-2", g2="cos(x)*sin(y)", g="0"))
    ex.append(_spec(
        "builtin:9", sqpi, "x^2+y^2-2",
        "(10+sin(x)*cos(y))/100", "10*(10+sin(x-y))",
        f_plus="sin(2*x)*sin(2*y)", f_minus="sin(2*x)*sin(2*y)",
        g1="sin(x)*sin(y)+2", g2="cos(y)", g="0"))
    ex.append(_spec(
        "builtin:10", (-2.0, 2.0, -2.0, 2.0), "2*x^4+y^2-1/2",
        "(10+sin(x)*cos(y))/100", "10*(10+cos(x-y))",
        f_plus="sin(pi*x)*sin(pi*y)", f_minus="sin(pi*x)*sin(pi*y)",
        g1="-sin(x)*sin(y)-2", g2="-cos(y)", g="0"))
    return ex


def builtin(n: int) -> ProblemSpec:
    examples = builtin_examples()
    if not 1 <= n <= len(examples):
        raise ProblemFileError(f"no builtin example {n}; choose 1..{len(examples)}")
    return examples[n - 1]


# --------------------------------------------------------------------------
# problem files

_KEYS = ("name", "rect", "psi", "a_plus", "a_minus", "f_plus", "f_minus", "g1", "g2", "g",
         "u_plus", "u_minus")


class ProblemFileError(ValueError):
    pass


def parse_problem_text(text: str, default_name: str = "problem") -> ProblemSpec:
    """Parse the key = value problem format (see README)."""
    fields: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ProblemFileError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ProblemFileError(f"line {lineno}: unknown key {key!r}")
        if key in fields:
            raise ProblemFileError(f"line {lineno}: duplicate key {key!r}")
        fields[key] = value
    for key in ("rect", "psi", "a_plus", "a_minus"):
        if key not in fields:
            raise ProblemFileError(f"missing required key {key!r}")
    try:
        rect = tuple(float(_const(v)) for v in fields["rect"].split(","))
    except ValueError as exc:
        raise ProblemFileError(f"bad rect: {exc}") from None
    if len(rect) != 4:
        raise ProblemFileError("rect needs four numbers: l1, l2, l3, l4")
    kw = {}
    for key in _KEYS[2:]:
        if key in fields:
            try:
                kw[key] = parse_expr(fields[key])
            except ValueError as exc:
                raise ProblemFileError(f"{key}: {exc}") from None
    name = fields.get("name", default_name)
    try:
        return ProblemSpec(name, rect, **kw)
    except ValueError as exc:
        raise ProblemFileError(str(exc)) from None


def _const(text: str) -> float:
    e = parse_expr(text)
    return eval_expr(e, 0.0, 0.0)


def load_problem(path) -> ProblemSpec:
    from pathlib import Path
    p = Path(path)
    return parse_problem_text(p.read_text(), default_name=p.stem)
