"""Expression parsing and truncated Taylor (jet) arithmetic."""

from .expr import (
    Add, ArityError, Call, Div, DomainError, Expr, ExprError, ExprSyntaxError,
    Mul, Neg, Num, Pow, UnknownIdentifierError, Var, eval_expr, parse_expr, to_text,
)
from .indexsets import MultiIndexSet, flat_index, full, high, low, ncoef
from .jet import (
    Jet2, compose1, deriv1, div1, jet_compose_univariate, jet_divide, jet_eval,
    jet_product, mul1, partial,
)

__all__ = [
    "Add", "ArityError", "Call", "Div", "DomainError", "Expr", "ExprError",
    "ExprSyntaxError", "Jet2", "Mul", "MultiIndexSet", "Neg", "Num", "Pow",
    "UnknownIdentifierError", "Var", "compose1", "deriv1", "div1", "eval_expr",
    "flat_index", "full", "high", "jet_compose_univariate", "jet_divide",
    "jet_eval", "jet_product", "low", "mul1", "ncoef", "parse_expr", "partial",
    "to_text",
]
