"""Exact expression algebra over real coordinates with complex coefficients."""

from .expr import (
    I,
    Add,
    Conj,
    Const,
    EvaluationError,
    Expr,
    Func,
    Mul,
    Pow,
    Sym,
    UnknownSymbolError,
    compile_expr,
    conjugate,
    const,
    cos,
    differentiate,
    evaluate,
    exp,
    normalize,
    sin,
    structurally_equal,
    substitute,
    sym,
    symbols,
)
from .gaussian import GaussianRational
from .grid import GridSpec, Point
from .parser import ExprSyntaxError, parse

__all__ = [
    "I", "Add", "Conj", "Const", "EvaluationError", "Expr", "ExprSyntaxError", "Func",
    "GaussianRational", "GridSpec", "Mul", "Point", "Pow", "Sym", "UnknownSymbolError",
    "compile_expr", "conjugate", "const", "cos", "differentiate", "evaluate", "exp",
    "normalize", "parse", "sin", "structurally_equal", "substitute", "sym", "symbols",
]
