"""Small arithmetic expression language for scenario files.

Grammar: numbers, the operators ``+ - * / ^`` (``**`` is accepted as a
synonym for ``^``), parentheses, the functions ``sin``, ``cos`` and ``exp``,
the constants ``pi`` and ``e``, named parameters supplied by the caller, the
time ``t`` and the phase-space coordinates.  For ``n = 1`` the coordinates are
``q`` and ``p``; for general ``n`` they are ``q1..qn`` and ``p1..pn``.

Parsing goes through :func:`ast.parse` with a whitelist of node types, so no
code is ever executed.  The validated tree is converted to a sympy expression,
which provides exact gradients and Hessians; these are compiled to numpy
callables with :func:`sympy.lambdify`.
"""

from __future__ import annotations

import ast
from functools import cached_property
from typing import Mapping

import numpy as np
import sympy as sp

from .errors import ExpressionError

__all__ = ["coordinate_symbols", "parse_expression", "CompiledExpression"]

_FUNCS = {"sin": sp.sin, "cos": sp.cos, "exp": sp.exp}
_CONSTS = {"pi": sp.pi, "e": sp.E}
T_SYMBOL = sp.Symbol("t", real=True)


def coordinate_symbols(n: int) -> tuple[list[sp.Symbol], dict[str, sp.Symbol]]:
    """Ordered coordinate symbols ``(q.., p..)`` and the name table."""
    if n < 1:
        raise ExpressionError(f"dimension n must be >= 1, got {n}")
    qs = [sp.Symbol(f"q{i + 1}", real=True) for i in range(n)]
    ps = [sp.Symbol(f"p{i + 1}", real=True) for i in range(n)]
    names = {s.name: s for s in qs + ps}
    if n == 1:
        names["q"] = qs[0]
        names["p"] = ps[0]
    return qs + ps, names


def parse_expression(text: str, n: int, params: Mapping[str, float] | None = None,
                     allow_time: bool = True) -> sp.Expr:
    """Parse ``text`` into a sympy expression over the coordinates of dimension ``n``.

    Raises
    ------
    ExpressionError
        On syntax errors, unknown names or forbidden constructs.
    """
    if isinstance(text, (int, float)):
        return sp.Float(text) if isinstance(text, float) else sp.Integer(text)
    if not isinstance(text, str) or not text.strip():
        raise ExpressionError(f"expression must be a non-empty string, got {text!r}")
    try:
        # ``^`` binds loosest in Python; rewrite it so it gets power precedence.
        tree = ast.parse(text.strip().replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
    _, names = coordinate_symbols(n)
    table: dict[str, sp.Expr] = dict(_CONSTS)
    for key, val in (params or {}).items():
        if key in names or key in _FUNCS or key == "t":
            raise ExpressionError(f"parameter name {key!r} shadows a reserved name")
        table[key] = sp.nsimplify(val) if isinstance(val, int) else sp.Float(val)
    table.update(names)
    if allow_time:
        table["t"] = T_SYMBOL

    def build(node: ast.AST) -> sp.Expr:
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            v = node.value
            return sp.Integer(v) if isinstance(v, int) else sp.Float(v)
        if isinstance(node, ast.Name):
            if node.id not in table:
                raise ExpressionError(f"unknown name {node.id!r} in {text!r}")
            return table[node.id]
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            val = build(node.operand)
            return -val if isinstance(node.op, ast.USub) else val
        if isinstance(node, ast.BinOp):
            a, b = build(node.left), build(node.right)
            op = node.op
            if isinstance(op, ast.Add):
                return a + b
            if isinstance(op, ast.Sub):
                return a - b
            if isinstance(op, ast.Mult):
                return a * b
            if isinstance(op, ast.Div):
                return a / b
            if isinstance(op, ast.Pow):
                return a ** b
            raise ExpressionError(f"operator {type(op).__name__} not allowed in {text!r}")
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
                raise ExpressionError(f"only sin, cos, exp may be called in {text!r}")
            if len(node.args) != 1 or node.keywords:
                raise ExpressionError(f"{node.func.id} takes exactly one argument")
            return _FUNCS[node.func.id](build(node.args[0]))
        raise ExpressionError(f"construct {type(node).__name__} not allowed in {text!r}")

    return build(tree)


class CompiledExpression:
    """A scalar field ``f(t, x)`` with exact gradient and Hessian.

    Parameters
    ----------
    expr : str or sympy.Expr
    n : int
        Configuration dimension; ``x`` has ``2n`` components.
    params : mapping, optional
        Named numeric parameters.

    Notes
    -----
    All evaluators take ``t`` (float) and ``x`` of shape ``(..., 2n)`` and
    broadcast over the leading axes.
    """

    def __init__(self, expr, n: int, params: Mapping[str, float] | None = None):
        self.n = int(n)
        self.source = expr if isinstance(expr, str) else str(expr)
        self.expr = expr if isinstance(expr, sp.Expr) else parse_expression(expr, n, params)
        self.symbols, _ = coordinate_symbols(self.n)
        self._args = [T_SYMBOL] + self.symbols

    # -- symbolic pieces ---------------------------------------------------
    @cached_property
    def grad_exprs(self) -> list[sp.Expr]:
        return [sp.diff(self.expr, s) for s in self.symbols]

    @cached_property
    def hess_exprs(self) -> list[list[sp.Expr]]:
        return [[sp.diff(g, s) for s in self.symbols] for g in self.grad_exprs]

    @property
    def time_dependent(self) -> bool:
        return T_SYMBOL in self.expr.free_symbols

    def polynomial_degree(self) -> int | None:
        """Total degree in the coordinates, or ``None`` if not polynomial."""
        try:
            poly = sp.Poly(self.expr, *self.symbols)
        except sp.PolynomialError:
            return None
        for coeff in poly.coeffs():
            if coeff.free_symbols - {T_SYMBOL}:
                return None
        return poly.total_degree()

    # -- numeric evaluation -----------------------------------------------
    def _compile(self, exprs):
        flat = list(exprs)
        funcs = []
        for e in flat:
            if e.free_symbols:
                funcs.append(sp.lambdify(self._args, e, modules="numpy"))
            else:
                funcs.append(float(e))
        return funcs

    @cached_property
    def _f_value(self):
        return self._compile([self.expr])[0]

    @cached_property
    def _f_grad(self):
        return self._compile(self.grad_exprs)

    @cached_property
    def _f_hess(self):
        return self._compile([e for row in self.hess_exprs for e in row])

    def _call(self, f, t, x):
        shape = x.shape[:-1]
        if isinstance(f, float):
            return np.full(shape, f)
        cols = [x[..., k] for k in range(2 * self.n)]
        out = np.asarray(f(t, *cols), dtype=float)
        if out.shape != shape:
            out = np.broadcast_to(out, shape).copy()
        return out

    def value(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self._call(self._f_value, t, x)

    def grad(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.stack([self._call(f, t, x) for f in self._f_grad], axis=-1)

    def hess(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        d = 2 * self.n
        flat = np.stack([self._call(f, t, x) for f in self._f_hess], axis=-1)
        return flat.reshape(x.shape[:-1] + (d, d))

    def __repr__(self) -> str:
        return f"CompiledExpression({self.source!r}, n={self.n})"
