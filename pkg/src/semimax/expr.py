"""Closed-form coefficient expressions for scenario files.

Grammar: numbers, the coordinates ``x1 x2 x3``, named parameters, the
binary operators ``+ - * / **``, unary ``-`` and ``+``, and the functions
``exp sin cos sqrt``. Anything else is rejected before evaluation. The
parsed tree is turned into a sympy expression, so exact gradients come for
free.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass
from typing import Callable, Mapping, Optional

import numpy as np
import sympy as sp

from .errors import ConfigError

COORDS = sp.symbols("x1 x2 x3", real=True)
FUNCTIONS = {"exp": sp.exp, "sin": sp.sin, "cos": sp.cos, "sqrt": sp.sqrt}
_BINOPS = {
    ast.Add: lambda a, b: a + b,
    ast.Sub: lambda a, b: a - b,
    ast.Mult: lambda a, b: a * b,
    ast.Div: lambda a, b: a / b,
    ast.Pow: lambda a, b: a**b,
}


def _convert(node, params):
    if isinstance(node, ast.Expression):
        return _convert(node.body, params)
    if isinstance(node, ast.Constant) and type(node.value) in (int, float):
        return sp.Float(node.value) if isinstance(node.value, float) else sp.Integer(node.value)
    if isinstance(node, ast.Name):
        if node.id in ("x1", "x2", "x3"):
            return COORDS[int(node.id[1]) - 1]
        if node.id in params:
            return sp.Float(float(params[node.id]))
        raise ConfigError(f"unknown name {node.id!r} in expression")
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_convert(node.left, params), _convert(node.right, params))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _convert(node.operand, params)
        return -inner if isinstance(node.op, ast.USub) else inner
    if (
        isinstance(node, ast.Call)
        and isinstance(node.func, ast.Name)
        and node.func.id in FUNCTIONS
        and len(node.args) == 1
        and not node.keywords
    ):
        return FUNCTIONS[node.func.id](_convert(node.args[0], params))
    raise ConfigError(f"unsupported syntax in expression: {ast.dump(node)[:60]}")


@dataclass(frozen=True)
class Expression:
    """Parsed scalar field ``f(x1, x2, x3)`` with its exact gradient."""

    source: str
    symbolic: sp.Expr
    func: Callable
    grads: tuple

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = self.func(x[..., 0], x[..., 1], x[..., 2])
        return np.broadcast_to(np.asarray(out, dtype=float), x.shape[:-1]).copy()

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape)
        for j, g in enumerate(self.grads):
            out[..., j] = np.broadcast_to(np.asarray(g(x[..., 0], x[..., 1], x[..., 2]), dtype=float), x.shape[:-1])
        return out

    @property
    def is_constant(self) -> bool:
        return not self.symbolic.free_symbols


def parse_expression(source, params: Optional[Mapping[str, float]] = None) -> Expression:
    """Parse ``source`` (a string or a number) into an :class:`Expression`."""
    params = dict(params or {})
    text = repr(float(source)) if isinstance(source, (int, float)) and not isinstance(source, bool) else source
    if not isinstance(text, str):
        raise ConfigError(f"expression must be a string or number, got {type(source).__name__}")
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from None
    expr = _convert(tree, params)
    func = sp.lambdify(COORDS, expr, "numpy")
    grads = tuple(sp.lambdify(COORDS, sp.diff(expr, c), "numpy") for c in COORDS)
    return Expression(text, expr, func, grads)
