"""A small arithmetic expression language for configuration files.

Expressions are parsed with :mod:`ast` and only the following nodes are
accepted: numeric literals, whitelisted variable names, the binary
operators ``+ - * / ^`` (``**`` is accepted as a synonym of ``^``), unary
``+``/``-`` and calls to ``sin cos exp log sqrt``.  Evaluation is
vectorised over numpy arrays.
"""

from __future__ import annotations

import ast
import operator
from typing import Callable, Iterable

import numpy as np

FUNCTIONS: dict[str, Callable] = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
}
CONSTANTS = {"pi": np.pi}

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos}


class ExpressionError(ValueError):
    pass


class Expression:
    """Compiled expression in a fixed set of variables."""

    def __init__(self, text: str, variables: Iterable[str] = ("theta",)):
        if not isinstance(text, str):
            raise ExpressionError(f"expression must be a string, got {type(text).__name__}")
        self.text = text
        self.variables = tuple(variables)
        try:
            tree = ast.parse(text.replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
        self._check(tree.body)
        self._tree = tree.body

    def __repr__(self) -> str:
        return f"Expression({self.text!r})"

    def _check(self, node) -> None:
        if isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                raise ExpressionError(f"unsupported literal {node.value!r}")
        elif isinstance(node, ast.Name):
            if node.id not in self.variables and node.id not in CONSTANTS:
                raise ExpressionError(f"unknown name {node.id!r} (allowed: {', '.join(self.variables)})")
        elif isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ExpressionError(f"unsupported operator {type(node.op).__name__}")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if type(node.op) not in _UNOPS:
                raise ExpressionError(f"unsupported operator {type(node.op).__name__}")
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
                raise ExpressionError(f"unknown function in {self.text!r}")
            if len(node.args) != 1 or node.keywords:
                raise ExpressionError(f"{node.func.id} takes exactly one argument")
            self._check(node.args[0])
        else:
            raise ExpressionError(f"unsupported syntax {type(node).__name__} in {self.text!r}")

    def _eval(self, node, env):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return env[node.id] if node.id in env else CONSTANTS[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            return _UNOPS[type(node.op)](self._eval(node.operand, env))
        return FUNCTIONS[node.func.id](self._eval(node.args[0], env))

    def __call__(self, *args, **kwargs):
        env = dict(zip(self.variables, args))
        env.update(kwargs)
        missing = set(self.variables) - set(env)
        if missing:
            raise ExpressionError(f"missing values for {sorted(missing)}")
        env = {k: np.asarray(v, dtype=float) for k, v in env.items()}
        with np.errstate(all="ignore"):
            return self._eval(self._tree, env)


def sample_on_grid(expr: Expression, grid, tol: float = 1e-12) -> np.ndarray:
    """Sample an expression in theta on the grid nodes and validate evenness."""
    f = np.broadcast_to(np.asarray(expr(grid.theta), dtype=float), (grid.N,)).copy()
    if np.any(~np.isfinite(f)):
        raise ExpressionError(f"{expr.text!r} is not finite on the grid")
    mismatch = float(np.max(np.abs(f - f[grid.antipode])))
    if mismatch > tol:
        raise ExpressionError(f"{expr.text!r} is not even: antipodal mismatch {mismatch:.3g}")
    return f
