"""Restricted arithmetic expressions over grid coordinates.

Used for the scalar ``alpha(x)`` and analytic right-hand sides in problem
files. Allowed names: ``x1 .. xn``, ``L`` (first box length), ``L1 .. Ln``,
``pi``, ``e`` and the functions below. Anything else is rejected.
"""
import ast

import numpy as np

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "tanh": np.tanh,
    "sinh": np.sinh,
    "cosh": np.cosh,
}
_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}
_UNOPS = {ast.USub: np.negative, ast.UAdd: np.positive}


class ExpressionError(ValueError):
    pass


def _eval(node, env):
    if isinstance(node, ast.Expression):
        return _eval(node.body, env)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return float(node.value)
    if isinstance(node, ast.Name):
        if node.id not in env:
            raise ExpressionError(f"unknown name {node.id!r}")
        return env[node.id]
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval(node.left, env), _eval(node.right, env))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
        return _UNOPS[type(node.op)](_eval(node.operand, env))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
        fn = FUNCTIONS.get(node.func.id)
        if fn is None or len(node.args) != 1:
            raise ExpressionError(f"unsupported call {ast.dump(node.func)}")
        return fn(_eval(node.args[0], env))
    raise ExpressionError(f"unsupported syntax: {ast.dump(node)}")


def compile_expression(text, lengths):
    """Return ``f(x)`` mapping points ``(P, n)`` to values ``(P,)``."""
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc}") from None
    n = len(lengths)

    def f(x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        env = {"pi": np.pi, "e": np.e, "L": lengths[0]}
        for i in range(n):
            env[f"x{i + 1}"] = x[:, i]
            env[f"L{i + 1}"] = lengths[i]
        out = _eval(tree, env)
        return np.broadcast_to(np.asarray(out, dtype=np.float64), (len(x),)).copy()

    f(np.zeros((1, n)))  # reject bad names early
    return f
