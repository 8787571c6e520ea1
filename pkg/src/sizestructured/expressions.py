"""A small arithmetic expression language for ingredient files.

Grammar: numbers, the variables ``x`` and ``S``, named constants,
``+ - * /`` (with unary minus), parentheses and the functions
``exp(e)``, ``min(e, e, ...)`` and ``max(e, e, ...)``.

Expressions compile to numpy-vectorised callables of ``(x, S)``.
"""
from __future__ import annotations

import ast
from typing import Callable, Mapping

import numpy as np

from .errors import ConfigError

_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
}


def _reduce(fn):
    def apply(*args):
        out = args[0]
        for a in args[1:]:
            out = fn(out, a)
        return out

    return apply


_FUNCS = {
    "exp": (np.exp, 1, 1),
    "min": (_reduce(np.minimum), 2, None),
    "max": (_reduce(np.maximum), 2, None),
}


def _compile(node: ast.AST, constants: Mapping[str, float], source: str, variables=("x", "S")) -> Callable:
    if isinstance(node, ast.Expression):
        return _compile(node.body, constants, source, variables)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        value = float(node.value)
        return lambda x, S: value
    if isinstance(node, ast.Name):
        if node.id == variables[0]:
            return lambda x, S: x
        if node.id == variables[1]:
            return lambda x, S: S
        if node.id in constants:
            value = float(constants[node.id])
            return lambda x, S: value
        raise ConfigError(f"unknown name {node.id!r} in expression {source!r}")
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op = _BINOPS[type(node.op)]
        left = _compile(node.left, constants, source, variables)
        right = _compile(node.right, constants, source, variables)
        return lambda x, S: op(left(x, S), right(x, S))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _compile(node.operand, constants, source, variables)
        if isinstance(node.op, ast.USub):
            return lambda x, S: np.negative(inner(x, S))
        return inner
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
        name = node.func.id
        if name not in _FUNCS:
            raise ConfigError(f"unknown function {name!r} in expression {source!r}")
        fn, lo, hi = _FUNCS[name]
        n = len(node.args)
        if n < lo or (hi is not None and n > hi):
            raise ConfigError(f"{name} called with {n} arguments in expression {source!r}")
        args = [_compile(a, constants, source, variables) for a in node.args]
        return lambda x, S: fn(*[a(x, S) for a in args])
    raise ConfigError(f"unsupported syntax {ast.dump(node)[:40]}... in expression {source!r}")


def compile_expression(
    source: str,
    constants: Mapping[str, float] | None = None,
    variables: tuple[str, str] = ("x", "S"),
) -> Callable:
    """Compile ``source`` to a vectorised function ``(x, S) -> array``.

    ``variables`` renames the two arguments (e.g. ``("a", "S")`` for
    history expressions in the age ``a``).

    Raises
    ------
    ConfigError
        On syntax errors or anything outside the grammar.
    """
    text = source.strip()
    if not text:
        raise ConfigError("empty expression")
    if "**" in text:
        raise ConfigError(f"power operator is not part of the expression grammar: {source!r}")
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {source!r}: {exc.msg}") from None
    if set(variables) & set(constants or {}):
        raise ConfigError(f"constants shadow the variables {variables}")
    body = _compile(tree, constants or {}, source, tuple(variables))

    def evaluate(x, S=0.0):
        x_arr = np.asarray(x, dtype=float)
        s_arr = np.asarray(S, dtype=float)
        out = body(x_arr, s_arr)
        return np.broadcast_to(np.asarray(out, dtype=float), np.broadcast(x_arr, s_arr).shape) * 1.0

    evaluate.source = text  # type: ignore[attr-defined]
    return evaluate
