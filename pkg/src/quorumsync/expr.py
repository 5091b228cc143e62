"""Whitelisted arithmetic expressions for inline network declarations.

Expressions are parsed with :mod:`ast` and only numbers, names, arithmetic
operators and a fixed set of numpy functions are accepted.  The compiled
function evaluates element-wise on numpy arrays, so one expression serves
every node of a group at once.
"""

from __future__ import annotations

import ast
from typing import Iterable

import numpy as np

from .errors import InputError

__all__ = ["FUNCTIONS", "compile_expr", "names_in"]

FUNCTIONS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log,
    "sqrt": np.sqrt, "tanh": np.tanh, "abs": np.abs, "arctan": np.arctan,
    "minimum": np.minimum, "maximum": np.maximum,
}
CONSTANTS = {"pi": np.pi, "e": np.e}

_ALLOWED = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
            ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd)


def names_in(source: str) -> set[str]:
    tree = ast.parse(source, mode="eval")
    return {n.id for n in ast.walk(tree) if isinstance(n, ast.Name)} - set(FUNCTIONS) - set(CONSTANTS)


def compile_expr(source: str, variables: Iterable[str]):
    """Compile ``source`` into ``fn(namespace_dict) -> value``.

    Raises :class:`InputError` for syntax errors, disallowed constructs and
    names outside ``variables``.
    """
    if not isinstance(source, str) or not source.strip():
        raise InputError("expression must be a non-empty string")
    try:
        tree = ast.parse(source.strip(), mode="eval")
    except SyntaxError as exc:
        raise InputError(f"cannot parse expression {source!r}: {exc.msg}") from None
    allowed = set(variables)
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED):
            raise InputError(f"{type(node).__name__} is not allowed in {source!r}")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise InputError(f"only numeric constants are allowed in {source!r}")
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS or node.keywords:
                raise InputError(f"unsupported function call in {source!r}")
        elif isinstance(node, ast.Name):
            if node.id not in allowed and node.id not in FUNCTIONS and node.id not in CONSTANTS:
                raise InputError(f"unknown name {node.id!r} in {source!r}")
    code = compile(tree, "<expr>", "eval")
    base = {"__builtins__": {}, **FUNCTIONS, **CONSTANTS}

    def fn(namespace: dict):
        return eval(code, base, namespace)  # noqa: S307 - AST whitelisted above

    fn.source = source
    return fn
