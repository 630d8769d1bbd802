"""Small arithmetic-expression language for user-supplied fields.

Grammar: numbers, variables, parameters, ``+ - * / ^ **``, unary minus,
parentheses and the functions ``exp ln log sin cos tan sqrt``.  Expressions
compile to Python callables that accept floats or jets, so user fields get
exact derivatives.
"""

from __future__ import annotations

import ast
import math
from typing import Callable, Mapping

from . import jet as J
from .errors import ConfigError

FUNCTIONS: dict[str, Callable] = {
    "exp": J.exp,
    "ln": J.log,
    "log": J.log,
    "sin": J.sin,
    "cos": J.cos,
    "tan": J.tan,
    "sqrt": J.sqrt,
}
CONSTANTS = {"pi": math.pi, "e": math.e}

_BINOPS = {
    ast.Add: lambda a, b: a + b,
    ast.Sub: lambda a, b: a - b,
    ast.Mult: lambda a, b: a * b,
    ast.Div: lambda a, b: a / b,
    ast.Pow: lambda a, b: a ** b,
}


def _check(node: ast.AST, names: set[str]) -> None:
    for sub in ast.walk(node):
        if isinstance(sub, (ast.Expression, ast.Load, ast.operator, ast.unaryop)):
            continue
        if isinstance(sub, ast.BinOp):
            if type(sub.op) not in _BINOPS:
                raise ConfigError(f"operator {type(sub.op).__name__} is not allowed")
        elif isinstance(sub, ast.UnaryOp):
            if not isinstance(sub.op, (ast.USub, ast.UAdd)):
                raise ConfigError("only unary + and - are allowed")
        elif isinstance(sub, ast.Call):
            if not isinstance(sub.func, ast.Name) or sub.func.id not in FUNCTIONS:
                raise ConfigError("unknown function in expression")
            if len(sub.args) != 1 or sub.keywords:
                raise ConfigError(f"{sub.func.id} takes exactly one argument")
        elif isinstance(sub, ast.Name):
            if sub.id not in names and sub.id not in FUNCTIONS and sub.id not in CONSTANTS:
                raise ConfigError(f"unknown name {sub.id!r}")
        elif isinstance(sub, ast.Constant):
            if not isinstance(sub.value, (int, float)) or isinstance(sub.value, bool):
                raise ConfigError(f"constant {sub.value!r} is not a number")
        else:
            raise ConfigError(f"syntax {type(sub).__name__} is not allowed")


def _eval(node: ast.AST, env: Mapping):
    if isinstance(node, ast.Expression):
        return _eval(node.body, env)
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        if node.id in env:
            return env[node.id]
        return CONSTANTS[node.id]
    if isinstance(node, ast.UnaryOp):
        val = _eval(node.operand, env)
        return -val if isinstance(node.op, ast.USub) else val
    if isinstance(node, ast.BinOp):
        a, b = _eval(node.left, env), _eval(node.right, env)
        if isinstance(node.op, ast.Pow) and isinstance(b, float) and b.is_integer():
            b = int(b)
        return _BINOPS[type(node.op)](a, b)
    if isinstance(node, ast.Call):
        return FUNCTIONS[node.func.id](_eval(node.args[0], env))
    raise ConfigError("unsupported expression")  # unreachable after _check


def compile_expr(text: str, variables: tuple[str, ...] = ("x", "y"),
                 params: Mapping[str, float] | None = None) -> Callable:
    """Compile ``text`` into ``fn(*variables)``.

    ``r`` is available as sqrt(x^2 + y^2) whenever both x and y are
    variables.  Parameters are bound at compile time.
    """
    params = dict(params or {})
    names = set(variables) | set(params)
    with_r = "x" in variables and "y" in variables and "r" not in names
    if with_r:
        names.add("r")
    try:
        tree = ast.parse(text.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from exc
    _check(tree, names)
    uses_r = with_r and any(isinstance(n, ast.Name) and n.id == "r" for n in ast.walk(tree))

    def fn(*args):
        if len(args) != len(variables):
            raise TypeError(f"expected {len(variables)} arguments")
        env = dict(params)
        env.update(zip(variables, args))
        if uses_r:
            env["r"] = J.sqrt(env["x"] * env["x"] + env["y"] * env["y"])
        out = _eval(tree, env)
        if isinstance(out, float) and args and isinstance(args[0], J.Jet):
            out = out + 0.0 * args[0]
        return out

    fn.__doc__ = text
    return fn
