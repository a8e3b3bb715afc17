"""Expression trees for structural equations, interventions and tau maps.

Values are Python ``bool`` or ``int``. As in Python itself, ``T == 1`` and
``F == 0``: evaluation is numeric and the receiving domain decides how a
number is displayed. Evaluation is vectorised over numpy arrays so that a
tree can be tabulated over a whole product domain in one call.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .errors import ModelError, Problem, UnknownVariableError

Value = Union[bool, int]

UNARY_OPS = ("not", "neg", "ind")
BINARY_OPS = ("or", "xor", "and", "eq", "add", "sub", "mul")

_PREC = {"or": 1, "xor": 2, "and": 3, "not": 4, "eq": 5, "add": 6, "sub": 6, "mul": 7, "mod": 7, "neg": 8}
_ATOM = 9
_SYMBOL = {"or": "or", "xor": "xor", "and": "and", "eq": "=", "add": "+", "sub": "-", "mul": "*"}


class Expr:
    """Base class of all expression nodes."""

    __slots__ = ()

    def __str__(self) -> str:
        return render(self)


@dataclass(frozen=True)
class Const(Expr):
    value: Value


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Unary(Expr):
    op: str
    arg: Expr

    def __post_init__(self):
        if self.op not in UNARY_OPS:
            raise ValueError(f"unknown unary operator {self.op!r}")


@dataclass(frozen=True)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr

    def __post_init__(self):
        if self.op not in BINARY_OPS:
            raise ValueError(f"unknown binary operator {self.op!r}")


@dataclass(frozen=True)
class Mod(Expr):
    arg: Expr
    k: int

    def __post_init__(self):
        if not isinstance(self.k, int) or isinstance(self.k, bool) or self.k <= 0:
            raise ValueError(f"modulus must be a positive integer, got {self.k!r}")


@dataclass(frozen=True)
class Ite(Expr):
    cond: Expr
    then: Expr
    other: Expr


@dataclass(frozen=True)
class Table(Expr):
    """An explicit function table ``inputs -> value``; rows keep their given order."""

    inputs: tuple[str, ...]
    rows: tuple[tuple[tuple[Value, ...], Value], ...]

    @classmethod
    def from_mapping(cls, inputs, mapping: Mapping[tuple, Value]) -> "Table":
        return cls(tuple(inputs), tuple((tuple(k), v) for k, v in mapping.items()))

    def as_dict(self) -> dict[tuple, Value]:
        return {k: v for k, v in self.rows}


# Smart constructors. The parser goes through these, which keeps negative
# literals in the normal form ``Const(-n)`` rather than ``neg(Const(n))``.

def const(v: Value) -> Const:
    return Const(v)


def var(name: str) -> Var:
    return Var(name)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const) and not isinstance(a.value, bool):
        return Const(-a.value)
    return Unary("neg", a)


def not_(a: Expr) -> Expr:
    return Unary("not", a)


def ind(a: Expr) -> Expr:
    return Unary("ind", a)


def and_(a: Expr, b: Expr) -> Expr:
    return Binary("and", a, b)


def or_(a: Expr, b: Expr) -> Expr:
    return Binary("or", a, b)


def xor(a: Expr, b: Expr) -> Expr:
    return Binary("xor", a, b)


def eq(a: Expr, b: Expr) -> Expr:
    return Binary("eq", a, b)


def add(a: Expr, b: Expr) -> Expr:
    return Binary("add", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    return Binary("sub", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    return Binary("mul", a, b)


def mod(a: Expr, k: int) -> Expr:
    return Mod(a, k)


def ite(c: Expr, a: Expr, b: Expr) -> Expr:
    return Ite(c, a, b)


@functools.lru_cache(maxsize=4096)
def leaves(e: Expr) -> frozenset[str]:
    """Variable names read by ``e``."""
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Const):
        return frozenset()
    if isinstance(e, Table):
        return frozenset(e.inputs)
    out: frozenset[str] = frozenset()
    for child in _children(e):
        out |= leaves(child)
    return out


def _children(e: Expr) -> tuple[Expr, ...]:
    if isinstance(e, Unary):
        return (e.arg,)
    if isinstance(e, Binary):
        return (e.left, e.right)
    if isinstance(e, Mod):
        return (e.arg,)
    if isinstance(e, Ite):
        return (e.cond, e.then, e.other)
    return ()


def _truth(a: np.ndarray) -> np.ndarray:
    return a != 0


def evaluate(e: Expr, env: Mapping[str, np.ndarray]) -> np.ndarray:
    """Evaluate ``e`` numerically; ``env`` maps names to broadcastable int arrays."""
    if isinstance(e, Const):
        return np.asarray(int(e.value), dtype=np.int64)
    if isinstance(e, Var):
        try:
            return np.asarray(env[e.name], dtype=np.int64)
        except KeyError:
            raise UnknownVariableError(f"unknown variable {e.name!r}", ("var", e.name)) from None
    if isinstance(e, Unary):
        a = evaluate(e.arg, env)
        if e.op == "neg":
            return -a
        if e.op == "not":
            return (~_truth(a)).astype(np.int64)
        return _truth(a).astype(np.int64)
    if isinstance(e, Binary):
        a = evaluate(e.left, env)
        b = evaluate(e.right, env)
        op = e.op
        if op == "add":
            return a + b
        if op == "sub":
            return a - b
        if op == "mul":
            return a * b
        if op == "eq":
            return (a == b).astype(np.int64)
        if op == "and":
            return (_truth(a) & _truth(b)).astype(np.int64)
        if op == "or":
            return (_truth(a) | _truth(b)).astype(np.int64)
        return (_truth(a) ^ _truth(b)).astype(np.int64)
    if isinstance(e, Mod):
        return np.mod(evaluate(e.arg, env), e.k)
    if isinstance(e, Ite):
        c = evaluate(e.cond, env)
        return np.where(_truth(c), evaluate(e.then, env), evaluate(e.other, env))
    if isinstance(e, Table):
        return _eval_table(e, env)
    raise TypeError(f"not an expression: {e!r}")


def _eval_table(t: Table, env: Mapping[str, np.ndarray]) -> np.ndarray:
    lookup = {tuple(int(v) for v in key): int(out) for key, out in t.rows}
    if not t.inputs:
        if () not in lookup:
            raise ModelError([_incomplete(t, ())])
        return np.asarray(lookup[()], dtype=np.int64)
    args = np.broadcast_arrays(*(evaluate(Var(n), env) for n in t.inputs))
    shape = args[0].shape
    stacked = np.stack([a.reshape(-1) for a in args], axis=1)
    keys, inverse = np.unique(stacked, axis=0, return_inverse=True)
    mapped = np.empty(len(keys), dtype=np.int64)
    for n, key in enumerate(map(tuple, keys.tolist())):
        if key not in lookup:
            raise ModelError([_incomplete(t, key)])
        mapped[n] = lookup[key]
    return mapped[inverse.reshape(-1)].reshape(shape)


def _incomplete(t: Table, key) -> Problem:
    return Problem("incomplete-table", f"table over {', '.join(t.inputs) or '()'} has no row for {key}")


def format_value(v: Value) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "T" if v else "F"
    return str(int(v))


def _prec(e: Expr) -> int:
    if isinstance(e, Binary):
        return _PREC[e.op]
    if isinstance(e, Unary) and e.op != "ind":
        return _PREC[e.op]
    if isinstance(e, Mod):
        return _PREC["mod"]
    if isinstance(e, Const) and not isinstance(e.value, bool) and e.value < 0:
        return _PREC["neg"]
    return _ATOM


def _wrap(e: Expr, paren: bool) -> str:
    s = render(e)
    return f"({s})" if paren else s


def render(e: Expr) -> str:
    """Canonical infix text; ``parse_expr(render(e)) == e`` for normal-form trees."""
    if isinstance(e, Const):
        return format_value(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op == "ind":
            return f"[{render(e.arg)}]"
        p = _PREC[e.op]
        word = "not " if e.op == "not" else "-"
        return word + _wrap(e.arg, _prec(e.arg) < p)
    if isinstance(e, Binary):
        p = _PREC[e.op]
        if e.op == "eq":
            return f"{_wrap(e.left, _prec(e.left) <= p)} = {_wrap(e.right, _prec(e.right) <= p)}"
        return f"{_wrap(e.left, _prec(e.left) < p)} {_SYMBOL[e.op]} {_wrap(e.right, _prec(e.right) <= p)}"
    if isinstance(e, Mod):
        return f"{_wrap(e.arg, _prec(e.arg) <= _PREC['mod'])} mod {e.k}"
    if isinstance(e, Ite):
        return f"ite({render(e.cond)}, {render(e.then)}, {render(e.other)})"
    if isinstance(e, Table):
        rows = ", ".join(
            " ".join(format_value(v) for v in key) + ": " + format_value(out) for key, out in e.rows
        )
        return f"table({', '.join(e.inputs)}) {{{rows}}}"
    raise TypeError(f"not an expression: {e!r}")
