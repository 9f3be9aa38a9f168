"""Univariate expression trees with domain-checked evaluation and Taylor jets.

Expressions are parsed from strings with Python's own ``ast`` module, after
mapping ``^`` to ``**``.  Supported: numbers, the variable ``x``, ``+ - * /``,
integer powers, ``ln``/``log``, ``exp``, ``sin``, ``cos``.

Jets are arrays ``c_0..c_N`` with ``c_k = e^(k)(x0) / k!``.
"""
from __future__ import annotations

import ast
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .exceptions import DomainError, ProblemFileError

Number = Union[int, float]


# --------------------------------------------------------------------------
# jet arithmetic
# --------------------------------------------------------------------------
def jet_const(c: float, order: int) -> np.ndarray:
    out = np.zeros(order + 1)
    out[0] = c
    return out


def jet_var(x0: float, order: int) -> np.ndarray:
    out = np.zeros(order + 1)
    out[0] = x0
    if order >= 1:
        out[1] = 1.0
    return out


def jet_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.convolve(a, b)[: len(a)]


def jet_div(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if b[0] == 0.0:
        raise DomainError("division by zero")
    q = np.zeros_like(a)
    for k in range(len(a)):
        q[k] = (a[k] - np.dot(q[:k], b[k:0:-1])) / b[0]
    return q


def jet_pow(a: np.ndarray, p: int) -> np.ndarray:
    if p < 0:
        return jet_div(jet_const(1.0, len(a) - 1), jet_pow(a, -p))
    out = jet_const(1.0, len(a) - 1)
    base = a
    while p:
        if p & 1:
            out = jet_mul(out, base)
        base = jet_mul(base, base)
        p >>= 1
    return out


def jet_log(a: np.ndarray) -> np.ndarray:
    if a[0] <= 0.0:
        raise DomainError(f"ln of nonpositive value {a[0]:.6g}")
    f = np.zeros_like(a)
    f[0] = math.log(a[0])
    for k in range(1, len(a)):
        s = sum(j * f[j] * a[k - j] for j in range(1, k))
        f[k] = (k * a[k] - s) / (k * a[0])
    return f


def jet_exp(a: np.ndarray) -> np.ndarray:
    e = np.zeros_like(a)
    e[0] = math.exp(a[0])
    for k in range(1, len(a)):
        e[k] = sum(j * a[j] * e[k - j] for j in range(1, k + 1)) / k
    return e


def jet_sincos(a: np.ndarray):
    s = np.zeros_like(a)
    c = np.zeros_like(a)
    s[0], c[0] = math.sin(a[0]), math.cos(a[0])
    for k in range(1, len(a)):
        s[k] = sum(j * a[j] * c[k - j] for j in range(1, k + 1)) / k
        c[k] = -sum(j * a[j] * s[k - j] for j in range(1, k + 1)) / k
    return s, c


# --------------------------------------------------------------------------
# expression tree
# --------------------------------------------------------------------------
class Expr:
    """Base node.  Subclasses implement ``_eval`` and ``_jet``."""

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            return self._eval(x)

    def jet(self, x0: float, order: int) -> np.ndarray:
        return self._jet(float(x0), int(order))

    # operator sugar
    def __add__(self, o):
        return Bin("+", self, _wrap(o))

    def __radd__(self, o):
        return Bin("+", _wrap(o), self)

    def __sub__(self, o):
        return Bin("-", self, _wrap(o))

    def __rsub__(self, o):
        return Bin("-", _wrap(o), self)

    def __mul__(self, o):
        return Bin("*", self, _wrap(o))

    def __rmul__(self, o):
        return Bin("*", _wrap(o), self)

    def __truediv__(self, o):
        return Bin("/", self, _wrap(o))

    def __pow__(self, p):
        return Pow(self, int(p))

    def __neg__(self):
        return Bin("-", Const(0.0), self)


def _wrap(o) -> Expr:
    return o if isinstance(o, Expr) else Const(float(o))


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: float

    def _eval(self, x):
        return np.full_like(x, self.value, dtype=float)

    def _jet(self, x0, order):
        return jet_const(self.value, order)

    def __str__(self):
        return repr(self.value)


@dataclass(frozen=True, eq=True)
class Var(Expr):
    def _eval(self, x):
        return x.astype(float)

    def _jet(self, x0, order):
        return jet_var(x0, order)

    def __str__(self):
        return "x"


@dataclass(frozen=True, eq=True)
class Bin(Expr):
    op: str
    a: Expr
    b: Expr

    def _eval(self, x):
        u, v = self.a._eval(x), self.b._eval(x)
        if self.op == "+":
            return u + v
        if self.op == "-":
            return u - v
        if self.op == "*":
            return u * v
        if np.any(v == 0.0):
            raise DomainError(f"division by zero in {self}")
        return u / v

    def _jet(self, x0, order):
        u, v = self.a._jet(x0, order), self.b._jet(x0, order)
        if self.op == "+":
            return u + v
        if self.op == "-":
            return u - v
        if self.op == "*":
            return jet_mul(u, v)
        return jet_div(u, v)

    def __str__(self):
        return f"({self.a} {self.op} {self.b})"


@dataclass(frozen=True, eq=True)
class Pow(Expr):
    base: Expr
    p: int

    def _eval(self, x):
        v = self.base._eval(x)
        if self.p < 0 and np.any(v == 0.0):
            raise DomainError(f"negative power of zero in {self}")
        return v ** float(self.p)

    def _jet(self, x0, order):
        return jet_pow(self.base._jet(x0, order), self.p)

    def __str__(self):
        return f"{self.base}^{self.p}"


_FUNCS = {"ln", "exp", "sin", "cos"}


@dataclass(frozen=True, eq=True)
class Func(Expr):
    name: str
    arg: Expr

    def _eval(self, x):
        v = self.arg._eval(x)
        if self.name == "ln":
            if np.any(v <= 0.0):
                raise DomainError(f"ln of nonpositive value in {self}")
            return np.log(v)
        return getattr(np, self.name)(v)

    def _jet(self, x0, order):
        a = self.arg._jet(x0, order)
        if self.name == "ln":
            return jet_log(a)
        if self.name == "exp":
            return jet_exp(a)
        s, c = jet_sincos(a)
        return s if self.name == "sin" else c

    def __str__(self):
        return f"{self.name}({self.arg})"


X = Var()


def parse(text: str) -> Expr:
    """Parse an expression string in the variable ``x``.

    >>> parse("ln(1+x)^2").jet(0.0, 3)
    array([ 0.,  0.,  1., -1.])
    """
    if not isinstance(text, str):
        return Const(float(text))
    src = text.replace("^", "**")
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ProblemFileError(f"cannot parse expression {text!r}: {exc.msg}") from exc
    return _convert(tree.body, text)


def _convert(node, text) -> Expr:
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return Const(float(node.value))
    if isinstance(node, ast.Name):
        if node.id == "x":
            return X
        raise ProblemFileError(f"unknown name {node.id!r} in {text!r}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _convert(node.operand, text)
        if isinstance(node.op, ast.UAdd):
            return inner
        if isinstance(inner, Const):
            return Const(-inner.value)
        return -inner
    if isinstance(node, ast.BinOp):
        a = _convert(node.left, text)
        if isinstance(node.op, ast.Pow):
            p = _convert(node.right, text)
            if not isinstance(p, Const) or p.value != int(p.value):
                raise ProblemFileError(f"only integer powers are supported in {text!r}")
            return Pow(a, int(p.value))
        b = _convert(node.right, text)
        ops = {ast.Add: "+", ast.Sub: "-", ast.Mult: "*", ast.Div: "/"}
        for k, v in ops.items():
            if isinstance(node.op, k):
                return Bin(v, a, b)
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and len(node.args) == 1:
        name = "ln" if node.func.id == "log" else node.func.id
        if name in _FUNCS:
            return Func(name, _convert(node.args[0], text))
        raise ProblemFileError(f"unknown function {node.func.id!r} in {text!r}")
    raise ProblemFileError(f"unsupported syntax in {text!r}")
