"""Graded multivariate polynomial arithmetic.

Polynomials are stored densely per degree: the degree-``d`` part of a
series with ``n_out`` outputs is an array of shape ``(n_out, N_d)`` whose
columns follow :func:`enumerate_monomials`.  Every product and
composition takes an explicit truncation degree; nothing grows silently.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb
from typing import Iterable, Sequence

import numpy as np


@lru_cache(maxsize=None)
def enumerate_monomials(n_vars: int, d: int) -> tuple[tuple[int, ...], ...]:
    """Exponent tuples of total degree ``d`` in graded-lexicographic order.

    >>> enumerate_monomials(2, 2)
    ((2, 0), (1, 1), (0, 2))
    """
    if n_vars < 1:
        raise ValueError("n_vars must be >= 1")
    if d < 0:
        raise ValueError("degree must be >= 0")
    if n_vars == 1:
        return ((d,),)
    out = []
    for first in range(d, -1, -1):
        for rest in enumerate_monomials(n_vars - 1, d - first):
            out.append((first,) + rest)
    return tuple(out)


def n_monomials(n_vars: int, d: int) -> int:
    return comb(n_vars + d - 1, d)


@lru_cache(maxsize=None)
def monomial_index(n_vars: int, d: int) -> dict[tuple[int, ...], int]:
    return {alpha: i for i, alpha in enumerate(enumerate_monomials(n_vars, d))}


@lru_cache(maxsize=None)
def _exponent_array(n_vars: int, d: int) -> np.ndarray:
    arr = np.array(enumerate_monomials(n_vars, d), dtype=int).reshape(-1, n_vars)
    arr.setflags(write=False)
    return arr


@lru_cache(maxsize=None)
def _product_table(n_vars: int, d1: int, d2: int) -> np.ndarray:
    # flat target index of x^a * x^b for a in degree d1, b in degree d2
    e1 = _exponent_array(n_vars, d1)
    e2 = _exponent_array(n_vars, d2)
    idx = monomial_index(n_vars, d1 + d2)
    table = np.empty((len(e1), len(e2)), dtype=np.intp)
    for i, a in enumerate(e1):
        for j, b in enumerate(e2):
            table[i, j] = idx[tuple(a + b)]
    table = table.ravel()
    table.setflags(write=False)
    return table


@lru_cache(maxsize=None)
def _derivative_map(n_vars: int, d: int, var: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # d/dx_var maps column j of degree d to column target[k] of degree d-1 with factor
    exps = _exponent_array(n_vars, d)
    idx = monomial_index(n_vars, d - 1)
    src, dst, fac = [], [], []
    for j, alpha in enumerate(exps):
        if alpha[var] > 0:
            beta = alpha.copy()
            beta[var] -= 1
            src.append(j)
            dst.append(idx[tuple(beta)])
            fac.append(float(alpha[var]))
    return np.array(src, dtype=np.intp), np.array(dst, dtype=np.intp), np.array(fac)


@dataclass(frozen=True)
class HomogeneousPoly:
    """A single homogeneous polynomial on the graded-lex monomial basis."""

    n_vars: int
    degree: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).reshape(-1)
        if c.size != n_monomials(self.n_vars, self.degree):
            raise ValueError(
                f"expected {n_monomials(self.n_vars, self.degree)} coefficients, got {c.size}"
            )
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def monomials(self):
        return enumerate_monomials(self.n_vars, self.degree)

    def as_dict(self, tol: float = 0.0) -> dict[tuple[int, ...], float]:
        return {a: float(c) for a, c in zip(self.monomials, self.coeffs) if abs(c) > tol}

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return float(_monomial_values(np.atleast_2d(x), self.n_vars, self.degree)[0] @ self.coeffs)

    def is_zero(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.coeffs) <= tol))


def _monomial_values(X: np.ndarray, n_vars: int, d: int) -> np.ndarray:
    exps = _exponent_array(n_vars, d)
    if d == 0:
        return np.ones((X.shape[0], 1))
    return np.prod(X[:, None, :] ** exps[None, :, :], axis=2)


class PolySeries:
    """Vector-valued polynomial in ``n_vars`` variables, capped at ``order``.

    Parameters
    ----------
    n_vars : int
        Number of input variables.
    n_out : int
        Number of output components (1 for a scalar series).
    order : int
        Truncation degree; parts above it are never stored.
    parts : dict, optional
        Maps degree to a coefficient array of shape ``(n_out, N_d)``.

    Instances are treated as immutable; the stored arrays are read-only.
    """

    __slots__ = ("n_vars", "n_out", "order", "_parts")

    def __init__(self, n_vars: int, n_out: int, order: int, parts: dict | None = None):
        if n_vars < 1 or n_out < 1 or order < 0:
            raise ValueError("invalid series shape")
        self.n_vars = int(n_vars)
        self.n_out = int(n_out)
        self.order = int(order)
        clean = {}
        for d, arr in (parts or {}).items():
            d = int(d)
            if d > self.order:
                continue
            if d < 0:
                raise ValueError("negative degree")
            a = np.array(arr, dtype=float).reshape(self.n_out, n_monomials(self.n_vars, d))
            if not np.any(a):
                continue
            a.setflags(write=False)
            clean[d] = a
        self._parts = clean

    # construction -----------------------------------------------------
    @classmethod
    def zeros(cls, n_vars: int, n_out: int = 1, order: int = 0) -> "PolySeries":
        return cls(n_vars, n_out, order)

    @classmethod
    def from_terms(cls, n_vars: int, terms: Iterable, n_out: int = 1, order: int | None = None) -> "PolySeries":
        """Build from ``(component, exponents, value)`` triples.

        ``order`` defaults to the largest degree present.
        """
        terms = [(int(c), tuple(int(e) for e in a), float(v)) for c, a, v in terms]
        for c, a, _ in terms:
            if len(a) != n_vars:
                raise ValueError(f"exponent {a} does not have {n_vars} entries")
            if any(e < 0 for e in a):
                raise ValueError(f"negative exponent in {a}")
            if not 0 <= c < n_out:
                raise ValueError(f"component {c} out of range")
        top = max((sum(a) for _, a, _ in terms), default=0)
        order = top if order is None else order
        parts: dict[int, np.ndarray] = {}
        for c, a, v in terms:
            d = sum(a)
            if d > order:
                raise ValueError(f"term {a} exceeds truncation order {order}")
            arr = parts.setdefault(d, np.zeros((n_out, n_monomials(n_vars, d))))
            arr[c, monomial_index(n_vars, d)[a]] += v
        return cls(n_vars, n_out, order, parts)

    @classmethod
    def linear(cls, M, order: int) -> "PolySeries":
        """The linear map ``x -> M x`` as a series."""
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return cls(M.shape[1], M.shape[0], order, {1: M})

    @classmethod
    def identity(cls, n_vars: int, order: int) -> "PolySeries":
        return cls.linear(np.eye(n_vars), order)

    @classmethod
    def constant(cls, values, n_vars: int, order: int) -> "PolySeries":
        v = np.atleast_1d(np.asarray(values, dtype=float))
        return cls(n_vars, v.size, order, {0: v.reshape(-1, 1)})

    @classmethod
    def stack(cls, items: Sequence["PolySeries"]) -> "PolySeries":
        n_vars = items[0].n_vars
        order = min(s.order for s in items)
        if any(s.n_vars != n_vars for s in items):
            raise ValueError("cannot stack series in different variables")
        n_out = sum(s.n_out for s in items)
        degrees = sorted({d for s in items for d in s._parts if d <= order})
        parts = {}
        for d in degrees:
            parts[d] = np.vstack([s.part(d) for s in items])
        return cls(n_vars, n_out, order, parts)

    # access -------------------------------------------------------------
    @property
    def degrees(self) -> list[int]:
        return sorted(self._parts)

    @property
    def min_degree(self) -> int | None:
        return min(self._parts) if self._parts else None

    @property
    def max_degree(self) -> int | None:
        return max(self._parts) if self._parts else None

    def part(self, d: int) -> np.ndarray:
        """Degree-``d`` coefficients, shape ``(n_out, N_d)`` (zeros when absent)."""
        if d in self._parts:
            return self._parts[d]
        return np.zeros((self.n_out, n_monomials(self.n_vars, d)))

    def hom_part(self, d: int) -> list[HomogeneousPoly]:
        p = self.part(d)
        return [HomogeneousPoly(self.n_vars, d, row) for row in p]

    def degree_slice(self, d: int) -> "PolySeries":
        return PolySeries(self.n_vars, self.n_out, self.order, {d: self.part(d)} if d <= self.order else {})

    def __getitem__(self, i) -> "PolySeries":
        rows = np.atleast_1d(np.arange(self.n_out)[i])
        return PolySeries(self.n_vars, len(rows), self.order,
                          {d: a[rows] for d, a in self._parts.items()})

    def truncate(self, order: int) -> "PolySeries":
        return PolySeries(self.n_vars, self.n_out, min(order, self.order), self._parts)

    def with_order(self, order: int) -> "PolySeries":
        """Same coefficients with a new truncation degree (drops parts above it)."""
        return PolySeries(self.n_vars, self.n_out, order, self._parts)

    def terms(self, tol: float = 0.0):
        for d in self.degrees:
            mons = enumerate_monomials(self.n_vars, d)
            for c in range(self.n_out):
                for a, v in zip(mons, self._parts[d][c]):
                    if abs(v) > tol:
                        yield c, a, float(v)

    def coeff_norm(self, d: int | None = None) -> float:
        if d is not None:
            return float(np.linalg.norm(self.part(d)))
        return float(np.sqrt(sum(np.sum(a**2) for a in self._parts.values())))

    def has_constant(self, tol: float = 0.0) -> bool:
        return 0 in self._parts and bool(np.any(np.abs(self._parts[0]) > tol))

    def __repr__(self):
        return f"PolySeries(n_vars={self.n_vars}, n_out={self.n_out}, order={self.order}, degrees={self.degrees})"

    # arithmetic ---------------------------------------------------------
    def _check_compatible(self, other: "PolySeries"):
        if self.n_vars != other.n_vars:
            raise ValueError("series live in different variables")
        if self.n_out != other.n_out and 1 not in (self.n_out, other.n_out):
            raise ValueError("output dimensions do not broadcast")

    def __add__(self, other):
        if not isinstance(other, PolySeries):
            return NotImplemented
        self._check_compatible(other)
        order = min(self.order, other.order)
        n_out = max(self.n_out, other.n_out)
        parts = {}
        for d in set(self._parts) | set(other._parts):
            if d <= order:
                parts[d] = np.broadcast_to(self.part(d), (n_out, n_monomials(self.n_vars, d))) + other.part(d)
        return PolySeries(self.n_vars, n_out, order, parts)

    def __neg__(self):
        return PolySeries(self.n_vars, self.n_out, self.order, {d: -a for d, a in self._parts.items()})

    def __sub__(self, other):
        if not isinstance(other, PolySeries):
            return NotImplemented
        return self + (-other)

    def scale(self, c: float) -> "PolySeries":
        return PolySeries(self.n_vars, self.n_out, self.order, {d: c * a for d, a in self._parts.items()})

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating)):
            return self.scale(float(other))
        if isinstance(other, PolySeries):
            return mul(self, other, min(self.order, other.order))
        return NotImplemented

    __rmul__ = __mul__

    def matmul_left(self, M) -> "PolySeries":
        """Apply a constant matrix to the outputs: ``x -> M s(x)``."""
        M = np.atleast_2d(np.asarray(M, dtype=float))
        if M.shape[1] != self.n_out:
            raise ValueError("matrix does not match series outputs")
        return PolySeries(self.n_vars, M.shape[0], self.order, {d: M @ a for d, a in self._parts.items()})

    def __call__(self, point):
        return evaluate(self, point)


def mul(a: PolySeries, b: PolySeries, trunc: int) -> PolySeries:
    """Componentwise product truncated at ``trunc`` (a scalar factor broadcasts)."""
    a._check_compatible(b)
    n = a.n_vars
    n_out = max(a.n_out, b.n_out)
    order = trunc
    parts: dict[int, np.ndarray] = {}
    for d1, A in a._parts.items():
        for d2, B in b._parts.items():
            d = d1 + d2
            if d > order:
                continue
            vals = (A[:, :, None] * B[:, None, :]).reshape(max(A.shape[0], B.shape[0]), -1)
            vals = np.broadcast_to(vals, (n_out, vals.shape[1]))
            table = _product_table(n, d1, d2)
            N = n_monomials(n, d)
            acc = parts.setdefault(d, np.zeros((n_out, N)))
            for r in range(n_out):
                acc[r] += np.bincount(table, weights=vals[r], minlength=N)
    return PolySeries(n, n_out, order, parts)


def dot(a: PolySeries, b: PolySeries, trunc: int) -> PolySeries:
    """Scalar series ``sum_i a_i b_i`` truncated at ``trunc``."""
    if a.n_out != b.n_out:
        raise ValueError("dot needs equal output dimensions")
    prod = mul(a, b, trunc)
    return PolySeries(prod.n_vars, 1, prod.order,
                      {d: arr.sum(axis=0, keepdims=True) for d, arr in prod._parts.items()})


def evaluate(s: PolySeries, point) -> np.ndarray:
    """Evaluate at one point (returns shape ``(n_out,)``) or many (``(N, n_out)``)."""
    x = np.asarray(point, dtype=float)
    single = x.ndim <= 1
    X = np.atleast_2d(x) if x.ndim == 1 else x.reshape(-1, s.n_vars) if x.ndim == 2 else None
    if x.ndim == 0:
        X = x.reshape(1, 1)
    if X is None or X.shape[1] != s.n_vars:
        raise ValueError(f"point dimension does not match n_vars={s.n_vars}")
    out = np.zeros((X.shape[0], s.n_out))
    for d, arr in s._parts.items():
        out += _monomial_values(X, s.n_vars, d) @ arr.T
    return out[0] if single else out


def compose(outer: PolySeries, inner: PolySeries, trunc: int) -> PolySeries:
    """``outer(inner(x))`` with every term above degree ``trunc`` discarded.

    ``inner`` must have no constant term so the grading is preserved.
    """
    if inner.n_out != outer.n_vars:
        raise ValueError("inner output dimension must equal outer n_vars")
    if inner.has_constant():
        raise ValueError("inner series has a nonzero constant term")
    n = inner.n_vars
    inner = inner.with_order(trunc)
    comps = [inner[i] for i in range(inner.n_out)]
    cache: dict[tuple[int, ...], PolySeries] = {}
    one = PolySeries.constant(1.0, n, trunc)

    def power_product(alpha: tuple[int, ...]) -> PolySeries:
        if alpha in cache:
            return cache[alpha]
        k = next((i for i, e in enumerate(alpha) if e), None)
        if k is None:
            res = one
        else:
            beta = list(alpha)
            beta[k] -= 1
            res = mul(power_product(tuple(beta)), comps[k], trunc)
        cache[alpha] = res
        return res

    parts: dict[int, np.ndarray] = {}
    for d in outer.degrees:
        if d > trunc:
            continue
        coeffs = outer.part(d)
        for j, alpha in enumerate(enumerate_monomials(outer.n_vars, d)):
            col = coeffs[:, j]
            if not np.any(col):
                continue
            prod = power_product(alpha)
            for dd, arr in prod._parts.items():
                acc = parts.setdefault(dd, np.zeros((outer.n_out, n_monomials(n, dd))))
                acc += np.outer(col, arr[0])
    return PolySeries(n, outer.n_out, trunc, parts)


def diff(s: PolySeries, var: int) -> PolySeries:
    """Partial derivative of every component with respect to variable ``var``."""
    if not 0 <= var < s.n_vars:
        raise ValueError("variable index out of range")
    parts = {}
    for d, arr in s._parts.items():
        if d == 0:
            continue
        src, dst, fac = _derivative_map(s.n_vars, d, var)
        out = np.zeros((s.n_out, n_monomials(s.n_vars, d - 1)))
        if src.size:
            np.add.at(out, (slice(None), dst), arr[:, src] * fac)
        parts[d - 1] = out
    return PolySeries(s.n_vars, s.n_out, max(s.order - 1, 0), parts)


def grad(s: PolySeries) -> PolySeries:
    """Gradient of a scalar series as an ``n_vars``-output series."""
    if s.n_out != 1:
        raise ValueError("grad expects a scalar series")
    return PolySeries.stack([diff(s, i) for i in range(s.n_vars)])


def jacobian(s: PolySeries) -> list[list[PolySeries]]:
    """``J[i][j] = d s_i / d x_j`` as scalar series."""
    cols = [diff(s, j) for j in range(s.n_vars)]
    return [[cols[j][i] for j in range(s.n_vars)] for i in range(s.n_out)]


def hom_part(s: PolySeries, d: int) -> list[HomogeneousPoly]:
    return s.hom_part(d)


def embed(s: PolySeries, n_new: int, positions: Sequence[int]) -> PolySeries:
    """Re-express ``s`` in a larger variable set; old variable ``i`` becomes ``positions[i]``."""
    sel = np.zeros((s.n_vars, n_new))
    for i, p in enumerate(positions):
        sel[i, p] = 1.0
    order = s.order
    return compose(s, PolySeries.linear(sel, order), order)


def linear_substitution_matrix(M, d: int) -> np.ndarray:
    """Matrix of ``q -> q(M x)`` on degree-``d`` coefficient vectors.

    Column ``j`` holds the coefficients of ``m_j(M x)`` where ``m_j`` is the
    ``j``-th basis monomial, so ``coeffs(q(Mx)) = S @ coeffs(q)``.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    n = M.shape[0]
    N = n_monomials(n, d)
    basis = PolySeries(n, N, d, {d: np.eye(N)})
    sub = compose(basis, PolySeries.linear(M, d), d)
    return sub.part(d).T


def lie_derivative_matrix(M, d: int) -> np.ndarray:
    """Matrix of ``q -> (dq/dx)(x) M x`` on degree-``d`` coefficient vectors."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    n = M.shape[0]
    exps = _exponent_array(n, d)
    idx = monomial_index(n, d)
    N = len(exps)
    out = np.zeros((N, N))
    for j, alpha in enumerate(exps):
        for i in range(n):
            if alpha[i] == 0:
                continue
            for k in range(n):
                if M[i, k] == 0.0:
                    continue
                beta = alpha.copy()
                beta[i] -= 1
                beta[k] += 1
                out[idx[tuple(beta)], j] += alpha[i] * M[i, k]
    return out
