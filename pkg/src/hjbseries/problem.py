"""Problem statement shared by the discrete and continuous series solvers."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .exceptions import DimensionError, PreconditionError
from .polyalg import PolySeries, enumerate_monomials
from .riccati import CONTINUOUS, DISCRETE, LqrData

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ControlProblem:
    """Polynomial dynamics ``f(x, u)`` and running cost ``l(x, u)``.

    Both series live in the joint variables ``(x_1..x_n, u_1..u_m)``.  The
    cost convention is ``l = 1/2 x'Qx + x'Su + 1/2 u'Ru + l^[3] + ...``.

    ``f_exact`` and ``l_exact`` are optional vectorized callables taking
    ``(X, U)`` arrays of shape ``(N, n)`` and ``(N, m)``; residual checks use
    them in place of the truncated series when present.
    """

    mode: str
    n: int
    m: int
    f: PolySeries
    l: PolySeries
    name: str = "problem"
    f_exact: Optional[Callable] = field(default=None, compare=False, repr=False)
    l_exact: Optional[Callable] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.mode not in (DISCRETE, CONTINUOUS):
            raise ValueError(f"mode must be {DISCRETE!r} or {CONTINUOUS!r}")
        nv = self.n + self.m
        if self.f.n_vars != nv or self.f.n_out != self.n:
            raise DimensionError(f"f must map {nv} variables to {self.n} outputs")
        if self.l.n_vars != nv or self.l.n_out != 1:
            raise DimensionError(f"l must be scalar in {nv} variables")
        if self.f.has_constant(1e-14):
            raise PreconditionError("f(0, 0) must vanish")
        if self.l.has_constant(1e-14) or self.l.coeff_norm(1) > 1e-14:
            raise PreconditionError("l must have no constant or linear term")
        if self.f.coeff_norm(1) == 0.0 and self.n:
            raise PreconditionError("A,B missing: dynamics have no linear part")
        self.lqr.check_cost()

    @classmethod
    def from_terms(cls, mode, n, m, f_terms, l_terms, f_order=None, l_order=None, **kw):
        f = PolySeries.from_terms(n + m, f_terms, n_out=n, order=f_order)
        l = PolySeries.from_terms(n + m, l_terms, order=l_order)
        return cls(mode, n, m, f, l, **kw)

    @property
    def lqr(self) -> LqrData:
        A, B = self.linear_part()
        Q, R, S = self.quadratic_part()
        return LqrData(A, B, Q, R, S)

    def linear_part(self) -> tuple[np.ndarray, np.ndarray]:
        F1 = self.f.part(1)
        return F1[:, : self.n].copy(), F1[:, self.n :].copy()

    def quadratic_part(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        nv = self.n + self.m
        H = np.zeros((nv, nv))
        for alpha, c in zip(enumerate_monomials(nv, 2), self.l.part(2)[0]):
            idx = [i for i, e in enumerate(alpha) for _ in range(e)]
            i, j = idx
            if i == j:
                H[i, i] = 2.0 * c
            else:
                H[i, j] = H[j, i] = c
        n = self.n
        return H[:n, :n], H[n:, n:], H[:n, n:]

    def with_orders(self, f_order: int, l_order: int) -> "ControlProblem":
        """Recap the stored series (missing degrees count as zero)."""
        for name, s, want in (("f", self.f, f_order), ("l", self.l, l_order)):
            top = s.max_degree or 0
            if top < want:
                logger.info("%s given through degree %d; degrees %d..%d taken as zero",
                            name, top, top + 1, want)
        return ControlProblem(self.mode, self.n, self.m, self.f.with_order(max(f_order, 1)),
                              self.l.with_order(max(l_order, 2)), self.name,
                              self.f_exact, self.l_exact)

    # pointwise evaluation ---------------------------------------------
    def eval_f(self, X, U) -> np.ndarray:
        X, U = _rows(X, self.n), _rows(U, self.m)
        if self.f_exact is not None:
            return np.asarray(self.f_exact(X, U), dtype=float).reshape(X.shape[0], self.n)
        return self.f(np.hstack([X, U]))

    def eval_l(self, X, U) -> np.ndarray:
        X, U = _rows(X, self.n), _rows(U, self.m)
        if self.l_exact is not None:
            return np.asarray(self.l_exact(X, U), dtype=float).reshape(X.shape[0])
        return self.l(np.hstack([X, U]))[:, 0]


def _rows(X, k: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim <= 1:
        X = X.reshape(-1, k)
    if X.shape[1] != k:
        raise DimensionError(f"expected {k} columns, got {X.shape[1]}")
    return X
