"""Term-by-term series solution of the discrete-time dynamic programming equations.

The level-``d`` unknowns are found by residual extraction: substitute the
feedback known so far, read off the degree ``d+1`` part of the cost
equation, and invert the level operator on the monomial basis.  The same
engine serves the continuous-time solver in :mod:`hjbseries.albrecht`,
which only swaps the level operator and the gradient condition.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import PreconditionError, SingularOperatorError
from .polyalg import (
    PolySeries,
    compose,
    diff,
    dot,
    embed,
    grad,
    lie_derivative_matrix,
    linear_substitution_matrix,
    mul,
)
from .problem import ControlProblem
from .riccati import CONTINUOUS, DISCRETE, RiccatiSolution, solve_lqr

logger = logging.getLogger(__name__)

COND_WARN = 1e12


@dataclass(frozen=True)
class SeriesSolution:
    """Optimal cost ``pi`` (degrees 2..r) and feedback ``kappa`` (degrees 1..r-1)."""

    P: np.ndarray
    K: np.ndarray
    pi_parts: dict
    kappa_parts: dict
    trunc: int
    mode: str
    n: int
    m: int
    riccati: RiccatiSolution = field(default=None, repr=False, compare=False)
    level_conditions: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def pi(self) -> PolySeries:
        parts = {2: _quadratic_coeffs(self.P)}
        parts.update(self.pi_parts)
        return PolySeries(self.n, 1, self.trunc, parts)

    @property
    def kappa(self) -> PolySeries:
        parts = {1: self.K}
        parts.update(self.kappa_parts)
        return PolySeries(self.n, self.m, self.trunc - 1, parts)

    @property
    def closed_loop(self) -> np.ndarray:
        return self.riccati.closed_loop_eigs

    def cost(self, X) -> np.ndarray:
        return self.pi(np.asarray(X, dtype=float).reshape(-1, self.n))[:, 0]

    def feedback(self, X) -> np.ndarray:
        return self.kappa(np.asarray(X, dtype=float).reshape(-1, self.n))

    def coefficient_table(self) -> dict:
        """``{"pi": {degree: [...]}, "kappa": {degree: [[...], ...]}}`` for printing."""
        pi, ka = self.pi, self.kappa
        return {
            "pi": {d: pi.part(d)[0].tolist() for d in range(2, self.trunc + 1)},
            "kappa": {d: ka.part(d).tolist() for d in range(1, self.trunc)},
        }


def _quadratic_coeffs(P: np.ndarray) -> np.ndarray:
    """Coefficients of ``1/2 x'Px`` on the degree-2 basis."""
    n = P.shape[0]
    out = []
    for i in range(n):
        for j in range(i, n):
            out.append(0.5 * P[i, i] if i == j else P[i, j])
    return np.array(out).reshape(1, -1)


def feedback_map(kappa: PolySeries, n: int, m: int, order: int) -> PolySeries:
    """The map ``(x, u) -> (x, kappa(x) + u)`` in the joint variables."""
    k_xu = embed(kappa, n + m, list(range(n)))
    ident = PolySeries.identity(n + m, order)
    shift = PolySeries.stack([PolySeries.zeros(n + m, n, order), k_xu.with_order(order)])
    return ident + shift


def at_zero_control(s: PolySeries, n: int) -> PolySeries:
    """Restrict a series in ``(x, u)`` to ``u = 0`` (series in ``x`` only)."""
    sel = np.zeros((s.n_vars, n))
    sel[:n, :n] = np.eye(n)
    return compose(s, PolySeries.linear(sel, s.order), s.order)


def control_gradient(s: PolySeries, n: int, m: int) -> list[PolySeries]:
    """``d s / d u_j`` for each control ``j`` (each as a series in ``(x, u)``)."""
    return [diff(s, n + j) for j in range(m)]


class _Level:
    """Level operator and gradient condition for one time mode."""

    def __init__(self, mode: str, problem: ControlProblem, ric: RiccatiSolution):
        self.mode = mode
        self.p = problem
        self.ric = ric
        A, B = problem.linear_part()
        self.A_cl = A + B @ ric.K
        if mode == DISCRETE:
            self.u_hessian = B.T @ ric.P @ B + problem.lqr.R
        else:
            self.u_hessian = problem.lqr.R

    def operator(self, degree: int) -> np.ndarray:
        if self.mode == DISCRETE:
            S = linear_substitution_matrix(self.A_cl, degree)
            return np.eye(S.shape[0]) - S
        return lie_derivative_matrix(self.A_cl, degree)

    def cost_residual(self, pi: PolySeries, fbar0: PolySeries, lbar0: PolySeries, trunc: int) -> PolySeries:
        """Series whose degree ``d+1`` part is the level right-hand side."""
        if self.mode == DISCRETE:
            return pi.with_order(trunc) - compose(pi, fbar0, trunc) - lbar0.with_order(trunc)
        return dot(grad(pi).with_order(trunc), fbar0.with_order(trunc), trunc) + lbar0.with_order(trunc)

    def gradient_condition(self, pi: PolySeries, fbar: PolySeries, lbar: PolySeries, trunc: int) -> PolySeries:
        """``G(x, 0)``: the u-gradient of the Bellman/HJB expression at zero extra control."""
        n, m = self.p.n, self.p.m
        fbar0 = at_zero_control(fbar, n)
        dpi = grad(pi)
        if self.mode == DISCRETE:
            dpi_at = compose(dpi, fbar0, trunc)
        else:
            dpi_at = dpi.with_order(trunc)
        rows = []
        for j, (dfu, dlu) in enumerate(zip(control_gradient(fbar, n, m), control_gradient(lbar, n, m))):
            dfu0 = at_zero_control(dfu, n)
            dlu0 = at_zero_control(dlu, n)
            rows.append(dot(dfu0.with_order(trunc), dpi_at, trunc) + dlu0.with_order(trunc))
        return PolySeries.stack(rows)


def solve_series(problem: ControlProblem, r: int, *, check: bool = True) -> SeriesSolution:
    """Shared engine: level 1 from the Riccati solve, then levels 2..r-1."""
    if r < 2:
        raise ValueError("truncation degree must be at least 2")
    mode = problem.mode
    n, m = problem.n, problem.m
    p = problem.with_orders(r, r)
    ric = solve_lqr(p.lqr, mode, check=check)
    if mode == DISCRETE and ric.closed_loop_radius >= 1:
        raise PreconditionError("closed loop is not Schur stable")
    if mode == CONTINUOUS and n and ric.closed_loop_abscissa >= 0:
        raise PreconditionError("closed loop is not Hurwitz")
    lvl = _Level(mode, p, ric)

    pi = PolySeries(n, 1, r, {2: _quadratic_coeffs(ric.P)})
    kappa = PolySeries(n, m, r - 1, {1: ric.K})
    conds = {}
    for d in range(2, r):
        trunc = d + 1
        inner = feedback_map(kappa, n, m, trunc)
        fbar = compose(p.f, inner, trunc)
        lbar = compose(p.l, inner, trunc)
        fbar0 = at_zero_control(fbar, n)
        lbar0 = at_zero_control(lbar, n)
        rho = lvl.cost_residual(pi, fbar0, lbar0, trunc).part(trunc)[0]
        L = lvl.operator(trunc)
        cond = np.linalg.cond(L)
        conds[trunc] = cond
        if not np.isfinite(cond):
            raise SingularOperatorError(f"level operator of degree {trunc} is singular")
        if cond > COND_WARN:
            logger.warning("level operator of degree %d is ill-conditioned (cond %.3e)", trunc, cond)
        coeffs = np.linalg.solve(L, -rho)
        pi = pi + PolySeries(n, 1, r, {trunc: coeffs.reshape(1, -1)})

        G = lvl.gradient_condition(pi, fbar, lbar, d)
        kd = -np.linalg.solve(lvl.u_hessian, G.part(d))
        kappa = kappa + PolySeries(n, m, r - 1, {d: kd})

    return SeriesSolution(
        P=ric.P,
        K=ric.K,
        pi_parts={d: pi.part(d) for d in range(3, r + 1)},
        kappa_parts={d: kappa.part(d) for d in range(2, r)},
        trunc=r,
        mode=mode,
        n=n,
        m=m,
        riccati=ric,
        level_conditions=conds,
    )


def solve_dpe_series(problem: ControlProblem, r: int, **kwargs) -> SeriesSolution:
    """Series solution of the discrete-time dynamic programming equations through degree ``r``."""
    if problem.mode != DISCRETE:
        raise ValueError("solve_dpe_series needs a discrete-time problem")
    if r < 3:
        raise ValueError("truncation degree must be at least 3")
    return solve_series(problem, r, **kwargs)


def closed_loop_series(sol: SeriesSolution, problem: ControlProblem, trunc: int):
    """``f(x, kappa(x))`` and ``l(x, kappa(x))`` as series in ``x``."""
    n, m = problem.n, problem.m
    inner = PolySeries.stack([PolySeries.identity(n, trunc), sol.kappa.with_order(trunc)])
    p = problem.with_orders(trunc, trunc)
    return compose(p.f, inner, trunc), compose(p.l, inner, trunc), inner


def dpe_residual(sol: SeriesSolution, problem: ControlProblem, r: int | None = None) -> dict:
    """Per-degree coefficient norms of both dynamic programming equations.

    Returns ``{"cost": {d: norm}, "gradient": {d: norm}}`` with the cost
    equation checked for ``d <= r`` and the gradient condition for ``d <= r - 1``.
    """
    r = sol.trunc if r is None else r
    n, m = problem.n, problem.m
    fk, lk, inner = closed_loop_series(sol, problem, r)
    pi = sol.pi.with_order(r)
    E1 = pi - compose(pi, fk, r) - lk
    p = problem.with_orders(r, r)
    dpi_at = compose(grad(pi), fk, r - 1)
    rows = []
    for dfu, dlu in zip(control_gradient(p.f, n, m), control_gradient(p.l, n, m)):
        rows.append(dot(compose(dfu, inner, r - 1), dpi_at, r - 1) + compose(dlu, inner, r - 1))
    E2 = PolySeries.stack(rows)
    return {
        "cost": {d: E1.coeff_norm(d) for d in range(2, r + 1)},
        "gradient": {d: E2.coeff_norm(d) for d in range(1, r)},
    }


def kappa_by_probing(problem: ControlProblem, sol: SeriesSolution, d: int) -> np.ndarray:
    """Recompute ``kappa^[d]`` by solving the degree-``d`` gradient condition as a linear system.

    Independent of :func:`solve_series`'s closed form: the gradient residual
    is sampled as an affine function of the unknown coefficients.
    """
    from .polyalg import n_monomials

    n, m = problem.n, problem.m
    N = n_monomials(n, d)
    base_parts = {k: v for k, v in sol.kappa_parts.items() if k < d}
    pi = sol.pi.with_order(d + 1)
    p = problem.with_orders(d + 1, d + 1)

    def residual(kd: np.ndarray) -> np.ndarray:
        parts = {1: sol.K, **base_parts, d: kd.reshape(m, N)}
        kappa = PolySeries(n, m, d, parts)
        inner = PolySeries.stack([PolySeries.identity(n, d), kappa])
        rows = []
        if problem.mode == DISCRETE:
            fk = compose(p.f, inner, d)
            dpi_at = compose(grad(pi), fk, d)
        else:
            dpi_at = grad(pi).with_order(d)
        for dfu, dlu in zip(control_gradient(p.f, n, m), control_gradient(p.l, n, m)):
            rows.append(dot(compose(dfu, inner, d), dpi_at, d) + compose(dlu, inner, d))
        return PolySeries.stack(rows).part(d).reshape(-1)

    z = np.zeros(m * N)
    r0 = residual(z)
    J = np.empty((m * N, m * N))
    for k in range(m * N):
        e = np.zeros(m * N)
        e[k] = 1.0
        J[:, k] = residual(e) - r0
    return np.linalg.solve(J, -r0).reshape(m, N)
