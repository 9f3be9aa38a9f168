"""Continuous-time power-series solution of the HJB equations."""
from __future__ import annotations

import numpy as np

from .dpe import SeriesSolution, closed_loop_series, control_gradient, solve_series
from .polyalg import PolySeries, compose, dot, grad
from .problem import ControlProblem
from .riccati import CONTINUOUS


def solve_hjb_series(problem: ControlProblem, r: int, **kwargs) -> SeriesSolution:
    """Optimal cost through degree ``r`` and feedback through degree ``r - 1``.

    Level 1 is the continuous algebraic Riccati equation; each higher
    level inverts ``q -> (dq/dx)(x) (A + BK) x`` on the monomial basis,
    which is nonsingular whenever ``A + BK`` is Hurwitz.
    """
    if problem.mode != CONTINUOUS:
        raise ValueError("solve_hjb_series needs a continuous-time problem")
    if r < 3:
        raise ValueError("truncation degree must be at least 3")
    return solve_series(problem, r, **kwargs)


def hjb_series_residual(sol: SeriesSolution, problem: ControlProblem, r: int | None = None) -> dict:
    """Per-degree coefficient norms of the HJB cost equation and u-gradient condition."""
    r = sol.trunc if r is None else r
    n, m = problem.n, problem.m
    fk, lk, inner = closed_loop_series(sol, problem, r)
    dpi = grad(sol.pi.with_order(r))
    E1 = dot(dpi.with_order(r), fk, r) + lk
    p = problem.with_orders(r, r)
    rows = []
    for dfu, dlu in zip(control_gradient(p.f, n, m), control_gradient(p.l, n, m)):
        rows.append(dot(compose(dfu, inner, r - 1), dpi.with_order(r - 1), r - 1) + compose(dlu, inner, r - 1))
    E2 = PolySeries.stack(rows)
    return {
        "cost": {d: E1.coeff_norm(d) for d in range(2, r + 1)},
        "gradient": {d: E2.coeff_norm(d) for d in range(1, r)},
    }


def hjb_residual(sol, problem: ControlProblem, points, *, grad_pi=None, kappa=None,
                 f_u=None, l_u=None, h: float = 1e-6) -> tuple[float, float]:
    """Max pointwise residuals of the HJB equation and its u-gradient condition.

    ``sol`` may be a :class:`SeriesSolution` or ``None`` when ``grad_pi`` and
    ``kappa`` callables are supplied directly (e.g. the analytic solution).
    The problem's exact ``f``/``l`` are used when it carries them.  The
    u-derivatives come from ``f_u``/``l_u`` if given, otherwise from the
    series (or a central difference of the exact functions, step ``h``).
    """
    n, m = problem.n, problem.m
    X = np.asarray(points, dtype=float).reshape(-1, n)
    if X.shape[0] == 0:
        return 0.0, 0.0
    if sol is not None:
        gp = grad(sol.pi)(X)
        U = sol.kappa(X)
    else:
        gp = np.asarray(grad_pi(X), dtype=float).reshape(-1, n)
        U = np.asarray(kappa(X), dtype=float).reshape(-1, m)
    F = problem.eval_f(X, U)
    L = problem.eval_l(X, U)
    r1 = np.abs(np.einsum("ij,ij->i", gp, F) + L)

    if f_u is not None:
        Fu = np.asarray(f_u(X, U)).reshape(-1, n, m)
        Lu = np.asarray(l_u(X, U)).reshape(-1, m)
    elif problem.f_exact is None and problem.l_exact is None:
        XU = np.hstack([X, U])
        Fu = np.stack([np.asarray(d(XU)) for d in control_gradient(problem.f, n, m)], axis=2)
        Lu = np.hstack([np.asarray(d(XU)) for d in control_gradient(problem.l, n, m)])
    else:
        Fu = np.empty((X.shape[0], n, m))
        Lu = np.empty((X.shape[0], m))
        for j in range(m):
            e = np.zeros(m)
            e[j] = h
            Fu[:, :, j] = (problem.eval_f(X, U + e) - problem.eval_f(X, U - e)) / (2 * h)
            Lu[:, j] = (problem.eval_l(X, U + e) - problem.eval_l(X, U - e)) / (2 * h)
    r2 = np.abs(np.einsum("ij,ijk->ik", gp, Fu) + Lu).max(axis=1)
    return float(r1.max()), float(r2.max())
