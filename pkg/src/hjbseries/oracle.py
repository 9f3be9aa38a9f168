"""Independent ground truth: grid value iteration, closed-loop rollouts, and
finite-horizon shooting for discrete problems."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import minimize

from .exceptions import ConvergenceError, DimensionError
from .patch import write_csv
from .polyalg import PolySeries
from .riccati import CONTINUOUS, DISCRETE, solve_lqr

logger = logging.getLogger(__name__)

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass
class GridValueFunction:
    """Value function on a tensor grid, evaluated by multilinear interpolation."""

    axes: list
    values: np.ndarray
    tol: float
    sweeps: int
    clamped: int = 0

    def __post_init__(self):
        self._interp = RegularGridInterpolator(tuple(self.axes), self.values, method="linear",
                                               bounds_error=False, fill_value=None)

    def __call__(self, X):
        X = np.asarray(X, dtype=float).reshape(-1, len(self.axes))
        return self._interp(X)

    @property
    def nodes(self) -> np.ndarray:
        g = np.meshgrid(*self.axes, indexing="ij")
        return np.column_stack([a.ravel() for a in g])

    def to_csv(self, path) -> None:
        cols = {f"x{i + 1}": self.nodes[:, i] for i in range(len(self.axes))}
        cols["value"] = self.values.ravel()
        write_csv(path, cols)


def _minimize_u(q, ugrid, lo, hi, n_nodes, iters=40):
    """Grid search over ``ugrid`` then a vectorized golden-section refinement.

    ``q(U)`` maps an ``(N, m)`` control batch to ``(N,)`` values.  Only the
    scalar-control case is refined; for ``m > 1`` the grid minimum is kept.
    """
    best_v = np.full(n_nodes, np.inf)
    best_u = np.zeros((n_nodes, ugrid.shape[1]))
    for u in ugrid:
        v = q(np.tile(u, (n_nodes, 1)))
        better = v < best_v
        best_v[better] = v[better]
        best_u[better] = u
    if best_u.shape[1] != 1:
        return best_u, best_v
    step = (hi[0] - lo[0]) / max(len(ugrid) - 1, 1)
    a = np.clip(best_u[:, 0] - step, lo[0], hi[0])
    b = np.clip(best_u[:, 0] + step, lo[0], hi[0])
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = q(c[:, None]), q(d[:, None])
    for _ in range(iters):
        left = fc < fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new = np.where(left, b - GOLDEN * (b - a), a + GOLDEN * (b - a))
        fnew = q(new[:, None])
        c, fc, d, fd = (np.where(left, new, d), np.where(left, fnew, fd),
                        np.where(left, c, new), np.where(left, fc, fnew))
    um = 0.5 * (a + b)
    vm = q(um[:, None])
    take = vm < best_v
    best_u[take, 0] = um[take]
    best_v[take] = vm[take]
    return best_u, best_v


def value_iteration(p, box, mesh: int = 201, u_box=(-1.0, 1.0), u_mesh: int = 201,
                    tol: float = 1e-10, max_sweeps: int = 2000) -> GridValueFunction:
    """Fixed point of ``V <- min_u [l(x, u) + V(f(x, u))]`` on a tensor grid.

    Parameters
    ----------
    p : ControlProblem
        Discrete-time problem with ``n <= 2``.
    box, u_box : (lo, hi)
        State and control bounds (scalars or per-axis sequences).
    mesh, u_mesh : int
        Nodes per axis.

    Successors leaving the box are clamped and charged ``10 * max(V)``.
    """
    if p.mode != DISCRETE:
        raise ValueError("value iteration needs a discrete-time problem")
    n, m = p.n, p.m
    if n > 2:
        raise DimensionError("value iteration supports n <= 2")
    lo = np.broadcast_to(np.asarray(box[0], dtype=float), (n,))
    hi = np.broadcast_to(np.asarray(box[1], dtype=float), (n,))
    ulo = np.broadcast_to(np.asarray(u_box[0], dtype=float), (m,))
    uhi = np.broadcast_to(np.asarray(u_box[1], dtype=float), (m,))
    axes = [np.linspace(lo[i], hi[i], mesh) for i in range(n)]
    g = np.meshgrid(*axes, indexing="ij")
    Xn = np.column_stack([a.ravel() for a in g])
    uaxes = [np.linspace(ulo[j], uhi[j], u_mesh) for j in range(m)]
    ugrid = np.column_stack([a.ravel() for a in np.meshgrid(*uaxes, indexing="ij")])
    shape = g[0].shape
    V = np.zeros(Xn.shape[0])
    clamped = 0

    for sweep in range(1, max_sweeps + 1):
        interp = RegularGridInterpolator(tuple(axes), V.reshape(shape), method="linear")
        barrier = 10.0 * max(V.max(), 0.0)
        out_count = [0]

        def q(U):
            F = p.eval_f(Xn, U)
            Fc = np.clip(F, lo, hi)
            out = np.any(F != Fc, axis=1)
            out_count[0] = max(out_count[0], int(out.sum()))
            return p.eval_l(Xn, U) + interp(Fc) + barrier * out

        _, Vn = _minimize_u(q, ugrid, ulo, uhi, Xn.shape[0])
        change = float(np.max(np.abs(Vn - V)))
        V = Vn
        clamped = out_count[0]
        if change <= tol:
            logger.info("value iteration converged in %d sweeps (change %.3e, clamped %d)",
                        sweep, change, clamped)
            return GridValueFunction(axes, V.reshape(shape), change, sweep, clamped)
    raise ConvergenceError(f"value iteration did not converge in {max_sweeps} sweeps (change {change:.3e})")


def _call(fn, X):
    if isinstance(fn, PolySeries):
        return fn(X)
    return np.asarray(fn(X), dtype=float).reshape(X.shape[0], -1)


def _fast(fn):
    """Flatten a series into one power-and-matmul evaluation for tight loops."""
    if not isinstance(fn, PolySeries):
        return lambda X: _call(fn, X)
    terms = list(fn.terms())
    if not terms:
        return lambda X: np.zeros((X.shape[0], fn.n_out))
    E = np.array([a for _, a, _ in terms], dtype=float)
    C = np.zeros((fn.n_out, len(terms)))
    for j, (comp, _, val) in enumerate(terms):
        C[comp, j] = val
    return lambda X: np.prod(X[:, None, :] ** E[None], axis=2) @ C.T


def _level1_P(p):
    if hasattr(p, "lqr"):
        return solve_lqr(p.lqr, p.mode).P
    return solve_lqr(p.to_control_problem(2).lqr, CONTINUOUS).P


def rollout_costs(p, kappa, X0, T: float = 40.0, dt: float = 1e-3, *, escape: float = 1e6,
                  tail_tol: float = 1e-6, stop_tol: float = 1e-8, P=None) -> np.ndarray:
    """Closed-loop costs from a batch of initial states, integrated together.

    See :func:`rollout_cost`; ``X0`` has shape ``(N, n)`` and the result ``(N,)``.
    """
    if p.mode != CONTINUOUS:
        raise ValueError("rollout_cost needs a continuous-time problem")
    if dt <= 1e-12:
        raise ConvergenceError("step size underflow")
    n = p.n
    x = np.asarray(X0, dtype=float).reshape(-1, n)
    kap = _fast(kappa)

    def rhs(x):
        u = kap(x)
        return p.eval_f(x, u).reshape(-1, n), p.eval_l(x, u).reshape(-1)

    J = np.zeros(x.shape[0])
    steps = int(round(T / dt))
    for _ in range(steps):
        k1, c1 = rhs(x)
        k2, c2 = rhs(x + 0.5 * dt * k1)
        k3, c3 = rhs(x + 0.5 * dt * k2)
        k4, c4 = rhs(x + dt * k3)
        x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        J += dt / 6.0 * (c1 + 2 * c2 + 2 * c3 + c4)
        nx = np.linalg.norm(x, axis=1)
        if not np.all(np.isfinite(nx)) or nx.max() > escape:
            raise ConvergenceError("trajectory escape in rollout")
        if nx.max() < stop_tol:
            break
    if P is None:
        P = _level1_P(p)
    P = np.atleast_2d(P)
    tail = 0.5 * np.einsum("bi,ij,bj->b", x, P, x)
    worst = float(np.linalg.norm(x, axis=1).max()) if x.size else 0.0
    if worst >= tail_tol:
        logger.warning("rollout ended at |x| = %.3e; tail estimate %.3e", worst, tail.max())
    else:
        logger.debug("rollout tail contribution %.3e", tail.max() if tail.size else 0.0)
    return J + tail


def rollout_cost(p, kappa, x0, T: float = 40.0, dt: float = 1e-3, *, escape: float = 1e6,
                 tail_tol: float = 1e-6, stop_tol: float = 1e-8, P=None) -> float:
    """Cost of the closed loop ``x' = f(x, kappa(x))`` from ``x0``, by RK4.

    The running cost is integrated alongside the state.  Integration stops
    once ``|x|`` falls below ``stop_tol``; the remaining cost is approximated
    by ``x'Px / 2`` with the level-1 Riccati ``P`` (a warning is logged when
    the final state is still above ``tail_tol``).

    Raises
    ------
    ConvergenceError
        If the trajectory escapes (norm above ``escape``) or ``dt`` underflows.
    """
    return float(rollout_costs(p, kappa, np.reshape(x0, (1, -1)), T, dt, escape=escape,
                               tail_tol=tail_tol, stop_tol=stop_tol, P=P)[0])


def shooting_cost(p, x0, horizon: int = 80, *, P=None, kappa=None, gtol: float = 1e-13) -> float:
    """Optimal discrete-time cost from ``x0`` by direct finite-horizon optimization.

    Minimizes ``sum l(x_k, u_k) + x_N'Px_N / 2`` over the control sequence
    with BFGS, seeded by the LQR feedback (or ``kappa`` if given).  For a
    Schur-stable closed loop the terminal error decays geometrically in the
    horizon, so this is an accurate local reference independent of any series.
    """
    if p.mode != DISCRETE:
        raise ValueError("shooting_cost needs a discrete-time problem")
    n, m = p.n, p.m
    ric = solve_lqr(p.lqr, DISCRETE)
    P = ric.P if P is None else np.atleast_2d(P)
    K = ric.K

    def costs(Useq):
        # batch of control sequences, shape (B, horizon * m)
        B = Useq.shape[0]
        x = np.tile(np.asarray(x0, dtype=float).reshape(1, n), (B, 1))
        J = np.zeros(B)
        for k in range(horizon):
            u = Useq[:, k * m:(k + 1) * m]
            J += p.eval_l(x, u)
            x = p.eval_f(x, u)
        return J + 0.5 * np.einsum("bi,ij,bj->b", x, P, x)

    def fun(useq):
        h = 1e-6 * max(1.0, float(np.abs(useq).max()))
        E = np.eye(useq.size) * h
        batch = np.vstack([useq[None, :], useq + E, useq - E])
        c = costs(batch)
        N = useq.size
        return c[0], (c[1:N + 1] - c[N + 1:]) / (2 * h)

    # seed
    x = np.asarray(x0, dtype=float).reshape(1, n)
    seed = []
    for _ in range(horizon):
        u = _call(kappa, x) if kappa is not None else x @ K.T
        seed.append(u.reshape(m))
        x = p.eval_f(x, u.reshape(1, m)).reshape(1, n)
    res = minimize(fun, np.concatenate(seed), jac=True, method="BFGS",
                   options={"gtol": gtol, "maxiter": 10000})
    return float(costs(res.x[None, :])[0])
