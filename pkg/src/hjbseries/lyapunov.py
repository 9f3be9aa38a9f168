"""Sublevel-set validation of an approximate cost/feedback pair.

A candidate ``(pi, kappa)`` is accepted on the largest sublevel set
``{pi <= c}`` (the connected piece containing the origin) on which both

    stability:   -(dpi.f) - (1 - eps1) l >= 0
    optimality:  (1 + eps2) l + dpi.f >= 0

hold at every sample.  In discrete time ``pi(f(x, kappa)) - pi(x)`` replaces
the directional derivative ``dpi.f``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.stats import qmc

from .exceptions import DimensionError, HJBSeriesError, SeriesInvalidError
from .polyalg import PolySeries, grad
from .riccati import DISCRETE

logger = logging.getLogger(__name__)

DEFAULT_EPS = 2.0 ** -6
C_MIN = 1e-8
MARGIN_RTOL = 1e-10


def _as_callable(s, n):
    if isinstance(s, PolySeries):
        return lambda X: s(X)
    return s


def _decrease(pi, kappa, problem, X, grad_pi=None):
    """Return ``(decrease term, l)`` at the rows of ``X``."""
    n = problem.n
    X = np.asarray(X, dtype=float).reshape(-1, n)
    pi_f = _as_callable(pi, n)
    U = np.asarray(_as_callable(kappa, n)(X), dtype=float).reshape(X.shape[0], -1)
    F = problem.eval_f(X, U)
    L = problem.eval_l(X, U)
    if problem.mode == DISCRETE:
        D = np.asarray(pi_f(F)).reshape(-1) - np.asarray(pi_f(X)).reshape(-1)
    else:
        if grad_pi is None:
            if not isinstance(pi, PolySeries):
                raise ValueError("grad_pi is required when pi is not a series")
            grad_pi = grad(pi)
        G = np.asarray(_as_callable(grad_pi, n)(X), dtype=float).reshape(-1, n)
        D = np.einsum("ij,ij->i", G, F)
    return D, L


def check_point(pi, kappa, problem, eps1=DEFAULT_EPS, eps2=DEFAULT_EPS, x=None, *, grad_pi=None):
    """Stability and optimality margins at one point or a batch of points.

    Parameters
    ----------
    pi, kappa : PolySeries or callable
        Candidate cost and feedback.  Callables take an ``(N, n)`` array.
    problem : ControlProblem or AffineProblem1D
        Anything with ``mode``, ``n``, ``eval_f`` and ``eval_l``.
    x : array_like
        A single state of length ``n`` or an ``(N, n)`` batch.
    grad_pi : callable, optional
        Gradient of ``pi``; needed in continuous time when ``pi`` is a callable.

    Returns
    -------
    (stability, optimality) : floats for a single point, arrays for a batch.
    """
    xa = np.asarray(x, dtype=float)
    single = xa.ndim <= 1 and xa.size == problem.n
    D, L = _decrease(pi, kappa, problem, xa, grad_pi)
    stab = -D - (1.0 - eps1) * L
    opt = (1.0 + eps2) * L + D
    if single:
        return float(stab[0]), float(opt[0])
    return stab, opt


def _failing(stab, opt, D, L):
    tol = MARGIN_RTOL * (np.abs(L) + np.abs(D))
    return (stab < -tol) | (opt < -tol)


@dataclass
class LyapunovReport:
    """Result of :func:`largest_sublevel`.

    ``boundary_points`` are the failing samples that limit ``c`` (the first
    failures met when the sublevel set grows); ``tight_point`` is where the
    stability margin is smallest inside the accepted region.
    """

    c: float
    eps1: float
    eps2: float
    mesh: int
    worst_margin_stability: float
    worst_margin_optimality: float
    boundary_points: np.ndarray
    tight_point: np.ndarray
    capped: bool
    n_samples: int
    flags: list = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return self.worst_margin_stability >= 0 and self.worst_margin_optimality >= 0

    def to_dict(self) -> dict:
        return {
            "c": self.c,
            "eps1": self.eps1,
            "eps2": self.eps2,
            "mesh": self.mesh,
            "worst_margin_stability": self.worst_margin_stability,
            "worst_margin_optimality": self.worst_margin_optimality,
            "boundary_points": np.asarray(self.boundary_points).tolist(),
            "tight_point": np.asarray(self.tight_point).tolist(),
            "capped": self.capped,
            "n_samples": self.n_samples,
            "flags": list(self.flags),
        }


class _Samples:
    """Sample set plus the origin-connected component of a sublevel set."""

    def __init__(self, box, mesh, n, seed):
        lo, hi = box
        self.lo, self.hi = lo, hi
        if n <= 2:
            axes = [np.linspace(lo[i], hi[i], mesh + 1) for i in range(n)]
            grids = np.meshgrid(*axes, indexing="ij")
            self.shape = grids[0].shape
            self.X = np.column_stack([g.ravel() for g in grids])
            self.grid = True
            origin = tuple(int(np.argmin(np.abs(a))) for a in axes)
            self.origin = np.ravel_multi_index(origin, self.shape)
            self.spacing = np.array([(hi[i] - lo[i]) / mesh for i in range(n)])
        elif n <= 4:
            count = int(2 ** np.ceil(np.log2(max(mesh, 64) ** 2)))
            count = min(count, 2 ** 16)
            eng = qmc.Sobol(d=n, scramble=True, seed=seed)
            pts = qmc.scale(eng.random(count), lo, hi)
            self.X = np.vstack([np.zeros(n), pts])
            self.grid = False
            self.origin = 0
            self.shape = None
            self.spacing = (np.asarray(hi) - np.asarray(lo)) / mesh
        else:
            raise DimensionError("sublevel validation supports n <= 4")

    def component(self, pi_vals, c, path_max=None):
        inside = pi_vals <= c
        if self.grid:
            lab, _ = ndimage.label(inside.reshape(self.shape))
            root = lab.ravel()[self.origin]
            if root == 0:
                return np.zeros_like(inside)
            return lab.ravel() == root
        return path_max <= c


def largest_sublevel(
    pi,
    kappa,
    problem,
    eps1: float = DEFAULT_EPS,
    eps2: float = DEFAULT_EPS,
    box=(-1.0, 1.0),
    mesh: int = 256,
    *,
    grad_pi=None,
    refine: int = 4,
    rel_tol: float = 1e-3,
    c_min: float = C_MIN,
    seed: int = 0,
) -> LyapunovReport:
    """Largest sampled sublevel set on which both margins are nonnegative.

    Parameters
    ----------
    box : (lo, hi)
        Scalars (1-D) or per-axis sequences.  Must contain the origin.
    mesh : int
        Cells per axis for grids (``n <= 2``, at least 64).  For ``n`` of 3
        or 4 a scrambled Sobol set of about ``mesh**2`` points is used.
    refine : int
        Local refinement factor between the last accepted and first
        rejected samples (1 disables refinement).

    Raises
    ------
    SeriesInvalidError
        If no level above ``c_min`` passes.
    """
    n = problem.n
    lo = np.broadcast_to(np.asarray(box[0], dtype=float), (n,)).copy()
    hi = np.broadcast_to(np.asarray(box[1], dtype=float), (n,)).copy()
    if np.any(lo > 0) or np.any(hi < 0):
        raise ValueError("box must contain the origin")
    if n <= 2 and mesh < 64:
        raise ValueError("mesh must be at least 64 per axis")
    S = _Samples((lo, hi), mesh, n, seed)
    X = S.X
    pi_f = _as_callable(pi, n)
    pv = np.asarray(pi_f(X)).reshape(-1)
    D, L = _decrease(pi, kappa, problem, X, grad_pi)
    stab = -D - (1.0 - eps1) * L
    opt = (1.0 + eps2) * L + D
    fail = _failing(stab, opt, D, L)

    path_max = None
    if not S.grid:
        ts = np.linspace(0.0, 1.0, 17)[1:]
        path_max = np.max([np.asarray(pi_f(t * X)).reshape(-1) for t in ts], axis=0)

    def passes(c):
        comp = S.component(pv, c, path_max)
        return not np.any(fail & comp), comp

    c_top = float(pv.max())
    flags = []
    ok, comp = passes(c_top)
    if ok:
        c = c_top
        capped = True
        flags.append("cap")
    else:
        capped = False
        if not passes(c_min)[0]:
            raise SeriesInvalidError("series invalid near origin: no passing sublevel set")
        lo_c, hi_c = c_min, c_top
        while hi_c - lo_c > rel_tol * lo_c:
            mid = 0.5 * (lo_c + hi_c)
            if passes(mid)[0]:
                lo_c = mid
            else:
                hi_c = mid
        c = lo_c
        ok, comp = passes(c)
        if not np.any(comp & (np.linalg.norm(X, axis=1) > 0)):
            raise SeriesInvalidError("series invalid near origin: only the origin sample passes")
        # acceptance must be monotone in c on a fixed sample set
        for frac in (0.25, 0.5, 0.75):
            if not passes(frac * c)[0]:
                raise HJBSeriesError(f"sublevel acceptance is not monotone below c={c:.6g}")
        # failing samples that enter the region just above c
        grown = S.component(pv, hi_c, path_max)
        blockers = np.flatnonzero(fail & grown & ~comp)
        boundary = X[blockers]
        if refine > 1 and boundary.size:
            c, boundary = _refine(pi, kappa, problem, eps1, eps2, grad_pi, X, comp, boundary,
                                  S.spacing, refine, c)
    if capped:
        boundary = np.empty((0, n))

    inside = comp
    ws = float(stab[inside].min()) if inside.any() else 0.0
    wo = float(opt[inside].min()) if inside.any() else 0.0
    nz = inside & (np.linalg.norm(X, axis=1) > 0)
    tight = X[np.flatnonzero(nz)[np.argmin(stab[nz])]] if nz.any() else np.zeros(n)
    logger.info("sublevel c=%.6g eps1=%g eps2=%g mesh=%d samples=%d capped=%s",
                c, eps1, eps2, mesh, X.shape[0], capped)
    return LyapunovReport(
        c=float(c), eps1=eps1, eps2=eps2, mesh=mesh,
        worst_margin_stability=ws, worst_margin_optimality=wo,
        boundary_points=boundary, tight_point=tight, capped=capped,
        n_samples=X.shape[0], flags=flags,
    )


def _refine(pi, kappa, problem, eps1, eps2, grad_pi, X, comp, boundary, spacing, k, c):
    """Resample ``k`` times finer around each blocking sample.

    Lowers ``c`` if a refined sample between the accepted region and the
    blocker fails, and returns the refined boundary points.
    """
    n = X.shape[1]
    pi_f = _as_callable(pi, n)
    accepted = X[comp]
    out = []
    for b in boundary:
        # nearest accepted neighbour, then k sub-steps toward the blocker
        j = np.argmin(np.linalg.norm(accepted - b, axis=1))
        a = accepted[j]
        ts = np.arange(1, k + 1) / k
        P = a + ts[:, None] * (b - a)
        D, L = _decrease(pi, kappa, problem, P, grad_pi)
        stab = -D - (1.0 - eps1) * L
        opt = (1.0 + eps2) * L + D
        bad = np.flatnonzero(_failing(stab, opt, D, L))
        first = P[bad[0]] if bad.size else b
        out.append(first)
        c = min(c, float(np.asarray(pi_f(first[None, :])).reshape(-1)[0]))
    return c, np.array(out)


def first_failure_along(pi, kappa, problem, start: float, stop: float, mesh_points,
                        eps1=DEFAULT_EPS, eps2=DEFAULT_EPS, *, grad_pi=None):
    """First mesh point strictly beyond ``start`` (towards ``stop``) where a margin fails.

    1-D helper for marching.  Returns ``None`` when every point up to ``stop``
    passes.
    """
    pts = np.asarray(mesh_points, dtype=float)
    if stop >= start:
        sel = np.sort(pts[(pts > start) & (pts <= stop)])
    else:
        sel = np.sort(pts[(pts < start) & (pts >= stop)])[::-1]
    if sel.size == 0:
        return None
    D, L = _decrease(pi, kappa, problem, sel[:, None], grad_pi)
    stab = -D - (1.0 - eps1) * L
    opt = (1.0 + eps2) * L + D
    bad = np.flatnonzero(_failing(stab, opt, D, L))
    return float(sel[bad[0]]) if bad.size else None
