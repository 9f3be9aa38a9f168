"""1-D Taylor patching of the HJB solution for control-affine problems.

For ``f = g0(x) + g1(x) u`` and ``l = l0(x) + l1(x) u + l2(x) u^2`` the
optimal pair satisfies

    pi'(x) f(x, kappa) + l(x, kappa) = 0          (cost equation)
    pi'(x) g1(x) + l1(x) + 2 l2(x) kappa = 0      (gradient condition)

Differentiating the cost equation ``k`` times at a point produces one new
unknown, ``pi^(k+1)``, multiplied by ``f(x, kappa)``; the ``kappa^(k)`` term
drops out because its coefficient is the gradient condition itself.  The
``k``-th derivative of the gradient condition then gives ``kappa^(k)`` with
coefficient ``2 l2``.  A patch is the resulting pair of jets at its center.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .albrecht import solve_hjb_series
from .exceptions import CharacteristicPointError, DomainError, PreconditionError
from .expr import Expr, jet_mul, parse
from .lyapunov import DEFAULT_EPS, first_failure_along, largest_sublevel
from .polyalg import PolySeries
from .problem import ControlProblem
from .riccati import CONTINUOUS

logger = logging.getLogger(__name__)

CHAR_TOL = 1e-10
CAUCHY_TOL = 1e-8


def _expr(e) -> Expr:
    return e if isinstance(e, Expr) else parse(e)


@dataclass(frozen=True)
class AffineProblem1D:
    """Scalar control-affine problem on the interval ``(a, b]``.

    Expressions may be given as strings; they are parsed on construction.
    ``pi_exact`` and ``kappa_exact`` are optional reference solutions.
    """

    g0: Expr
    g1: Expr
    l0: Expr
    l1: Expr
    l2: Expr
    domain: tuple = (-1.0, 1.0)
    name: str = "affine1d"
    pi_exact: Expr | None = None
    kappa_exact: Expr | None = None
    check_mesh: int = 257

    mode = CONTINUOUS
    n = 1
    m = 1

    def __post_init__(self):
        for k in ("g0", "g1", "l0", "l1", "l2", "pi_exact", "kappa_exact"):
            v = getattr(self, k)
            if v is not None:
                object.__setattr__(self, k, _expr(v))
        a, b = map(float, self.domain)
        object.__setattr__(self, "domain", (a, b))
        if not a < 0.0 <= b:
            raise PreconditionError("domain (a, b] must contain 0 with a < 0")
        if abs(self.g0.jet(0.0, 0)[0]) > 1e-14:
            raise PreconditionError("g0(0) must vanish")
        j = self.l0.jet(0.0, 1)
        if abs(j[0]) > 1e-14 or abs(j[1]) > 1e-14:
            raise PreconditionError("l0(0) and l0'(0) must vanish")
        if abs(self.l1.jet(0.0, 0)[0]) > 1e-14:
            raise PreconditionError("l1(0) must vanish")
        xs = self.mesh_points(self.check_mesh)
        l2 = self.l2(xs)
        if np.any(l2 <= 0):
            bad = xs[np.argmin(l2)]
            raise PreconditionError(f"l2 must be positive on the domain; l2({bad:.6g}) = {l2.min():.6g}")

    def mesh_points(self, mesh: int) -> np.ndarray:
        """Uniform points on the domain, open left end excluded."""
        a, b = self.domain
        xs = np.linspace(a, b, mesh + 1)
        return xs[xs > a]

    def in_domain(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x > self.domain[0]) & (x <= self.domain[1])

    # evaluation in the ControlProblem protocol ------------------------
    def eval_f(self, X, U):
        x = np.asarray(X, dtype=float).reshape(-1)
        u = np.asarray(U, dtype=float).reshape(-1)
        return (self.g0(x) + self.g1(x) * u).reshape(-1, 1)

    def eval_l(self, X, U):
        x = np.asarray(X, dtype=float).reshape(-1)
        u = np.asarray(U, dtype=float).reshape(-1)
        return self.l0(x) + self.l1(x) * u + self.l2(x) * u * u

    def feedback_from_gradient(self, x, dpi):
        """``kappa`` from the gradient condition given ``pi'``."""
        x = np.asarray(x, dtype=float)
        return -(dpi * self.g1(x) + self.l1(x)) / (2.0 * self.l2(x))

    def to_control_problem(self, order: int) -> ControlProblem:
        """Series form through ``order`` from jets at 0, with the exact functions attached."""
        g0, g1 = self.g0.jet(0.0, order), self.g1.jet(0.0, order)
        l0, l1, l2 = self.l0.jet(0.0, order), self.l1.jet(0.0, order), self.l2.jet(0.0, order)
        f_terms = [(0, (k, 0), g0[k]) for k in range(1, order + 1)]
        f_terms += [(0, (k, 1), g1[k]) for k in range(0, order)]
        l_terms = [(0, (k, 0), l0[k]) for k in range(2, order + 1)]
        l_terms += [(0, (k, 1), l1[k]) for k in range(1, order)]
        l_terms += [(0, (k, 2), l2[k]) for k in range(0, order - 1)]
        f_terms = [t for t in f_terms if t[2] != 0.0]
        l_terms = [t for t in l_terms if t[2] != 0.0]
        return ControlProblem.from_terms(
            CONTINUOUS, 1, 1, f_terms, l_terms, f_order=order, l_order=order, name=self.name,
            f_exact=self.eval_f, l_exact=self.eval_l,
        )

    def hjb_residual(self, x, dpi, kappa):
        x = np.asarray(x, dtype=float)
        return dpi * (self.g0(x) + self.g1(x) * kappa) + self.eval_l(x, kappa)


def _poly_eval(c: np.ndarray, t):
    return np.polynomial.polynomial.polyval(t, c)


@dataclass(frozen=True)
class Patch:
    """Jets of ``pi`` (orders ``0..d+1``) and ``kappa`` (``0..d``) at ``center``.

    ``interval`` is the closed interval on which the patch is used.
    """

    center: float
    pi_jet: np.ndarray
    kappa_jet: np.ndarray
    interval: tuple
    hjb_defect: float = 0.0

    def pi(self, x):
        return _poly_eval(self.pi_jet, np.asarray(x, dtype=float).reshape(-1) - self.center)

    def dpi(self, x):
        c = self.pi_jet[1:] * np.arange(1, len(self.pi_jet))
        return _poly_eval(c, np.asarray(x, dtype=float).reshape(-1) - self.center)

    def kappa(self, x):
        return _poly_eval(self.kappa_jet, np.asarray(x, dtype=float).reshape(-1) - self.center)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.interval
        return (x >= lo) & (x <= hi)

    def with_interval(self, interval) -> "Patch":
        return Patch(self.center, self.pi_jet, self.kappa_jet, tuple(map(float, interval)), self.hjb_defect)


def _equation_jets(p: AffineProblem1D, x0: float, dpi: np.ndarray, kap: np.ndarray):
    """Jets of the cost equation and gradient condition for given ``pi'`` and ``kappa`` jets."""
    N = len(dpi) - 1
    g0, g1 = p.g0.jet(x0, N), p.g1.jet(x0, N)
    l0, l1, l2 = p.l0.jet(x0, N), p.l1.jet(x0, N), p.l2.jet(x0, N)
    F = g0 + jet_mul(g1, kap)
    E3 = jet_mul(dpi, F) + l0 + jet_mul(l1, kap) + jet_mul(l2, jet_mul(kap, kap))
    E4 = jet_mul(dpi, g1) + l1 + 2.0 * jet_mul(l2, kap)
    return E3, E4, F


def taylor_at_point(p: AffineProblem1D, xbar: float, pi0: float, pi1: float, kappa0: float,
                    d: int, interval=None) -> Patch:
    """Build the order-``d`` patch at ``xbar`` from the Cauchy data ``(pi0, pi1, kappa0)``.

    Raises
    ------
    CharacteristicPointError
        When ``|f(xbar, kappa0)|`` is below ``1e-10``.
    PreconditionError
        When ``kappa0`` violates the gradient condition by more than ``1e-8``.
    """
    xbar = float(xbar)
    if not p.in_domain(xbar):
        raise DomainError(f"center {xbar} is outside the domain {p.domain}")
    dpi = np.zeros(d + 1)
    kap = np.zeros(d + 1)
    dpi[0], kap[0] = pi1, kappa0
    E3, E4, F = _equation_jets(p, xbar, dpi, kap)
    f0 = F[0]
    if abs(f0) < CHAR_TOL:
        raise CharacteristicPointError(f"characteristic point, cannot march here (f = {f0:.3e} at x = {xbar:.6g})")
    scale = 1.0 + abs(pi1 * p.g1.jet(xbar, 0)[0]) + abs(p.l1.jet(xbar, 0)[0])
    if abs(E4[0]) > CAUCHY_TOL * scale:
        raise PreconditionError(f"Cauchy data violate the gradient condition by {E4[0]:.3e}")
    l2_0 = p.l2.jet(xbar, 0)[0]
    for k in range(1, d + 1):
        # kappa^(k) is still zero here; its coefficient in E3_k is E4_0 = 0
        E3, _, _ = _equation_jets(p, xbar, dpi, kap)
        dpi[k] = -E3[k] / f0
        _, E4, _ = _equation_jets(p, xbar, dpi, kap)
        kap[k] = -E4[k] / (2.0 * l2_0)
    E3, E4, _ = _equation_jets(p, xbar, dpi, kap)
    defect = float(max(np.abs(E3[1:]).max(initial=0.0), np.abs(E4).max()))
    pi_jet = np.concatenate([[pi0], dpi / np.arange(1, d + 2)])
    if interval is None:
        interval = (xbar, xbar)
    return Patch(xbar, pi_jet, kap, tuple(map(float, interval)), defect)


def patch_defect(p: AffineProblem1D, patch: Patch) -> dict:
    """Per-order residuals of both differentiated equations at the center."""
    d = len(patch.kappa_jet) - 1
    dpi = patch.pi_jet[1:] * np.arange(1, d + 2)
    E3, E4, _ = _equation_jets(p, patch.center, dpi, patch.kappa_jet)
    return {"cost": E3, "gradient": E4}


@dataclass
class PatchedSolution:
    """Ordered patches glued by the pointwise-minimum rule."""

    patches: list
    direction: int = 1
    stop_reason: str = ""
    seam_jumps: list = field(default_factory=list)

    @property
    def centers(self) -> list:
        return [q.center for q in self.patches]

    @property
    def frontier(self) -> float:
        q = self.patches[-1]
        return q.interval[1] if self.direction > 0 else q.interval[0]

    def evaluate(self, x):
        """``(pi, dpi, kappa, patch_id)`` at each point; ``patch_id`` is -1 outside coverage."""
        x = np.asarray(x, dtype=float).reshape(-1)
        pi = np.full(x.shape, np.inf)
        dpi = np.full(x.shape, np.nan)
        ka = np.full(x.shape, np.nan)
        pid = np.full(x.shape, -1, dtype=int)
        for i, q in enumerate(self.patches):
            inside = q.contains(x)
            if not inside.any():
                continue
            v = q.pi(x[inside])
            better = v < pi[inside]
            idx = np.flatnonzero(inside)[better]
            pi[idx] = v[better]
            dpi[idx] = q.dpi(x[idx])
            ka[idx] = q.kappa(x[idx])
            pid[idx] = i
        pi[pid < 0] = np.nan
        return pi, dpi, ka, pid

    def pi(self, x):
        return self.evaluate(x)[0]

    def dpi(self, x):
        return self.evaluate(x)[1]

    def kappa(self, x):
        return self.evaluate(x)[2]

    def table(self, p: AffineProblem1D, x) -> dict:
        x = np.asarray(x, dtype=float).reshape(-1)
        pi, dpi, ka, pid = self.evaluate(x)
        out = {"x": x, "pi": pi, "kappa": ka}
        if p.pi_exact is not None:
            out["pi_exact"] = p.pi_exact(x)
        out["residual"] = np.abs(p.hjb_residual(x, dpi, ka))
        out["patch_id"] = pid
        return out

    def to_csv(self, path, p: AffineProblem1D, x) -> None:
        write_csv(path, self.table(p, x))


def write_csv(path, columns: dict) -> None:
    """Write equal-length columns with 17 significant digits and ``\\n`` endings."""
    names = list(columns)
    cols = [np.asarray(columns[k]).reshape(-1) for k in names]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([_fmt(v) for v in row])


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def glue(current: PatchedSolution, new: Patch) -> PatchedSolution:
    """Append ``new`` to ``current``; overlaps are settled by the min rule at evaluation.

    Raises
    ------
    ValueError
        If the new patch does not touch the current frontier.
    """
    front = current.frontier
    lo, hi = new.interval
    if not (lo - 1e-12 <= front <= hi + 1e-12):
        raise ValueError(f"patch interval {new.interval} is disjoint from the frontier {front}")
    old = current.patches[-1]
    jump = 0.0
    if old.contains(new.center):
        jump = float(abs(old.kappa(new.center)[0] - new.kappa(new.center)[0]))
    return PatchedSolution(current.patches + [new], current.direction, current.stop_reason,
                           current.seam_jumps + [jump])


def origin_patch(p: AffineProblem1D, d: int, reach: float) -> tuple[Patch, object]:
    """The series solution at 0 (cost through ``d+1``, feedback through ``d``) as a patch."""
    cp = p.to_control_problem(d + 1)
    sol = solve_hjb_series(cp, d + 1)
    pi_jet = np.zeros(d + 2)
    ka_jet = np.zeros(d + 1)
    for k in range(2, d + 2):
        pi_jet[k] = sol.pi.part(k)[0, 0]
    for k in range(1, d + 1):
        ka_jet[k] = sol.kappa.part(k)[0, 0]
    interval = (0.0, reach) if reach >= 0 else (reach, 0.0)
    return Patch(0.0, pi_jet, ka_jet, interval), sol


def march(p: AffineProblem1D, d: int = 3, eps1: float = DEFAULT_EPS, eps2: float = DEFAULT_EPS,
          mesh: int = 256, direction: int = 1, max_patches: int = 6) -> PatchedSolution:
    """Extend the origin series across the domain one patch at a time.

    The mesh has ``mesh`` cells on the marching half of the domain.  Each new
    center is the first mesh point beyond the current patch's center where a
    Lyapunov margin fails; Cauchy data there come from the glued solution.
    Stops at the domain edge, after ``max_patches`` patches, or at a
    characteristic point; the reason is recorded in ``stop_reason``.
    """
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    a, b = p.domain
    edge = b if direction > 0 else a
    pts = np.linspace(0.0, edge, mesh + 1)
    pts = pts[p.in_domain(pts) | (pts == 0.0)]
    far = float(pts[-1])
    step = float(pts[1] - pts[0])

    first, sol = origin_patch(p, d, far)
    box = (0.0, far) if direction > 0 else (far, 0.0)
    rep = largest_sublevel(sol.pi, sol.kappa, p, eps1, eps2, box=box, mesh=max(len(pts) - 1, 64),
                           refine=1)
    if rep.capped or len(rep.boundary_points) == 0:
        logger.info("origin series accepted on the whole ray")
        return PatchedSolution([first], direction, "domain edge")
    fail = float(rep.boundary_points[0, 0])
    fail = float(pts[np.argmin(np.abs(pts - fail))])  # sublevel grid may differ from pts
    xb = _center_before(fail, step, 0.0)
    ps = PatchedSolution([first.with_interval(sorted((0.0, xb)))], direction)
    logger.info("patch 0 valid to %.6g (first failure at %.6g)", xb, fail)

    while True:
        if len(ps.patches) >= max_patches:
            ps.stop_reason = "max patches"
            break
        pi0, dpi0, k0, _ = (v[0] for v in ps.evaluate([xb]))
        k_pde = float(p.feedback_from_gradient(xb, dpi0))
        if abs(k_pde - k0) > CAUCHY_TOL:
            logger.warning("kappa at %.6g re-derived from the gradient condition (was %.3e off)",
                           xb, abs(k_pde - k0))
            k0 = k_pde
        try:
            q = taylor_at_point(p, xb, pi0, dpi0, k0, d)
        except CharacteristicPointError as exc:
            ps.stop_reason = f"characteristic point at {xb:.6g}"
            logger.warning(str(exc))
            break
        nxt = first_failure_along(q.pi, q.kappa, p, xb, far, pts, eps1, eps2, grad_pi=q.dpi)
        if nxt is None:
            ps = glue(ps, q.with_interval(sorted((xb, far))))
            ps.stop_reason = "domain edge"
            break
        new_xb = _center_before(nxt, step, xb)
        ps = glue(ps, q.with_interval(sorted((xb, new_xb))))
        logger.info("patch %d at %.6g valid to %.6g (first failure at %.6g)",
                    len(ps.patches) - 1, xb, new_xb, nxt)
        xb = new_xb
    return ps


def _center_before(fail: float, step: float, current: float) -> float:
    """Last accepted mesh point before ``fail``; at least one step past ``current``."""
    cand = fail - step
    if (cand - current) * np.sign(step) <= 1e-12 * abs(step):
        return fail
    return cand
