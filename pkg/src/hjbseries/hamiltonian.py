"""State/costate (Hamiltonian) structure of the discrete-time problem.

Covers the linear forward matrix and its symplectic structure, the
bidirectional eigenvalue pencil (which also handles singular ``A``), the
nonlinear forward step solved by Newton, and two independent routes to
the stable manifold ``lambda = phi(x)``: the gradient of the series cost,
and a direct Taylor construction in block-diagonal coordinates.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .dpe import SeriesSolution
from .exceptions import (
    ConvergenceError,
    DimensionError,
    NotHyperbolicError,
    SingularOperatorError,
)
from .polyalg import (
    PolySeries,
    compose,
    diff,
    dot,
    embed,
    grad,
    linear_substitution_matrix,
)
from .problem import ControlProblem
from .riccati import LqrData

logger = logging.getLogger(__name__)

H22_COND_MAX = 1e12


@dataclass(frozen=True)
class HamiltonianBlocks:
    H11: np.ndarray
    H12: np.ndarray
    H21: np.ndarray
    H22: np.ndarray

    @classmethod
    def from_lqr(cls, d: LqrData) -> "HamiltonianBlocks":
        Rinv = np.linalg.inv(d.R)
        return cls(
            H11=d.A - d.B @ Rinv @ d.S.T,
            H12=-d.B @ Rinv @ d.B.T,
            H21=d.Q - d.S @ Rinv @ d.S.T,
            H22=d.A.T - d.S @ Rinv @ d.B.T,
        )

    @property
    def n(self) -> int:
        return self.H11.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        """The mixed-direction map ``(x, lambda+) -> (x+, lambda)``."""
        return np.block([[self.H11, self.H12], [self.H21, self.H22]])


def symplectic_J(n: int) -> np.ndarray:
    I = np.eye(n)
    Z = np.zeros((n, n))
    return np.block([[Z, I], [-I, Z]])


def check_symplectic(M) -> float:
    """Frobenius norm of ``M'JM - J``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1] or M.shape[0] % 2:
        raise DimensionError("symplectic check needs a square matrix of even size")
    J = symplectic_J(M.shape[0] // 2)
    return float(np.linalg.norm(M.T @ J @ M - J))


def forward_matrix(b: HamiltonianBlocks) -> np.ndarray:
    """Forward map ``(x, lambda) -> (x+, lambda+)`` by block elimination.

    Raises
    ------
    SingularOperatorError
        When ``H22`` is (numerically) singular; use the pencil instead.
    """
    cond = np.linalg.cond(b.H22)
    if not np.isfinite(cond) or cond > H22_COND_MAX:
        raise SingularOperatorError(
            f"H22 is singular (cond {cond:.3g}): bidirectional-only system; use pencil path"
        )
    W = np.linalg.inv(b.H22)
    return np.block([
        [b.H11 - b.H12 @ W @ b.H21, b.H12 @ W],
        [-W @ b.H21, W],
    ])


@dataclass(frozen=True)
class SymplecticPencil:
    """Pair ``(M, L)`` with ``M v = mu L v`` for the bidirectional dynamics."""

    M: np.ndarray
    L: np.ndarray

    @classmethod
    def from_blocks(cls, b: HamiltonianBlocks) -> "SymplecticPencil":
        n = b.n
        I = np.eye(n)
        Z = np.zeros((n, n))
        return cls(M=np.block([[b.H11, Z], [b.H21, -I]]), L=np.block([[I, -b.H12], [Z, -b.H22]]))


@dataclass(frozen=True)
class PencilSpectrum:
    finite: np.ndarray
    n_infinite: int
    pairing_error: float
    min_unit_circle_distance: float

    @property
    def n_zero(self) -> int:
        return int(np.sum(np.abs(self.finite) < 1e-10))

    @property
    def hyperbolic(self) -> bool:
        return self.min_unit_circle_distance > 1e-6

    @property
    def stable(self) -> np.ndarray:
        return self.finite[np.abs(self.finite) < 1]


def pencil_eigenvalues(p: SymplecticPencil, tol: float = 1e-10) -> PencilSpectrum:
    """Generalized eigenvalues of ``(M, L)`` by QZ.

    Eigenvalues with vanishing ``beta`` are counted as infinite.  Finite
    nonzero eigenvalues are matched against reciprocals; each zero eigenvalue
    is matched with an infinite one.
    """
    alpha, beta = scipy.linalg.eig(p.M, p.L, right=False, homogeneous_eigvals=True)
    scale = max(np.linalg.norm(p.M), np.linalg.norm(p.L), 1.0)
    if np.any((np.abs(alpha) < tol * scale) & (np.abs(beta) < tol * scale)):
        raise SingularOperatorError("pencil is identically singular")
    infinite = np.abs(beta) <= tol * np.abs(alpha)
    mu = alpha[~infinite] / beta[~infinite]
    mu = np.where(np.abs(mu.imag) < 1e-12 * np.maximum(1, np.abs(mu)), mu.real, mu)
    n_inf = int(infinite.sum())
    order = np.argsort(np.abs(mu))
    mu = mu[order]
    return PencilSpectrum(
        finite=mu,
        n_infinite=n_inf,
        pairing_error=_pairing_error(mu, n_inf),
        min_unit_circle_distance=float(np.min(np.abs(np.abs(mu) - 1))) if mu.size else np.inf,
    )


def _pairing_error(mu: np.ndarray, n_inf: int) -> float:
    zero = np.abs(mu) < 1e-10
    if zero.sum() != n_inf:
        return np.inf
    rest = list(mu[~zero])
    worst = 0.0
    while rest:
        a = rest.pop(0)
        if not rest:
            return np.inf
        dist = [abs(a * b - 1) for b in rest]
        k = int(np.argmin(dist))
        worst = max(worst, dist[k])
        rest.pop(k)
    return worst


# --------------------------------------------------------------------------
# nonlinear Hamiltonian map
# --------------------------------------------------------------------------
class HamiltonianSystem:
    """Nonlinear Hamiltonian ``H(x, u, p) = p.f(x, u) + l(x, u)`` of a discrete problem.

    Variables of the internal series are ordered ``(x, u, p)`` with ``p``
    the next-step costate.
    """

    def __init__(self, problem: ControlProblem, order: int | None = None):
        n, m = problem.n, problem.m
        self.problem = problem
        self.n, self.m = n, m
        deg = order if order is not None else max(problem.f.max_degree or 1, (problem.l.max_degree or 2) - 1) + 1
        self.order = deg
        nv = 2 * n + m
        f = embed(problem.f.with_order(deg), nv, list(range(n + m)))
        l = embed(problem.l.with_order(deg), nv, list(range(n + m)))
        p = PolySeries.linear(np.hstack([np.zeros((n, n + m)), np.eye(n)]), deg)
        self.H = dot(p, f, deg) + l
        self.f = f
        dH = grad(self.H)
        self.H_x = dH[list(range(n))]
        self.H_u = dH[list(range(n, n + m))]
        self.H_p = dH[list(range(n + m, nv))]
        # Jacobians of the equations (H_x - lam, H_u) with respect to (p, u), and of (x+) etc.
        self._dHx = [diff(self.H_x, j) for j in range(nv)]
        self._dHu = [diff(self.H_u, j) for j in range(nv)]
        self.blocks = HamiltonianBlocks.from_lqr(problem.lqr)

    def _equations(self, x, lam, p, u):
        z = np.concatenate([x, u, p])
        return np.concatenate([self.H_x(z) - lam, self.H_u(z)]), z

    def _jac(self, z, wrt):
        rows_x = np.column_stack([self._dHx[j](z) for j in wrt])
        rows_u = np.column_stack([self._dHu[j](z) for j in wrt])
        return np.vstack([rows_x, rows_u])

    def step(self, x, lam, *, tol: float = 1e-12, max_iter: int = 50, return_jacobian: bool = False):
        """Solve the implicit forward step by damped Newton.

        Returns ``(x_plus, lam_plus)`` and, on request, the Jacobian of the
        map ``(x, lam) -> (x_plus, lam_plus)`` by the implicit function theorem.
        """
        n, m = self.n, self.m
        x = np.atleast_1d(np.asarray(x, dtype=float))
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        if x.shape != (n,) or lam.shape != (n,):
            raise DimensionError("state and costate must have length n")
        try:
            HF = forward_matrix(self.blocks)
            p = (HF @ np.concatenate([x, lam]))[n:]
        except SingularOperatorError:
            p = np.zeros(n)
        Rinv = np.linalg.inv(self.problem.lqr.R)
        lqr = self.problem.lqr
        u = -Rinv @ (lqr.B.T @ p + lqr.S.T @ x)
        w_idx = list(range(n + m, 2 * n + m)) + list(range(n, n + m))
        scale = max(np.abs(x).max(), np.abs(lam).max(), 1e-300)
        F, z = self._equations(x, lam, p, u)
        res = np.linalg.norm(F)
        for _ in range(max_iter):
            if res <= 1e-15 * scale:
                break
            Jw = self._jac(z, w_idx)
            try:
                delta = np.linalg.solve(Jw, -F)
            except np.linalg.LinAlgError as exc:
                raise SingularOperatorError("singular costate Jacobian in forward step") from exc
            t = 1.0
            while True:
                p_new, u_new = p + t * delta[:n], u + t * delta[n:]
                F_new, z_new = self._equations(x, lam, p_new, u_new)
                res_new = np.linalg.norm(F_new)
                if res_new < res or t < 1e-6:
                    break
                t *= 0.5
            if res_new >= res:
                break
            p, u, F, z, res = p_new, u_new, F_new, z_new, res_new
        if res > tol * max(1.0, scale):
            raise ConvergenceError(f"forward step Newton stalled at residual {res:.3e}")
        x_plus = self.problem.f(np.concatenate([x, u]))
        if not return_jacobian:
            return x_plus, p
        # implicit differentiation: F(x, lam, w) = 0
        Jw = self._jac(z, w_idx)
        Jx = self._jac(z, list(range(n)))
        Jlam = np.vstack([-np.eye(n), np.zeros((m, n))])
        dw = -np.linalg.solve(Jw, np.hstack([Jx, Jlam]))  # (n+m) x 2n
        dp, du = dw[:n], dw[n:]
        fx = np.column_stack([diff(self.problem.f, j)(np.concatenate([x, u])) for j in range(n + m)])
        dxplus = fx[:, :n] @ np.hstack([np.eye(n), np.zeros((n, n))]) + fx[:, n:] @ du
        return x_plus, p, np.vstack([dxplus, dp])

    def forward_series(self, order: int) -> PolySeries:
        """The forward map ``(x, lam) -> (x+, lam+)`` as a series through ``order``.

        Each Picard sweep against the linearized equations fixes one more degree.
        """
        n, m = self.n, self.m
        nv = 2 * n + m
        lqr = self.problem.lqr
        J0 = np.block([[lqr.A.T, lqr.S], [lqr.B.T, lqr.R]])
        try:
            J0inv = np.linalg.inv(J0)
        except np.linalg.LinAlgError as exc:
            raise SingularOperatorError("forward map does not exist (H22 singular)") from exc
        x_sel = PolySeries.linear(np.hstack([np.eye(n), np.zeros((n, n))]), order)
        lam_sel = PolySeries.linear(np.hstack([np.zeros((n, n)), np.eye(n)]), order)
        w = PolySeries.zeros(2 * n, n + m, order)
        Hx = self.H_x.with_order(order)
        Hu = self.H_u.with_order(order)
        for _ in range(order + 1):
            inner = PolySeries.stack([x_sel, w[list(range(n, n + m))], w[list(range(n))]])
            F = PolySeries.stack([compose(Hx, inner, order) - lam_sel, compose(Hu, inner, order)])
            w = w - F.matmul_left(J0inv)
        u_s = w[list(range(n, n + m))]
        p_s = w[list(range(n))]
        xplus = compose(self.problem.f.with_order(order), PolySeries.stack([x_sel, u_s]), order)
        return PolySeries.stack([xplus, p_s])


def forward_step(system, x, lam, **kwargs):
    """One forward step of the Hamiltonian dynamics from ``(x, lam)``.

    ``system`` is a :class:`HamiltonianSystem` (nonlinear, Newton solve) or
    :class:`HamiltonianBlocks` (linear, direct multiplication).
    """
    if isinstance(system, HamiltonianBlocks):
        HF = forward_matrix(system)
        n = system.n
        out = HF @ np.concatenate([np.atleast_1d(x), np.atleast_1d(lam)])
        return out[:n], out[n:]
    if isinstance(system, ControlProblem):
        system = HamiltonianSystem(system)
    return system.step(x, lam, **kwargs)


# --------------------------------------------------------------------------
# stable manifold
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class StableManifoldSeries:
    """Graph ``lambda = phi(x)`` of the stable manifold (degrees 1..r-1)."""

    phi: PolySeries
    phi_z: PolySeries | None = None
    P: np.ndarray | None = None

    def __call__(self, x):
        return self.phi(x)


def stable_manifold_from_series(sol: SeriesSolution) -> StableManifoldSeries:
    """The stable manifold as the gradient of the series cost."""
    return StableManifoldSeries(phi=grad(sol.pi), P=sol.P)


@dataclass(frozen=True)
class InvarianceResult:
    slope: float
    epsilons: np.ndarray
    defects: np.ndarray


def invariance_check(
    manifold: StableManifoldSeries,
    problem: ControlProblem,
    epsilons=(10**-1, 10**-1.5, 10**-2, 10**-2.5),
    *,
    directions=None,
    system: HamiltonianSystem | None = None,
    floor: float = 1e-14,
) -> InvarianceResult:
    """Defect ``|lam+ - phi(x+)|`` of one forward step started on the graph.

    The log-log slope of the defect against ``|x|`` is returned (``inf`` when
    every defect sits below ``floor``, i.e. the graph is exactly invariant).
    """
    system = system or HamiltonianSystem(problem)
    n = problem.n
    if directions is None:
        rng = np.random.default_rng(12345)
        directions = np.vstack([np.eye(n), -np.eye(n), rng.normal(size=(2, n))])
    directions = np.atleast_2d(directions)
    directions = directions / np.linalg.norm(directions, axis=1, keepdims=True)
    eps_used, defects = [], []
    for eps in epsilons:
        e = float(eps)
        for _ in range(4):
            try:
                worst = 0.0
                for dvec in directions:
                    x = e * dvec
                    xp, lp = system.step(x, manifold.phi(x))
                    worst = max(worst, float(np.linalg.norm(lp - manifold.phi(xp))))
                break
            except (ConvergenceError, SingularOperatorError):
                e *= 0.5
        else:
            raise ConvergenceError(f"forward step failed near scale {eps}")
        eps_used.append(e)
        defects.append(worst)
    eps_used = np.array(eps_used)
    defects = np.array(defects)
    mask = defects > floor
    if mask.sum() < 2:
        slope = np.inf
    else:
        slope = float(np.polyfit(np.log(eps_used[mask]), np.log(defects[mask]), 1)[0])
    return InvarianceResult(slope=slope, epsilons=eps_used, defects=defects)


@dataclass(frozen=True)
class PhiTaylorResult:
    """Stable manifold ``z_u = phi_z(z_s)`` in block-diagonal coordinates.

    ``V`` maps ``(z_s, z_u)`` back to ``(x, lambda)``; ``A_s``/``A_u`` are the
    stable and unstable diagonal blocks.
    """

    phi_z: PolySeries
    V: np.ndarray
    A_s: np.ndarray
    A_u: np.ndarray
    separation: float
    order: int

    def to_xlambda(self) -> PolySeries:
        """Re-express the manifold as ``lambda = phi(x)`` through degree ``order``."""
        n = self.A_s.shape[0]
        r = self.order
        Vxs, Vxu = self.V[:n, :n], self.V[:n, n:]
        Vls, Vlu = self.V[n:, :n], self.V[n:, n:]
        Vxs_inv = np.linalg.inv(Vxs)
        ident = PolySeries.identity(n, r)
        zs = ident.matmul_left(Vxs_inv)
        for _ in range(r):
            zs = (ident - compose(self.phi_z, zs, r).matmul_left(Vxu)).matmul_left(Vxs_inv)
        return zs.matmul_left(Vls) + compose(self.phi_z, zs, r).matmul_left(Vlu)


def block_diagonalize(HF: np.ndarray, tol: float = 1e-9):
    """Real ordered Schur split plus a Sylvester solve.

    Returns ``V, A_s, A_u, sep`` with ``V^-1 HF V = diag(A_s, A_u)``.
    """
    N = HF.shape[0]
    n = N // 2
    eigs = np.linalg.eigvals(HF)
    dist = np.min(np.abs(np.abs(eigs) - 1))
    if dist <= tol:
        raise NotHyperbolicError(f"eigenvalue within {dist:.2e} of the unit circle")
    T, U, sdim = scipy.linalg.schur(HF, output="real", sort="iuc")
    if sdim != n:
        raise NotHyperbolicError(f"{sdim} stable eigenvalues, expected {n}")
    T11, T12, T22 = T[:n, :n], T[:n, n:], T[n:, n:]
    Y = scipy.linalg.solve_sylvester(T11, -T22, -T12)
    V = U @ np.block([[np.eye(n), Y], [np.zeros((n, n)), np.eye(n)]])
    sep = float(np.linalg.cond(V))
    return V, T11, T22, sep


def manifold_level_solve(A_s, A_u, rhs, d: int) -> np.ndarray:
    """Degree-``d`` coefficients ``Phi`` of ``A_u phi(z) - phi(A_s z) = rhs(z)``.

    ``rhs`` has shape ``(n_u, N_d)`` on the degree-``d`` monomials in ``z``.
    """
    A_s = np.atleast_2d(np.asarray(A_s, dtype=float))
    A_u = np.atleast_2d(np.asarray(A_u, dtype=float))
    rhs = np.atleast_2d(np.asarray(rhs, dtype=float))
    n_u = A_u.shape[0]
    S = linear_substitution_matrix(A_s, d)
    Nd = S.shape[0]
    # A_u Phi - Phi S^T = rhs, column-major vectorization
    lhs = np.kron(np.eye(Nd), A_u) - np.kron(S, np.eye(n_u))
    cond = np.linalg.cond(lhs)
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularOperatorError(f"manifold operator of degree {d} is singular")
    return np.linalg.solve(lhs, rhs.reshape(-1, order="F")).reshape(n_u, Nd, order="F")


def solve_phi_taylor(problem: ControlProblem, r: int, *, system: HamiltonianSystem | None = None) -> PhiTaylorResult:
    """Taylor construction of the stable manifold in block-diagonal coordinates.

    Builds ``phi_z`` degree by degree (``2..r-1``) from the invariance
    equation, each degree a dense Sylvester-type solve on monomial
    coefficients.
    """
    system = system or HamiltonianSystem(problem)
    n = problem.n
    order = r - 1
    G = system.forward_series(order)
    HF = G.part(1)
    V, A_s, A_u, sep = block_diagonalize(HF)
    Vinv = np.linalg.inv(V)
    Gz = compose(G, PolySeries.linear(V, order), order).matmul_left(Vinv)
    phi = PolySeries.zeros(n, n, order)
    ident = PolySeries.identity(n, order)
    for d in range(2, order + 1):
        inner = PolySeries.stack([ident, phi])  # z_s -> (z_s, phi(z_s))
        step = compose(Gz, inner, d)
        zs_next = step[list(range(n))]
        zu_next = step[list(range(n, 2 * n))]
        E = compose(phi, zs_next, d) - zu_next
        Phi = manifold_level_solve(A_s, A_u, E.part(d), d)
        phi = phi + PolySeries(n, n, order, {d: Phi})
    return PhiTaylorResult(phi_z=phi, V=V, A_s=A_s, A_u=A_u, separation=sep, order=order)


def closedness_check(phi: PolySeries, samples) -> float:
    """Max asymmetry ``|d phi_i/d x_j - d phi_j/d x_i|`` over sample points."""
    if phi.n_out != phi.n_vars:
        raise DimensionError("phi must map R^n to R^n")
    X = np.atleast_2d(np.asarray(samples, dtype=float)).reshape(-1, phi.n_vars)
    n = phi.n_vars
    cols = [diff(phi, j)(X) for j in range(n)]  # cols[j][k, i] = d phi_i / d x_j at X[k]
    Jm = np.stack(cols, axis=2)  # (N, i, j)
    return float(np.abs(Jm - np.swapaxes(Jm, 1, 2)).max()) if X.shape[0] else 0.0


def two_form_defect(system: HamiltonianSystem, x, lam, v, w) -> float:
    """``|Omega(Dv, Dw) - Omega(v, w)|`` for the tangent map at ``(x, lam)``."""
    _, _, D = system.step(x, lam, return_jacobian=True)
    J = symplectic_J(system.n)
    return float(abs((D @ v) @ J @ (D @ w) - v @ J @ w))
