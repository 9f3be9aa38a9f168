"""Quadratic-level solves: discrete/continuous algebraic Riccati equations.

The discrete equation is solved by running the time-varying Riccati
recursion backward from a zero terminal weight until it settles, followed
by a few Newton (Hewer) steps to polish the residual.  The continuous one
uses Newton-Kleinman, seeded with the gain of an Euler-discretized copy of
the problem so that the first iterate is already stabilizing.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .exceptions import ConvergenceError, DimensionError, PreconditionError

logger = logging.getLogger(__name__)

DISCRETE = "discrete"
CONTINUOUS = "continuous"


def _as_matrix(M, name: str) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    elif M.ndim == 1:
        M = M.reshape(-1, 1)
    if M.ndim != 2:
        raise DimensionError(f"{name} must be a matrix")
    return M


@dataclass(frozen=True)
class LqrData:
    """Linear dynamics and quadratic cost ``1/2 x'Qx + x'Su + 1/2 u'Ru``."""

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    S: np.ndarray | None = None

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        n = A.shape[0]
        B = _as_matrix(self.B, "B")
        if B.shape[0] != n and B.size == n:
            B = B.reshape(n, -1)
        m = B.shape[1]
        Q = _as_matrix(self.Q, "Q")
        R = _as_matrix(self.R, "R")
        S = np.zeros((n, m)) if self.S is None else _as_matrix(self.S, "S").reshape(n, m)
        if A.shape != (n, n) or B.shape[0] != n or Q.shape != (n, n) or R.shape != (m, m):
            raise DimensionError(
                f"inconsistent shapes A{A.shape} B{B.shape} Q{Q.shape} R{R.shape} S{S.shape}"
            )
        for name, val in (("A", A), ("B", B), ("Q", Q), ("R", R), ("S", S)):
            val = val.copy()
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def check_cost(self, tol: float = 1e-12) -> None:
        """Raise unless R is symmetric PD and the joint cost matrix is PSD."""
        if not np.allclose(self.R, self.R.T, atol=tol * (1 + np.abs(self.R).max())):
            raise PreconditionError("R is not symmetric")
        if not np.allclose(self.Q, self.Q.T, atol=tol * (1 + np.abs(self.Q).max())):
            raise PreconditionError("Q is not symmetric")
        r_eigs = np.linalg.eigvalsh(self.R)
        if r_eigs.min() <= 0:
            raise PreconditionError(f"R is not positive definite: eigenvalue {r_eigs.min():.6g}")
        W = np.block([[self.Q, self.S], [self.S.T, self.R]])
        w = np.linalg.eigvalsh(0.5 * (W + W.T))
        if w.min() < -1e-10 * max(1.0, np.abs(w).max()):
            raise PreconditionError(f"[[Q, S], [S', R]] is not PSD: eigenvalue {w.min():.6g}")


@dataclass(frozen=True)
class RiccatiSolution:
    P: np.ndarray
    K: np.ndarray
    mode: str
    residual_norm: float
    iterations: int = 0
    closed_loop_eigs: np.ndarray = field(default=None, repr=False)

    @property
    def closed_loop_radius(self) -> float:
        return float(np.abs(self.closed_loop_eigs).max()) if self.closed_loop_eigs.size else 0.0

    @property
    def closed_loop_abscissa(self) -> float:
        return float(self.closed_loop_eigs.real.max()) if self.closed_loop_eigs.size else -np.inf


def spectral_radius(M) -> float:
    """Largest eigenvalue modulus of a square matrix."""
    M = _square(M)
    if M.size == 0:
        return 0.0
    return float(np.abs(np.linalg.eigvals(M)).max())


def spectral_abscissa(M) -> float:
    """Largest real part among the eigenvalues of a square matrix."""
    M = _square(M)
    if M.size == 0:
        return -np.inf
    return float(np.linalg.eigvals(M).real.max())


def _square(M) -> np.ndarray:
    M = _as_matrix(M, "M")
    if M.shape[0] != M.shape[1]:
        raise DimensionError("matrix must be square")
    return M


def _rank(M: np.ndarray, tol_rel: float = 1e-9) -> int:
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    scale = max(np.linalg.norm(M, 2), 1e-300)
    return int(np.sum(s > tol_rel * scale))


def is_controllable(A, B, tol_rank: float = 1e-9) -> tuple[bool, int]:
    """Rank test on ``[B, AB, ..., A^{n-1} B]`` by column-pivoted QR.

    Returns
    -------
    controllable : bool
    rank : int
    """
    A = _square(A)
    n = A.shape[0]
    B = _as_matrix(B, "B")
    if B.shape[0] != n:
        raise DimensionError(f"B has {B.shape[0]} rows, expected {n}")
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    C = np.hstack(blocks)
    _, Rq, _ = scipy.linalg.qr(C, pivoting=True, mode="economic")
    d = np.abs(np.diag(Rq))
    scale = max(np.linalg.norm(C), 1e-300)
    rank = int(np.sum(d > tol_rank * scale))
    return rank == n, rank


def _unstable(mu: complex, mode: str) -> bool:
    if mode == DISCRETE:
        return abs(mu) >= 1.0 - 1e-12
    return mu.real >= -1e-12


def is_stabilizable(A, B, mode: str = DISCRETE) -> bool:
    """PBH test: every non-stable eigenvalue of A is controllable."""
    A = _square(A)
    n = A.shape[0]
    B = _as_matrix(B, "B")
    if B.shape[0] != n:
        raise DimensionError(f"B has {B.shape[0]} rows, expected {n}")
    for mu in np.linalg.eigvals(A):
        if _unstable(mu, mode) and _rank(np.hstack([mu * np.eye(n) - A, B])) < n:
            return False
    return True


def is_detectable(A, C, mode: str = DISCRETE) -> bool:
    """PBH test: every non-stable eigenvalue of A is observable through C."""
    A = _square(A)
    n = A.shape[0]
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if C.shape[1] != n:
        raise DimensionError(f"C has {C.shape[1]} columns, expected {n}")
    for mu in np.linalg.eigvals(A):
        if _unstable(mu, mode) and _rank(np.vstack([mu * np.eye(n) - A, C])) < n:
            return False
    return True


def psd_factor(Q) -> np.ndarray:
    """Some ``C`` with ``C'C = Q`` (eigen-decomposition factor)."""
    Q = 0.5 * (Q + Q.T)
    w, V = np.linalg.eigh(Q)
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)).T


def _check_preconditions(d: LqrData, mode: str) -> None:
    d.check_cost()
    if not is_stabilizable(d.A, d.B, mode):
        raise PreconditionError(f"(A, B) is not stabilizable ({mode})")
    # the cross term is removed first: the detectability that matters is of
    # (A - B R^-1 S', (Q - S R^-1 S')^1/2)
    Rinv = np.linalg.inv(d.R)
    A0 = d.A - d.B @ Rinv @ d.S.T
    Q0 = d.Q - d.S @ Rinv @ d.S.T
    if not is_detectable(A0, psd_factor(Q0), mode):
        raise PreconditionError(f"(A, Q^1/2) is not detectable ({mode})")


def dtare_residual(d: LqrData, P) -> np.ndarray:
    G = d.A.T @ P @ d.B + d.S
    return P - d.A.T @ P @ d.A + G @ np.linalg.solve(d.B.T @ P @ d.B + d.R, G.T) - d.Q


def care_residual(d: LqrData, P) -> np.ndarray:
    G = P @ d.B + d.S
    return d.A.T @ P + P @ d.A + d.Q - G @ np.linalg.solve(d.R, G.T)


def _dtare_gain(d: LqrData, P) -> np.ndarray:
    M = d.B.T @ P @ d.B + d.R
    try:
        return -np.linalg.solve(M, (d.A.T @ P @ d.B + d.S).T)
    except np.linalg.LinAlgError as exc:
        raise PreconditionError("B'PB + R is singular") from exc


def tv_riccati(d: LqrData, P_T, steps: int) -> tuple[np.ndarray, np.ndarray]:
    """Backward time-varying Riccati recursion.

    Returns
    -------
    Ps : ndarray, shape (steps + 1, n, n)
        ``Ps[k]`` is the cost-to-go matrix at time ``k``; ``Ps[steps] = P_T``.
    Ks : ndarray, shape (steps, m, n)
        Feedback gains ``u_k = Ks[k] x_k``.
    """
    P = _as_matrix(P_T, "P_T")
    if P.shape != (d.n, d.n):
        raise DimensionError("terminal matrix has the wrong shape")
    if np.linalg.eigvalsh(0.5 * (P + P.T)).min() < -1e-12 * (1 + np.abs(P).max()):
        raise PreconditionError("terminal matrix is not PSD")
    Ps = np.empty((steps + 1, d.n, d.n))
    Ks = np.empty((steps, d.m, d.n))
    Ps[steps] = P
    for k in range(steps - 1, -1, -1):
        K = _dtare_gain(d, P)
        P = d.A.T @ P @ d.A + (d.A.T @ P @ d.B + d.S) @ K + d.Q
        P = 0.5 * (P + P.T)
        Ps[k] = P
        Ks[k] = K
    return Ps, Ks


def _stein_solve(Acl: np.ndarray, W: np.ndarray) -> np.ndarray:
    # P = Acl' P Acl + W via the Kronecker system
    n = Acl.shape[0]
    lhs = np.eye(n * n) - np.kron(Acl.T, Acl.T)
    P = np.linalg.solve(lhs, W.reshape(-1, order="F")).reshape(n, n, order="F")
    return 0.5 * (P + P.T)


def _lyap_solve(Acl: np.ndarray, W: np.ndarray) -> np.ndarray:
    # Acl' P + P Acl + W = 0 via the Kronecker system
    n = Acl.shape[0]
    I = np.eye(n)
    lhs = np.kron(I, Acl.T) + np.kron(Acl.T, I)
    P = np.linalg.solve(lhs, -W.reshape(-1, order="F")).reshape(n, n, order="F")
    return 0.5 * (P + P.T)


def solve_dtare(
    d: LqrData,
    *,
    tol: float = 1e-10,
    max_iter: int = 200_000,
    check: bool = True,
    newton_steps: int = 3,
) -> RiccatiSolution:
    """Stabilizing solution of the discrete-time algebraic Riccati equation.

    Raises
    ------
    PreconditionError
        If the cost is not convex or the data are not stabilizable/detectable.
    ConvergenceError
        If the recursion has not settled after ``max_iter`` steps.
    """
    if check:
        _check_preconditions(d, DISCRETE)
    P = np.zeros((d.n, d.n))
    it = 0
    for it in range(1, max_iter + 1):
        K = _dtare_gain(d, P)
        P_new = d.A.T @ P @ d.A + (d.A.T @ P @ d.B + d.S) @ K + d.Q
        P_new = 0.5 * (P_new + P_new.T)
        delta = np.abs(P_new - P).max()
        P = P_new
        if delta <= 1e-14 * (1.0 + np.abs(P).max()):
            break
    else:
        if np.linalg.norm(dtare_residual(d, P)) > 1e-6 * (1 + np.linalg.norm(P)):
            raise ConvergenceError(f"Riccati recursion did not settle in {max_iter} steps")
    for _ in range(newton_steps):
        res = np.linalg.norm(dtare_residual(d, P))
        if res <= 1e-14 * (1 + np.linalg.norm(P)):
            break
        K = _dtare_gain(d, P)
        Acl = d.A + d.B @ K
        if spectral_radius(Acl) >= 1:
            break
        W = d.Q + d.S @ K + K.T @ d.S.T + K.T @ d.R @ K
        P_try = _stein_solve(Acl, W)
        if np.linalg.norm(dtare_residual(d, P_try)) < res:
            P = P_try
        else:
            break
    K = _dtare_gain(d, P)
    res = float(np.linalg.norm(dtare_residual(d, P)))
    if res > tol * (1 + np.linalg.norm(P)):
        raise ConvergenceError(f"DTARE residual {res:.3e} above tolerance")
    eigs = np.linalg.eigvals(d.A + d.B @ K)
    logger.debug("DTARE solved in %d steps, residual %.3e", it, res)
    return RiccatiSolution(P=P, K=K, mode=DISCRETE, residual_norm=res, iterations=it, closed_loop_eigs=eigs)


def euler_discretize(d: LqrData, h: float) -> LqrData:
    """Explicit Euler copy of continuous data with step ``h`` (cost scaled by ``h``)."""
    return LqrData(np.eye(d.n) + h * d.A, h * d.B, h * d.Q, h * d.R, h * d.S)


def solve_care(
    d: LqrData,
    *,
    tol: float = 1e-10,
    max_iter: int = 100,
    check: bool = True,
    h: float = 1e-2,
) -> RiccatiSolution:
    """Stabilizing solution of the continuous-time algebraic Riccati equation."""
    if check:
        _check_preconditions(d, CONTINUOUS)
    Rinv = np.linalg.inv(d.R)
    if d.n and np.all(d.B == 0) and spectral_abscissa(d.A) < 0:
        K = -Rinv @ d.S.T
    else:
        seed = solve_dtare(euler_discretize(d, h), tol=1e-6, check=False, newton_steps=0)
        K = seed.K
    if d.n and spectral_abscissa(d.A + d.B @ K) >= 0:
        raise ConvergenceError("could not find a stabilizing initial gain")
    P = np.zeros((d.n, d.n))
    it = 0
    res = np.inf
    for it in range(1, max_iter + 1):
        Acl = d.A + d.B @ K
        W = d.Q + d.S @ K + K.T @ d.S.T + K.T @ d.R @ K
        P = _lyap_solve(Acl, W)
        K = -Rinv @ (P @ d.B + d.S).T
        res = float(np.linalg.norm(care_residual(d, P)))
        if res <= 1e-13 * (1 + np.linalg.norm(P)):
            break
    if res > tol * (1 + np.linalg.norm(P)):
        raise ConvergenceError(f"Newton-Kleinman stalled at residual {res:.3e}")
    eigs = np.linalg.eigvals(d.A + d.B @ K)
    return RiccatiSolution(P=P, K=K, mode=CONTINUOUS, residual_norm=res, iterations=it, closed_loop_eigs=eigs)


def solve_lqr(d: LqrData, mode: str, **kwargs) -> RiccatiSolution:
    if mode == DISCRETE:
        return solve_dtare(d, **kwargs)
    if mode == CONTINUOUS:
        return solve_care(d, **kwargs)
    raise ValueError(f"unknown mode {mode!r}")
