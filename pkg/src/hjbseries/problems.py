"""Reference problems with known solutions, used by tests and the CLI."""
from __future__ import annotations

import numpy as np

from .problem import ControlProblem
from .riccati import CONTINUOUS, DISCRETE


def log1p_squared_coeffs(order: int) -> np.ndarray:
    """Taylor coefficients ``c_0..c_order`` of ``ln(1+x)^2`` at 0."""
    k = np.arange(1, order + 1)
    ln = np.concatenate([[0.0], (-1.0) ** (k + 1) / k])
    return np.convolve(ln, ln)[: order + 1]


def log_cost(order: int = 6) -> ControlProblem:
    """``x' = xu + u``, running cost ``ln(1+x)^2 + u^2``.

    Optimal cost ``ln(1+x)^2`` and feedback ``-ln(1+x)`` on ``x > -1``.
    The cost series is kept through ``order``; residual checks use the
    exact functions.
    """
    c = log1p_squared_coeffs(order)
    l_terms = [(0, (d, 0), float(c[d])) for d in range(2, order + 1)]
    l_terms.append((0, (0, 2), 1.0))
    f_terms = [(0, (1, 1), 1.0), (0, (0, 1), 1.0)]
    return ControlProblem.from_terms(
        CONTINUOUS, 1, 1, f_terms, l_terms, f_order=order, l_order=order, name="log_cost",
        f_exact=lambda X, U: X * U + U,
        l_exact=lambda X, U: np.log1p(X[:, 0]) ** 2 + U[:, 0] ** 2,
    )


def log_cost_exact_pi(x):
    return np.log1p(np.asarray(x, dtype=float)) ** 2


def log_cost_exact_grad(x):
    x = np.asarray(x, dtype=float)
    return 2.0 * np.log1p(x) / (1.0 + x)


def log_cost_exact_kappa(x):
    return -np.log1p(np.asarray(x, dtype=float))


def discrete_exact() -> ControlProblem:
    """``x+ = u`` with cost ``x^2/2 + x^3 + u^2/2``; ``pi = x^2/2 + x^3`` and ``kappa = 0``."""
    return ControlProblem.from_terms(
        DISCRETE, 1, 1, [(0, (0, 1), 1.0)],
        [(0, (2, 0), 0.5), (0, (3, 0), 1.0), (0, (0, 2), 0.5)],
        name="discrete-exact",
    )


def scalar_lq(a=1.0, b=1.0, q=1.0, r=1.0, mode=DISCRETE) -> ControlProblem:
    f = [(0, (1, 0), a), (0, (0, 1), b)]
    l = [(0, (2, 0), 0.5 * q), (0, (0, 2), 0.5 * r)]
    return ControlProblem.from_terms(mode, 1, 1, f, l, name="scalar-lq")
