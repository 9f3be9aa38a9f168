"""Estimator-style wrappers around the series and patching solvers.

``fit`` takes a problem instead of training data; ``predict`` returns the
feedback ``kappa(X)`` and ``cost`` the optimal cost ``pi(X)``.  Parameters
follow the usual ``get_params``/``set_params`` protocol.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .albrecht import hjb_residual, solve_hjb_series
from .dpe import dpe_residual, solve_dpe_series
from .exceptions import DimensionError
from .lyapunov import DEFAULT_EPS, largest_sublevel
from .patch import AffineProblem1D, march
from .problem import ControlProblem
from .riccati import CONTINUOUS, DISCRETE


def _check_states(X, n):
    X = check_array(np.asarray(X, dtype=float).reshape(-1, n) if np.ndim(X) <= 1 else X,
                    ensure_2d=True, dtype=float)
    if X.shape[1] != n:
        raise DimensionError(f"expected {n} state columns, got {X.shape[1]}")
    return X


class SeriesController(BaseEstimator):
    """Power-series optimal cost and feedback about the origin.

    Parameters
    ----------
    degree : int
        Truncation degree ``r`` of the cost; the feedback goes to ``r - 1``.
    mode : {"auto", "discrete", "continuous"}
        ``"auto"`` takes the mode from the problem.
    check : bool
        Run the stabilizability/detectability checks before the Riccati solve.
    """

    def __init__(self, degree=4, mode="auto", check=True):
        self.degree = degree
        self.mode = mode
        self.check = check

    def fit(self, problem: ControlProblem, y=None):
        if not isinstance(problem, ControlProblem):
            raise TypeError("fit expects a ControlProblem")
        if self.mode not in ("auto", problem.mode):
            raise ValueError(f"estimator mode {self.mode!r} does not match the problem ({problem.mode!r})")
        if problem.mode == DISCRETE:
            sol = solve_dpe_series(problem, self.degree, check=self.check)
        else:
            sol = solve_hjb_series(problem, self.degree, check=self.check)
        self.problem_ = problem
        self.solution_ = sol
        self.P_ = sol.P
        self.K_ = sol.K
        self.pi_ = sol.pi
        self.kappa_ = sol.kappa
        self.n_features_in_ = problem.n
        return self

    def predict(self, X):
        """Feedback ``kappa(X)``, shape ``(N, m)``."""
        check_is_fitted(self, "solution_")
        return self.solution_.feedback(_check_states(X, self.n_features_in_))

    def cost(self, X):
        """Optimal cost approximation ``pi(X)``, shape ``(N,)``."""
        check_is_fitted(self, "solution_")
        return self.solution_.cost(_check_states(X, self.n_features_in_))

    def residual(self, X=None):
        """Coefficient residuals (no ``X``) or max pointwise HJB residuals at ``X``."""
        check_is_fitted(self, "solution_")
        if X is None:
            if self.problem_.mode == DISCRETE:
                return dpe_residual(self.solution_, self.problem_)
            from .albrecht import hjb_series_residual
            return hjb_series_residual(self.solution_, self.problem_)
        if self.problem_.mode != CONTINUOUS:
            raise ValueError("pointwise residuals are available for continuous problems")
        return hjb_residual(self.solution_, self.problem_, _check_states(X, self.n_features_in_))

    def score(self, X, y=None):
        """Negative max |HJB residual| on ``X`` (continuous) for model comparison."""
        return -self.residual(X)[0]

    def validate(self, box, mesh=256, eps1=DEFAULT_EPS, eps2=DEFAULT_EPS):
        """Largest validated sublevel set, see :func:`hjbseries.lyapunov.largest_sublevel`."""
        check_is_fitted(self, "solution_")
        return largest_sublevel(self.pi_, self.kappa_, self.problem_, eps1, eps2, box=box, mesh=mesh)


class PatchedController1D(BaseEstimator):
    """Series at the origin extended by Taylor patches along one or both directions."""

    def __init__(self, degree=3, eps1=DEFAULT_EPS, eps2=DEFAULT_EPS, mesh=256,
                 direction="both", max_patches=6):
        self.degree = degree
        self.eps1 = eps1
        self.eps2 = eps2
        self.mesh = mesh
        self.direction = direction
        self.max_patches = max_patches

    def fit(self, problem: AffineProblem1D, y=None):
        if not isinstance(problem, AffineProblem1D):
            raise TypeError("fit expects an AffineProblem1D")
        dirs = {"both": (1, -1), 1: (1,), -1: (-1,), "+1": (1,), "-1": (-1,)}[self.direction]
        self.problem_ = problem
        self.solutions_ = {s: march(problem, self.degree, self.eps1, self.eps2, self.mesh, s,
                                    self.max_patches) for s in dirs}
        self.n_features_in_ = 1
        return self

    def _evaluate(self, X):
        check_is_fitted(self, "solutions_")
        x = _check_states(X, 1)[:, 0]
        pi = np.full(x.shape, np.nan)
        dpi = np.full(x.shape, np.nan)
        ka = np.full(x.shape, np.nan)
        for s, ps in self.solutions_.items():
            sel = (x * s >= 0)
            if sel.any():
                p, d, k, _ = ps.evaluate(x[sel])
                pi[sel], dpi[sel], ka[sel] = p, d, k
        return pi, dpi, ka

    def predict(self, X):
        return self._evaluate(X)[2].reshape(-1, 1)

    def cost(self, X):
        return self._evaluate(X)[0]

    @property
    def centers_(self):
        check_is_fitted(self, "solutions_")
        return {s: ps.centers for s, ps in self.solutions_.items()}
