"""Local power-series solutions of infinite-horizon optimal control problems."""

__version__ = "0.1.0"

from .albrecht import hjb_residual, solve_hjb_series
from .dpe import SeriesSolution, dpe_residual, solve_dpe_series
from .estimators import PatchedController1D, SeriesController
from .exceptions import HJBSeriesError
from .io import load_problem, save_problem
from .lyapunov import check_point, largest_sublevel
from .patch import AffineProblem1D, march
from .polyalg import PolySeries
from .problem import ControlProblem
from .riccati import CONTINUOUS, DISCRETE, LqrData, solve_care, solve_dtare, solve_lqr

__all__ = [
    "AffineProblem1D", "CONTINUOUS", "ControlProblem", "DISCRETE", "HJBSeriesError", "LqrData",
    "PatchedController1D", "PolySeries", "SeriesController", "SeriesSolution", "check_point",
    "dpe_residual", "hjb_residual", "largest_sublevel", "load_problem", "march", "save_problem",
    "solve_care", "solve_dtare", "solve_dpe_series", "solve_hjb_series", "solve_lqr",
]
