"""Integral-Chebyshev-collocation MPC with a dense active-set QP solver."""

from .chebyshev import ChebyshevBasis, TimeMap, icc_propagate
from .qp import QpProblem, QpResult, WarmStart, solve_lp, solve_qp
from .transcription import AxisSpec, Mpc3Controller, TranscriptionSpec, build_qp
from .baseline import DiscreteMpcController, DiscreteMpcSpec
from .collision import Polytope, scaling_factor
from .config import ScenarioConfig, load_config
from .simulation import run_docking, run_monte_carlo

__all__ = [
    "ChebyshevBasis", "TimeMap", "icc_propagate",
    "QpProblem", "QpResult", "WarmStart", "solve_lp", "solve_qp",
    "AxisSpec", "Mpc3Controller", "TranscriptionSpec", "build_qp",
    "DiscreteMpcController", "DiscreteMpcSpec",
    "Polytope", "scaling_factor",
    "ScenarioConfig", "load_config",
    "run_docking", "run_monte_carlo",
]
