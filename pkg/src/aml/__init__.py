"""Approximate maximum likelihood estimation for simulation models.

Simultaneous-perturbation gradient ascent on a kernel density estimate of the
likelihood of observed summary statistics.
"""

from .estimator import (
    ExactObjective,
    MultiStartResult,
    RunConfig,
    RunTrajectory,
    SimulatedLikelihood,
    estimate_log_likelihood,
    make_objective,
    multi_start_estimate,
    run_aml,
    screen_starting_points,
)
from .kde import KdeConfig, LikelihoodEstimate
from .models import Mg1Model, NormalModel, UniformPrior
from .spsa import GainSchedule, ParameterSpace
from .tuning import TuningConfig

__version__ = "0.1.0"
