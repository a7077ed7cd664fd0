"""Safe kinodynamic RRT* with LQR steering, barrier-function step checks and
cross-entropy importance sampling."""
from .cbf import CbfParams, ObstacleSpec, check_constraints, zeta
from .dynamics import DoubleIntegrator, Trajectory, Unicycle, make_model
from .lqr import CostWeights, GainCache, LinearModel, NonConvergent, solve_care
from .planner import InfeasibleStart, PlannerConfig, PlanResult, Planner, audit_tree, plan
from .sampler import AdaptiveSampler, DegenerateElitesWarning, SamplerConfig
from .steering import EmptyExtension, SteerConfig, SteerDeps, lqr_cbf_steer

__version__ = "0.1.0"

__all__ = [
    "AdaptiveSampler", "CbfParams", "CostWeights", "DegenerateElitesWarning", "DoubleIntegrator",
    "EmptyExtension", "GainCache", "InfeasibleStart", "LinearModel", "NonConvergent", "ObstacleSpec",
    "PlanResult", "Planner", "PlannerConfig", "SamplerConfig", "SteerConfig", "SteerDeps", "Trajectory",
    "Unicycle", "audit_tree", "check_constraints", "lqr_cbf_steer", "make_model", "plan", "solve_care", "zeta",
]
