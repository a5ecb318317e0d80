"""Robust integral MPC synthesis and simulation for PWA friction plants."""

__version__ = "0.1.0"

from .augment import AugmentedModel, augment
from .baseline import PidController
from .mpc import (ControlDecision, ExplicitController, MpcConfig, MpcController,
                  apply_deadband, export_explicit, solve_mpc)
from .plant import (ConstraintSet, LinearDynamics, NonlinearFrictionPlant,
                    PwaModel, assumed_model, identified_model,
                    identify_static_friction, nonlinear_model, region_of,
                    step_nonlinear, step_pwa)
from .polytope import Polyhedron
from .sim import Metrics, Scenario, SimTrace, measure, run
from .synthesis import TerminalDesign, design_controller

__all__ = [
    "AugmentedModel", "augment", "PidController", "ControlDecision",
    "ExplicitController", "MpcConfig", "MpcController", "apply_deadband",
    "export_explicit", "solve_mpc", "ConstraintSet", "LinearDynamics",
    "NonlinearFrictionPlant", "PwaModel", "assumed_model", "identified_model",
    "identify_static_friction", "nonlinear_model", "region_of",
    "step_nonlinear", "step_pwa", "Polyhedron", "Metrics", "Scenario",
    "SimTrace", "measure", "run", "TerminalDesign", "design_controller",
]
