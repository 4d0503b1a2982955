"""Real-space time-dependent Kohn-Sham propagation with smoothed quantum corrections."""

from .fields import GridSpec, OrbitalSet, density
from .potentials import (ExternalPotentialSpec, HistorySpec, IonSpec, LdaSpec, PotentialStack,
                         StackEvaluator)
from .propagator import StepperConfig, Trajectory, cn_step, propagate, run
from .scenario import Scenario, load_scenario, save_scenario

__version__ = "0.1.0"

__all__ = [
    "GridSpec", "OrbitalSet", "density",
    "ExternalPotentialSpec", "HistorySpec", "IonSpec", "LdaSpec", "PotentialStack", "StackEvaluator",
    "StepperConfig", "Trajectory", "cn_step", "propagate", "run",
    "Scenario", "load_scenario", "save_scenario",
]
