"""Multi-resource fair sharing: DRF, proportional and alpha-fair allocation in static and dynamic settings."""

__version__ = "0.1.0"

from .alloc import (Allocation, DemandMatrix, SolverParams, alpha_fair_allocate, check_properties,
                    dominant_share, drf_allocate, drf_weights, kkt_residual, maxmin_allocate,
                    normalize_demands, pf_allocate)
from .errors import ConvergenceError, ValidationError
from .traffic import DRF, PF, Policy, SimResult, TrafficClass

__all__ = [
    "Allocation", "DemandMatrix", "SolverParams", "alpha_fair_allocate", "check_properties",
    "dominant_share", "drf_allocate", "drf_weights", "kkt_residual", "maxmin_allocate",
    "normalize_demands", "pf_allocate", "ConvergenceError", "ValidationError",
    "DRF", "PF", "Policy", "SimResult", "TrafficClass",
]
