"""Global stability certificates for polynomial sampled-data systems.

A Lyapunov function ``V`` and a spacing function ``F`` are searched for by
sum-of-squares programming; :mod:`sampcert.stability` is the main entry
point, :mod:`sampcert.simulate` integrates trajectories and evaluates the
certificate along them.
"""

from .expr import SystemDef, parse_system, system_from_dict
from .poly import Polynomial, VarSet
from .simulate import SamplingSchedule, linear_flow_map, linear_max_T, simulate, trace_functionals
from .stability import (ASYNC, SYNC, Certificate, StabilityQuery, certify, max_sampling_period,
                        verify_certificate)

__version__ = "0.1.0"

__all__ = [
    "ASYNC", "SYNC", "Certificate", "Polynomial", "SamplingSchedule", "StabilityQuery",
    "SystemDef", "VarSet", "certify", "linear_flow_map", "linear_max_T", "max_sampling_period",
    "parse_system", "simulate", "system_from_dict", "trace_functionals", "verify_certificate",
]
