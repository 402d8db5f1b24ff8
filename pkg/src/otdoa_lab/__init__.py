"""OTDOA positioning lab for narrowband (NB-IoT) networks.

Simulates sample-rate-limited TOA measurements in a hexagonal 7-cell layout
and compares Gauss-Newton multilateration with a small neural regressor.
"""
from .channel import SPEED_OF_LIGHT, ChannelProfile, MeasurementSet, compute_rstd, measure_toa, named_profile, profile_from_counts
from .geometry import BsLayout, build_layout, distance_diff, sample_ue
from .solver import SolveResult, SolverOptions, solve

__all__ = [
    "SPEED_OF_LIGHT",
    "BsLayout",
    "ChannelProfile",
    "MeasurementSet",
    "SolveResult",
    "SolverOptions",
    "build_layout",
    "compute_rstd",
    "distance_diff",
    "measure_toa",
    "named_profile",
    "profile_from_counts",
    "sample_ue",
    "solve",
]
