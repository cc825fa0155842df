"""Bundled stochastic mesoscopic traffic simulator."""
from .simulator import (
    SimConfig,
    SimResult,
    make_ground_truth,
    path_loss,
    segment_exponents,
    segment_jam_density,
    simulate,
)

__all__ = [
    "SimConfig",
    "SimResult",
    "make_ground_truth",
    "path_loss",
    "segment_exponents",
    "segment_jam_density",
    "simulate",
]
