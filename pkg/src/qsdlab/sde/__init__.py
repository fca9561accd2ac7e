"""Monte Carlo engine: path simulation, extinction times, exit events,
Fleming-Viot QSD estimation and the multiscale check.

The hot loops run in a compiled extension when it is available and in
numpy otherwise (see :data:`BACKEND`); both consume identical random
streams and return identical results.
"""

from ._backend import BACKEND
from .engine import (ABSORBED, CensoringWarning, ContrastResult, ExitStats, ExtinctionSample,
                     MultiscaleReport, ParticleSystem, SimConfig, boundary_layer, demographic_only_contrast,
                     empirical_qsd_fv, exit_event_stats, fv_bin_masses, histogram, multiscale_tv_check,
                     normalized_extinction_test, path_bitgens, sample_extinction_times, sample_states, step,
                     tail_rate_estimate, tv_distance, tv_edges)

__all__ = [
    "ABSORBED", "BACKEND", "CensoringWarning", "ContrastResult", "ExitStats", "ExtinctionSample",
    "MultiscaleReport", "ParticleSystem", "SimConfig", "boundary_layer", "demographic_only_contrast",
    "empirical_qsd_fv", "exit_event_stats", "fv_bin_masses", "histogram", "multiscale_tv_check",
    "normalized_extinction_test", "path_bitgens", "sample_extinction_times", "sample_states", "step", "tail_rate_estimate",
    "tv_distance", "tv_edges",
]
