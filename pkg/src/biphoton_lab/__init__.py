"""Numerical laboratory for transmitting biphoton images through scattering media."""
from .biphoton import (ObjectImage, OpticalConfig, SPDCParams, TwoPhotonMixed, TwoPhotonPure, digit_eight,
                       guide_state, input_plane_state)
from .correlate import CorrelationImage, fidelity_ncc, g2_from_pure, peak_metrics, project_diff, project_sum
from .events import EventList, pair_coincidences, synthesize_events
from .experiment import DeskSetup, build_desk
from .lattice import ComplexField, Grid, make_grid, sum_coordinate_map
from .media import (PhaseMask, ScatteringMatrix, SpeckleSpec, fourier_lens, is_trivial, pcp_solution,
                    sign_solution, thick_medium, thin_medium)
from .propagate import G2Matrix, classical, two_photon
from .shapeopt import OptConfig, optimize, solution_distance
from .tmatrix import measure_tm

__version__ = "0.1.0"

__all__ = [
    "ObjectImage", "OpticalConfig", "SPDCParams", "TwoPhotonMixed", "TwoPhotonPure", "digit_eight",
    "guide_state", "input_plane_state", "CorrelationImage", "fidelity_ncc", "g2_from_pure", "peak_metrics",
    "project_diff", "project_sum", "EventList", "pair_coincidences", "synthesize_events", "DeskSetup",
    "build_desk", "ComplexField", "Grid", "make_grid", "sum_coordinate_map", "PhaseMask", "ScatteringMatrix",
    "SpeckleSpec", "fourier_lens", "is_trivial", "pcp_solution", "sign_solution", "thick_medium",
    "thin_medium", "G2Matrix", "classical", "two_photon", "OptConfig", "optimize", "solution_distance",
    "measure_tm",
]
