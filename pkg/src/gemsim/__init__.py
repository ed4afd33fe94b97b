"""Simulation toolkit for spatially multiplexed gradient echo memory.

Core pieces: :mod:`units` (grid and constants), :mod:`engine` (the
Maxwell-Bloch time stepper), :mod:`optics` (masks, diffusion, eraser),
:mod:`analysis` (visibility and channel density) and :mod:`scenario`
(config files, presets and run outputs).
"""

from .analysis import (ChannelGeometry, UndefinedVisibility, brute_force_visibility, buffer_width,
                       channel_density, erf, erf_inv, visibility, visibility_approx)
from .engine import (BeamPulse, BeamSchedule, EngineState, GradientSchedule, MediumParams,
                     NumericalError, ProbePulse, Protocol, RunResult, multi_flip_schedule,
                     outlet_field, run_protocol, solve_field_slice, stability_dt, step_spinwave)
from .optics import (DomainError, EraserPulse, calibrate_eraser, diffuse, discrete_gaussian_kernel,
                     make_resolution_target, make_zone_masks, rectangle_mask, scattering_rate)
from .pgm import PGMError, load_mask, read_pgm, save_frame, write_pgm
from .scenario import ConfigError, load_config, load_preset, run_scenario
from .units import (D_VAPOR, DELTA_E, DELTA_W, GAMMA, GridConfig, GridError, SimulationGrid,
                    make_grid)

__version__ = "0.1.0"
