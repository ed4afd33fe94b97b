import math

import numpy as np
import pytest

from gemsim.engine import (BeamPulse, BeamSchedule, GradientSchedule, MediumParams, ProbePulse,
                           Protocol)
from gemsim.units import GridConfig, hz_to_rad_per_us, make_grid

# Lines collected by the acceptance module, echoed once at the end of the session.
ACCEPTANCE_LINES: list[str] = []

RABI = hz_to_rad_per_us(50e6)


def pixel_grid(nx=1, ny=1, nz=256, dt=0.0125, t_max=8.0, width=12.0, height=4.0):
    return make_grid(GridConfig(nx=nx, ny=ny, nz=nz, dx=width / nx, dy=height / ny,
                                dz=200.0 / nz, dt=dt, t_max=t_max))


def pixel_protocol(ratio=0.5, gamma0=0.0, D=0.0, flips=(4.25,), t_max=8.0, write=(0.0, 4.0),
                   read=(4.25, 8.0), read_rabi=RABI, amplitude=1.0, grid=None, read_mask=None,
                   erasers=(), workers=1, probe_mask=None, probe_window=(-math.inf, math.inf)):
    """Single-write single-read protocol; one pixel unless ``grid`` says otherwise."""
    grid = grid or pixel_grid(t_max=t_max)
    grad = GradientSchedule.from_broadening(1e6, grid.cell_length, flips)
    medium = MediumParams.from_coupling(ratio * grad.eta0, RABI, gamma0=gamma0, D=D)
    ones = np.ones(grid.shape2d)
    pulses = [BeamPulse(ones, RABI, *write, kind="write")]
    if read is not None:
        pulses.append(BeamPulse(ones if read_mask is None else read_mask, read_rabi, *read, kind="read"))
    probe = ProbePulse(ones if probe_mask is None else probe_mask, amplitude=amplitude, center=2.0,
                       width=2.0, t_on=probe_window[0], t_off=probe_window[1])
    return Protocol(grid=grid, medium=medium, gradient=grad, beams=BeamSchedule(pulses, list(erasers)),
                    probe=probe, workers=workers)


def gem_efficiency_theory(ratio: float) -> float:
    """Forward-retrieval GEM efficiency for a uniform line and equal write/read coupling."""
    return (1.0 - math.exp(-2.0 * math.pi * ratio)) ** 2


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
