"""Store and recall a Gaussian pulse in one transverse pixel.

Sweeps the optical-depth-to-gradient ratio and prints the simulated
recall efficiency next to the closed form (1 - exp(-2 pi r))^2.
"""

import math

import numpy as np

from gemsim import (BeamPulse, BeamSchedule, GradientSchedule, GridConfig, MediumParams, ProbePulse,
                    Protocol, make_grid, run_protocol)
from gemsim.analysis import retrieval_efficiency
from gemsim.units import hz_to_rad_per_us

RABI = hz_to_rad_per_us(50e6)


def efficiency(ratio: float) -> float:
    grid = make_grid(GridConfig(nx=1, ny=1, nz=256, dx=12.0, dy=4.0, dz=200.0 / 256,
                                dt=0.0125, t_max=8.0))
    grad = GradientSchedule.from_broadening(1e6, grid.cell_length, (4.25,))
    medium = MediumParams.from_coupling(ratio * grad.eta0, RABI)
    ones = np.ones(grid.shape2d)
    beams = BeamSchedule([BeamPulse(ones, RABI, 0.0, 4.0, "write"),
                          BeamPulse(ones, RABI, 4.25, 8.0, "read")])
    probe = ProbePulse(ones, center=2.0, width=2.0, t_on=0.0, t_off=4.0)
    return retrieval_efficiency(run_protocol(Protocol(grid, medium, grad, beams, probe)))


if __name__ == "__main__":
    print(" ratio  simulated  closed form")
    for r in (0.1, 0.25, 0.5, 0.75):
        print(f"{r:6.2f}  {efficiency(r):9.4f}  {(1 - math.exp(-2 * math.pi * r)) ** 2:11.4f}")
