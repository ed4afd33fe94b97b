"""Unit system, physical constants, simulation grid and field helpers.

Internal units are microseconds (time), millimetres (length) and rad/us
(angular frequency).  Beam intensities are carried as the dimensionless
saturation ratio I/I_sat.  Conversion to SI-ish laboratory units (s, cm, Hz)
happens only at I/O boundaries through the helpers below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

# Conversion factors: external unit -> internal unit.
US_PER_S = 1e6
MM_PER_CM = 10.0
CM2_PER_S_TO_MM2_PER_US = MM_PER_CM**2 / US_PER_S


def seconds_to_us(t_s):
    return t_s * US_PER_S


def us_to_seconds(t_us):
    return t_us / US_PER_S


def cm_to_mm(x_cm):
    return x_cm * MM_PER_CM


def mm_to_cm(x_mm):
    return x_mm / MM_PER_CM


def hz_to_rad_per_us(f_hz):
    """Ordinary frequency (Hz) to angular frequency (rad/us)."""
    return TWO_PI * f_hz / US_PER_S


def rad_per_us_to_hz(w):
    return w * US_PER_S / TWO_PI


def diffusion_cm2_s_to_mm2_us(d_cm2_s):
    return d_cm2_s * CM2_PER_S_TO_MM2_PER_US


def diffusion_mm2_us_to_cm2_s(d_mm2_us):
    return d_mm2_us / CM2_PER_S_TO_MM2_PER_US


# 85Rb D1 line and default detunings (all rad/us).
GAMMA = hz_to_rad_per_us(5.75e6)
DELTA_W = hz_to_rad_per_us(2.0e9)
DELTA_E = hz_to_rad_per_us(1.5e9)

# Buffer-gas diffusion coefficient of the warm vapour, mm^2/us.
D_VAPOR = diffusion_cm2_s_to_mm2_us(35.0)

CELL_LENGTH_MM = 200.0


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class GridConfig:
    nx: int = 128
    ny: int = 48
    nz: int = 256
    dx: float = 12.0 / 128
    dy: float = 4.0 / 48
    dz: float = CELL_LENGTH_MM / 256
    dt: float = 0.0125
    t_max: float = 8.0
    cell_length: float = CELL_LENGTH_MM
    # Optional upper bound on dt (usually supplied by the engine's stability rule).
    dt_max: float | None = None


@dataclass(frozen=True)
class SimulationGrid:
    """Validated discretisation of the transverse plane, the cell axis and time.

    Spin-wave arrays live on shape ``(nx, ny, nz)`` in C order, so each
    transverse pixel owns a contiguous z-line.  Transverse coordinates are
    centred on the optical axis; z samples sit at cell centres
    ``(k + 1/2) dz`` so that ``nz * dz`` spans the full cell.
    """

    nx: int
    ny: int
    nz: int
    dx: float
    dy: float
    dz: float
    dt: float
    t_max: float

    @property
    def cell_length(self) -> float:
        return self.nz * self.dz

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def shape2d(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.nx) - (self.nx - 1) / 2.0) * self.dx

    @property
    def y(self) -> np.ndarray:
        return (np.arange(self.ny) - (self.ny - 1) / 2.0) * self.dy

    @property
    def z(self) -> np.ndarray:
        return (np.arange(self.nz) + 0.5) * self.dz

    @property
    def width(self) -> float:
        return self.nx * self.dx

    @property
    def height(self) -> float:
        return self.ny * self.dy

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))

    @property
    def cell_volume(self) -> float:
        return self.dx * self.dy * self.dz

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape, dtype=complex)


def make_grid(config: GridConfig) -> SimulationGrid:
    """Validate ``config`` and build a :class:`SimulationGrid`."""
    for name in ("nx", "ny", "nz"):
        if int(getattr(config, name)) < 1:
            raise GridError(f"{name} must be >= 1, got {getattr(config, name)}")
    for name in ("dx", "dy", "dz", "dt", "t_max", "cell_length"):
        value = getattr(config, name)
        if not value > 0 or not math.isfinite(value):
            raise GridError(f"{name} must be a positive finite number, got {value}")
    length = config.nz * config.dz
    if abs(length - config.cell_length) > 1e-9 * config.cell_length:
        raise GridError(
            f"nz*dz = {length} mm does not match the cell length {config.cell_length} mm"
        )
    if config.dt_max is not None and config.dt > config.dt_max * (1 + 1e-12):
        raise GridError(f"dt = {config.dt} us exceeds the stability bound {config.dt_max} us")
    return SimulationGrid(
        nx=int(config.nx),
        ny=int(config.ny),
        nz=int(config.nz),
        dx=float(config.dx),
        dy=float(config.dy),
        dz=float(config.dz),
        dt=float(config.dt),
        t_max=float(config.t_max),
    )


def check_field(values: np.ndarray, grid: SimulationGrid, finite: bool = True) -> np.ndarray:
    """Raise if ``values`` does not match the grid (2D or 3D) or holds NaN/Inf."""
    if values.shape not in (grid.shape, grid.shape2d):
        raise GridError(f"field shape {values.shape} does not match grid {grid.shape}")
    if finite and not np.all(np.isfinite(values)):
        raise FloatingPointError("field contains NaN or Inf")
    return values


def field_norm_sq(values: np.ndarray, grid: SimulationGrid) -> float:
    """Integral of |f|^2 over the grid volume (or area for 2D fields)."""
    check_field(values, grid, finite=False)
    dv = grid.dx * grid.dy * (grid.dz if values.ndim == 3 else 1.0)
    return float(np.sum(values.real**2 + values.imag**2) * dv)
